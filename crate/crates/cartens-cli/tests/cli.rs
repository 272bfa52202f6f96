//! End-to-end checks of the command-line surface: exit codes, file
//! round-trips, and the oracle comparison commands.

use cartens::extxyz::write_extxyz;
use cartens::geometry::{LabeledFrame, Labels, Structure};
use cartens::testutil::lj_frames;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cartens"))
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cartens-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn decompose_identity_has_only_scalar_part() {
    let out = bin()
        .args(["decompose", "--rank", "2"])
        .args(["1", "0", "0", "0", "1", "0", "0", "0", "1"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    let mut norms = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.split("norm ").nth(1) {
            norms.push(rest.trim().parse::<f64>().unwrap());
        }
    }
    assert_eq!(norms.len(), 3);
    assert!(norms[0] > 1.0); // l=0
    assert!(norms[1] < 1e-12 && norms[2] < 1e-12);
    assert!(text.contains("reconstruction residual"));
}

#[test]
fn decompose_wrong_count_is_usage_error() {
    let out = bin().args(["decompose", "--rank", "2", "1", "2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_file_is_data_error() {
    let out = bin().args(["eval", "/nonexistent.json", "/nonexistent.xyz"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_eval_predict_round_trip() {
    let dir = workdir("train");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let frames = lj_frames(&mut rng, 8, 2, 0.2, 1.5, None);
    let data = dir.join("frames.xyz");
    write_extxyz(&frames, &data).unwrap();

    let config = dir.join("run.toml");
    std::fs::write(
        &config,
        format!(
            r#"
seed = 3

[data]
train = "{}"
valid_fraction = 0.0

[model]
species = [1]
channels = 8
layers = 1
l_max = 0
edge_l_max = 0
correlation = 1
radial_mlp = [8]

[optimizer]
epochs = 20

[output]
checkpoint = "{}"
metrics = "{}"
"#,
            data.display(),
            dir.join("model.json").display(),
            dir.join("metrics.csv").display()
        ),
    )
    .unwrap();

    let out = bin().args(["train"]).arg(&config).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("model.json").exists());
    let metrics = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert!(metrics.lines().count() == 21); // header + one row per epoch
    assert!(metrics.starts_with("epoch,lr"));

    let out = bin()
        .args(["eval"])
        .arg(dir.join("model.json"))
        .arg(&data)
        .args(["--csv"])
        .arg(dir.join("eval.csv"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("forces") && text.contains("rmse"));
    assert!(std::fs::read_to_string(dir.join("eval.csv")).unwrap().contains("energy,"));

    let pred = dir.join("pred.xyz");
    let out = bin()
        .args(["predict"])
        .arg(dir.join("model.json"))
        .arg(&data)
        .arg(&pred)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(&pred).unwrap();
    let n_frames = text.lines().filter(|l| l.trim() == "2").count();
    assert_eq!(n_frames, 8);
}

#[test]
fn les_check_matches_oracle() {
    let dir = workdir("les");
    let s = Structure::new(vec![[0.5, 0.5, 0.5], [2.5, 2.0, 1.5]], vec![11, 17]).with_cell(
        [[4.0, 0.0, 0.0], [0.0, 5.0, 0.0], [0.0, 0.0, 4.5]],
        [true; 3],
    );
    let frame = LabeledFrame {
        structure: Structure { charges: Some(vec![1.0, -1.0]), ..s },
        labels: Labels::default(),
        extra_keys: vec![],
    };
    let path = dir.join("toy.xyz");
    write_extxyz(&[frame], &path).unwrap();
    let out = bin()
        .args(["les-check"])
        .arg(&path)
        .args(["--sigma", "1.0", "--k-cutoff", "4.0"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let diff: f64 = text
        .lines()
        .find(|l| l.starts_with("difference"))
        .unwrap()
        .split_whitespace()
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!(diff < 1e-10, "{text}");
}

#[test]
fn spectra_writes_ir_file(){
    let dir = workdir("spectra");
    let mut text = String::new();
    for t in 0..256 {
        let mu = (2.0 * std::f64::consts::PI * 0.05 * t as f64).cos();
        text.push_str(&format!("0 0 {mu}\n"));
    }
    let traj = dir.join("traj.dat");
    std::fs::write(&traj, text).unwrap();
    let prefix = dir.join("out");
    let out = bin()
        .args(["spectra"])
        .arg(&traj)
        .args(["--dt", "1.0", "--mode", "ir", "--prefix"])
        .arg(&prefix)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let data = std::fs::read_to_string(format!("{}_ir.dat", prefix.display())).unwrap();
    assert!(data.lines().count() > 100);

    // too-short trajectory is a data error
    std::fs::write(&traj, "0 0 1\n0 0 2\n").unwrap();
    let out = bin()
        .args(["spectra"])
        .arg(&traj)
        .args(["--dt", "1.0", "--mode", "ir"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn deterministic_flag_gives_identical_checkpoints() {
    let dir = workdir("det");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let frames = lj_frames(&mut rng, 6, 2, 0.2, 1.5, None);
    let data = dir.join("frames.xyz");
    write_extxyz(&frames, &data).unwrap();
    let make_cfg = |tag: &str| {
        let config = dir.join(format!("run{tag}.toml"));
        std::fs::write(
            &config,
            format!(
                "[data]\ntrain = \"{}\"\nvalid_fraction = 0.0\n[model]\nspecies = [1]\nchannels = 4\nlayers = 1\nl_max = 0\nedge_l_max = 0\ncorrelation = 1\nradial_mlp = [4]\n[optimizer]\nepochs = 5\n[output]\ncheckpoint = \"{}\"\nmetrics = \"{}\"\n",
                data.display(),
                dir.join(format!("model{tag}.json")).display(),
                dir.join(format!("metrics{tag}.csv")).display()
            ),
        )
        .unwrap();
        config
    };
    for tag in ["a", "b"] {
        let cfg = make_cfg(tag);
        let out = bin().args(["--deterministic", "train"]).arg(&cfg).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read_to_string(dir.join("modela.json")).unwrap();
    let b = std::fs::read_to_string(dir.join("modelb.json")).unwrap();
    assert_eq!(a, b);
}
