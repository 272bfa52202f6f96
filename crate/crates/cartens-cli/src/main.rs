//! `cartens` command line: decompose, train, eval, predict, les-check,
//! spectra. Exit codes: 0 success, 1 usage/config error, 2 data error,
//! 3 numerical failure.

use cartens::analysis::{ir_spectrum, raman_spectra, Spectrum, TensorTrajectory, Window};
use cartens::config::RunConfig;
use cartens::decomp::build_decomposition_table;
use cartens::electrostatics::{
    les_energy_finite, les_energy_periodic, reciprocal_cell, LesConfig, COULOMB,
};
use cartens::error::Error;
use cartens::extxyz::{read_extxyz, write_extxyz};
use cartens::gradients::energy_derivatives;
use cartens::model::{Checkpoint, Model};
use cartens::tensor::CartesianTensor;
use cartens::training::{evaluate, train, Metrics, TERM_NAMES};
use clap::{Parser, Subcommand, ValueEnum};
use std::io::Write as _;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "cartens", version, about = "Cartesian tensor cluster expansion engine")]
struct Cli {
    /// Force serial reductions for bit-identical reruns (the engine is
    /// already deterministic; this documents the guarantee).
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpectraMode {
    Ir,
    Raman,
}

#[derive(Clone, Copy, ValueEnum)]
enum WindowArg {
    Hann,
    Rect,
}

#[derive(Subcommand)]
enum Cmd {
    /// Split a rank-0..4 tensor into its irreducible components.
    Decompose {
        #[arg(long)]
        rank: usize,
        /// 3^rank components, row-major; read from --file when omitted.
        values: Vec<f64>,
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Train a model from a TOML run configuration.
    Train {
        config: PathBuf,
    },
    /// Per-label RMSE/MAE of a checkpoint on a dataset.
    Eval {
        checkpoint: PathBuf,
        data: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Predict energies/forces (and configured heads) for structures.
    Predict {
        checkpoint: PathBuf,
        input: PathBuf,
        output: PathBuf,
    },
    /// Compare the periodic LES energy against a brute-force k-sum.
    LesCheck {
        structure: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = std::f64::consts::PI)]
        k_cutoff: f64,
    },
    /// IR or Raman spectra from a columnar dipole/polarizability trajectory.
    Spectra {
        trajectory: PathBuf,
        #[arg(long)]
        dt: f64,
        #[arg(long, value_enum)]
        mode: SpectraMode,
        #[arg(long, default_value = "spectrum")]
        prefix: String,
        #[arg(long, value_enum, default_value = "hann")]
        window: WindowArg,
        #[arg(long, default_value_t = 4)]
        padding: usize,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        Error::Numerical(_) | Error::HardnessPositivity(_) => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.cmd {
        Cmd::Decompose { rank, values, file } => cmd_decompose(rank, values, file.as_deref()),
        Cmd::Train { config } => cmd_train(&config),
        Cmd::Eval { checkpoint, data, csv } => cmd_eval(&checkpoint, &data, csv.as_deref()),
        Cmd::Predict { checkpoint, input, output } => cmd_predict(&checkpoint, &input, &output),
        Cmd::LesCheck { structure, sigma, k_cutoff } => cmd_les_check(&structure, sigma, k_cutoff),
        Cmd::Spectra { trajectory, dt, mode, prefix, window, padding } => {
            let w = match window {
                WindowArg::Hann => Window::Hann,
                WindowArg::Rect => Window::Rect,
            };
            cmd_spectra(&trajectory, dt, mode, &prefix, w, padding)
        }
    }
}

fn cmd_decompose(rank: usize, mut values: Vec<f64>, file: Option<&Path>) -> Result<(), Error> {
    if let Some(path) = file {
        if !values.is_empty() {
            return Err(Error::Config("give components inline or via --file, not both".into()));
        }
        values = std::fs::read_to_string(path)?
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::Config(format!("bad number '{t}'"))))
            .collect::<Result<_, _>>()?;
    }
    let n = 3usize.pow(rank as u32);
    if values.len() != n {
        return Err(Error::Config(format!(
            "rank {rank} needs {n} components, got {}",
            values.len()
        )));
    }
    let t = CartesianTensor { rank, channels: 1, data: values };
    let table = build_decomposition_table(rank)?;
    let comps = table.decompose(&t)?;
    let mut recon = vec![0.0; n];
    println!("rank {rank}: {} irreducible components", comps.len());
    for c in &comps {
        let norm = c.data.data.iter().map(|x| x * x).sum::<f64>().sqrt();
        println!("(l={}, q={})  norm {:.6e}", c.weight, c.label, norm);
        println!("  [{}]", c.data.data.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", "));
        for (r, x) in recon.iter_mut().zip(&c.data.data) {
            *r += x;
        }
    }
    let residual = recon
        .iter()
        .zip(&t.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    println!("reconstruction residual {residual:.3e}");
    Ok(())
}

fn cmd_train(config: &Path) -> Result<(), Error> {
    let cfg = RunConfig::load(config)?;
    let frames = read_extxyz(&cfg.data.train)?;
    let mut model = Model::new(cfg.model.clone(), cfg.seed)?;
    if let Some(dir) = cfg.output.metrics.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut metrics_file = std::fs::File::create(&cfg.output.metrics)?;
    let report = train(&mut model, &frames, &cfg.train_config(), Some(&mut metrics_file))?;
    if let Some(dir) = cfg.output.checkpoint.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let json = serde_json::to_string(&model.to_checkpoint())
        .map_err(|e| Error::Config(format!("checkpoint serialization: {e}")))?;
    std::fs::write(&cfg.output.checkpoint, json)?;
    println!(
        "trained {} epochs, best monitored loss {:.6e}, final lr {:.3e}",
        report.epochs_run, report.best_monitor, report.final_lr
    );
    print_metrics("train", &report.train_metrics);
    if let Some(m) = &report.valid_metrics {
        print_metrics("valid", m);
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<Model, Error> {
    let text = std::fs::read_to_string(path)?;
    let ck: Checkpoint =
        serde_json::from_str(&text).map_err(|e| Error::Parse { line: 0, msg: e.to_string() })?;
    Model::from_checkpoint(ck)
}

fn print_metrics(tag: &str, m: &Metrics) {
    for (t, name) in TERM_NAMES.iter().enumerate() {
        if let Some(s) = m.terms[t] {
            println!("{tag} {name:<16} rmse {: <12.6e} mae {:.6e}  ({} values)", s.rmse, s.mae, s.count);
        }
    }
}

fn cmd_eval(checkpoint: &Path, data: &Path, csv: Option<&Path>) -> Result<(), Error> {
    let model = load_model(checkpoint)?;
    let frames = read_extxyz(data)?;
    let metrics = evaluate(&model, &frames)?;
    print_metrics("eval", &metrics);
    if let Some(path) = csv {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "term,rmse,mae,count")?;
        for (t, name) in TERM_NAMES.iter().enumerate() {
            if let Some(s) = metrics.terms[t] {
                writeln!(f, "{name},{},{},{}", s.rmse, s.mae, s.count)?;
            }
        }
    }
    Ok(())
}

fn cmd_predict(checkpoint: &Path, input: &Path, output: &Path) -> Result<(), Error> {
    let model = load_model(checkpoint)?;
    let mut frames = read_extxyz(input)?;
    for frame in frames.iter_mut() {
        let d = energy_derivatives(&model, &frame.structure)?;
        frame.labels.energy = Some(d.energy);
        frame.labels.forces = Some(d.forces.clone());
        frame.labels.virial = d.virial;
        if !d.charges.is_empty() {
            frame.labels.charges = Some(d.charges.clone());
        }
        frame.labels.dipole = d.dipole;
        frame.labels.polarizability = d.alpha;
        frame.labels.magnetic_forces = d.magnetic_forces.clone();
    }
    write_extxyz(&frames, output)?;
    println!("wrote {} frames", frames.len());
    Ok(())
}

/// Direct k-sum over an integer grid of reciprocal vectors, independent of
/// the engine's enumeration and accumulation order.
fn brute_force_les(
    positions: &[[f64; 3]],
    q: &[f64],
    cell: &[[f64; 3]; 3],
    cfg: &LesConfig,
) -> Result<f64, Error> {
    let rec = reciprocal_cell(cell)?;
    let vol = {
        let c = cell;
        (c[0][0] * (c[1][1] * c[2][2] - c[1][2] * c[2][1])
            - c[0][1] * (c[1][0] * c[2][2] - c[1][2] * c[2][0])
            + c[0][2] * (c[1][0] * c[2][1] - c[1][1] * c[2][0]))
            .abs()
    };
    let bound = 2 + (cfg.k_cutoff
        / rec.iter().map(|b| (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt()).fold(f64::INFINITY, f64::min))
        .ceil() as i64;
    let mut energy = 0.0;
    for na in -bound..=bound {
        for nb in -bound..=bound {
            for nc in -bound..=bound {
                if na == 0 && nb == 0 && nc == 0 {
                    continue;
                }
                let k: [f64; 3] = std::array::from_fn(|a| {
                    na as f64 * rec[0][a] + nb as f64 * rec[1][a] + nc as f64 * rec[2][a]
                });
                let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
                if k2.sqrt() >= cfg.k_cutoff {
                    continue;
                }
                let (mut re, mut im) = (0.0, 0.0);
                for (p, &qi) in positions.iter().zip(q) {
                    let phase = k[0] * p[0] + k[1] * p[1] + k[2] * p[2];
                    re += qi * phase.cos();
                    im += qi * phase.sin();
                }
                energy += (-cfg.sigma * cfg.sigma * k2 / 2.0).exp() / k2 * (re * re + im * im);
            }
        }
    }
    Ok(2.0 * std::f64::consts::PI * COULOMB / vol * energy)
}

fn cmd_les_check(structure: &Path, sigma: f64, k_cutoff: f64) -> Result<(), Error> {
    let frames = read_extxyz(structure)?;
    let frame = frames
        .first()
        .ok_or_else(|| Error::InsufficientData("no frames in structure file".into()))?;
    let s = &frame.structure;
    let q = s
        .charges
        .clone()
        .or_else(|| frame.labels.charges.clone())
        .ok_or_else(|| Error::MissingAttribute("charges".into()))?;
    let cfg = LesConfig { sigma, k_cutoff };
    if s.pbc.iter().all(|&p| p) {
        let cell = s.cell.ok_or_else(|| Error::InvalidCell("periodic frame without cell".into()))?;
        let engine = les_energy_periodic(&s.positions, &cell, &q, &cfg)?;
        let oracle = brute_force_les(&s.positions, &q, &cell, &cfg)?;
        println!("engine  {engine:.12e} eV");
        println!("oracle  {oracle:.12e} eV");
        println!("difference {:.3e} eV", (engine - oracle).abs());
    } else {
        let engine = les_energy_finite(&s.positions, &q, &cfg)?;
        println!("finite-system LES energy {engine:.12e} eV");
    }
    Ok(())
}

fn write_spectrum(path: &Path, s: &Spectrum) -> Result<(), Error> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "# thz cm-1 intensity")?;
    for i in 0..s.thz.len() {
        writeln!(f, "{} {} {}", s.thz[i], s.cm1[i], s.intensity[i])?;
    }
    Ok(())
}

fn cmd_spectra(
    trajectory: &Path,
    dt: f64,
    mode: SpectraMode,
    prefix: &str,
    window: Window,
    padding: usize,
) -> Result<(), Error> {
    let traj = TensorTrajectory::parse(&std::fs::read_to_string(trajectory)?, dt)?;
    match mode {
        SpectraMode::Ir => {
            let s = ir_spectrum(&traj, window, padding)?;
            let path = PathBuf::from(format!("{prefix}_ir.dat"));
            write_spectrum(&path, &s)?;
            println!("wrote {}", path.display());
        }
        SpectraMode::Raman => {
            let (iso, aniso) = raman_spectra(&traj, window, padding)?;
            let iso_path = PathBuf::from(format!("{prefix}_raman_iso.dat"));
            let aniso_path = PathBuf::from(format!("{prefix}_raman_aniso.dat"));
            write_spectrum(&iso_path, &iso)?;
            write_spectrum(&aniso_path, &aniso)?;
            println!("wrote {} and {}", iso_path.display(), aniso_path.display());
        }
    }
    Ok(())
}
