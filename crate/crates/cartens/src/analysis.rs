//! IR and Raman spectra from dipole / polarizability trajectories, plus the
//! isotropic/anisotropic polarizability split.

use crate::error::{Error, Result};
use crate::geometry::LabeledFrame;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

pub const CM1_PER_THZ: f64 = 33.356409519815205;
const MIN_FRAMES: usize = 16;

/// Uniformly sampled dipole and/or polarizability series; dt in fs.
#[derive(Clone, Debug)]
pub struct TensorTrajectory {
    pub dt_fs: f64,
    pub dipoles: Option<Vec<[f64; 3]>>,
    pub alphas: Option<Vec<[[f64; 3]; 3]>>,
}

impl TensorTrajectory {
    pub fn from_frames(frames: &[LabeledFrame], dt_fs: f64) -> Self {
        let dipoles: Vec<[f64; 3]> = frames.iter().filter_map(|f| f.labels.dipole).collect();
        let alphas: Vec<[[f64; 3]; 3]> =
            frames.iter().filter_map(|f| f.labels.polarizability).collect();
        TensorTrajectory {
            dt_fs,
            dipoles: (!dipoles.is_empty()).then_some(dipoles),
            alphas: (!alphas.is_empty()).then_some(alphas),
        }
    }

    /// Columnar text: one frame per line, 3 values (dipole), 9 (alpha), or
    /// 12 (dipole then row-major alpha). Lines starting with '#' skipped.
    pub fn parse(text: &str, dt_fs: f64) -> Result<Self> {
        let mut dipoles = Vec::new();
        let mut alphas = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>().map_err(|_| Error::Parse {
                        line: i + 1,
                        msg: format!("bad number '{t}'"),
                    })
                })
                .collect::<Result<_>>()?;
            match vals.len() {
                3 => dipoles.push([vals[0], vals[1], vals[2]]),
                9 => alphas.push(matrix9(&vals)),
                12 => {
                    dipoles.push([vals[0], vals[1], vals[2]]);
                    alphas.push(matrix9(&vals[3..]));
                }
                n => {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: format!("expected 3, 9 or 12 columns, found {n}"),
                    })
                }
            }
        }
        Ok(TensorTrajectory {
            dt_fs,
            dipoles: (!dipoles.is_empty()).then_some(dipoles),
            alphas: (!alphas.is_empty()).then_some(alphas),
        })
    }
}

fn matrix9(v: &[f64]) -> [[f64; 3]; 3] {
    [[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]]
}

/// alpha = gamma I + beta with gamma the isotropic part and beta symmetric
/// traceless. The input is symmetrized first.
pub fn decompose_polarizability(alpha: &[[f64; 3]; 3]) -> (f64, [[f64; 3]; 3]) {
    let mut sym = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            sym[a][b] = 0.5 * (alpha[a][b] + alpha[b][a]);
        }
    }
    let gamma = (sym[0][0] + sym[1][1] + sym[2][2]) / 3.0;
    let mut beta = sym;
    for a in 0..3 {
        beta[a][a] -= gamma;
    }
    (gamma, beta)
}

fn center(series: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let t = series.len();
    let k = series[0].len();
    let mut mean = vec![0.0; k];
    for row in series {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= t as f64;
    }
    series.iter().map(|row| row.iter().zip(&mean).map(|(x, m)| x - m).collect()).collect()
}

/// Biased mean-subtracted autocorrelation, C(t) = (1/T) sum_tau x(tau).x(tau+t),
/// summed over components. Direct O(T^2) evaluation.
pub fn acf_direct(series: &[Vec<f64>]) -> Vec<f64> {
    let x = center(series);
    let t_len = x.len();
    let mut acf = vec![0.0; t_len];
    for lag in 0..t_len {
        let mut acc = 0.0;
        for tau in 0..t_len - lag {
            for (a, b) in x[tau].iter().zip(&x[tau + lag]) {
                acc += a * b;
            }
        }
        acf[lag] = acc / t_len as f64;
    }
    acf
}

/// Same estimator via zero-padded FFT.
pub fn acf_fft(series: &[Vec<f64>]) -> Vec<f64> {
    let x = center(series);
    let t_len = x.len();
    let k = x[0].len();
    let m = (2 * t_len).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let mut acf = vec![0.0; t_len];
    for c in 0..k {
        let mut buf: Vec<Complex<f64>> = (0..m)
            .map(|i| Complex::new(if i < t_len { x[i][c] } else { 0.0 }, 0.0))
            .collect();
        fwd.process(&mut buf);
        for z in buf.iter_mut() {
            *z = Complex::new(z.norm_sqr(), 0.0);
        }
        inv.process(&mut buf);
        for (lag, a) in acf.iter_mut().enumerate() {
            *a += buf[lag].re / (m as f64 * t_len as f64);
        }
    }
    acf
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Window {
    Hann,
    Rect,
}

#[derive(Clone, Debug)]
pub struct Spectrum {
    pub thz: Vec<f64>,
    pub cm1: Vec<f64>,
    /// Peak-normalized intensity; multiply by `peak` to recover raw values.
    pub intensity: Vec<f64>,
    pub peak: f64,
}

/// omega^2-weighted cosine transform of a windowed one-sided ACF,
/// zero-padded by `padding`x for peak localization.
fn spectrum_from_acf(acf: &[f64], dt_fs: f64, window: Window, padding: usize) -> Spectrum {
    let t_len = acf.len();
    let m = t_len * padding.max(1);
    let mut buf: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); m];
    for (t, &c) in acf.iter().enumerate() {
        let w = match window {
            Window::Rect => 1.0,
            Window::Hann => {
                0.5 * (1.0 + (std::f64::consts::PI * t as f64 / (t_len - 1) as f64).cos())
            }
        };
        buf[t] = Complex::new(c * w, 0.0);
    }
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let half = m / 2 + 1;
    let mut thz = Vec::with_capacity(half);
    let mut cm1 = Vec::with_capacity(half);
    let mut raw = Vec::with_capacity(half);
    for (k, z) in buf.iter().take(half).enumerate() {
        let f = 1000.0 * k as f64 / (m as f64 * dt_fs);
        thz.push(f);
        cm1.push(f * CM1_PER_THZ);
        raw.push(f * f * z.re);
    }
    let peak = raw.iter().cloned().fold(0.0f64, f64::max);
    let intensity = if peak > 0.0 { raw.iter().map(|x| x / peak).collect() } else { raw };
    Spectrum { thz, cm1, intensity, peak }
}

fn check_length(n: usize) -> Result<()> {
    if n < MIN_FRAMES {
        return Err(Error::InsufficientData(format!("{n} frames, need at least {MIN_FRAMES}")));
    }
    Ok(())
}

/// IR spectrum from the dipole autocorrelation, I(omega) ~ omega^2 FT<mu.mu>.
pub fn ir_spectrum(traj: &TensorTrajectory, window: Window, padding: usize) -> Result<Spectrum> {
    let mu = traj
        .dipoles
        .as_ref()
        .ok_or_else(|| Error::MissingAttribute("dipole series".into()))?;
    check_length(mu.len())?;
    let series: Vec<Vec<f64>> = mu.iter().map(|m| m.to_vec()).collect();
    let acf = acf_fft(&series);
    Ok(spectrum_from_acf(&acf, traj.dt_fs, window, padding))
}

/// Raman spectra: isotropic from <gamma gamma>, anisotropic from
/// <Tr[beta(0) beta(t)]>, both with the omega^2 prefactor.
pub fn raman_spectra(
    traj: &TensorTrajectory,
    window: Window,
    padding: usize,
) -> Result<(Spectrum, Spectrum)> {
    let alphas = traj
        .alphas
        .as_ref()
        .ok_or_else(|| Error::MissingAttribute("polarizability series".into()))?;
    check_length(alphas.len())?;
    let mut gamma_series = Vec::with_capacity(alphas.len());
    let mut beta_series = Vec::with_capacity(alphas.len());
    for a in alphas {
        let (gamma, beta) = decompose_polarizability(a);
        gamma_series.push(vec![gamma]);
        beta_series.push(beta.iter().flatten().copied().collect::<Vec<f64>>());
    }
    let iso = spectrum_from_acf(&acf_fft(&gamma_series), traj.dt_fs, window, padding);
    let aniso = spectrum_from_acf(&acf_fft(&beta_series), traj.dt_fs, window, padding);
    Ok((iso, aniso))
}
