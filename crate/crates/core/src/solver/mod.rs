//! Reverse-process samplers.
//!
//! Everything here is written against the [`Denoiser`] contract: given a noisy
//! latent `z` at step `t` and an opaque conditioning string, return the noise
//! estimate `ε̂` with the same shape. Two steppers are provided:
//!
//! * [`step_dpmpp2`], a deterministic second-order solver of the probability
//!   flow ODE (see [`dpmpp`] for the exact coefficient formulas);
//! * [`step_ddpm`], the classic ancestral update, seeded.
//!
//! [`sample_from`] runs either one over a step grid from `t_inv` down to `0`.

mod ddpm;
mod denoiser;
pub mod dpmpp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::LatentVideo;
use crate::schedule::NoiseSchedule;

pub use ddpm::{step_ddpm, step_ddpm_strided};
pub use denoiser::{Denoiser, GaussianDenoiser};
pub use dpmpp::{solver_coefficients, step_dpmpp2, two_stage_update, SolverCoefficients, StepRegime};

/// Calls the denoiser and checks the contract: same shape, finite output.
pub fn predict_checked(
    d: &dyn Denoiser,
    z: &LatentVideo,
    t: usize,
    conditioning: &str,
) -> Result<LatentVideo> {
    let eps = d.predict(z, t, conditioning)?;
    z.ensure_same_shape(&eps, "denoiser output")?;
    if !eps.is_finite() {
        return Err(Error::Numerical { t, t_prev: t, detail: "denoiser returned non-finite values".into() });
    }
    Ok(eps)
}

/// `F̂(z, t) = −½ β_t z − g²(t) ε̂(z, t)` with `g²(t) = β_t`.
pub fn drift(
    z: &LatentVideo,
    t: usize,
    d: &dyn Denoiser,
    s: &NoiseSchedule,
    conditioning: &str,
) -> Result<LatentVideo> {
    if !(1..=s.num_steps()).contains(&t) {
        return Err(Error::config(format!("drift evaluated at t = {t}, outside 1..={}", s.num_steps())));
    }
    let eps = predict_checked(d, z, t, conditioning)?;
    Ok(drift_from_eps(z, &eps, t, s))
}

pub(crate) fn drift_from_eps(z: &LatentVideo, eps: &LatentVideo, t: usize, s: &NoiseSchedule) -> LatentVideo {
    let beta = s.beta(t);
    z.affine_combine(-0.5 * beta, eps, -s.diffusion_coeff_sq(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Dpmpp2,
    Ddpm,
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dpmpp2" => Ok(Self::Dpmpp2),
            "ddpm" => Ok(Self::Ddpm),
            other => Err(Error::config(format!("unknown solver `{other}` (expected dpmpp2 or ddpm)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    /// `t_k = round(k·T/N)`.
    Uniform,
    /// Equally spaced in half log-SNR between `t_inv` and `t = 1`, then `0`.
    LogSnr,
}

impl std::str::FromStr for GridKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "log_snr" | "logsnr" => Ok(Self::LogSnr),
            other => Err(Error::config(format!("unknown grid `{other}` (expected uniform or log_snr)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub kind: SolverKind,
    /// Number of intervals a full `T → 0` sweep would use. Partial sweeps
    /// starting at `t_inv < T` use proportionally fewer.
    pub steps: usize,
    pub grid: GridKind,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { kind: SolverKind::Dpmpp2, steps: 50, grid: GridKind::Uniform }
    }
}

/// Strictly decreasing timesteps `[t_inv, …, 0]`. Empty when `t_inv = 0`.
pub fn step_grid(t_inv: usize, steps: usize, grid: GridKind, s: &NoiseSchedule) -> Result<Vec<usize>> {
    let total = s.num_steps();
    if t_inv > total {
        return Err(Error::config(format!("t_inv = {t_inv} exceeds T = {total}")));
    }
    if steps == 0 {
        return Err(Error::config("sampler needs at least one step"));
    }
    if t_inv == 0 {
        return Ok(Vec::new());
    }
    let mut points = match grid {
        GridKind::Uniform => (0..=steps)
            .map(|k| ((k * total) as f64 / steps as f64 + 0.5).floor() as usize)
            .filter(|&t| t < t_inv)
            .collect::<Vec<_>>(),
        GridKind::LogSnr => {
            let n = ((steps * t_inv) as f64 / total as f64).round().max(1.0) as usize;
            let (hi, lo) = (s.log_snr(1), s.log_snr(t_inv));
            let mut pts: Vec<usize> = (1..n)
                .map(|k| nearest_step_for_log_snr(lo + (hi - lo) * k as f64 / n as f64, s))
                .filter(|&t| t < t_inv)
                .collect();
            pts.push(0);
            pts
        }
    };
    points.push(t_inv);
    points.sort_unstable_by(|a, b| b.cmp(a));
    points.dedup();
    if grid == GridKind::LogSnr {
        // Equal log-SNR spacing crowds the integer steps next to t = 0; keep
        // strides of at least 2 so every step has an interior midpoint.
        let mut kept = vec![t_inv];
        for &p in &points[1..] {
            let last = *kept.last().expect("starts non-empty");
            if p == 0 || (last - p >= 2 && p >= 2) {
                kept.push(p);
            }
        }
        if kept.len() > 2 && kept[kept.len() - 2] - 1 == 0 {
            kept.remove(kept.len() - 2);
        }
        return Ok(kept);
    }
    Ok(points)
}

// log-SNR decreases in t, so bisect for the closest step in 1..=T
fn nearest_step_for_log_snr(target: f64, s: &NoiseSchedule) -> usize {
    let (mut lo, mut hi) = (1usize, s.num_steps());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if s.log_snr(mid) > target {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    if lo > 1 && (s.log_snr(lo - 1) - target).abs() < (s.log_snr(lo) - target).abs() {
        lo - 1
    } else {
        lo
    }
}

/// Denoises `z_init` from `t_inv` to `0`. `seed` only matters for
/// [`SolverKind::Ddpm`].
pub fn sample_from(
    z_init: &LatentVideo,
    t_inv: usize,
    d: &dyn Denoiser,
    s: &NoiseSchedule,
    cfg: &SamplerConfig,
    seed: u64,
    conditioning: &str,
) -> Result<LatentVideo> {
    let grid = step_grid(t_inv, cfg.steps, cfg.grid, s)?;
    let mut z = z_init.clone();
    for pair in grid.windows(2) {
        let (t, t_prev) = (pair[0], pair[1]);
        z = match cfg.kind {
            SolverKind::Dpmpp2 => step_dpmpp2(&z, t, t_prev, d, s, conditioning)?,
            SolverKind::Ddpm => step_ddpm_strided(&z, t, t_prev, d, s, seed, conditioning)?,
        };
        log::trace!("step {t} -> {t_prev}, |z| = {:.4}", z.l2_norm());
    }
    Ok(z)
}

pub(crate) fn check_step(z: LatentVideo, t: usize, t_prev: usize) -> Result<LatentVideo> {
    if z.is_finite() {
        Ok(z)
    } else {
        Err(Error::Numerical { t, t_prev, detail: "state became non-finite".into() })
    }
}
