//! Second-order probability-flow solver in drift form.
//!
//! Every step is written as
//!
//! ```text
//! z_prev = κ1·z + λ1·F̂(z, t) + λ2·F̂(κ2·z + λ3·F̂(z, t), t_mid)
//! ```
//!
//! where `F̂` is [`super::drift`]. The coefficients come from a second-order
//! data-prediction scheme and are produced by [`solver_coefficients`].
//!
//! # Notation
//!
//! For a step index `x`: `α_x = √ᾱ_x`, `σ_x = √(1−ᾱ_x)`, half log-SNR
//! `λ_x = ln(α_x/σ_x)` and variance ratio `w_x = σ_x²/α_x²`. The drift is
//! affine in `ε̂`, so the clean-data estimate is affine in `(z, F̂)`:
//!
//! ```text
//! x̂0(z, t) = (z − σ_t ε̂)/α_t = A_t·z + B_t·F̂,   A_t = (1 + σ_t/2)/α_t,   B_t = σ_t/(α_t β_t)
//! ```
//!
//! The intermediate step is the integer midpoint `t_mid = ⌊(t + t_prev)/2⌋`,
//! so `t_prev < t_mid < t` whenever `t − t_prev ≥ 2`.
//!
//! # High-noise steps (`w_t > 1/4`, `t_prev > 0`)
//!
//! Exponential integrator in `λ` with `h = λ_prev − λ_t`, `r = (λ_mid − λ_t)/h`:
//!
//! ```text
//! u      = (σ_mid/σ_t)·z + α_mid(1 − e^{−rh})·x̂0(z, t)
//! D      = (1 − 1/2r)·x̂0(z, t) + (1/2r)·x̂0(u, t_mid)
//! z_prev = (σ_prev/σ_t)·z + α_prev(1 − e^{−h})·D
//! ```
//!
//! # Low-noise steps (`w_t ≤ 1/4`, and every step ending at `0`)
//!
//! `λ` is singular at `t = 0`, so near the clean end the ODE is integrated in
//! `w` instead. With `x̃ = z/α`, the flow is `dx̃/dw = f = α·ε̂/(2σ)`, and a
//! generalized midpoint rule with `c = (w_t − w_mid)/(w_t − w_prev)` gives
//!
//! ```text
//! u      = α_mid·(x̃_t − (w_t − w_mid)·f(z, t))
//! z_prev = α_prev·(x̃_t − (w_t − w_prev)·[(1 − 1/2c)·f(z, t) + (1/2c)·f(u, t_mid)])
//! ```
//!
//! Both `x̃` and `f` are affine in `(z, F̂)`, which is how the `κ`/`λ`
//! coefficients are collected.
//!
//! # Unit strides
//!
//! When `t − t_prev = 1` there is no integer midpoint and the step is the
//! first-order update `z_prev = (σ_prev/σ_t)·z + α_prev(1 − e^{−h})·x̂0(z, t)`,
//! which is `x̂0(z, t)` when `t_prev = 0`.

use serde::{Deserialize, Serialize};

use super::{check_step, drift, Denoiser};
use crate::error::{Error, Result};
use crate::latent::LatentVideo;
use crate::schedule::NoiseSchedule;

/// Steps that start with `w_t` at or below this value use the `w` form.
pub const LOW_NOISE_VARIANCE_RATIO: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRegime {
    LogSnr,
    VarianceRatio,
    FirstOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverCoefficients {
    pub kappa1: f64,
    pub kappa2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// `None` for first-order steps, which need no second evaluation.
    pub t_mid: Option<usize>,
    pub regime: StepRegime,
}

struct Point {
    alpha: f64,
    sigma: f64,
    beta: f64,
}

impl Point {
    fn at(s: &NoiseSchedule, t: usize) -> Self {
        let beta = if t == 0 { 0.0 } else { s.beta(t) };
        Self { alpha: s.signal(t), sigma: s.noise(t), beta }
    }

    // x̂0 = a·z + b·F̂
    fn x0(&self) -> (f64, f64) {
        ((1.0 + 0.5 * self.sigma) / self.alpha, self.sigma / (self.alpha * self.beta))
    }

    // f = α ε̂ / (2σ) = p·z + q·F̂
    fn flow(&self) -> (f64, f64) {
        let k = self.alpha / (2.0 * self.sigma);
        (-0.5 * k, -k / self.beta)
    }
}

pub fn solver_coefficients(t: usize, t_prev: usize, s: &NoiseSchedule) -> Result<SolverCoefficients> {
    if !(t_prev < t && t <= s.num_steps()) {
        return Err(Error::config(format!("invalid step {t} -> {t_prev} for T = {}", s.num_steps())));
    }
    let (pt, pp) = (Point::at(s, t), Point::at(s, t_prev));
    let (a_t, b_t) = pt.x0();

    if t - t_prev == 1 {
        let phi = if t_prev == 0 { 1.0 } else { -(-(s.log_snr(t_prev) - s.log_snr(t))).exp_m1() };
        let g = pp.alpha * phi;
        return Ok(SolverCoefficients {
            kappa1: pp.sigma / pt.sigma + g * a_t,
            kappa2: 1.0,
            lambda1: g * b_t,
            lambda2: 0.0,
            lambda3: 0.0,
            t_mid: None,
            regime: StepRegime::FirstOrder,
        });
    }

    let t_mid = (t + t_prev) / 2;
    let pm = Point::at(s, t_mid);
    let w_t = s.variance_ratio(t);

    let coeffs = if w_t > LOW_NOISE_VARIANCE_RATIO && t_prev > 0 {
        let (lt, lm, lp) = (s.log_snr(t), s.log_snr(t_mid), s.log_snr(t_prev));
        let h = lp - lt;
        let r = (lm - lt) / h;
        let phi_mid = -(-r * h).exp_m1();
        let phi = -(-h).exp_m1();
        let (a_m, b_m) = pm.x0();
        let kappa2 = pm.sigma / pt.sigma + pm.alpha * phi_mid * a_t;
        let lambda3 = pm.alpha * phi_mid * b_t;
        let c_mid = 1.0 / (2.0 * r);
        let c_t = 1.0 - c_mid;
        let m = pp.alpha * phi * c_mid * a_m;
        SolverCoefficients {
            kappa1: pp.sigma / pt.sigma + pp.alpha * phi * c_t * a_t + m * kappa2,
            kappa2,
            lambda1: pp.alpha * phi * c_t * b_t + m * lambda3,
            lambda2: pp.alpha * phi * c_mid * b_m,
            lambda3,
            t_mid: Some(t_mid),
            regime: StepRegime::LogSnr,
        }
    } else {
        let (w_m, w_p) = (s.variance_ratio(t_mid), s.variance_ratio(t_prev));
        let (dw, dw_mid) = (w_t - w_p, w_t - w_m);
        let c = dw_mid / dw;
        let (wa, wb) = (1.0 - 1.0 / (2.0 * c), 1.0 / (2.0 * c));
        let (p_t, q_t) = pt.flow();
        let (p_m, q_m) = pm.flow();
        let kappa2 = pm.alpha * (1.0 / pt.alpha - dw_mid * p_t);
        let lambda3 = -pm.alpha * dw_mid * q_t;
        SolverCoefficients {
            kappa1: pp.alpha / pt.alpha - pp.alpha * dw * (wa * p_t + wb * p_m * kappa2),
            kappa2,
            lambda1: -pp.alpha * dw * (wa * q_t + wb * p_m * lambda3),
            lambda2: -pp.alpha * dw * wb * q_m,
            lambda3,
            t_mid: Some(t_mid),
            regime: StepRegime::VarianceRatio,
        }
    };
    let all = [coeffs.kappa1, coeffs.kappa2, coeffs.lambda1, coeffs.lambda2, coeffs.lambda3];
    if all.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical { t, t_prev, detail: format!("non-finite solver coefficients {all:?}") });
    }
    Ok(coeffs)
}

/// Applies a step given its coefficients and a drift oracle.
pub fn apply_coefficients(
    z: &LatentVideo,
    t: usize,
    c: &SolverCoefficients,
    mut drift_at: impl FnMut(&LatentVideo, usize) -> Result<LatentVideo>,
) -> Result<LatentVideo> {
    let f_t = drift_at(z, t)?;
    let mut out = z.affine_combine(c.kappa1, &f_t, c.lambda1);
    if let Some(t_mid) = c.t_mid {
        let probe = z.affine_combine(c.kappa2, &f_t, c.lambda3);
        let f_mid = drift_at(&probe, t_mid)?;
        out = out.affine_combine(1.0, &f_mid, c.lambda2);
    }
    Ok(out)
}

/// `z + λ1·F̂(z, t) + λ2·F̂(z + λ3·F̂(z, t), t_mid)`, the two-stage update with
/// unit state weights.
pub fn two_stage_update(
    z: &LatentVideo,
    t: usize,
    t_mid: usize,
    [lambda1, lambda2, lambda3]: [f64; 3],
    drift_at: impl FnMut(&LatentVideo, usize) -> Result<LatentVideo>,
) -> Result<LatentVideo> {
    let c = SolverCoefficients {
        kappa1: 1.0,
        kappa2: 1.0,
        lambda1,
        lambda2,
        lambda3,
        t_mid: Some(t_mid),
        regime: StepRegime::LogSnr,
    };
    apply_coefficients(z, t, &c, drift_at)
}

/// One deterministic second-order step from `t` to `t_prev`.
pub fn step_dpmpp2(
    z_t: &LatentVideo,
    t: usize,
    t_prev: usize,
    d: &dyn Denoiser,
    s: &NoiseSchedule,
    conditioning: &str,
) -> Result<LatentVideo> {
    let c = solver_coefficients(t, t_prev, s)?;
    let out = apply_coefficients(z_t, t, &c, |z, at| drift(z, at, d, s, conditioning)).map_err(|e| match e {
        Error::Numerical { detail, .. } => Error::Numerical { t, t_prev, detail },
        other => other,
    })?;
    check_step(out, t, t_prev)
}
