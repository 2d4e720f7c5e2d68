//! Ancestral sampling with ε-prediction.
//!
//! For a step `t → t_prev` with `β̃ = 1 − ᾱ_t/ᾱ_prev` (equal to `β_t` on unit
//! strides), the update draws from the forward-process posterior with the
//! clean sample replaced by its estimate:
//!
//! ```text
//! x̂0   = (z − √(1−ᾱ_t)·ε̂) / √ᾱ_t
//! mean = √ᾱ_prev·β̃/(1−ᾱ_t)·x̂0 + √(ᾱ_t/ᾱ_prev)·(1−ᾱ_prev)/(1−ᾱ_t)·z
//! var  = (1−ᾱ_prev)/(1−ᾱ_t)·β̃
//! ```
//!
//! The step into `t_prev = 0` has zero variance and returns `x̂0`. Noise for
//! the step leaving `t` comes from stream `ANCESTRAL_BASE + t` of the seed.

use super::{check_step, predict_checked, Denoiser};
use crate::error::{Error, Result};
use crate::latent::LatentVideo;
use crate::noise;
use crate::schedule::NoiseSchedule;

/// Unit step `t → t − 1`.
pub fn step_ddpm(
    z_t: &LatentVideo,
    t: usize,
    d: &dyn Denoiser,
    s: &NoiseSchedule,
    seed: u64,
    conditioning: &str,
) -> Result<LatentVideo> {
    if t == 0 {
        return Err(Error::config("ancestral step from t = 0"));
    }
    step_ddpm_strided(z_t, t, t - 1, d, s, seed, conditioning)
}

pub fn step_ddpm_strided(
    z_t: &LatentVideo,
    t: usize,
    t_prev: usize,
    d: &dyn Denoiser,
    s: &NoiseSchedule,
    seed: u64,
    conditioning: &str,
) -> Result<LatentVideo> {
    if !(t_prev < t && t <= s.num_steps()) {
        return Err(Error::config(format!("invalid step {t} -> {t_prev} for T = {}", s.num_steps())));
    }
    let eps = predict_checked(d, z_t, t, conditioning)?;
    let (ab_t, ab_p) = (s.alpha_bar(t), s.alpha_bar(t_prev));
    let x0 = z_t.affine_combine(1.0 / ab_t.sqrt(), &eps, -(1.0 - ab_t).sqrt() / ab_t.sqrt());
    let beta_eff = 1.0 - ab_t / ab_p;
    let c_x0 = ab_p.sqrt() * beta_eff / (1.0 - ab_t);
    let c_z = (ab_t / ab_p).sqrt() * (1.0 - ab_p) / (1.0 - ab_t);
    let mut out = x0.affine_combine(c_x0, z_t, c_z);
    if t_prev > 0 {
        let std = ((1.0 - ab_p) / (1.0 - ab_t) * beta_eff).sqrt();
        let mut noise = ndarray::Array4::<f64>::zeros(z_t.shape());
        noise::fill_standard_normal(noise.view_mut(), seed, noise::ANCESTRAL_BASE + t as u64);
        ndarray::Zip::from(out.data_mut()).and(&noise).for_each(|o, &n| *o += std * n);
    }
    check_step(out, t, t_prev)
}
