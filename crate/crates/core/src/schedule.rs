//! Noise schedules and the forward (noising) process.
//!
//! Timesteps are integers `t ∈ {0, …, T}`. The schedule stores
//!
//! * `β_t` for `t = 1..=T`,
//! * the cumulative product `ᾱ_t = ∏_{s=1..t} (1 − β_s)` with `ᾱ_0 = 1`,
//! * the squared diffusion coefficient `g²(t) = β_t` (variance-preserving
//!   convention).
//!
//! Noising a clean latent `z₀` to step `t` draws
//! `z_t = √ᾱ_t · z₀ + √(1 − ᾱ_t) · ε` with `ε ~ N(0, I)`.

use ndarray::{Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::LatentVideo;
use crate::noise;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaScheduleKind {
    /// `β` linear in `t` between the endpoints.
    Linear,
    /// `√β` linear in `t` (the Stable Diffusion / CogVideoX convention).
    ScaledLinear,
}

/// The parameters a schedule is built from. This is what manifests record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub num_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub kind: BetaScheduleKind,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self { num_steps: 1000, beta_start: 0.00085, beta_end: 0.012, kind: BetaScheduleKind::ScaledLinear }
    }
}

impl ScheduleParams {
    pub fn build(&self) -> Result<NoiseSchedule> {
        make_schedule(self.num_steps, self.beta_start, self.beta_end, self.kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    params: ScheduleParams,
    // index t-1 holds β_t
    betas: Vec<f64>,
    // index t holds ᾱ_t
    alpha_bars: Vec<f64>,
    diffusion_coeff_sq: Vec<f64>,
}

pub fn make_schedule(
    num_steps: usize,
    beta_start: f64,
    beta_end: f64,
    kind: BetaScheduleKind,
) -> Result<NoiseSchedule> {
    if num_steps == 0 {
        return Err(Error::config("schedule needs at least one step"));
    }
    if !(beta_start.is_finite() && beta_end.is_finite()) || !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0)
    {
        return Err(Error::config(format!(
            "beta range must satisfy 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"
        )));
    }

    let frac = |i: usize| if num_steps == 1 { 0.0 } else { i as f64 / (num_steps - 1) as f64 };
    let betas: Vec<f64> = (0..num_steps)
        .map(|i| match kind {
            BetaScheduleKind::Linear => beta_start + (beta_end - beta_start) * frac(i),
            BetaScheduleKind::ScaledLinear => {
                let (a, b) = (beta_start.sqrt(), beta_end.sqrt());
                let r = a + (b - a) * frac(i);
                r * r
            }
        })
        .collect();

    let mut alpha_bars = Vec::with_capacity(num_steps + 1);
    alpha_bars.push(1.0);
    let mut running = 1.0;
    for &beta in &betas {
        running *= 1.0 - beta;
        alpha_bars.push(running);
    }
    if alpha_bars.iter().any(|&a| a <= 0.0) {
        return Err(Error::config("cumulative product underflowed to zero; shorten the schedule"));
    }

    Ok(NoiseSchedule {
        params: ScheduleParams { num_steps, beta_start, beta_end, kind },
        diffusion_coeff_sq: betas.clone(),
        betas,
        alpha_bars,
    })
}

impl NoiseSchedule {
    pub fn params(&self) -> ScheduleParams {
        self.params
    }

    /// `T`.
    pub fn num_steps(&self) -> usize {
        self.betas.len()
    }

    /// `β_t` for `1 ≤ t ≤ T`.
    pub fn beta(&self, t: usize) -> f64 {
        assert!((1..=self.num_steps()).contains(&t), "beta index {t} outside 1..={}", self.num_steps());
        self.betas[t - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// `ᾱ_t` for `0 ≤ t ≤ T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// `g²(t)`, equal to `β_t`.
    pub fn diffusion_coeff_sq(&self, t: usize) -> f64 {
        assert!((1..=self.num_steps()).contains(&t));
        self.diffusion_coeff_sq[t - 1]
    }

    /// Signal scale `√ᾱ_t`.
    pub fn signal(&self, t: usize) -> f64 {
        self.alpha_bars[t].sqrt()
    }

    /// Noise scale `√(1 − ᾱ_t)`.
    pub fn noise(&self, t: usize) -> f64 {
        (1.0 - self.alpha_bars[t]).sqrt()
    }

    /// Half log signal-to-noise ratio `½ ln(ᾱ_t / (1 − ᾱ_t))`; `+∞` at `t = 0`.
    pub fn log_snr(&self, t: usize) -> f64 {
        let a = self.alpha_bars[t];
        0.5 * (a / (1.0 - a)).ln()
    }

    /// Noise-to-signal variance ratio `(1 − ᾱ_t) / ᾱ_t`; zero at `t = 0`.
    pub fn variance_ratio(&self, t: usize) -> f64 {
        let a = self.alpha_bars[t];
        (1.0 - a) / a
    }
}

/// An inclusive range of admissible noise inversion ratios for a backbone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaRange {
    pub lo: f64,
    pub hi: f64,
}

impl AlphaRange {
    /// Range that works for CogVideoX-5B style backbones.
    pub const COGVIDEOX: AlphaRange = AlphaRange { lo: 0.7, hi: 0.9 };
    /// Range that works for VideoCrafter2 style backbones.
    pub const VIDEOCRAFTER2: AlphaRange = AlphaRange { lo: 0.5, hi: 0.8 };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        let range = Self { lo, hi };
        range.validate()?;
        Ok(range)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || !(0.0 <= self.lo && self.lo <= self.hi && self.hi <= 1.0) {
            return Err(Error::config(format!("invalid alpha range [{}, {}]", self.lo, self.hi)));
        }
        Ok(())
    }

    /// Clamps into the range. NaN maps to the midpoint.
    pub fn clamp(&self, alpha: f64) -> f64 {
        if alpha.is_nan() {
            return self.midpoint();
        }
        alpha.clamp(self.lo, self.hi)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, alpha: f64) -> bool {
        self.lo <= alpha && alpha <= self.hi
    }
}

impl std::str::FromStr for AlphaRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (lo, hi) = s
            .split_once(',')
            .ok_or_else(|| Error::config(format!("alpha range `{s}` is not of the form lo,hi")))?;
        let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| Error::config(format!("alpha range `{s}`: {e}")));
        Self::new(parse(lo)?, parse(hi)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionConfig {
    pub alpha_ratio: f64,
    pub backend_range: AlphaRange,
    pub seed: u64,
    /// Always true: every frame gets its own noise stream.
    pub per_frame_independent_noise: bool,
}

impl InversionConfig {
    pub fn new(alpha_ratio: f64, backend_range: AlphaRange, seed: u64) -> Self {
        Self { alpha_ratio, backend_range, seed, per_frame_independent_noise: true }
    }

    pub fn resolved_alpha(&self) -> f64 {
        self.backend_range.clamp(self.alpha_ratio)
    }
}

/// `t_inv = round(clamp(α) · T)`, rounding half up, then clamped into `[1, T]`.
pub fn inversion_timestep(cfg: &InversionConfig, schedule: &NoiseSchedule) -> usize {
    let total = schedule.num_steps();
    let scaled = cfg.resolved_alpha() * total as f64;
    let rounded = (scaled + 0.5).floor();
    (rounded.max(1.0) as usize).min(total)
}

/// Noises `z0` to step `t_inv`. Frame `f` draws its noise from stream `f` of
/// `seed`, so frames are independent and the result is a pure function of the
/// inputs.
pub fn forward_noise(z0: &LatentVideo, t_inv: usize, schedule: &NoiseSchedule, seed: u64) -> Result<LatentVideo> {
    if !(1..=schedule.num_steps()).contains(&t_inv) {
        return Err(Error::config(format!("t_inv = {t_inv} outside 1..={}", schedule.num_steps())));
    }
    if !z0.is_finite() {
        return Err(Error::data("latent to be noised contains non-finite values"));
    }
    let (signal, noise_scale) = (schedule.signal(t_inv), schedule.noise(t_inv));
    let mut eps = ndarray::Array4::<f64>::zeros(z0.shape());
    for (f, frame) in eps.axis_iter_mut(Axis(0)).enumerate() {
        noise::fill_standard_normal(frame, seed, f as u64);
    }
    Zip::from(&mut eps).and(z0.data()).for_each(|e, &x| *e = signal * x + noise_scale * *e);
    Ok(z0.with_data(eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_beta_product() {
        let s = make_schedule(10, 0.01, 0.01, BetaScheduleKind::Linear).unwrap();
        // 0.99^10, by repeated multiplication
        let mut expected = 1.0;
        for _ in 0..10 {
            expected *= 0.99;
        }
        assert_eq!(s.alpha_bar(10), expected);
        assert!((s.alpha_bar(10) - 0.904382).abs() < 1e-6);
    }

    #[test]
    fn single_step_schedule() {
        let s = make_schedule(1, 0.5, 0.5, BetaScheduleKind::Linear).unwrap();
        assert_eq!(s.alpha_bar(0), 1.0);
        assert_eq!(s.alpha_bar(1), 0.5);
        assert_eq!(s.diffusion_coeff_sq(1), 0.5);
    }

    #[test]
    fn ddpm_linear_schedule_decreases_below_bound() {
        let s = make_schedule(1000, 1e-4, 0.02, BetaScheduleKind::Linear).unwrap();
        assert!(s.alpha_bars().windows(2).all(|w| w[1] < w[0]));
        assert!(s.alpha_bar(1000) < 1e-4);
        assert_eq!(s.beta(1), 1e-4);
        assert!((s.beta(1000) - 0.02).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_ranges() {
        assert!(make_schedule(0, 0.1, 0.2, BetaScheduleKind::Linear).is_err());
        assert!(make_schedule(10, 0.0, 0.2, BetaScheduleKind::Linear).is_err());
        assert!(make_schedule(10, 0.3, 0.2, BetaScheduleKind::Linear).is_err());
        assert!(make_schedule(10, 0.1, 1.0, BetaScheduleKind::Linear).is_err());
        assert!(make_schedule(10, f64::NAN, 0.2, BetaScheduleKind::ScaledLinear).is_err());
    }

    #[test]
    fn inversion_timestep_examples() {
        let s50 = make_schedule(50, 1e-4, 0.02, BetaScheduleKind::Linear).unwrap();
        let s1000 = make_schedule(1000, 1e-4, 0.02, BetaScheduleKind::Linear).unwrap();
        let full = AlphaRange::new(0.0, 1.0).unwrap();
        assert_eq!(inversion_timestep(&InversionConfig::new(0.5, full, 0), &s50), 25);
        assert_eq!(inversion_timestep(&InversionConfig::new(0.7, full, 0), &s1000), 700);
        assert_eq!(inversion_timestep(&InversionConfig::new(0.95, AlphaRange::COGVIDEOX, 0), &s50), 45);
        // clamps into [1, T]
        assert_eq!(inversion_timestep(&InversionConfig::new(0.001, full, 0), &s50), 1);
        assert_eq!(inversion_timestep(&InversionConfig::new(1.0, full, 0), &s50), 50);
        // half rounds up: 0.51 * 50 = 25.5
        assert_eq!(inversion_timestep(&InversionConfig::new(0.51, full, 0), &s50), 26);
    }

    #[test]
    fn forward_noise_is_identity_without_noise() {
        let s = make_schedule(4, 1e-20, 1e-20, BetaScheduleKind::Linear).unwrap();
        let z0 = LatentVideo::from_fn([2, 3, 4, 4], "identity", |(f, c, y, x)| (f + c + y * x) as f64 * 0.1);
        assert_eq!(forward_noise(&z0, 4, &s, 3).unwrap(), z0);
    }

    #[test]
    fn forward_noise_determinism_and_errors() {
        let s = ScheduleParams::default().build().unwrap();
        let z0 = LatentVideo::zeros([2, 3, 8, 8], "identity");
        let a = forward_noise(&z0, 500, &s, 11).unwrap();
        let b = forward_noise(&z0, 500, &s, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, forward_noise(&z0, 500, &s, 12).unwrap());
        assert!(forward_noise(&z0, 0, &s, 1).is_err());
        assert!(forward_noise(&z0, 1001, &s, 1).is_err());
        let mut bad = z0.clone();
        bad.data_mut()[[0, 0, 0, 0]] = f64::NAN;
        assert!(matches!(forward_noise(&bad, 10, &s, 1), Err(Error::Data(_))));
    }

    #[test]
    fn frames_draw_independent_noise() {
        let s = ScheduleParams::default().build().unwrap();
        let z0 = LatentVideo::zeros([2, 1, 4, 4], "identity");
        let z = forward_noise(&z0, 1000, &s, 5).unwrap();
        assert_ne!(z.data().index_axis(Axis(0), 0), z.data().index_axis(Axis(0), 1));
        // frame 0 does not depend on how many frames follow it
        let one = forward_noise(&LatentVideo::zeros([1, 1, 4, 4], "identity"), 1000, &s, 5).unwrap();
        assert_eq!(one.data().index_axis(Axis(0), 0), z.data().index_axis(Axis(0), 0));
    }

    #[test]
    fn zero_latent_moments() {
        let s = make_schedule(1000, 1e-4, 0.02, BetaScheduleKind::Linear).unwrap();
        let z0 = LatentVideo::zeros([4, 4, 80, 80], "identity");
        let n = z0.len() as f64;
        for t in [100, 600] {
            let z = forward_noise(&z0, t, &s, 99).unwrap();
            let mean = z.mean();
            let var = z.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let target = 1.0 - s.alpha_bar(t);
            assert!(mean.abs() < 4.0 * (target / n).sqrt(), "mean {mean}");
            assert!((var - target).abs() < 4.0 * target * (2.0 / (n - 1.0)).sqrt(), "var {var} vs {target}");
        }
    }

    #[test]
    fn noise_magnitude_grows_with_t_for_fixed_draw() {
        let s = ScheduleParams::default().build().unwrap();
        let z0 = LatentVideo::from_fn([1, 3, 6, 6], "identity", |(_, c, y, x)| ((c + y + x) % 3) as f64 - 1.0);
        let residual = |t: usize| {
            let z = forward_noise(&z0, t, &s, 8).unwrap();
            z.affine_combine(1.0, &z0, -s.signal(t)).l2_norm()
        };
        let r: Vec<f64> = [10, 100, 400, 900].into_iter().map(residual).collect();
        assert!(r.windows(2).all(|w| w[0] < w[1]), "{r:?}");
    }

    proptest! {
        #[test]
        fn stored_products_match_recomputation(
            steps in 1usize..400,
            start in 1e-5f64..0.05,
            span in 0.0f64..0.05,
            scaled in any::<bool>(),
        ) {
            let kind = if scaled { BetaScheduleKind::ScaledLinear } else { BetaScheduleKind::Linear };
            let s = make_schedule(steps, start, start + span, kind).unwrap();
            let mut prod = 1.0;
            for t in 1..=steps {
                prod *= 1.0 - s.beta(t);
                prop_assert!((s.alpha_bar(t) - prod).abs() <= 1e-12 * prod);
                prop_assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
                prop_assert_eq!(s.diffusion_coeff_sq(t), s.beta(t));
            }
        }

        #[test]
        fn inversion_timestep_stays_in_bounds(alpha in -1.0f64..2.0, lo in 0.0f64..0.5, w in 0.0f64..0.5) {
            let s = make_schedule(50, 1e-4, 0.02, BetaScheduleKind::Linear).unwrap();
            let range = AlphaRange::new(lo, lo + w).unwrap();
            let t = inversion_timestep(&InversionConfig::new(alpha, range, 0), &s);
            prop_assert!((1..=50).contains(&t));
        }
    }
}
