use crate::error::{Error, Result};
use crate::latent::LatentVideo;
use crate::schedule::NoiseSchedule;

/// Noise-prediction model `ε̂(z, t | conditioning)`.
///
/// Implementations must return a tensor of the input's shape and must be
/// finite for finite input; [`super::predict_checked`] enforces both.
pub trait Denoiser: Send + Sync {
    fn predict(&self, z: &LatentVideo, t: usize, conditioning: &str) -> Result<LatentVideo>;

    /// Whether several `predict` calls may run at the same time. Callers that
    /// fan out (for example an α sweep) serialize when this is false.
    fn supports_concurrent_calls(&self) -> bool {
        true
    }

    /// Short identifier recorded in manifests.
    fn id(&self) -> String {
        "custom".into()
    }
}

/// Exact posterior noise predictor for data distributed as `N(μ, σ²I)`.
///
/// Under the forward process `z_t = √ᾱ_t x + √(1−ᾱ_t) ε`, the marginal of
/// `z_t` is Gaussian and `E[ε | z_t] = √(1−ᾱ_t)(z − √ᾱ_t μ) / (ᾱ_t σ² + 1 − ᾱ_t)`.
/// The probability flow ODE driven by this predictor is linear, which makes
/// the denoiser a convenient reference for solver accuracy tests.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDenoiser {
    mu: f64,
    sigma: f64,
    alpha_bars: Vec<f64>,
}

impl GaussianDenoiser {
    pub fn new(mu: f64, sigma: f64, schedule: &NoiseSchedule) -> Result<Self> {
        if !(mu.is_finite() && sigma.is_finite() && sigma > 0.0) {
            return Err(Error::config(format!("Gaussian prior needs finite mu and sigma > 0, got ({mu}, {sigma})")));
        }
        Ok(Self { mu, sigma, alpha_bars: schedule.alpha_bars().to_vec() })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Per-element `(gain, offset)` with `ε̂ = gain·z + offset`.
    pub fn affine_coefficients(&self, t: usize) -> (f64, f64) {
        let a = self.alpha_bars[t];
        let gain = (1.0 - a).sqrt() / (a * self.sigma * self.sigma + 1.0 - a);
        (gain, -gain * a.sqrt() * self.mu)
    }
}

impl Denoiser for GaussianDenoiser {
    fn predict(&self, z: &LatentVideo, t: usize, _conditioning: &str) -> Result<LatentVideo> {
        if t >= self.alpha_bars.len() {
            return Err(Error::config(format!("timestep {t} outside the denoiser's schedule")));
        }
        let (gain, offset) = self.affine_coefficients(t);
        Ok(z.with_data(z.data().mapv(|v| gain * v + offset)))
    }

    fn id(&self) -> String {
        format!("gaussian(mu={}, sigma={})", self.mu, self.sigma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::ScheduleParams;

    #[test]
    fn matches_posterior_formula() {
        let s = ScheduleParams::default().build().unwrap();
        let d = GaussianDenoiser::new(2.0, 0.5, &s).unwrap();
        let z = LatentVideo::from_fn([1, 1, 1, 3], "identity", |(_, _, _, x)| x as f64 - 1.0);
        let t = 400;
        let a = s.alpha_bar(t);
        let eps = d.predict(&z, t, "ignored").unwrap();
        for (e, zv) in eps.data().iter().zip(z.data()) {
            let expected = (1.0 - a).sqrt() * (zv - a.sqrt() * 2.0) / (a * 0.25 + 1.0 - a);
            assert!((e - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let s = ScheduleParams::default().build().unwrap();
        assert!(GaussianDenoiser::new(0.0, 0.0, &s).is_err());
        assert!(GaussianDenoiser::new(f64::NAN, 1.0, &s).is_err());
        let d = GaussianDenoiser::new(0.0, 1.0, &s).unwrap();
        assert!(d.predict(&LatentVideo::zeros([1, 1, 1, 1], "identity"), 1001, "").is_err());
    }
}
