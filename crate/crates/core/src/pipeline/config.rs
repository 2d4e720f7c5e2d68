use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::CodecSpec;
use crate::error::{Error, Result};
use crate::gateway::{EndpointSet, ImageTransport};
use crate::planner::{guess_object_specs, ObjectSpec, DEFAULT_MAX_STEP};
use crate::schedule::{AlphaRange, ScheduleParams};
use crate::solver::{GridKind, SamplerConfig, SolverKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BackgroundStrategy {
    /// Generate one background image, then animate it with a static camera.
    #[default]
    #[serde(rename = "t2i_i2v")]
    T2iThenI2v,
    /// Generate the background clip directly from text.
    #[serde(rename = "t2v")]
    DirectT2v,
}

impl std::str::FromStr for BackgroundStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t2i_i2v" | "t2i_then_i2v" => Ok(Self::T2iThenI2v),
            "t2v" | "direct_t2v" => Ok(Self::DirectT2v),
            other => Err(Error::config(format!("unknown background strategy `{other}` (t2i_i2v or t2v)"))),
        }
    }
}

/// `"auto"` asks the chat model; a number fixes α.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "AlphaValue", into = "AlphaValue")]
pub enum AlphaSetting {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum AlphaValue {
    Number(f64),
    Text(String),
}

impl TryFrom<AlphaValue> for AlphaSetting {
    type Error = Error;

    fn try_from(v: AlphaValue) -> Result<Self> {
        match v {
            AlphaValue::Number(a) => Ok(Self::Fixed(a)),
            AlphaValue::Text(s) => s.parse(),
        }
    }
}

impl From<AlphaSetting> for AlphaValue {
    fn from(a: AlphaSetting) -> Self {
        match a {
            AlphaSetting::Auto => AlphaValue::Text("auto".into()),
            AlphaSetting::Fixed(v) => AlphaValue::Number(v),
        }
    }
}

impl std::str::FromStr for AlphaSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Self::Auto);
        }
        let v: f64 = s.parse().map_err(|_| Error::config(format!("alpha must be `auto` or a number, got `{s}`")))?;
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::config(format!("alpha {v} outside [0, 1]")));
        }
        Ok(Self::Fixed(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DenoiserSpec {
    /// The closed-form predictor for data drawn from `N(μ, σ²)`.
    Gaussian { mu: f64, sigma: f64 },
    /// The `denoise` service endpoint.
    Remote,
}

impl Default for DenoiserSpec {
    fn default() -> Self {
        Self::Gaussian { mu: 0.0, sigma: 0.5 }
    }
}

impl std::str::FromStr for DenoiserSpec {
    type Err = Error;

    /// `remote` or `gaussian:<mu>,<sigma>`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "remote" {
            return Ok(Self::Remote);
        }
        let bad = || Error::config(format!("denoiser `{s}` is not `remote` or `gaussian:<mu>,<sigma>`"));
        let (mu, sigma) = s.strip_prefix("gaussian:").and_then(|r| r.split_once(',')).ok_or_else(bad)?;
        Ok(Self::Gaussian { mu: mu.trim().parse().map_err(|_| bad())?, sigma: sigma.trim().parse().map_err(|_| bad())? })
    }
}

/// Everything a run depends on. Config files (TOML or JSON) use these field
/// names; missing fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub video_prompt: String,
    pub frame_count: usize,
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub background_strategy: BackgroundStrategy,
    pub alpha: AlphaSetting,
    pub alpha_range: AlphaRange,
    pub solver: SolverKind,
    pub steps: usize,
    pub grid: GridKind,
    pub schedule: ScheduleParams,
    pub codec: CodecSpec,
    pub denoiser: DenoiserSpec,
    /// Master seed; every stochastic step derives its own seed from it.
    pub seed: u64,
    pub use_fallback_planner: bool,
    /// Objects for the fallback planner and extra detector labels. Guessed
    /// from the prompt when empty.
    pub objects: Vec<ObjectSpec>,
    pub max_step: f64,
    /// Side length of generated object images.
    pub sprite_size: usize,
    /// Upper bound on concurrent service calls within a stage.
    pub parallelism: usize,
    pub chat_model: String,
    pub image_transport: ImageTransport,
    pub endpoints: EndpointSet,
    /// Serve every endpoint from an in-process mock.
    pub mock: bool,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sampler = SamplerConfig::default();
        Self {
            video_prompt: String::new(),
            frame_count: 8,
            width: 64,
            height: 48,
            fps: 8.0,
            background_strategy: BackgroundStrategy::default(),
            alpha: AlphaSetting::default(),
            alpha_range: AlphaRange::COGVIDEOX,
            solver: sampler.kind,
            steps: sampler.steps,
            grid: sampler.grid,
            schedule: ScheduleParams::default(),
            codec: CodecSpec::Identity,
            denoiser: DenoiserSpec::default(),
            seed: 0,
            use_fallback_planner: false,
            objects: Vec::new(),
            max_step: DEFAULT_MAX_STEP,
            sprite_size: 64,
            parallelism: 4,
            chat_model: "default".into(),
            image_transport: ImageTransport::Inline,
            endpoints: EndpointSet::default(),
            mock: false,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Reads a `.toml` or `.json` file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display()))),
            Some("json") => Ok(serde_json::from_str(&text)?),
            _ => Err(Error::config(format!("{}: config files must end in .toml or .json", path.display()))),
        }
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig { kind: self.solver, steps: self.steps, grid: self.grid }
    }

    /// The configured objects, or a guess from the prompt.
    pub fn object_specs(&self) -> Vec<ObjectSpec> {
        if self.objects.is_empty() {
            guess_object_specs(&self.video_prompt)
        } else {
            self.objects.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.video_prompt.trim().is_empty() {
            return Err(Error::config("video prompt is empty"));
        }
        if self.frame_count < 2 {
            return Err(Error::config(format!("frame_count must be at least 2, got {}", self.frame_count)));
        }
        if self.width == 0 || self.height == 0 || self.sprite_size == 0 {
            return Err(Error::config("frame and sprite sizes must be positive"));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::config("fps must be positive"));
        }
        if self.steps == 0 || self.parallelism == 0 {
            return Err(Error::config("steps and parallelism must be positive"));
        }
        if !(self.max_step.is_finite() && self.max_step > 0.0) {
            return Err(Error::config("max_step must be positive"));
        }
        if let AlphaSetting::Fixed(a) = self.alpha {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::config(format!("alpha {a} outside [0, 1]")));
            }
        }
        if let DenoiserSpec::Gaussian { mu, sigma } = self.denoiser {
            if !(mu.is_finite() && sigma.is_finite() && sigma > 0.0) {
                return Err(Error::config("gaussian denoiser needs finite mu and sigma > 0"));
            }
        }
        self.alpha_range.validate()?;
        self.schedule.build()?;
        self.endpoints.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_with_defaults() {
        let cfg: RunConfig = toml::from_str(
            r#"
            video_prompt = "an egg moving left"
            alpha = 0.6
            codec = "patchify:2"
            background_strategy = "t2v"
            alpha_range = { lo = 0.5, hi = 0.8 }
            objects = [{ name = "egg", count = 1, direction = "left" }]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.alpha, AlphaSetting::Fixed(0.6));
        assert_eq!(cfg.codec, CodecSpec::Patchify { factor: 2 });
        assert_eq!(cfg.background_strategy, BackgroundStrategy::DirectT2v);
        assert_eq!(cfg.frame_count, 8);
        cfg.validate().unwrap();
    }

    #[test]
    fn json_round_trip() {
        let cfg = RunConfig { video_prompt: "x".into(), denoiser: DenoiserSpec::Remote, ..Default::default() };
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains(r#""alpha":"auto""#));
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        let ok = RunConfig { video_prompt: "x".into(), ..Default::default() };
        assert!(RunConfig { frame_count: 1, ..ok.clone() }.validate().is_err());
        assert!(RunConfig { width: 0, ..ok.clone() }.validate().is_err());
        assert!(RunConfig { alpha: AlphaSetting::Fixed(1.5), ..ok.clone() }.validate().is_err());
        assert!(toml::from_str::<RunConfig>("surprise = 1").is_err());
        assert!("gaussian:1,0.5".parse::<DenoiserSpec>().is_ok());
        assert!("gaussian:1".parse::<DenoiserSpec>().is_err());
        assert!("1.2".parse::<AlphaSetting>().is_err());
    }
}
