//! The three stages run end to end, with caching and a manifest.
//!
//! Output layout under `out_dir`:
//!
//! ```text
//! background/frame_00000.png …  index.json
//! sprites/<k>_<name>.png, <k>_<name>_mask.png
//! sketch/frame_00000.png …      index.json
//! final/frame_00000.png …       index.json
//! plan.json  plan_response.txt  sketch.json  manifest.json
//! ```
//!
//! Every stage reads its upstream frames back from disk, so a cached stage
//! and a freshly computed one hand identical (PNG-quantized) data onward.

mod config;
mod manifest;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use config::{AlphaSetting, BackgroundStrategy, DenoiserSpec, RunConfig};
pub use manifest::{file_sha256, ArtifactRecord, PipelineManifest, StageRecord, MANIFEST_FILE, MANIFEST_VERSION};

use crate::codec::{frame_file_name, read_frames, write_frames, FrameIndex, LatentCodec, PixelVideo, INDEX_FILE};
use crate::compositor::{assemble_sketch, extract_sprite, SketchRecord, Sprite, VideoSketch};
use crate::error::{Error, Result};
use crate::gateway::mock::OBJECT_PROMPT_PREFIX;
use crate::gateway::wire::sha256_hex;
use crate::gateway::{GatewayClient, MockConfig, MockServer, RemoteDenoiser, RemoteVae};
use crate::latent::LatentVideo;
use crate::noise::{fill_standard_normal, INIT_BASE};
use crate::planner::templates::{build_background_prompt, build_plan_prompt, template_ids};
use crate::planner::{
    fallback_plan, interpolate_trajectory, parse_layout_plan, select_alpha, validate_plan, AlphaChoice, AlphaSource,
    BBox, ChatModel, PlanFile,
};
use crate::raster::Image;
use crate::schedule::{forward_noise, inversion_timestep, AlphaRange, InversionConfig, NoiseSchedule};
use crate::solver::{sample_from, Denoiser, GaussianDenoiser};

pub const BACKGROUND_DIR: &str = "background";
pub const SPRITES_DIR: &str = "sprites";
pub const SKETCH_DIR: &str = "sketch";
pub const FINAL_DIR: &str = "final";
pub const PLAN_FILE: &str = "plan.json";
pub const PLAN_RESPONSE_FILE: &str = "plan_response.txt";
pub const SKETCH_FILE: &str = "sketch.json";
pub const SWEEP_FILE: &str = "sweep.json";

/// Appended to background video prompts.
pub const STATIC_CAMERA: &str = "Static camera, no camera motion.";

/// Box handed to the segmenter when the detector does not find the object
/// in its own generated image.
pub const DEFAULT_OBJECT_BOX: [f64; 4] = [0.1, 0.1, 0.9, 0.9];

/// A seed for one stochastic step, derived from the master seed and a label.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let digest = sha256_hex(&[master.to_le_bytes().as_slice(), label.as_bytes()].concat());
    u64::from_str_radix(&digest[..16], 16).expect("hex digest")
}

/// One α of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub t_inv: usize,
    /// L2 distance between the final latent and the sketch latent.
    pub sketch_distance: f64,
    pub final_dir: PathBuf,
}

#[derive(Debug, Clone, Copy)]
enum AlphaPick {
    /// Whatever the run configuration says.
    Configured,
    /// Exactly this value, ignoring the backend range (sweeps).
    Exact(f64),
}

/// What a freshly computed stage produced.
struct StageOutput {
    outputs: Vec<PathBuf>,
    seeds: BTreeMap<String, u64>,
    details: serde_json::Value,
}

pub struct Pipeline {
    cfg: RunConfig,
    out: PathBuf,
    client: Arc<GatewayClient>,
    schedule: NoiseSchedule,
    previous: Option<PipelineManifest>,
    manifest: PipelineManifest,
    _mock: Option<MockServer>,
}

impl Pipeline {
    /// Validates the configuration, starts the mock services when asked to,
    /// and picks up the manifest of an earlier run in the same directory for
    /// caching.
    pub fn new(cfg: RunConfig, mode: &str) -> Result<Self> {
        cfg.validate()?;
        let schedule = cfg.schedule.build()?;
        let (endpoints, mock) = if cfg.mock {
            let denoiser = match cfg.denoiser {
                DenoiserSpec::Gaussian { mu, sigma } => GaussianDenoiser::new(mu, sigma, &schedule)?,
                DenoiserSpec::Remote => GaussianDenoiser::new(0.0, 0.5, &schedule)?,
            };
            let server = MockServer::start(MockConfig { denoiser: Some(denoiser), ..Default::default() })?;
            (server.endpoints(), Some(server))
        } else {
            (cfg.endpoints.clone().from_env(), None)
        };
        let client = GatewayClient::new(endpoints)?
            .with_transport(cfg.image_transport.clone())
            .with_chat_model(cfg.chat_model.clone());
        let out = cfg.out_dir.clone();
        std::fs::create_dir_all(&out)?;
        let previous = match PipelineManifest::load(&out.join(MANIFEST_FILE)) {
            Ok(m) => Some(m),
            Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => {
                log::warn!("ignoring unreadable manifest in {}: {e}", out.display());
                None
            }
        };
        let manifest = PipelineManifest::new(mode, &cfg, template_ids());
        Ok(Self { cfg, out, client: Arc::new(client), schedule, previous, manifest, _mock: mock })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn manifest(&self) -> &PipelineManifest {
        &self.manifest
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    fn save_manifest(&self) -> Result<()> {
        self.manifest.save(&self.out.join(MANIFEST_FILE))
    }

    fn input_hash(&self, stage: &str, slice: serde_json::Value, inputs: &BTreeMap<PathBuf, String>) -> String {
        let key = json!({ "stage": stage, "config": slice, "inputs": inputs, "templates": self.manifest.templates });
        sha256_hex(&serde_json::to_vec(&key).expect("serializable"))
    }

    /// Reuses the earlier run's record when its input hash matches and its
    /// outputs are intact.
    fn try_cache(&mut self, stage: &str, input_hash: &str) -> bool {
        let Some(prev) = self.previous.as_ref().and_then(|m| m.stage(stage)) else {
            return false;
        };
        if prev.input_hash != input_hash {
            return false;
        }
        let intact = prev
            .outputs
            .iter()
            .all(|a| file_sha256(&self.out.join(&a.path)).is_ok_and(|h| h == a.sha256));
        if !intact {
            log::info!("stage `{stage}`: cached outputs changed on disk; recomputing");
            return false;
        }
        log::info!("stage `{stage}`: inputs unchanged, reusing cached outputs");
        let mut record = prev.clone();
        record.cached = true;
        self.manifest.record(record);
        true
    }

    fn run_stage(
        &mut self,
        stage: &str,
        slice: serde_json::Value,
        inputs: BTreeMap<PathBuf, String>,
        compute: impl FnOnce(&mut Self) -> Result<StageOutput>,
    ) -> Result<()> {
        let input_hash = self.input_hash(stage, slice, &inputs);
        if !self.try_cache(stage, &input_hash) {
            self.client.take_calls();
            let start = Instant::now();
            let produced = compute(self);
            let calls = self.client.take_calls();
            let produced = produced?;
            let outputs = produced
                .outputs
                .into_iter()
                .map(|p| ArtifactRecord::of(&self.out, p))
                .collect::<Result<Vec<_>>>()?;
            self.manifest.record(StageRecord {
                stage: stage.into(),
                input_hash,
                inputs,
                outputs,
                seeds: produced.seeds,
                duration_ms: start.elapsed().as_secs_f64() * 1e3,
                cached: false,
                calls,
                details: produced.details,
            });
        }
        self.save_manifest()
    }

    /// Output hashes of an earlier stage whose paths start with `prefix`.
    fn upstream(&self, stage: &str, prefixes: &[&str]) -> Result<BTreeMap<PathBuf, String>> {
        let record = self
            .manifest
            .stage(stage)
            .ok_or_else(|| Error::config(format!("stage `{stage}` has not run in this pipeline")))?;
        Ok(record
            .outputs
            .iter()
            .filter(|a| prefixes.iter().any(|p| a.path.starts_with(p)))
            .map(|a| (a.path.clone(), a.sha256.clone()))
            .collect())
    }

    fn write_frame_dir(&self, dir: &str, video: &PixelVideo) -> Result<Vec<PathBuf>> {
        let mut paths: Vec<PathBuf> = write_frames(&self.out.join(dir), video)?
            .into_iter()
            .map(|p| p.strip_prefix(&self.out).map(Path::to_path_buf).expect("frame written under out_dir"))
            .collect();
        paths.push(Path::new(dir).join(INDEX_FILE));
        Ok(paths)
    }

    /// Stage 1: describe the background, then render it as a clip.
    pub fn stage1_background(&mut self) -> Result<PixelVideo> {
        self.background().map_err(|e| e.in_stage("background", None))
    }

    fn background(&mut self) -> Result<PixelVideo> {
        let cfg = &self.cfg;
        let slice = json!({
            "video_prompt": cfg.video_prompt, "frame_count": cfg.frame_count, "width": cfg.width,
            "height": cfg.height, "fps": cfg.fps, "strategy": cfg.background_strategy, "seed": cfg.seed,
            "chat_model": cfg.chat_model,
        });
        self.run_stage("background", slice, BTreeMap::new(), |p| {
            let cfg = p.cfg.clone();
            let description = p.client.complete(&build_background_prompt(&cfg.video_prompt)?)?;
            let video_prompt = format!("{} {STATIC_CAMERA}", description.trim());
            let mut seeds = BTreeMap::new();
            let video = match cfg.background_strategy {
                BackgroundStrategy::T2iThenI2v => {
                    let (s_img, s_vid) = (derive_seed(cfg.seed, "background:t2i"), derive_seed(cfg.seed, "background:i2v"));
                    seeds.extend([("t2i".to_string(), s_img), ("i2v".to_string(), s_vid)]);
                    let image = p.client.text_to_image(description.trim(), cfg.width, cfg.height, s_img)?;
                    p.client.image_to_video(&image, &video_prompt, cfg.frame_count, s_vid)?
                }
                BackgroundStrategy::DirectT2v => {
                    let s = derive_seed(cfg.seed, "background:t2v");
                    seeds.insert("t2v".into(), s);
                    p.client.text_to_video(&video_prompt, cfg.frame_count, cfg.width, cfg.height, s)?
                }
            };
            let video = PixelVideo::new(video.into_frames(), cfg.fps)?;
            let outputs = p.write_frame_dir(BACKGROUND_DIR, &video)?;
            Ok(StageOutput { outputs, seeds, details: json!({ "description": description, "video_prompt": video_prompt }) })
        })?;
        read_frames(&self.out.join(BACKGROUND_DIR))
    }

    /// Stage 2: plan the foreground layout and composite sprites onto the
    /// background. Plan errors carry the raw model answer.
    pub fn stage2_sketch(&mut self, background: &PixelVideo) -> Result<VideoSketch> {
        let mut raw = None;
        self.sketch(background, &mut raw).map_err(|e| match e {
            Error::Stage { .. } => e,
            other => other.in_stage("sketch", raw),
        })
    }

    fn sketch(&mut self, background: &PixelVideo, raw: &mut Option<String>) -> Result<VideoSketch> {
        let cfg = &self.cfg;
        let inputs = self.upstream("background", &[BACKGROUND_DIR])?;
        let slice = json!({
            "video_prompt": cfg.video_prompt, "frame_count": cfg.frame_count, "seed": cfg.seed,
            "use_fallback_planner": cfg.use_fallback_planner, "objects": cfg.object_specs(),
            "max_step": cfg.max_step, "sprite_size": cfg.sprite_size, "chat_model": cfg.chat_model,
        });
        let bg_hash = sha256_hex(serde_json::to_string(&inputs)?.as_bytes());
        self.run_stage("sketch", slice, inputs, |p| {
            let cfg = p.cfg.clone();
            let reference = &background.frames()[0];
            let specs = cfg.object_specs();
            let mut labels = p.client.tag_image(reference)?;
            for spec in &specs {
                if !labels.iter().any(|l| l.eq_ignore_ascii_case(&spec.name)) {
                    labels.push(spec.name.clone());
                }
            }
            let detections = p.client.detect(reference, &labels)?;

            let mut outputs = Vec::new();
            let plan = if cfg.use_fallback_planner {
                fallback_plan(&cfg.video_prompt, cfg.frame_count, &specs)?
            } else {
                let prompt = build_plan_prompt(&cfg.video_prompt, &detections, cfg.frame_count)?;
                let answer = p.client.complete(&prompt)?;
                std::fs::write(p.out.join(PLAN_RESPONSE_FILE), &answer)?;
                outputs.push(PathBuf::from(PLAN_RESPONSE_FILE));
                *raw = Some(answer.clone());
                let parsed = parse_layout_plan(&answer, cfg.frame_count)?;
                let valid = validate_plan(&parsed, cfg.frame_count, cfg.max_step)?;
                interpolate_trajectory(&valid, cfg.frame_count)?
            };

            let sprites = p.make_sprites(&plan.objects)?;
            std::fs::create_dir_all(p.out.join(SPRITES_DIR))?;
            let mut provenance = BTreeMap::from([("background".to_string(), bg_hash.clone())]);
            for (k, name) in plan.objects.iter().enumerate() {
                let sprite = &sprites[name];
                let stem = format!("{k:02}_{}", file_stem(name));
                let color = Path::new(SPRITES_DIR).join(format!("{stem}.png"));
                let mask = Path::new(SPRITES_DIR).join(format!("{stem}_mask.png"));
                sprite.color().save_png(&p.out.join(&color))?;
                std::fs::write(p.out.join(&mask), sprite.alpha().to_png()?)?;
                provenance.insert(format!("sprite:{name}"), file_sha256(&p.out.join(&color))?);
                outputs.extend([color, mask]);
            }

            let mut sketch = assemble_sketch(background, &sprites, &plan)?;
            sketch.provenance = provenance;
            outputs.extend(p.write_frame_dir(SKETCH_DIR, &sketch.frames)?);
            std::fs::write(p.out.join(SKETCH_FILE), serde_json::to_vec_pretty(&sketch.record())?)?;
            std::fs::write(p.out.join(PLAN_FILE), serde_json::to_vec_pretty(&PlanFile::new(&plan, None))?)?;
            outputs.extend([PathBuf::from(SKETCH_FILE), PathBuf::from(PLAN_FILE)]);

            let seeds = plan.objects.iter().map(|n| (format!("sprite:{n}"), sprite_seed(cfg.seed, n))).collect();
            let details = json!({
                "tags": labels, "detections": detections, "planner": if cfg.use_fallback_planner { "fallback" } else { "chat" },
                "objects": plan.objects, "reasoning": plan.reasoning,
            });
            Ok(StageOutput { outputs, seeds, details })
        })?;
        let record: SketchRecord = serde_json::from_slice(&std::fs::read(self.out.join(SKETCH_FILE))?)?;
        Ok(VideoSketch { frames: read_frames(&self.out.join(SKETCH_DIR))?, placements: record.placements, provenance: record.provenance })
    }

    /// Object image → detector box → mask → sprite, for every name, with at
    /// most `parallelism` requests in flight.
    fn make_sprites(&self, names: &[String]) -> Result<BTreeMap<String, Sprite>> {
        let make = |name: &String| -> Result<Sprite> {
            let prompt = format!("{OBJECT_PROMPT_PREFIX}{name}");
            let size = self.cfg.sprite_size;
            let image = self.client.text_to_image(&prompt, size, size, sprite_seed(self.cfg.seed, name))?;
            let found = self.client.detect(&image, std::slice::from_ref(name))?;
            let bbox = match found.iter().max_by(|a, b| a.confidence.total_cmp(&b.confidence)) {
                Some(d) => d.bbox,
                None => {
                    log::info!("detector did not find `{name}` in its object image; segmenting the central box");
                    let [x1, y1, x2, y2] = DEFAULT_OBJECT_BOX;
                    BBox::new(x1, y1, x2, y2)?
                }
            };
            let mask = self.client.segment(&image, &bbox)?;
            extract_sprite(&image, &mask, &prompt)
        };
        let mut sprites = BTreeMap::new();
        for chunk in names.chunks(self.cfg.parallelism) {
            let made: Vec<Result<Sprite>> = std::thread::scope(|s| {
                let handles: Vec<_> = chunk.iter().map(|n| s.spawn(move || make(n))).collect();
                handles.into_iter().map(|h| h.join().expect("sprite worker panicked")).collect()
            });
            for (name, sprite) in chunk.iter().zip(made) {
                sprites.insert(name.clone(), sprite?);
            }
        }
        Ok(sprites)
    }

    fn codec(&self) -> Result<Box<dyn LatentCodec>> {
        Ok(match self.cfg.codec.local(self.cfg.fps)? {
            Some(c) => c,
            None => Box::new(RemoteVae::new(self.client.clone(), self.cfg.fps)),
        })
    }

    fn denoiser(&self) -> Result<Box<dyn Denoiser>> {
        Ok(match self.cfg.denoiser {
            DenoiserSpec::Gaussian { mu, sigma } => Box::new(GaussianDenoiser::new(mu, sigma, &self.schedule)?),
            DenoiserSpec::Remote => Box::new(RemoteDenoiser::new(self.client.clone())),
        })
    }

    fn generation_slice(&self, alpha: AlphaPick) -> serde_json::Value {
        let cfg = &self.cfg;
        let alpha = match alpha {
            AlphaPick::Configured => json!({ "setting": cfg.alpha, "range": cfg.alpha_range }),
            AlphaPick::Exact(v) => json!({ "exact": v }),
        };
        json!({
            "video_prompt": cfg.video_prompt, "alpha": alpha, "sampler": cfg.sampler(), "schedule": cfg.schedule,
            "codec": cfg.codec, "denoiser": cfg.denoiser, "seed": cfg.seed, "chat_model": cfg.chat_model,
            "fps": cfg.fps,
        })
    }

    /// Stage 3: encode the sketch, noise it to `t_inv`, denoise, decode.
    pub fn stage3_generate(&mut self, sketch: &VideoSketch) -> Result<PixelVideo> {
        let (video, details) =
            self.generate(sketch, AlphaPick::Configured, "generate", FINAL_DIR).map_err(|e| e.in_stage("generate", None))?;
        self.manifest.alpha = Some(serde_json::from_value(details["alpha"].clone())?);
        self.manifest.t_inv = details["t_inv"].as_u64().map(|t| t as usize);
        self.save_manifest()?;
        Ok(video)
    }

    fn generate(&mut self, sketch: &VideoSketch, pick: AlphaPick, stage: &str, final_dir: &str) -> Result<(PixelVideo, serde_json::Value)> {
        let inputs = self.upstream("sketch", &[SKETCH_DIR])?;
        let slice = self.generation_slice(pick);
        self.run_stage(stage, slice, inputs, |p| {
            let cfg = p.cfg.clone();
            let codec = p.codec()?;
            let z0 = codec.encode(&sketch.frames)?;
            let (choice, range) = match (pick, cfg.alpha) {
                (AlphaPick::Exact(v), _) => {
                    (AlphaChoice { value: v, source: AlphaSource::Fixed, response: None }, AlphaRange { lo: 0.0, hi: 1.0 })
                }
                (AlphaPick::Configured, AlphaSetting::Fixed(v)) => {
                    let value = cfg.alpha_range.clamp(v);
                    if value != v {
                        log::warn!("fixed alpha {v} clamped into [{}, {}]", cfg.alpha_range.lo, cfg.alpha_range.hi);
                    }
                    (AlphaChoice { value, source: AlphaSource::Fixed, response: None }, cfg.alpha_range)
                }
                (AlphaPick::Configured, AlphaSetting::Auto) => {
                    (select_alpha(&cfg.video_prompt, cfg.alpha_range, p.client.as_ref() as &dyn ChatModel)?, cfg.alpha_range)
                }
            };
            let (noise_seed, sampler_seed) = (derive_seed(cfg.seed, "inversion"), derive_seed(cfg.seed, "sampler"));
            let t_inv = inversion_timestep(&InversionConfig::new(choice.value, range, noise_seed), &p.schedule);
            let z_t = forward_noise(&z0, t_inv, &p.schedule, noise_seed)?;
            let denoiser = p.denoiser()?;
            let z = sample_from(&z_t, t_inv, denoiser.as_ref(), &p.schedule, &cfg.sampler(), sampler_seed, &cfg.video_prompt)?;
            let video = codec.decode(&z)?;
            let outputs = p.write_frame_dir(final_dir, &PixelVideo::new(video.into_frames(), cfg.fps)?)?;
            let details = json!({
                "alpha": choice, "t_inv": t_inv, "sketch_distance": z.l2_distance(&z0), "codec": codec.id(),
                "denoiser": denoiser.id(), "latent_shape": z.shape(),
            });
            let seeds = BTreeMap::from([("inversion".to_string(), noise_seed), ("sampler".to_string(), sampler_seed)]);
            Ok(StageOutput { outputs, seeds, details })
        })?;
        let details = self.manifest.stage(stage).map(|r| r.details.clone()).unwrap_or_default();
        Ok((read_frames(&self.out.join(final_dir))?, details))
    }

    /// Pure-noise generation without a sketch, for comparison.
    pub fn baseline(&mut self) -> Result<PixelVideo> {
        self.baseline_inner().map_err(|e| e.in_stage("baseline", None))
    }

    fn baseline_inner(&mut self) -> Result<PixelVideo> {
        let mut slice = self.generation_slice(AlphaPick::Exact(1.0));
        slice["size"] = json!([self.cfg.frame_count, self.cfg.width, self.cfg.height]);
        self.run_stage("baseline", slice, BTreeMap::new(), |p| {
            let cfg = p.cfg.clone();
            let codec = p.codec()?;
            // the codec decides the latent shape; encode a blank clip to learn it
            let blank = PixelVideo::new(vec![Image::filled(cfg.width, cfg.height, [0.5; 3])?; cfg.frame_count], cfg.fps)?;
            let shape = codec.encode(&blank)?.shape();
            let init_seed = derive_seed(cfg.seed, "baseline:init");
            let mut z = LatentVideo::zeros(shape, codec.id());
            for (f, frame) in z.data_mut().axis_iter_mut(ndarray::Axis(0)).enumerate() {
                fill_standard_normal(frame, init_seed, INIT_BASE + f as u64);
            }
            let total = p.schedule.num_steps();
            let sampler_seed = derive_seed(cfg.seed, "sampler");
            let denoiser = p.denoiser()?;
            let out = sample_from(&z, total, denoiser.as_ref(), &p.schedule, &cfg.sampler(), sampler_seed, &cfg.video_prompt)?;
            let video = codec.decode(&out)?;
            let outputs = p.write_frame_dir(FINAL_DIR, &PixelVideo::new(video.into_frames(), cfg.fps)?)?;
            let seeds = BTreeMap::from([("init".to_string(), init_seed), ("sampler".to_string(), sampler_seed)]);
            Ok(StageOutput { outputs, seeds, details: json!({ "t_start": total, "codec": codec.id(), "denoiser": denoiser.id() }) })
        })?;
        read_frames(&self.out.join(FINAL_DIR))
    }

    /// Runs stage 3 once per α on the same sketch. Values are used exactly,
    /// not clamped to the backend range.
    pub fn sweep(&mut self, sketch: &VideoSketch, alphas: &[f64]) -> Result<Vec<SweepPoint>> {
        let mut points = Vec::with_capacity(alphas.len());
        for &alpha in alphas {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(Error::config(format!("sweep alpha {alpha} outside [0, 1]")));
            }
            let stage = format!("generate@{alpha:.3}");
            let dir = format!("sweep/alpha_{alpha:.3}");
            let (_, details) = self.generate(sketch, AlphaPick::Exact(alpha), &stage, &dir).map_err(|e| e.in_stage("sweep", None))?;
            points.push(SweepPoint {
                alpha,
                t_inv: details["t_inv"].as_u64().unwrap_or_default() as usize,
                sketch_distance: details["sketch_distance"].as_f64().unwrap_or(f64::NAN),
                final_dir: PathBuf::from(dir),
            });
        }
        std::fs::write(self.out.join(SWEEP_FILE), serde_json::to_vec_pretty(&points)?)?;
        Ok(points)
    }

    /// Verifies the manifest against the files on disk and saves it.
    pub fn finish(self) -> Result<PipelineManifest> {
        self.manifest.verify(&self.out)?;
        self.save_manifest()?;
        Ok(self.manifest)
    }
}

fn sprite_seed(master: u64, name: &str) -> u64 {
    derive_seed(master, &format!("sprite:{name}"))
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect()
}

/// All three stages in order. Returns the final clip and the verified manifest.
pub fn run(cfg: &RunConfig) -> Result<(PixelVideo, PipelineManifest)> {
    let mut p = Pipeline::new(cfg.clone(), "run")?;
    let background = p.stage1_background()?;
    let sketch = p.stage2_sketch(&background)?;
    let video = p.stage3_generate(&sketch)?;
    Ok((video, p.finish()?))
}

/// Stages 1 and 2 once, then stage 3 for each α.
pub fn sweep(cfg: &RunConfig, alphas: &[f64]) -> Result<(Vec<SweepPoint>, PipelineManifest)> {
    let mut p = Pipeline::new(cfg.clone(), "sweep")?;
    let background = p.stage1_background()?;
    let sketch = p.stage2_sketch(&background)?;
    let points = p.sweep(&sketch, alphas)?;
    Ok((points, p.finish()?))
}

/// Generation from pure noise with stages 1 and 2 skipped.
pub fn baseline(cfg: &RunConfig) -> Result<(PixelVideo, PipelineManifest)> {
    let mut p = Pipeline::new(cfg.clone(), "baseline")?;
    let video = p.baseline()?;
    Ok((video, p.finish()?))
}

/// Loads a manifest and checks it against the files next to it.
pub fn inspect(manifest_path: &Path) -> Result<PipelineManifest> {
    let manifest = PipelineManifest::load(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    manifest.verify(root)?;
    Ok(manifest)
}

/// Hashes of every `frame_*.png` in `dir`, in frame order.
pub fn frame_hashes(dir: &Path) -> Result<Vec<String>> {
    let index: FrameIndex = serde_json::from_slice(&std::fs::read(dir.join(INDEX_FILE))?)?;
    (0..index.count)
        .map(|i| file_sha256(&dir.join(frame_file_name(i))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::CodecSpec;

    #[test]
    fn derived_seeds_differ_by_label() {
        assert_eq!(derive_seed(1, "a"), derive_seed(1, "a"));
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_ne!(derive_seed(1, "a"), derive_seed(2, "a"));
    }

    #[test]
    fn sprite_file_names() {
        assert_eq!(file_stem("Red Ball"), "red_ball");
    }

    #[test]
    fn codec_spec_in_config() {
        let cfg = RunConfig { codec: CodecSpec::Patchify { factor: 2 }, ..Default::default() };
        assert!(serde_json::to_string(&cfg).unwrap().contains(r#""codec":"patchify:2""#));
    }
}
