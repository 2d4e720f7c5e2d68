use std::path::Path;
use std::time::Instant;

use sketchguide::gateway::{GatewayClient, MockConfig, MockServer, ServiceKind};
use sketchguide::pipeline::{
    self, frame_hashes, AlphaSetting, BackgroundStrategy, Pipeline, PipelineManifest, RunConfig, FINAL_DIR, MANIFEST_FILE,
    PLAN_RESPONSE_FILE,
};
use sketchguide::Error;

fn config(out: &Path) -> RunConfig {
    RunConfig {
        video_prompt: "an egg moving left".into(),
        frame_count: 6,
        width: 48,
        height: 32,
        use_fallback_planner: true,
        mock: true,
        seed: 11,
        out_dir: out.into(),
        ..Default::default()
    }
}

fn kinds(m: &PipelineManifest, stage: &str) -> Vec<ServiceKind> {
    m.stage(stage).unwrap().calls.iter().map(|c| c.kind).collect()
}

#[test]
fn end_to_end_fallback_run() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let (video, manifest) = pipeline::run(&config(dir.path())).unwrap();
    assert!(start.elapsed().as_secs() < 60);
    assert_eq!((video.len(), video.dims()), (6, (48, 32)));
    assert_eq!(kinds(&manifest, "background"), [ServiceKind::Chat, ServiceKind::T2i, ServiceKind::I2v]);
    let alpha = manifest.alpha.as_ref().unwrap();
    assert!(manifest.config.alpha_range.contains(alpha.value));
    for name in ["plan.json", "sketch.json", MANIFEST_FILE, "background/frame_00005.png", "sketch/frame_00000.png", "final/frame_00005.png"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    pipeline::inspect(&dir.path().join(MANIFEST_FILE)).unwrap();
}

#[test]
fn chat_planned_run_with_direct_t2v() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        use_fallback_planner: false,
        background_strategy: BackgroundStrategy::DirectT2v,
        alpha: AlphaSetting::Fixed(0.95),
        ..config(dir.path())
    };
    let (_, manifest) = pipeline::run(&cfg).unwrap();
    assert_eq!(kinds(&manifest, "background"), [ServiceKind::Chat, ServiceKind::T2v]);
    assert!(dir.path().join(PLAN_RESPONSE_FILE).exists());
    // a fixed α outside the range is clamped
    assert_eq!(manifest.alpha.unwrap().value, 0.9);
    assert_eq!(manifest.t_inv, Some(900));
}

#[test]
fn rerun_uses_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let (first, _) = pipeline::run(&cfg).unwrap();
    let (second, manifest) = pipeline::run(&cfg).unwrap();
    assert_eq!(first, second);
    assert!(manifest.stages.iter().all(|s| s.cached));

    let changed = RunConfig { alpha: AlphaSetting::Fixed(0.7), ..cfg };
    let (_, manifest) = pipeline::run(&changed).unwrap();
    let cached: Vec<bool> = manifest.stages.iter().map(|s| s.cached).collect();
    assert_eq!(cached, [true, true, false]);
}

#[test]
fn same_seed_same_frames() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline::run(&config(a.path())).unwrap();
    pipeline::run(&config(b.path())).unwrap();
    assert_eq!(frame_hashes(&a.path().join(FINAL_DIR)).unwrap(), frame_hashes(&b.path().join(FINAL_DIR)).unwrap());

    let c = tempfile::tempdir().unwrap();
    pipeline::run(&RunConfig { seed: 12, ..config(c.path()) }).unwrap();
    assert_ne!(frame_hashes(&a.path().join(FINAL_DIR)).unwrap(), frame_hashes(&c.path().join(FINAL_DIR)).unwrap());
}

#[test]
fn bad_plan_fails_closed_with_raw_text() {
    let server = MockServer::start(MockConfig { chat_reply: Some("I would rather not plan this.".into()), ..Default::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig { mock: false, use_fallback_planner: false, endpoints: server.endpoints(), ..config(dir.path()) };
    let mut p = Pipeline::new(cfg, "run").unwrap();
    let background = p.stage1_background().unwrap();
    match p.stage2_sketch(&background).unwrap_err() {
        Error::Stage { stage, raw, .. } => {
            assert_eq!(stage, "sketch");
            assert_eq!(raw.as_deref(), Some("I would rather not plan this."));
        }
        other => panic!("expected a stage error, got {other}"),
    }
    assert_eq!(std::fs::read_to_string(dir.path().join(PLAN_RESPONSE_FILE)).unwrap(), "I would rather not plan this.");
}

#[test]
fn gateway_failure_is_reported_with_stage() {
    let server = MockServer::start(MockConfig { fail_first: 100, ..Default::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let endpoints = server.endpoints().map(|e| {
        e.max_retries = 1;
        e.initial_backoff_ms = 1;
    });
    let cfg = RunConfig { mock: false, endpoints, ..config(dir.path()) };
    let err = pipeline::run(&cfg).unwrap_err();
    assert!(matches!(&err, Error::Stage { stage: "background", .. }), "{err}");
    assert!(err.to_string().contains("503"), "{err}");
}

#[test]
fn baseline_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let (video, manifest) = pipeline::baseline(&config(dir.path())).unwrap();
    assert_eq!(video.len(), 6);
    assert_eq!(manifest.stages.len(), 1);

    let dir = tempfile::tempdir().unwrap();
    let (points, manifest) = pipeline::sweep(&config(dir.path()), &[0.3, 0.5, 0.7, 0.9]).unwrap();
    assert_eq!(manifest.stages.len(), 6);
    let distances: Vec<f64> = points.iter().map(|p| p.sketch_distance).collect();
    assert!(distances.windows(2).all(|w| w[0] < w[1]), "{distances:?}");
    assert_eq!(points.iter().map(|p| p.t_inv).collect::<Vec<_>>(), [300, 500, 700, 900]);
}

#[test]
fn tampering_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    pipeline::run(&config(dir.path())).unwrap();
    std::fs::write(dir.path().join("sketch.json"), "{}").unwrap();
    assert!(matches!(pipeline::inspect(&dir.path().join(MANIFEST_FILE)), Err(Error::Manifest(_))));
}

#[test]
fn client_is_shareable() {
    fn assert_sync<T: Send + Sync>() {}
    assert_sync::<GatewayClient>();
}
