use std::sync::Arc;
use std::time::Duration;

use sketchguide::codec::{LatentCodec, PixelVideo};
use sketchguide::gateway::{GatewayClient, GatewayError, ImageTransport, MockConfig, MockServer, RemoteDenoiser, RemoteVae, ServiceKind};
use sketchguide::latent::LatentVideo;
use sketchguide::planner::{parse_layout_plan, BBox, ChatModel};
use sketchguide::raster::Image;
use sketchguide::schedule::ScheduleParams;
use sketchguide::solver::{Denoiser, GaussianDenoiser};
use sketchguide::Error;

fn client(server: &MockServer) -> GatewayClient {
    let endpoints = server.endpoints().map(|e| {
        e.initial_backoff_ms = 5;
        e.timeout_secs = 10.0;
    });
    GatewayClient::new(endpoints).unwrap()
}

fn gateway_err(e: Error) -> GatewayError {
    match e {
        Error::Gateway(g) => g,
        other => panic!("expected a gateway error, got {other}"),
    }
}

#[test]
fn canned_plan_text_reaches_the_planner() {
    let canned = r#"Plan below.
{"frames": [{"index": 0, "caption": "start", "placements": [["egg", [0.6, 0.4, 0.7, 0.5]]]},
            {"index": 1, "caption": "end", "placements": [["egg", [0.5, 0.4, 0.6, 0.5]]]}],
 "reasoning": "rolls left"}"#;
    let server = MockServer::start(MockConfig { chat_reply: Some(canned.into()), ..Default::default() }).unwrap();
    let text = client(&server).complete("anything").unwrap();
    assert_eq!(text, canned);
    let plan = parse_layout_plan(&text, 2).unwrap();
    assert_eq!(plan.objects, ["egg"]);
}

#[test]
fn transient_failure_is_retried() {
    let server = MockServer::start(MockConfig { chat_reply: Some("ok".into()), fail_first: 1, ..Default::default() }).unwrap();
    let c = client(&server);
    assert_eq!(c.complete("hi").unwrap(), "ok");
    let calls = c.calls();
    assert_eq!(calls.len(), 1);
    assert_eq!(calls[0].retries, 1);
    assert!(calls[0].error.is_none());
    assert_eq!(server.request_count(), 2);
}

#[test]
fn retries_run_out() {
    let server = MockServer::start(MockConfig { fail_first: 10, ..Default::default() }).unwrap();
    let c = GatewayClient::new(server.endpoints().map(|e| {
        e.max_retries = 2;
        e.initial_backoff_ms = 1;
    }))
    .unwrap();
    let err = gateway_err(c.complete("hi").unwrap_err());
    assert!(matches!(err, GatewayError::Http { status: 503, kind: ServiceKind::Chat, .. }), "{err}");
    assert_eq!(c.calls()[0].retries, 2);
    assert_eq!(server.request_count(), 3);
}

#[test]
fn timeout_carries_kind_and_elapsed() {
    let server = MockServer::start(MockConfig { delay: Duration::from_millis(600), ..Default::default() }).unwrap();
    let c = GatewayClient::new(server.endpoints().map(|e| {
        e.timeout_secs = 0.2;
        e.max_retries = 0;
    }))
    .unwrap();
    match gateway_err(c.text_to_image("x", 4, 4, 0).unwrap_err()) {
        GatewayError::Timeout { kind, elapsed } => {
            assert_eq!(kind, ServiceKind::T2i);
            assert!(elapsed >= Duration::from_millis(150), "{elapsed:?}");
        }
        other => panic!("expected a timeout, got {other}"),
    }
}

#[test]
fn client_errors_are_not_retried() {
    let server = MockServer::start(MockConfig::default()).unwrap();
    let c = client(&server);
    let err = gateway_err(c.complete("Task: something unknown").unwrap_err());
    assert!(matches!(err, GatewayError::Http { status: 422, .. }), "{err}");
    assert_eq!(c.calls()[0].retries, 0);
}

#[test]
fn malformed_payload_is_its_own_error() {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    let handle = std::thread::spawn(move || {
        let req = server.recv().unwrap();
        req.respond(tiny_http::Response::from_string("<html>not json</html>")).unwrap();
    });
    let c = GatewayClient::new(sketchguide::gateway::EndpointSet::all_at(&url)).unwrap();
    let err = gateway_err(c.tag_image(&Image::filled(2, 2, [0.0; 3]).unwrap()).unwrap_err());
    assert!(matches!(err, GatewayError::Malformed { kind: ServiceKind::Tag, .. }), "{err}");
    handle.join().unwrap();
}

#[test]
fn unconfigured_kind() {
    let c = GatewayClient::new(Default::default()).unwrap();
    assert!(matches!(gateway_err(c.complete("x").unwrap_err()), GatewayError::Unconfigured(ServiceKind::Chat)));
}

#[test]
fn images_and_videos() {
    let server = MockServer::start(MockConfig::default()).unwrap();
    let c = client(&server);
    let a = c.text_to_image("a meadow", 48, 32, 3).unwrap();
    assert_eq!(a, c.text_to_image("a meadow", 48, 32, 3).unwrap());
    assert_eq!(a.dims(), (48, 32));
    let video = c.image_to_video(&a, "static camera", 5, 3).unwrap();
    assert_eq!((video.len(), video.dims()), (5, (48, 32)));
    let t2v = c.text_to_video("a meadow", 4, 24, 16, 1).unwrap();
    assert_eq!((t2v.len(), t2v.dims()), (4, (24, 16)));
}

#[test]
fn tagging_detection_segmentation() {
    let server = MockServer::start(MockConfig::default()).unwrap();
    let c = client(&server);
    let img = c.text_to_image("a meadow", 40, 40, 0).unwrap();
    let tags = c.tag_image(&img).unwrap();
    assert!(tags.contains(&"path".to_string()));
    let found = c.detect(&img, &["path".into()]).unwrap();
    assert_eq!(found.len(), 1);
    assert_eq!(found[0].to_prompt_json(), r#"{"label": "path", "box": [0.44, 0.57, 0.99, 0.99]}"#);

    let bbox = BBox::new(0.25, 0.5, 0.75, 1.0).unwrap();
    let mask = c.segment(&img, &bbox).unwrap();
    for y in 0..40 {
        for x in 0..40 {
            let inside = (10..30).contains(&x) && y >= 20;
            assert_eq!(mask.get(x, y), if inside { 1.0 } else { 0.0 }, "({x}, {y})");
        }
    }
}

#[test]
fn path_transport() {
    let dir = tempfile::tempdir().unwrap();
    let server = MockServer::start(MockConfig::default()).unwrap();
    let c = client(&server).with_transport(ImageTransport::Path(dir.path().into()));
    let img = c.text_to_image("a meadow", 16, 16, 0).unwrap();
    let mask = c.segment(&img, &BBox::full()).unwrap();
    assert!(mask.raw().iter().all(|&v| v == 1.0));
    assert!(std::fs::read_dir(dir.path()).unwrap().count() >= 1);
}

#[test]
fn remote_vae_and_denoiser() {
    let schedule = ScheduleParams::default().build().unwrap();
    let local = GaussianDenoiser::new(2.0, 0.5, &schedule).unwrap();
    let server = MockServer::start(MockConfig { denoiser: Some(local.clone()), ..Default::default() }).unwrap();
    let c = Arc::new(client(&server));

    let frames = (0..3).map(|i| Image::filled(8, 6, [i as f32 / 4.0, 0.5, 1.0]).unwrap()).collect();
    let video = PixelVideo::new(frames, 8.0).unwrap();
    let vae = RemoteVae::new(c.clone(), 8.0);
    let z = vae.encode(&video).unwrap();
    assert_eq!(z.codec_id(), "remote");
    assert_eq!(vae.decode(&z).unwrap(), video.quantized());

    let remote = RemoteDenoiser::new(c.clone());
    let z = LatentVideo::from_fn([2, 3, 2, 2], "remote", |(f, c, y, x)| (f + 2 * c + y) as f64 * 0.5 - x as f64);
    let r = remote.predict(&z, 500, "").unwrap();
    let l = local.predict(&z, 500, "").unwrap();
    // the wire carries f32
    let max_err = r.data().iter().zip(l.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(max_err < 1e-6, "{max_err}");
    assert!(c.calls().iter().all(|call| call.response_sha256.is_some()));
}
