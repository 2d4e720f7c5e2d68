//! In-process HTTP server that answers every endpoint deterministically.
//!
//! Responses depend only on the request (prompts, seeds, images), so runs
//! against the mock are reproducible. Chat requests are routed on the first
//! line of the last user message, which every planner template starts with a
//! `Task: ...` line for.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::wire::*;
use super::EndpointSet;
use crate::codec::{LatentCodec, Patchify};
use crate::compositor::box_to_pixels;
use crate::error::{Error, Result};
use crate::planner::templates::{extract_frame_count, extract_video_prompt, ALPHA_TASK, BACKGROUND_TASK, PLAN_TASK};
use crate::planner::{fallback_plan, guess_object_specs, serialize_plan, BBox, DetectedObject};
use crate::raster::{Image, Mask};
use crate::solver::{Denoiser, GaussianDenoiser};

/// Prompt prefix the pipeline uses for object images; the mock draws a single
/// object for these.
pub const OBJECT_PROMPT_PREFIX: &str = "An image of ";

pub const MOCK_BACKGROUND_DESCRIPTION: &str = "An empty meadow under a pale morning sky, a dirt path running down \
toward the lower right, a few trees along the left edge, soft even daylight, seen from a fixed camera at eye level.";

#[derive(Debug, Clone)]
pub struct MockConfig {
    pub tags: Vec<String>,
    pub detections: Vec<DetectedObject>,
    /// Answer to every chat request, replacing the task routing.
    pub chat_reply: Option<String>,
    pub alpha_reply: String,
    /// Noise predictor behind `/v1/denoise`; without one that endpoint answers 501.
    pub denoiser: Option<GaussianDenoiser>,
    /// The first `fail_first` requests get a 503.
    pub fail_first: usize,
    /// Sleep before answering each request.
    pub delay: Duration,
    pub workers: usize,
}

impl Default for MockConfig {
    fn default() -> Self {
        let det = |label: &str, b: [f64; 4], c: f64| {
            DetectedObject::new(label, BBox::new(b[0], b[1], b[2], b[3]).expect("fixture box"), c).expect("fixture")
        };
        Self {
            tags: vec!["path".into(), "tree".into(), "sky".into()],
            detections: vec![det("path", [0.44, 0.57, 0.99, 0.99], 0.82), det("tree", [0.02, 0.1, 0.2, 0.62], 0.71)],
            chat_reply: None,
            alpha_reply: r#"{"alpha": 0.75, "reason": "the prompt is mostly about where the object goes"}"#.into(),
            denoiser: None,
            fail_first: 0,
            delay: Duration::ZERO,
            workers: 4,
        }
    }
}

pub struct MockServer {
    url: String,
    requests: Arc<AtomicUsize>,
    shutdown: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(config: MockConfig) -> Result<Self> {
        let server = tiny_http::Server::http("127.0.0.1:0").map_err(|e| Error::config(format!("mock server: {e}")))?;
        let addr = server.server_addr().to_ip().ok_or_else(|| Error::config("mock server has no IP address"))?;
        let server = Arc::new(server);
        let config = Arc::new(config);
        let requests = Arc::new(AtomicUsize::new(0));
        let shutdown = Arc::new(AtomicBool::new(false));
        let workers = (0..config.workers.max(1))
            .map(|_| {
                let (server, config, requests, shutdown) = (server.clone(), config.clone(), requests.clone(), shutdown.clone());
                std::thread::spawn(move || {
                    while !shutdown.load(Ordering::Relaxed) {
                        if let Ok(Some(request)) = server.recv_timeout(Duration::from_millis(50)) {
                            let n = requests.fetch_add(1, Ordering::SeqCst);
                            serve(request, n, &config);
                        }
                    }
                })
            })
            .collect();
        Ok(Self { url: format!("http://{addr}"), requests, shutdown, workers })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Every service kind pointed at this server.
    pub fn endpoints(&self) -> EndpointSet {
        EndpointSet::all_at(&self.url)
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

fn serve(mut request: tiny_http::Request, n: usize, config: &MockConfig) {
    std::thread::sleep(config.delay);
    let mut body = Vec::new();
    let (status, payload) = if n < config.fail_first {
        (503, error_json("temporarily unavailable"))
    } else if let Err(e) = request.as_reader().read_to_end(&mut body) {
        (400, error_json(&e.to_string()))
    } else {
        match route(request.url(), &body, config) {
            Ok(json) => (200, json),
            Err((status, msg)) => (status, error_json(&msg)),
        }
    };
    let header = tiny_http::Header::from_bytes("content-type", "application/json").expect("static header");
    let response = tiny_http::Response::from_data(payload).with_status_code(status).with_header(header);
    if let Err(e) = request.respond(response) {
        log::debug!("mock server could not answer: {e}");
    }
}

fn error_json(msg: &str) -> Vec<u8> {
    serde_json::to_vec(&ErrorBody { error: msg.into() }).expect("serializable")
}

type Routed = std::result::Result<Vec<u8>, (u16, String)>;

fn route(url: &str, body: &[u8], config: &MockConfig) -> Routed {
    match url {
        "/v1/chat" => handle(body, |r: ChatRequest| chat(&r, config).map(ChatResponse::assistant)),
        "/v1/t2i" => handle(body, |r: T2iRequest| {
            let image = procedural_image(&r.prompt, r.seed, r.width, r.height)?;
            Ok(ImageResponse { image: ImagePayload::encode_image(&image, &ImageTransport::Inline)? })
        }),
        "/v1/i2v" => handle(body, |r: I2vRequest| {
            let video = animate(&r.image.decode_image()?, r.frame_count, r.seed)?;
            Ok(VideoResponse { video })
        }),
        "/v1/t2v" => handle(body, |r: T2vRequest| {
            let video = animate(&procedural_image(&r.prompt, r.seed, r.width, r.height)?, r.frame_count, r.seed)?;
            Ok(VideoResponse { video })
        }),
        "/v1/tag" => handle(body, |r: TagRequest| {
            r.image.decode_image()?;
            Ok(TagResponse { labels: config.tags.clone() })
        }),
        "/v1/detect" => handle(body, |r: DetectRequest| {
            r.image.decode_image()?;
            let wanted = |label: &str| r.labels.is_empty() || r.labels.iter().any(|l| l.eq_ignore_ascii_case(label));
            Ok(DetectResponse { objects: config.detections.iter().filter(|d| wanted(&d.label)).cloned().collect() })
        }),
        "/v1/segment" => handle(body, |r: SegmentRequest| {
            let (w, h) = r.image.decode_image()?.dims();
            let (x0, y0, x1, y1) = box_to_pixels(&r.bbox, w, h)?;
            let mask = Mask::from_fn(w, h, |x, y| if (x0..x1).contains(&x) && (y0..y1).contains(&y) { 1.0 } else { 0.0 })?;
            Ok(SegmentResponse { mask: ImagePayload::encode_mask(&mask, &ImageTransport::Inline)? })
        }),
        "/v1/vae/encode" => handle(body, |r: VaeEncodeRequest| {
            let video = r.video.decode()?;
            Ok(LatentResponse { latent: TensorPayload::encode(&Patchify::identity(video.fps()).encode(&video)?) })
        }),
        "/v1/vae/decode" => handle(body, |r: VaeDecodeRequest| {
            let latent = r.latent.decode()?.relabel("identity");
            let video = Patchify::identity(r.fps).decode(&latent)?;
            Ok(VideoResponse { video: VideoPayload::encode(&video, &ImageTransport::Inline)? })
        }),
        "/v1/denoise" => {
            let Some(denoiser) = &config.denoiser else {
                return Err((501, "no denoiser configured".into()));
            };
            handle(body, |r: DenoiseRequest| {
                let eps = denoiser.predict(&r.latent.decode()?, r.t, &r.conditioning)?;
                Ok(DenoiseResponse { eps: TensorPayload::encode(&eps) })
            })
        }
        other => Err((404, format!("no route for {other}"))),
    }
}

fn handle<Req: DeserializeOwned, Resp: Serialize>(body: &[u8], f: impl FnOnce(Req) -> Result<Resp>) -> Routed {
    let request = serde_json::from_slice(body).map_err(|e| (400, format!("bad request: {e}")))?;
    let response = f(request).map_err(|e| (422, e.to_string()))?;
    serde_json::to_vec(&response).map_err(|e| (500, e.to_string()))
}

fn chat(request: &ChatRequest, config: &MockConfig) -> Result<String> {
    if let Some(reply) = &config.chat_reply {
        return Ok(reply.clone());
    }
    let text = request
        .messages
        .iter()
        .rev()
        .find(|m| m.role == "user")
        .map(ChatMessage::text)
        .ok_or_else(|| Error::data("no user message"))?;
    let task = text.lines().next().unwrap_or_default().trim();
    match task {
        BACKGROUND_TASK => Ok(MOCK_BACKGROUND_DESCRIPTION.into()),
        ALPHA_TASK => Ok(config.alpha_reply.clone()),
        PLAN_TASK => {
            let prompt = extract_video_prompt(&text).ok_or_else(|| Error::data("plan prompt without a video prompt"))?;
            let frames = extract_frame_count(&text).ok_or_else(|| Error::data("plan prompt without a frame count"))?;
            let plan = fallback_plan(&prompt, frames, &guess_object_specs(&prompt))?;
            Ok(format!(
                "Sure. Here is a layout that keeps the motion smooth.\n\n```json\n{}\n```\n\nLet me know if you want changes.",
                serialize_plan(&plan)
            ))
        }
        other => Err(Error::data(format!("mock chat does not know the task `{other}`"))),
    }
}

fn digest(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

fn unit(b: u8) -> f32 {
    b as f32 / 255.0
}

/// A deterministic picture for `(prompt, seed)`. Object prompts get a single
/// colored ellipse filling most of a light canvas; anything else gets a
/// sky/ground scene with a path toward the lower right.
pub fn procedural_image(prompt: &str, seed: u64, width: usize, height: usize) -> Result<Image> {
    let d = digest(&[prompt.as_bytes(), &seed.to_le_bytes()]);
    let (wf, hf) = (width.max(2) as f32 - 1.0, height.max(2) as f32 - 1.0);
    if prompt.starts_with(OBJECT_PROMPT_PREFIX) {
        let color = [0.15 + 0.7 * unit(d[0]), 0.15 + 0.7 * unit(d[1]), 0.15 + 0.7 * unit(d[2])];
        let (rx, ry) = (0.38 + 0.1 * unit(d[3]), 0.38 + 0.1 * unit(d[4]));
        Image::from_fn(width, height, |x, y| {
            let (u, v) = (x as f32 / wf - 0.5, y as f32 / hf - 0.5);
            if (u / rx).powi(2) + (v / ry).powi(2) <= 1.0 {
                let shade = 1.0 - 0.3 * (u + v).max(0.0);
                color.map(|c| c * shade)
            } else {
                [0.94, 0.94, 0.92]
            }
        })
    } else {
        let sky = [0.45 + 0.3 * unit(d[0]), 0.6 + 0.3 * unit(d[1]), 0.85 + 0.15 * unit(d[2])];
        let ground = [0.2 + 0.2 * unit(d[3]), 0.4 + 0.3 * unit(d[4]), 0.15 + 0.15 * unit(d[5])];
        let horizon = 0.45 + 0.1 * unit(d[6]);
        Image::from_fn(width, height, |x, y| {
            let (u, v) = (x as f32 / wf, y as f32 / hf);
            if v < horizon {
                let k = v / horizon;
                sky.map(|c| c * (0.85 + 0.15 * k))
            } else {
                // the path widens toward the bottom right corner
                let depth = (v - horizon) / (1.0 - horizon);
                let (left, right) = (0.6 - 0.16 * depth, 0.66 + 0.33 * depth);
                if u >= left && u <= right {
                    [0.55, 0.45, 0.33]
                } else {
                    ground.map(|c| c * (0.8 + 0.2 * depth))
                }
            }
        })
    }
}

/// Holds the picture still, as a static camera would, with a faint
/// seed-dependent brightness flicker so frames are not identical.
fn animate(image: &Image, frame_count: usize, seed: u64) -> Result<VideoPayload> {
    if frame_count == 0 {
        return Err(Error::data("frame_count must be positive"));
    }
    let phase = unit(digest(&[&seed.to_le_bytes()])[0]) * std::f32::consts::TAU;
    let frames = (0..frame_count)
        .map(|i| {
            let gain = 1.0 + 0.01 * (phase + i as f32 * 0.7).sin();
            let (w, h) = image.dims();
            let frame = Image::from_fn(w, h, |x, y| image.get(x, y).map(|c| (c * gain).clamp(0.0, 1.0)))?;
            ImagePayload::encode_image(&frame, &ImageTransport::Inline)
        })
        .collect::<Result<_>>()?;
    Ok(VideoPayload { fps: 8.0, frames })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn procedural_images_are_stable() {
        let a = procedural_image("a meadow", 7, 32, 24).unwrap();
        assert_eq!(a, procedural_image("a meadow", 7, 32, 24).unwrap());
        assert_ne!(a, procedural_image("a meadow", 8, 32, 24).unwrap());
        let obj = procedural_image("An image of egg", 1, 16, 16).unwrap();
        assert_eq!(obj.get(0, 0), [0.94, 0.94, 0.92]);
        assert_ne!(obj.get(8, 8), [0.94, 0.94, 0.92]);
    }
}
