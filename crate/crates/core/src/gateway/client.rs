use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::wire::*;
use super::{EndpointSet, GatewayError, ServiceEndpoint, ServiceKind};
use crate::codec::{LatentCodec, PixelVideo};
use crate::error::{Error, Result};
use crate::latent::LatentVideo;
use crate::planner::{BBox, ChatModel, DetectedObject};
use crate::raster::{Image, Mask};
use crate::solver::Denoiser;

/// Largest response body the client will read.
const MAX_BODY_BYTES: u64 = 1 << 30;

/// One request as seen by the client, after retries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub kind: ServiceKind,
    pub path: String,
    pub latency_ms: f64,
    pub retries: u32,
    pub request_sha256: String,
    pub response_sha256: Option<String>,
    pub error: Option<String>,
}

/// Blocking client for every service kind. Safe to share across threads.
pub struct GatewayClient {
    endpoints: EndpointSet,
    transport: ImageTransport,
    chat_model: String,
    agent: ureq::Agent,
    calls: Mutex<Vec<CallRecord>>,
}

impl std::fmt::Debug for GatewayClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GatewayClient")
            .field("endpoints", &self.endpoints)
            .field("transport", &self.transport)
            .field("chat_model", &self.chat_model)
            .finish_non_exhaustive()
    }
}

impl GatewayClient {
    pub fn new(endpoints: EndpointSet) -> Result<Self> {
        endpoints.validate()?;
        let agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Ok(Self { endpoints, transport: ImageTransport::Inline, chat_model: "default".into(), agent, calls: Mutex::default() })
    }

    pub fn with_transport(mut self, transport: ImageTransport) -> Self {
        self.transport = transport;
        self
    }

    pub fn with_chat_model(mut self, model: impl Into<String>) -> Self {
        self.chat_model = model.into();
        self
    }

    pub fn endpoints(&self) -> &EndpointSet {
        &self.endpoints
    }

    pub fn calls(&self) -> Vec<CallRecord> {
        self.calls.lock().expect("call log poisoned").clone()
    }

    /// Removes and returns the calls logged so far.
    pub fn take_calls(&self) -> Vec<CallRecord> {
        std::mem::take(&mut *self.calls.lock().expect("call log poisoned"))
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, kind: ServiceKind, path: &str, request: &Req) -> Result<Resp> {
        let endpoint = self.endpoints.get(kind)?;
        endpoint.expect_kind(kind)?;
        let body = serde_json::to_vec(request)?;
        let start = Instant::now();
        let mut retries = 0;
        let outcome = loop {
            match self.send_once(endpoint, path, &body) {
                Err(e) if e.is_transient() && retries < endpoint.max_retries => {
                    let wait = Duration::from_millis(endpoint.initial_backoff_ms.saturating_mul(1 << retries.min(16)));
                    log::debug!("{kind} call failed ({e}); retrying in {wait:?}");
                    std::thread::sleep(wait);
                    retries += 1;
                }
                other => break other,
            }
        };
        self.calls.lock().expect("call log poisoned").push(CallRecord {
            kind,
            path: path.to_string(),
            latency_ms: start.elapsed().as_secs_f64() * 1e3,
            retries,
            request_sha256: sha256_hex(&body),
            response_sha256: outcome.as_ref().ok().map(|b| sha256_hex(b)),
            error: outcome.as_ref().err().map(ToString::to_string),
        });
        let bytes = outcome?;
        serde_json::from_slice(&bytes)
            .map_err(|e| GatewayError::Malformed { kind, detail: format!("{path}: {e}") }.into())
    }

    fn send_once(&self, endpoint: &ServiceEndpoint, path: &str, body: &[u8]) -> std::result::Result<Vec<u8>, GatewayError> {
        let kind = endpoint.kind;
        let start = Instant::now();
        let fail = |e: ureq::Error| match e {
            ureq::Error::Timeout(_) => GatewayError::Timeout { kind, elapsed: start.elapsed() },
            ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => {
                GatewayError::Timeout { kind, elapsed: start.elapsed() }
            }
            other => GatewayError::Transport { kind, detail: other.to_string() },
        };
        let mut request = self.agent.post(endpoint.url(path)).header("content-type", "application/json");
        if let Some(token) = &endpoint.auth_token {
            request = request.header("authorization", format!("Bearer {token}"));
        }
        let mut response =
            request.config().timeout_global(Some(endpoint.timeout())).build().send(body).map_err(fail)?;
        let status = response.status().as_u16();
        let bytes = response.body_mut().with_config().limit(MAX_BODY_BYTES).read_to_vec().map_err(fail)?;
        if !(200..300).contains(&status) {
            let text = String::from_utf8_lossy(&bytes);
            let body = match serde_json::from_slice::<ErrorBody>(&bytes) {
                Ok(e) => e.error,
                Err(_) => text.chars().take(500).collect(),
            };
            return Err(GatewayError::Http { kind, status, body });
        }
        Ok(bytes)
    }

    fn image_payload(&self, image: &Image) -> Result<ImagePayload> {
        ImagePayload::encode_image(image, &self.transport)
    }

    pub fn chat(&self, messages: Vec<ChatMessage>) -> Result<String> {
        if messages.is_empty() {
            return Err(Error::config("a chat request needs at least one message"));
        }
        let request = ChatRequest { model: self.chat_model.clone(), messages, seed: None };
        let response: ChatResponse = self.post(ServiceKind::Chat, "/v1/chat", &request)?;
        let choice = response
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| GatewayError::Malformed { kind: ServiceKind::Chat, detail: "no choices in response".into() })?;
        Ok(choice.message.text())
    }

    pub fn text_to_image(&self, prompt: &str, width: usize, height: usize, seed: u64) -> Result<Image> {
        let kind = ServiceKind::T2i;
        let request = T2iRequest { prompt: prompt.into(), width, height, seed };
        let response: ImageResponse = self.post(kind, "/v1/t2i", &request)?;
        let image = response.image.decode_image().map_err(|e| malformed(kind, e))?;
        check_dims(kind, "image", image.dims(), (width, height))?;
        Ok(image)
    }

    pub fn image_to_video(&self, image: &Image, prompt: &str, frame_count: usize, seed: u64) -> Result<PixelVideo> {
        let kind = ServiceKind::I2v;
        let request = I2vRequest { image: self.image_payload(image)?, prompt: prompt.into(), frame_count, seed };
        let response: VideoResponse = self.post(kind, "/v1/i2v", &request)?;
        decode_video(kind, &response.video, frame_count, image.dims())
    }

    pub fn text_to_video(&self, prompt: &str, frame_count: usize, width: usize, height: usize, seed: u64) -> Result<PixelVideo> {
        let kind = ServiceKind::T2v;
        let request = T2vRequest { prompt: prompt.into(), frame_count, width, height, seed };
        let response: VideoResponse = self.post(kind, "/v1/t2v", &request)?;
        decode_video(kind, &response.video, frame_count, (width, height))
    }

    pub fn tag_image(&self, image: &Image) -> Result<Vec<String>> {
        let response: TagResponse = self.post(ServiceKind::Tag, "/v1/tag", &TagRequest { image: self.image_payload(image)? })?;
        Ok(response.labels.into_iter().map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect())
    }

    pub fn detect(&self, image: &Image, labels: &[String]) -> Result<Vec<DetectedObject>> {
        let request = DetectRequest { image: self.image_payload(image)?, labels: labels.to_vec() };
        let response: DetectResponse = self.post(ServiceKind::Detect, "/v1/detect", &request)?;
        Ok(response.objects)
    }

    pub fn segment(&self, image: &Image, bbox: &BBox) -> Result<Mask> {
        let kind = ServiceKind::Segment;
        let request = SegmentRequest { image: self.image_payload(image)?, bbox: *bbox };
        let response: SegmentResponse = self.post(kind, "/v1/segment", &request)?;
        let mask = response.mask.decode_mask().map_err(|e| malformed(kind, e))?;
        check_dims(kind, "mask", mask.dims(), image.dims())?;
        Ok(mask)
    }

    pub fn vae_encode(&self, video: &PixelVideo) -> Result<LatentVideo> {
        let kind = ServiceKind::Vae;
        let request = VaeEncodeRequest { video: VideoPayload::encode(video, &self.transport)? };
        let response: LatentResponse = self.post(kind, "/v1/vae/encode", &request)?;
        let latent = response.latent.decode().map_err(|e| malformed(kind, e))?;
        if latent.frame_count() != video.len() || !latent.is_finite() {
            return Err(shape(kind, format!("latent {:?} for {} frames, or non-finite values", latent.shape(), video.len())));
        }
        Ok(latent)
    }

    pub fn vae_decode(&self, latent: &LatentVideo, fps: f64) -> Result<PixelVideo> {
        let kind = ServiceKind::Vae;
        let request = VaeDecodeRequest { latent: TensorPayload::encode(latent), fps };
        let response: VideoResponse = self.post(kind, "/v1/vae/decode", &request)?;
        let video = response.video.decode().map_err(|e| malformed(kind, e))?;
        if video.len() != latent.frame_count() {
            return Err(shape(kind, format!("{} frames decoded from {} latent frames", video.len(), latent.frame_count())));
        }
        Ok(video)
    }

    pub fn denoise(&self, z: &LatentVideo, t: usize, conditioning: &str) -> Result<LatentVideo> {
        let kind = ServiceKind::Denoise;
        let request = DenoiseRequest { latent: TensorPayload::encode(z), t, conditioning: conditioning.into() };
        let response: DenoiseResponse = self.post(kind, "/v1/denoise", &request)?;
        let eps = response.eps.decode().map_err(|e| malformed(kind, e))?;
        if eps.shape() != z.shape() || !eps.is_finite() {
            return Err(shape(kind, format!("prediction {:?} for input {:?}, or non-finite values", eps.shape(), z.shape())));
        }
        Ok(eps.relabel(z.codec_id()))
    }
}

fn malformed(kind: ServiceKind, e: Error) -> Error {
    GatewayError::Malformed { kind, detail: e.to_string() }.into()
}

fn shape(kind: ServiceKind, detail: String) -> Error {
    GatewayError::Shape { kind, detail }.into()
}

fn check_dims(kind: ServiceKind, what: &str, got: (usize, usize), want: (usize, usize)) -> Result<()> {
    if got != want {
        return Err(shape(kind, format!("{what} is {}x{}, expected {}x{}", got.0, got.1, want.0, want.1)));
    }
    Ok(())
}

fn decode_video(kind: ServiceKind, payload: &VideoPayload, frame_count: usize, dims: (usize, usize)) -> Result<PixelVideo> {
    let video = payload.decode().map_err(|e| malformed(kind, e))?;
    if video.len() != frame_count {
        return Err(shape(kind, format!("{} frames returned, {frame_count} requested", video.len())));
    }
    check_dims(kind, "video", video.dims(), dims)?;
    Ok(video)
}

impl ChatModel for GatewayClient {
    fn complete(&self, prompt: &str) -> Result<String> {
        self.chat(vec![ChatMessage::user(prompt)])
    }
}

/// A latent codec served by the `vae` endpoint.
#[derive(Debug, Clone)]
pub struct RemoteVae {
    client: Arc<GatewayClient>,
    fps: f64,
}

impl RemoteVae {
    pub fn new(client: Arc<GatewayClient>, fps: f64) -> Self {
        Self { client, fps }
    }
}

impl LatentCodec for RemoteVae {
    fn id(&self) -> String {
        "remote".into()
    }

    fn encode(&self, video: &PixelVideo) -> Result<LatentVideo> {
        Ok(self.client.vae_encode(video)?.relabel(&self.id()))
    }

    fn decode(&self, latent: &LatentVideo) -> Result<PixelVideo> {
        if latent.codec_id() != self.id() {
            return Err(Error::Codec(format!("latent from codec `{}` given to `{}`", latent.codec_id(), self.id())));
        }
        self.client.vae_decode(latent, self.fps)
    }
}

/// A noise predictor served by the `denoise` endpoint.
#[derive(Debug, Clone)]
pub struct RemoteDenoiser {
    client: Arc<GatewayClient>,
}

impl RemoteDenoiser {
    pub fn new(client: Arc<GatewayClient>) -> Self {
        Self { client }
    }
}

impl Denoiser for RemoteDenoiser {
    fn predict(&self, z: &LatentVideo, t: usize, conditioning: &str) -> Result<LatentVideo> {
        self.client.denoise(z, t, conditioning)
    }

    fn id(&self) -> String {
        match self.client.endpoints().get(ServiceKind::Denoise) {
            Ok(e) => format!("remote({})", e.base_url),
            Err(_) => "remote".into(),
        }
    }
}
