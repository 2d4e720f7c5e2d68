//! JSON envelopes exchanged with every service.
//!
//! Images travel either inline as `{"png_base64": "..."}` or, for local runs,
//! as `{"path": "/abs/file.png"}` pointing at a PNG both sides can read.
//! Masks use the same envelope with a grayscale PNG. Latent tensors travel as
//! `{"tensor_base64": "...", "codec_id": "..."}` where the bytes are the VSKT
//! tensor format of [`crate::latent`].

use std::path::PathBuf;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::PixelVideo;
use crate::error::{Error, Result};
use crate::latent::LatentVideo;
use crate::planner::{BBox, DetectedObject};
use crate::raster::{Image, Mask};

const B64: base64::engine::GeneralPurpose = base64::engine::general_purpose::STANDARD;

/// How outgoing images are attached to requests.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "dir")]
pub enum ImageTransport {
    #[default]
    Inline,
    /// Write PNGs into this directory and send their paths.
    Path(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImagePayload {
    Inline { png_base64: String },
    Path { path: PathBuf },
}

impl ImagePayload {
    pub fn from_png(bytes: &[u8], transport: &ImageTransport) -> Result<Self> {
        match transport {
            ImageTransport::Inline => Ok(Self::Inline { png_base64: B64.encode(bytes) }),
            ImageTransport::Path(dir) => {
                std::fs::create_dir_all(dir)?;
                let path = dir.join(format!("{}.png", &sha256_hex(bytes)[..32]));
                if !path.exists() {
                    std::fs::write(&path, bytes)?;
                }
                Ok(Self::Path { path })
            }
        }
    }

    pub fn png_bytes(&self) -> Result<Vec<u8>> {
        match self {
            Self::Inline { png_base64 } => {
                B64.decode(png_base64.trim()).map_err(|e| Error::data(format!("bad base64 image: {e}")))
            }
            Self::Path { path } => Ok(std::fs::read(path)?),
        }
    }

    pub fn encode_image(image: &Image, transport: &ImageTransport) -> Result<Self> {
        Self::from_png(&image.to_png()?, transport)
    }

    pub fn decode_image(&self) -> Result<Image> {
        Image::from_png(&self.png_bytes()?)
    }

    pub fn encode_mask(mask: &Mask, transport: &ImageTransport) -> Result<Self> {
        Self::from_png(&mask.to_png()?, transport)
    }

    pub fn decode_mask(&self) -> Result<Mask> {
        Mask::from_png(&self.png_bytes()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoPayload {
    pub fps: f64,
    pub frames: Vec<ImagePayload>,
}

impl VideoPayload {
    pub fn encode(video: &PixelVideo, transport: &ImageTransport) -> Result<Self> {
        let frames = video.frames().iter().map(|f| ImagePayload::encode_image(f, transport)).collect::<Result<_>>()?;
        Ok(Self { fps: video.fps(), frames })
    }

    pub fn decode(&self) -> Result<PixelVideo> {
        let frames = self.frames.iter().map(ImagePayload::decode_image).collect::<Result<Vec<_>>>()?;
        PixelVideo::new(frames, self.fps)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorPayload {
    pub tensor_base64: String,
    pub codec_id: String,
}

impl TensorPayload {
    pub fn encode(latent: &LatentVideo) -> Self {
        Self { tensor_base64: B64.encode(latent.to_tensor_bytes()), codec_id: latent.codec_id().to_string() }
    }

    pub fn decode(&self) -> Result<LatentVideo> {
        let bytes = B64.decode(self.tensor_base64.trim()).map_err(|e| Error::data(format!("bad base64 tensor: {e}")))?;
        LatentVideo::from_tensor_bytes(&bytes, self.codec_id.clone())
    }
}

// Chat uses the common chat-completion message shape: plain string content,
// or a list of parts when an image is attached.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: ChatContent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChatContent {
    Text(String),
    Parts(Vec<ContentPart>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageUrl {
    /// `data:image/png;base64,...`
    pub url: String,
}

impl ChatMessage {
    pub fn user(text: impl Into<String>) -> Self {
        Self { role: "user".into(), content: ChatContent::Text(text.into()) }
    }

    pub fn system(text: impl Into<String>) -> Self {
        Self { role: "system".into(), content: ChatContent::Text(text.into()) }
    }

    pub fn user_with_image(text: impl Into<String>, image: &Image) -> Result<Self> {
        let url = format!("data:image/png;base64,{}", B64.encode(image.to_png()?));
        Ok(Self {
            role: "user".into(),
            content: ChatContent::Parts(vec![
                ContentPart::Text { text: text.into() },
                ContentPart::ImageUrl { image_url: ImageUrl { url } },
            ]),
        })
    }

    /// The text parts joined by newlines.
    pub fn text(&self) -> String {
        match &self.content {
            ChatContent::Text(t) => t.clone(),
            ChatContent::Parts(parts) => parts
                .iter()
                .filter_map(|p| match p {
                    ContentPart::Text { text } => Some(text.as_str()),
                    ContentPart::ImageUrl { .. } => None,
                })
                .collect::<Vec<_>>()
                .join("\n"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub choices: Vec<ChatChoice>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatChoice {
    pub message: ChatMessage,
}

impl ChatResponse {
    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            choices: vec![ChatChoice {
                message: ChatMessage { role: "assistant".into(), content: ChatContent::Text(text.into()) },
            }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T2iRequest {
    pub prompt: String,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageResponse {
    pub image: ImagePayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct I2vRequest {
    pub image: ImagePayload,
    pub prompt: String,
    pub frame_count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T2vRequest {
    pub prompt: String,
    pub frame_count: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoResponse {
    pub video: VideoPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagRequest {
    pub image: ImagePayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagResponse {
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectRequest {
    pub image: ImagePayload,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectResponse {
    pub objects: Vec<DetectedObject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub image: ImagePayload,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub mask: ImagePayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeEncodeRequest {
    pub video: VideoPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentResponse {
    pub latent: TensorPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeDecodeRequest {
    pub latent: TensorPayload,
    pub fps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseRequest {
    pub latent: TensorPayload,
    pub t: usize,
    pub conditioning: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseResponse {
    pub eps: TensorPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
