//! Pixel video ↔ latent video.
//!
//! Local codecs are exact bijections on in-range input:
//!
//! * `identity` maps each pixel channel `v ∈ [0, 1]` to `2v − 1`, keeping
//!   `C = 3` and the frame size;
//! * `patchify:p` applies the same affine map and then moves each `p × p`
//!   block into channels (space to depth). Latent channel `(dy·p + dx)·3 + c`
//!   at `(y, x)` holds pixel channel `c` at `(y·p + dy, x·p + dx)`.
//!
//! A remote VAE can be plugged in through [`LatentCodec`]; see
//! `gateway::RemoteVae`. Latents are per frame: there is no temporal
//! compression.

mod frames;

use ndarray::Array4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::LatentVideo;
use crate::raster::Image;

pub use frames::{frame_file_name, read_frames, write_frames, FrameIndex, INDEX_FILE};

#[derive(Debug, Clone, PartialEq)]
pub struct PixelVideo {
    frames: Vec<Image>,
    fps: f64,
}

impl PixelVideo {
    pub fn new(frames: Vec<Image>, fps: f64) -> Result<Self> {
        let first = frames.first().ok_or_else(|| Error::data("a video needs at least one frame"))?;
        if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.dims() != first.dims()) {
            return Err(Error::data(format!("frame {i} is {:?}, frame 0 is {:?}", f.dims(), first.dims())));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::data(format!("fps must be positive, got {fps}")));
        }
        Ok(Self { frames, fps })
    }

    pub fn frames(&self) -> &[Image] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Image> {
        self.frames
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `(width, height)` of every frame.
    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }

    pub fn quantized(&self) -> Self {
        Self { frames: self.frames.iter().map(Image::quantized).collect(), fps: self.fps }
    }
}

pub trait LatentCodec: Send + Sync {
    /// Identifier stored on every latent this codec produces.
    fn id(&self) -> String;
    fn encode(&self, video: &PixelVideo) -> Result<LatentVideo>;
    fn decode(&self, latent: &LatentVideo) -> Result<PixelVideo>;
}

/// Serializable codec choice, parsed from `identity`, `patchify:<p>` or `remote`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CodecSpec {
    Identity,
    Patchify { factor: usize },
    Remote,
}

impl CodecSpec {
    /// The local implementation, or `None` for `remote`.
    pub fn local(self, fps: f64) -> Result<Option<Box<dyn LatentCodec>>> {
        Ok(match self {
            Self::Identity => Some(Box::new(Patchify::new(1, fps)?)),
            Self::Patchify { factor } => Some(Box::new(Patchify::new(factor, fps)?)),
            Self::Remote => None,
        })
    }
}

impl std::str::FromStr for CodecSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "remote" => Ok(Self::Remote),
            _ => {
                let factor = s
                    .strip_prefix("patchify:")
                    .and_then(|p| p.parse::<usize>().ok())
                    .filter(|&p| p >= 1)
                    .ok_or_else(|| Error::config(format!("unknown codec `{s}` (identity, patchify:<p>, remote)")))?;
                Ok(Self::Patchify { factor })
            }
        }
    }
}

impl TryFrom<String> for CodecSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CodecSpec> for String {
    fn from(c: CodecSpec) -> String {
        c.to_string()
    }
}

impl std::fmt::Display for CodecSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Identity => f.write_str("identity"),
            Self::Patchify { factor } => write!(f, "patchify:{factor}"),
            Self::Remote => f.write_str("remote"),
        }
    }
}

/// Space-to-depth codec; factor 1 is the identity codec.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Patchify {
    factor: usize,
    fps: f64,
}

impl Patchify {
    /// `fps` is attached to decoded videos.
    pub fn new(factor: usize, fps: f64) -> Result<Self> {
        if factor == 0 {
            return Err(Error::Codec("patch factor must be at least 1".into()));
        }
        Ok(Self { factor, fps })
    }

    pub fn identity(fps: f64) -> Self {
        Self { factor: 1, fps }
    }

    pub fn latent_shape(&self, frames: usize, width: usize, height: usize) -> Result<[usize; 4]> {
        let p = self.factor;
        if width % p != 0 || height % p != 0 {
            return Err(Error::Codec(format!("frame size {width}x{height} is not divisible by patch factor {p}")));
        }
        Ok([frames, 3 * p * p, height / p, width / p])
    }
}

impl LatentCodec for Patchify {
    fn id(&self) -> String {
        if self.factor == 1 {
            "identity".into()
        } else {
            format!("patchify:{}", self.factor)
        }
    }

    fn encode(&self, video: &PixelVideo) -> Result<LatentVideo> {
        let (w, h) = video.dims();
        let shape = self.latent_shape(video.len(), w, h)?;
        let p = self.factor;
        let data = Array4::from_shape_fn(shape, |(f, ch, y, x)| {
            let (block, c) = (ch / 3, ch % 3);
            let (dy, dx) = (block / p, block % p);
            let v = video.frames[f].get(x * p + dx, y * p + dy)[c] as f64;
            2.0 * v - 1.0
        });
        Ok(LatentVideo::new(data, self.id()))
    }

    fn decode(&self, latent: &LatentVideo) -> Result<PixelVideo> {
        if latent.codec_id() != self.id() {
            return Err(Error::Codec(format!("latent from codec `{}` given to `{}`", latent.codec_id(), self.id())));
        }
        let [frames, channels, lh, lw] = latent.shape();
        let p = self.factor;
        if channels != 3 * p * p {
            return Err(Error::Codec(format!("{channels} latent channels, codec `{}` expects {}", self.id(), 3 * p * p)));
        }
        let data = latent.data();
        let frames = (0..frames)
            .map(|f| {
                Image::from_fn(lw * p, lh * p, |x, y| {
                    let block = (y % p) * p + (x % p);
                    std::array::from_fn(|c| ((data[[f, block * 3 + c, y / p, x / p]] + 1.0) / 2.0) as f32)
                })
            })
            .collect::<Result<Vec<_>>>()?;
        PixelVideo::new(frames, self.fps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn video(w: usize, h: usize, n: usize) -> PixelVideo {
        let frames = (0..n)
            .map(|f| Image::from_fn(w, h, |x, y| [x as f32 / w as f32, y as f32 / h as f32, f as f32 / n as f32]).unwrap())
            .collect();
        PixelVideo::new(frames, 8.0).unwrap()
    }

    #[test]
    fn identity_maps_mid_grey_to_zero() {
        let v = PixelVideo::new(vec![Image::filled(4, 4, [0.5; 3]).unwrap()], 8.0).unwrap();
        let z = Patchify::identity(8.0).encode(&v).unwrap();
        assert_eq!(z.shape(), [1, 3, 4, 4]);
        assert!(z.data().iter().all(|&v| v == 0.0));
        assert_eq!(z.codec_id(), "identity");
    }

    #[test]
    fn patchify_shapes() {
        let c = Patchify::new(2, 8.0).unwrap();
        let z = c.encode(&video(64, 64, 2)).unwrap();
        assert_eq!(z.shape(), [2, 12, 32, 32]);
        assert!(c.encode(&video(63, 64, 1)).is_err());
    }

    #[test]
    fn patchify_layout() {
        let v = video(4, 2, 1);
        let z = Patchify::new(2, 8.0).unwrap().encode(&v).unwrap();
        // channel (dy·2 + dx)·3 + c at (0, 1) is pixel (2 + dx, dy)
        let px = v.frames()[0].get(3, 1);
        assert_eq!(z.data()[[0, 3 * 3 + 1, 0, 1]], 2.0 * px[1] as f64 - 1.0);
    }

    #[test]
    fn decode_checks_codec_and_channels() {
        let z = Patchify::new(2, 8.0).unwrap().encode(&video(4, 4, 1)).unwrap();
        assert!(Patchify::identity(8.0).decode(&z).is_err());
        let wrong = LatentVideo::zeros([1, 4, 2, 2], "patchify:2");
        assert!(Patchify::new(2, 8.0).unwrap().decode(&wrong).is_err());
    }

    #[test]
    fn spec_parsing() {
        assert_eq!("patchify:4".parse::<CodecSpec>().unwrap(), CodecSpec::Patchify { factor: 4 });
        assert_eq!("identity".parse::<CodecSpec>().unwrap().to_string(), "identity");
        assert!("patchify:0".parse::<CodecSpec>().is_err());
        assert!("vae".parse::<CodecSpec>().is_err());
    }

    #[test]
    fn video_invariants() {
        assert!(PixelVideo::new(vec![], 8.0).is_err());
        let a = Image::new(2, 2).unwrap();
        let b = Image::new(3, 2).unwrap();
        assert!(PixelVideo::new(vec![a.clone(), b], 8.0).is_err());
        assert!(PixelVideo::new(vec![a], 0.0).is_err());
    }

    proptest! {
        #[test]
        fn local_codecs_round_trip_exactly(
            p in 1usize..4,
            bw in 1usize..5,
            bh in 1usize..5,
            n in 1usize..3,
            seed in any::<u32>(),
        ) {
            let (w, h) = (bw * p, bh * p);
            let frames = (0..n).map(|f| {
                Image::from_fn(w, h, |x, y| {
                    let k = (x * 31 + y * 17 + f * 7) as u32 ^ seed;
                    [(k % 256) as f32 / 255.0, ((k / 3) % 101) as f32 / 100.0, 0.123]
                }).unwrap()
            }).collect();
            let v = PixelVideo::new(frames, 12.0).unwrap();
            let codec = Patchify::new(p, 12.0).unwrap();
            prop_assert_eq!(codec.decode(&codec.encode(&v).unwrap()).unwrap(), v);
        }
    }
}
