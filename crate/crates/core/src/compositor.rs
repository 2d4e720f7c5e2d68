//! Sprite extraction and alpha compositing of the video sketch.
//!
//! * A box maps to pixels by flooring its origin and ceiling its far edge,
//!   then clamping to the frame: `[⌊x1·W⌋, ⌈x2·W⌉) × [⌊y1·H⌋, ⌈y2·H⌉)`.
//! * Sprites are resized to that extent with corner-aligned bilinear sampling.
//! * Compositing is `out = a·fg + (1 − a)·bg` per channel; pixels outside the
//!   box are copied untouched.
//! * Placements within a frame are drawn in listed order, so later ones cover
//!   earlier ones.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::codec::PixelVideo;
use crate::error::{Error, Result};
use crate::planner::{BBox, LayoutPlan, Placement};
use crate::raster::{Image, Mask};

/// Pixels at or above this mask value define a sprite's extent.
pub const MASK_THRESHOLD: f32 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Sprite {
    color: Image,
    alpha: Mask,
    source_prompt: String,
}

impl Sprite {
    pub fn new(color: Image, alpha: Mask, source_prompt: impl Into<String>) -> Result<Self> {
        if color.dims() != alpha.dims() {
            return Err(Error::Compose(format!("sprite colour {:?} and alpha {:?} differ in size", color.dims(), alpha.dims())));
        }
        Ok(Self { color, alpha, source_prompt: source_prompt.into() })
    }

    pub fn color(&self) -> &Image {
        &self.color
    }

    pub fn alpha(&self) -> &Mask {
        &self.alpha
    }

    pub fn source_prompt(&self) -> &str {
        &self.source_prompt
    }
}

/// Composited frames plus what was placed where.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSketch {
    pub frames: PixelVideo,
    pub placements: Vec<Vec<Placement>>,
    /// Content hashes of the inputs, keyed by role (`background`, `sprite:<name>`).
    pub provenance: BTreeMap<String, String>,
}

/// `sketch.json` contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchRecord {
    pub frame_count: usize,
    pub width: usize,
    pub height: usize,
    pub placements: Vec<Vec<Placement>>,
    pub provenance: BTreeMap<String, String>,
}

impl VideoSketch {
    pub fn record(&self) -> SketchRecord {
        let (width, height) = self.frames.dims();
        SketchRecord {
            frame_count: self.frames.len(),
            width,
            height,
            placements: self.placements.clone(),
            provenance: self.provenance.clone(),
        }
    }
}

/// Crops the image to the bounding box of mask pixels `≥ 0.5` and keeps the
/// mask values inside the crop as the sprite's alpha.
pub fn extract_sprite(object_image: &Image, mask: &Mask, source_prompt: &str) -> Result<Sprite> {
    if object_image.dims() != mask.dims() {
        return Err(Error::Compose(format!("mask {:?} does not match image {:?}", mask.dims(), object_image.dims())));
    }
    let (w, h) = mask.dims();
    let mut extent: Option<(usize, usize, usize, usize)> = None;
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) >= MASK_THRESHOLD {
                extent = Some(match extent {
                    None => (x, y, x, y),
                    Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                });
            }
        }
    }
    let (x0, y0, x1, y1) =
        extent.ok_or_else(|| Error::Compose(format!("mask for `{source_prompt}` selects no pixels")))?;
    let (cw, ch) = (x1 - x0 + 1, y1 - y0 + 1);
    let color = Image::from_fn(cw, ch, |x, y| object_image.get(x0 + x, y0 + y))?;
    let alpha = Mask::from_fn(cw, ch, |x, y| mask.get(x0 + x, y0 + y))?;
    Sprite::new(color, alpha, source_prompt)
}

/// Pixel rectangle `(x0, y0, x1, y1)`, end exclusive.
pub fn box_to_pixels(bbox: &BBox, width: usize, height: usize) -> Result<(usize, usize, usize, usize)> {
    let span = |lo: f64, hi: f64, n: usize| {
        let a = ((lo * n as f64).floor().max(0.0) as usize).min(n);
        let b = ((hi * n as f64).ceil().max(0.0) as usize).min(n);
        (a, b)
    };
    let (x0, x1) = span(bbox.x1(), bbox.x2(), width);
    let (y0, y1) = span(bbox.y1(), bbox.y2(), height);
    if x1 <= x0 || y1 <= y0 {
        return Err(Error::Compose(format!("box {} covers no pixels of a {width}x{height} frame", bbox.to_compact())));
    }
    Ok((x0, y0, x1, y1))
}

pub fn place_sprite(frame: &Image, sprite: &Sprite, bbox: &BBox) -> Result<Image> {
    let (x0, y0, x1, y1) = box_to_pixels(bbox, frame.width(), frame.height())?;
    let (bw, bh) = (x1 - x0, y1 - y0);
    let fg = sprite.color.resize_bilinear(bw, bh)?;
    let alpha = sprite.alpha.resize_bilinear(bw, bh)?;
    let mut out = frame.clone();
    for y in 0..bh {
        for x in 0..bw {
            let a = alpha.get(x, y);
            let (f, b) = (fg.get(x, y), frame.get(x0 + x, y0 + y));
            out.set(x0 + x, y0 + y, std::array::from_fn(|c| a * f[c] + (1.0 - a) * b[c]));
        }
    }
    Ok(out)
}

/// Composites the plan's placements onto the background, frame by frame.
///
/// When the background has a different number of frames than the plan, frame
/// `i` of the sketch uses background frame `round(i·(B−1)/(N−1))`.
pub fn assemble_sketch(background: &PixelVideo, sprites: &BTreeMap<String, Sprite>, plan: &LayoutPlan) -> Result<VideoSketch> {
    let n = plan.frames.len();
    let b = background.len();
    if n != b {
        log::warn!("background has {b} frames, plan has {n}; resampling background by nearest index");
    }
    if let Some(missing) = plan.objects.iter().find(|o| !sprites.contains_key(*o)) {
        return Err(Error::Compose(format!("plan places `{missing}` but no sprite was made for it")));
    }
    let mut frames = Vec::with_capacity(n);
    let mut placements = Vec::with_capacity(n);
    for (i, fp) in plan.frames.iter().enumerate() {
        let src = if n == 1 || b == 1 { 0 } else { ((i * (b - 1)) as f64 / (n - 1) as f64).round() as usize };
        let mut frame = background.frames()[src].clone();
        for p in &fp.placements {
            let sprite = sprites
                .get(&p.name)
                .ok_or_else(|| Error::Compose(format!("plan places `{}` but no sprite was made for it", p.name)))?;
            frame = place_sprite(&frame, sprite, &p.bbox)?;
        }
        frames.push(frame);
        placements.push(fp.placements.clone());
    }
    Ok(VideoSketch { frames: PixelVideo::new(frames, background.fps())?, placements, provenance: BTreeMap::new() })
}
