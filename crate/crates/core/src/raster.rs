//! RGB images and single-channel masks with values in `[0, 1]`.

use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};

/// Row-major RGB image, `f32` per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Result<Self> {
        check_dims(width, height)?;
        let data = rgb.iter().copied().cycle().take(3 * width * height).collect();
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Result<Self> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).map(|v| v.clamp(0.0, 1.0)));
            }
        }
        Ok(Self { width, height, data })
    }

    /// Takes interleaved RGB values, clamping into `[0, 1]`.
    pub fn from_raw(width: usize, height: usize, mut data: Vec<f32>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height * 3 {
            return Err(Error::data(format!("{} values for a {width}x{height} RGB image", data.len())));
        }
        data.iter_mut().for_each(|v| *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn raw(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn resize_bilinear(&self, width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        let data = resize_channels(&self.data, self.width, self.height, 3, width, height);
        Ok(Self { width, height, data })
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let bytes = self.data.iter().map(|&v| to_u8(v)).collect();
        RgbImage::from_raw(self.width as u32, self.height as u32, bytes).expect("buffer size matches dimensions")
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        let data = img.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
        Self { width: img.width() as usize, height: img.height() as usize, data }
    }

    /// Rounds every channel to the nearest 8-bit level, as a PNG round trip would.
    pub fn quantized(&self) -> Self {
        Self::from_rgb8(&self.to_rgb8())
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let mut out = Cursor::new(Vec::new());
        self.to_rgb8().write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
        Ok(Self::from_rgb8(&img.to_rgb8()))
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_png()?)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        Self::from_png(&std::fs::read(path)?)
    }
}

/// Soft mask with values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Mask {
    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self { width, height, data: vec![value.clamp(0.0, 1.0); width * height] })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v.clamp(0.0, 1.0);
    }

    pub fn raw(&self) -> &[f32] {
        &self.data
    }

    pub fn resize_bilinear(&self, width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        let data = resize_channels(&self.data, self.width, self.height, 1, width, height);
        Ok(Self { width, height, data })
    }

    pub fn to_gray8(&self) -> GrayImage {
        let bytes = self.data.iter().map(|&v| to_u8(v)).collect();
        GrayImage::from_raw(self.width as u32, self.height as u32, bytes).expect("buffer size matches dimensions")
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let mut out = Cursor::new(Vec::new());
        self.to_gray8().write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    /// Any PNG colour type is accepted and reduced to luminance.
    pub fn from_png(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_luma8();
        let data = img.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
        Ok(Self { width: img.width() as usize, height: img.height() as usize, data })
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::data(format!("image dimensions must be positive, got {width}x{height}")));
    }
    Ok(())
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Bilinear resampling with aligned corners: destination pixel `i` samples
/// source coordinate `i·(src−1)/(dst−1)`, so corner pixels map to corner
/// pixels exactly. A one-pixel destination samples the source centre.
fn resize_channels(src: &[f32], sw: usize, sh: usize, ch: usize, dw: usize, dh: usize) -> Vec<f32> {
    let coord = |i: usize, s: usize, d: usize| -> (usize, usize, f32) {
        let pos = if d == 1 { (s - 1) as f64 / 2.0 } else { i as f64 * (s - 1) as f64 / (d - 1) as f64 };
        let i0 = pos.floor() as usize;
        let i1 = (i0 + 1).min(s - 1);
        (i0, i1, (pos - i0 as f64) as f32)
    };
    let mut out = Vec::with_capacity(dw * dh * ch);
    for y in 0..dh {
        let (y0, y1, fy) = coord(y, sh, dh);
        for x in 0..dw {
            let (x0, x1, fx) = coord(x, sw, dw);
            for c in 0..ch {
                let p = |xx: usize, yy: usize| src[(yy * sw + xx) * ch + c];
                let top = p(x0, y0) + fx * (p(x1, y0) - p(x0, y0));
                let bottom = p(x0, y1) + fx * (p(x1, y1) - p(x0, y1));
                out.push(top + fy * (bottom - top));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_exact_on_quantized_values() {
        let img = Image::from_fn(5, 3, |x, y| [x as f32 / 4.0, y as f32 / 2.0, 0.5]).unwrap().quantized();
        assert_eq!(Image::from_png(&img.to_png().unwrap()).unwrap(), img);
        let mask = Mask::from_fn(4, 4, |x, y| if x > y { 1.0 } else { 0.0 }).unwrap();
        assert_eq!(Mask::from_png(&mask.to_png().unwrap()).unwrap(), mask);
    }

    #[test]
    fn resize_keeps_corners_and_identity() {
        let img = Image::from_fn(4, 3, |x, y| [x as f32 / 3.0, y as f32 / 2.0, 0.25]).unwrap();
        assert_eq!(img.resize_bilinear(4, 3).unwrap(), img);
        let big = img.resize_bilinear(7, 5).unwrap();
        assert_eq!(big.get(0, 0), img.get(0, 0));
        assert_eq!(big.get(6, 4), img.get(3, 2));
        // linear ramps stay linear
        assert!((big.get(3, 2)[0] - 0.5).abs() < 1e-6);
        assert!((big.get(3, 2)[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn rejects_empty_dimensions() {
        assert!(Image::new(0, 3).is_err());
        assert!(Mask::filled(2, 0, 1.0).is_err());
        assert!(Image::from_raw(2, 2, vec![0.0; 11]).is_err());
    }
}
