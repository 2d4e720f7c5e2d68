//! Frame directories: `frame_00000.png`, `frame_00001.png`, … plus `index.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PixelVideo;
use crate::error::{Error, Result};
use crate::raster::Image;

pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameIndex {
    pub fps: f64,
    pub count: usize,
    pub width: usize,
    pub height: usize,
}

pub fn frame_file_name(i: usize) -> String {
    format!("frame_{i:05}.png")
}

/// Writes every frame and the index, replacing stale frames from an earlier
/// run. Returns the frame paths in order.
pub fn write_frames(dir: &Path, video: &PixelVideo) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let stale = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with("frame_") && n.ends_with(".png"));
        if stale {
            std::fs::remove_file(path)?;
        }
    }
    let mut paths = Vec::with_capacity(video.len());
    for (i, frame) in video.frames().iter().enumerate() {
        let path = dir.join(frame_file_name(i));
        frame.save_png(&path)?;
        paths.push(path);
    }
    let (width, height) = video.dims();
    let index = FrameIndex { fps: video.fps(), count: video.len(), width, height };
    std::fs::write(dir.join(INDEX_FILE), serde_json::to_vec_pretty(&index)?)?;
    Ok(paths)
}

pub fn read_frames(dir: &Path) -> Result<PixelVideo> {
    let index: FrameIndex = serde_json::from_slice(&std::fs::read(dir.join(INDEX_FILE))?)?;
    let frames = (0..index.count)
        .map(|i| Image::load_png(&dir.join(frame_file_name(i))))
        .collect::<Result<Vec<_>>>()?;
    if frames.iter().any(|f| f.dims() != (index.width, index.height)) {
        return Err(Error::data(format!("frames in {} do not match the size in {INDEX_FILE}", dir.display())));
    }
    PixelVideo::new(frames, index.fps)
}
