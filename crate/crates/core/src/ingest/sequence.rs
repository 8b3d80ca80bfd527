use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage};

use super::{Frame, FrameStream, PixelFormat};
use crate::error::{Error, Result};

/// Opens the files in `dir` matching the glob `pattern` as a frame stream,
/// ordered lexicographically by file name. Grayscale images decode to GRAY8,
/// everything else to RGB8. The stream carries no frame rate.
pub fn open_image_sequence(dir: impl AsRef<Path>, pattern: &str) -> Result<FrameStream> {
    let dir = dir.as_ref();
    let full = dir.join(pattern);
    let full = full
        .to_str()
        .ok_or_else(|| Error::InvalidConfig(format!("non UTF-8 path {}", full.display())))?;
    let mut paths: Vec<PathBuf> = glob::glob(full)
        .map_err(|e| Error::InvalidConfig(format!("bad pattern {pattern:?}: {e}")))?
        .filter_map(|entry| entry.ok())
        .filter(|p| p.is_file())
        .collect();
    if paths.is_empty() {
        return Err(Error::NoFrames(format!("{}/{}", dir.display(), pattern)));
    }
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));

    let mut expected: Option<(usize, usize)> = None;
    let frames = paths.into_iter().enumerate().map(move |(index, path)| {
        let frame = decode_image(&path)?.with_index(index);
        let dims = (frame.width(), frame.height());
        match expected {
            None => expected = Some(dims),
            Some(first) if first != dims => {
                return Err(Error::DimensionMismatch {
                    expected: first,
                    found: dims,
                    context: path.display().to_string(),
                })
            }
            Some(_) => {}
        }
        Ok(frame)
    });
    Ok(FrameStream::new(None, frames))
}

fn decode_image(path: &Path) -> Result<Frame> {
    let img = image::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(gray) => Frame::gray(w, h, gray.into_raw()),
        DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_) => Frame::gray(w, h, img.to_luma8().into_raw()),
        other => Frame::rgb_interleaved(w, h, other.to_rgb8().as_raw()),
    }
}

/// Writes frames as `prefix_000000.png, ...` into `dir`, returning the paths.
pub fn write_png_sequence(
    dir: impl AsRef<Path>,
    prefix: &str,
    frames: &[Frame],
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(frames.len());
    for (i, frame) in frames.iter().enumerate() {
        let path = dir.join(format!("{prefix}_{i:06}.png"));
        let (w, h) = (frame.width() as u32, frame.height() as u32);
        let result = match frame.format() {
            PixelFormat::Gray8 => GrayImage::from_raw(w, h, frame.plane(0).to_vec())
                .expect("plane size checked at construction")
                .save(&path),
            PixelFormat::Rgb8 => {
                let mut buf = Vec::with_capacity(frame.plane(0).len() * 3);
                for i in 0..frame.plane(0).len() {
                    buf.extend([frame.plane(0)[i], frame.plane(1)[i], frame.plane(2)[i]]);
                }
                image::RgbImage::from_raw(w, h, buf)
                    .expect("plane size checked at construction")
                    .save(&path)
            }
            PixelFormat::Yuv420p8 => {
                return Err(Error::UnsupportedFormat(
                    "PNG output needs GRAY8 or RGB8 frames".into(),
                ))
            }
        };
        result.map_err(|e| Error::Decode {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        written.push(path);
    }
    Ok(written)
}
