//! Frame decoding, backbone preprocessing and temporal sampling.
//!
//! Sources are decoded lazily into [`Frame`] values through a [`FrameStream`].
//! Frames are immutable once produced and may be shared across threads.

mod preprocess;
mod sampling;
mod sequence;
mod y4m;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use preprocess::{
    to_backbone_input, BackboneInput, Normalization, IMAGENET_MEAN, IMAGENET_STD,
};
pub use sampling::{sample_frames, SampledFrames, SamplingPolicy};
pub use sequence::{open_image_sequence, write_png_sequence};
pub use y4m::{open_y4m, read_y4m, write_y4m, Y4mReader};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PixelFormat {
    Gray8,
    Rgb8,
    Yuv420p8,
}

impl PixelFormat {
    /// Plane dimensions `(width, height)` for a frame of the given size.
    pub fn plane_dims(self, width: usize, height: usize) -> Vec<(usize, usize)> {
        match self {
            PixelFormat::Gray8 => vec![(width, height)],
            PixelFormat::Rgb8 => vec![(width, height); 3],
            PixelFormat::Yuv420p8 => {
                let chroma = (width.div_ceil(2), height.div_ceil(2));
                vec![(width, height), chroma, chroma]
            }
        }
    }
}

impl fmt::Display for PixelFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            PixelFormat::Gray8 => "GRAY8",
            PixelFormat::Rgb8 => "RGB8",
            PixelFormat::Yuv420p8 => "YUV420P8",
        };
        f.write_str(name)
    }
}

/// A single decoded frame with planar 8-bit samples.
///
/// RGB8 frames hold three planes (R, G, B). YUV420P8 chroma planes are
/// `ceil(w/2) x ceil(h/2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    format: PixelFormat,
    planes: Vec<Vec<u8>>,
    pub index: usize,
    pub timestamp: Option<f64>,
}

impl Frame {
    pub fn new(
        width: usize,
        height: usize,
        format: PixelFormat,
        planes: Vec<Vec<u8>>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidFrame(format!(
                "zero-sized frame {width}x{height}"
            )));
        }
        let dims = format.plane_dims(width, height);
        if dims.len() != planes.len() {
            return Err(Error::InvalidFrame(format!(
                "{format} expects {} planes, got {}",
                dims.len(),
                planes.len()
            )));
        }
        for (i, ((w, h), plane)) in dims.iter().zip(&planes).enumerate() {
            if plane.len() != w * h {
                return Err(Error::InvalidFrame(format!(
                    "plane {i} has {} samples, expected {}",
                    plane.len(),
                    w * h
                )));
            }
        }
        Ok(Frame {
            width,
            height,
            format,
            planes,
            index: 0,
            timestamp: None,
        })
    }

    pub fn gray(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        Frame::new(width, height, PixelFormat::Gray8, vec![data])
    }

    /// Builds an RGB8 frame from interleaved `RGBRGB...` samples.
    pub fn rgb_interleaved(width: usize, height: usize, data: &[u8]) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::InvalidFrame(format!(
                "interleaved RGB buffer has {} bytes, expected {}",
                data.len(),
                width * height * 3
            )));
        }
        let mut planes: Vec<Vec<u8>> = (0..3).map(|_| Vec::with_capacity(width * height)).collect();
        for px in data.chunks_exact(3) {
            for (plane, &v) in planes.iter_mut().zip(px) {
                plane.push(v);
            }
        }
        Frame::new(width, height, PixelFormat::Rgb8, planes)
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }

    pub fn with_timestamp(mut self, seconds: f64) -> Self {
        self.timestamp = Some(seconds);
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn format(&self) -> PixelFormat {
        self.format
    }

    pub fn planes(&self) -> &[Vec<u8>] {
        &self.planes
    }

    pub fn plane(&self, i: usize) -> &[u8] {
        &self.planes[i]
    }

    /// Converts a GRAY8 frame to YUV420P8 with neutral chroma. Under the
    /// full-range matrix used by [`to_backbone_input`] this maps back to the
    /// same gray level in all three channels.
    pub fn gray_to_yuv420(&self) -> Result<Frame> {
        if self.format != PixelFormat::Gray8 {
            return Err(Error::UnsupportedFormat(format!(
                "expected GRAY8, got {}",
                self.format
            )));
        }
        let dims = PixelFormat::Yuv420p8.plane_dims(self.width, self.height);
        let (cw, ch) = dims[1];
        let planes = vec![
            self.planes[0].clone(),
            vec![128; cw * ch],
            vec![128; cw * ch],
        ];
        let mut out = Frame::new(self.width, self.height, PixelFormat::Yuv420p8, planes)?;
        out.index = self.index;
        out.timestamp = self.timestamp;
        Ok(out)
    }
}

/// Frame rate as an exact ratio, as carried by Y4M headers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRate {
    pub num: u32,
    pub den: u32,
}

impl FrameRate {
    pub fn new(num: u32, den: u32) -> Self {
        FrameRate { num, den }
    }

    pub fn fps(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for FrameRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.num, self.den)
    }
}

/// A lazily decoded sequence of frames in display order.
pub struct FrameStream {
    frame_rate: Option<FrameRate>,
    frames: Box<dyn Iterator<Item = Result<Frame>> + Send>,
}

impl FrameStream {
    pub fn new<I>(frame_rate: Option<FrameRate>, frames: I) -> Self
    where
        I: Iterator<Item = Result<Frame>> + Send + 'static,
    {
        FrameStream {
            frame_rate,
            frames: Box::new(frames),
        }
    }

    /// Wraps already decoded frames, re-indexing them in order.
    pub fn from_frames(frame_rate: Option<FrameRate>, frames: Vec<Frame>) -> Self {
        let fps = frame_rate.map(|r| r.fps());
        let frames = frames.into_iter().enumerate().map(move |(i, f)| {
            let f = f.with_index(i);
            Ok(match fps {
                Some(fps) => f.with_timestamp(i as f64 / fps),
                None => f,
            })
        });
        FrameStream::new(frame_rate, frames)
    }

    pub fn frame_rate(&self) -> Option<FrameRate> {
        self.frame_rate
    }

    /// Overrides the frame rate, e.g. for image sequences which carry none.
    pub fn with_frame_rate(mut self, rate: FrameRate) -> Self {
        self.frame_rate = Some(rate);
        self
    }
}

impl Iterator for FrameStream {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        self.frames.next()
    }
}

impl fmt::Debug for FrameStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrameStream")
            .field("frame_rate", &self.frame_rate)
            .finish_non_exhaustive()
    }
}
