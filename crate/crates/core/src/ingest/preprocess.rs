use serde::{Deserialize, Serialize};

use super::{Frame, PixelFormat};
use crate::error::{Error, Result};

pub const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

// BT.709 full-range YCbCr -> RGB, chroma centered on 128.
const KR_V: f64 = 1.5748;
const KG_U: f64 = 0.187324;
const KG_V: f64 = 0.468124;
const KB_U: f64 = 1.8556;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization {
            mean: IMAGENET_MEAN,
            std: IMAGENET_STD,
        }
    }
}

/// A standardized 3-channel tensor in channel-major (`C x H x W`) layout.
#[derive(Clone, Debug, PartialEq)]
pub struct BackboneInput {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
    pub normalization: Normalization,
}

impl BackboneInput {
    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }
}

/// Converts a frame to the backbone's input space.
///
/// YUV420P8 is upsampled (nearest chroma sample) and converted with the
/// BT.709 full-range matrix
///
/// ```text
/// R = Y + 1.5748 (Cr - 128)
/// G = Y - 0.187324 (Cb - 128) - 0.468124 (Cr - 128)
/// B = Y + 1.8556 (Cb - 128)
/// ```
///
/// with results clamped to `[0, 255]`. Samples are scaled to `[0, 1]` and
/// standardized per channel with the ImageNet mean and standard deviation.
/// GRAY8 is replicated to three channels before standardization. No resizing
/// is done.
pub fn to_backbone_input(frame: &Frame) -> Result<BackboneInput> {
    let (w, h) = (frame.width(), frame.height());
    let n = w * h;
    let norm = Normalization::default();
    let mut data = vec![0f32; 3 * n];

    let mut store = |i: usize, rgb: [f64; 3]| {
        for c in 0..3 {
            data[c * n + i] = ((rgb[c] / 255.0 - norm.mean[c]) / norm.std[c]) as f32;
        }
    };

    match frame.format() {
        PixelFormat::Gray8 => {
            for (i, &v) in frame.plane(0).iter().enumerate() {
                let v = v as f64;
                store(i, [v, v, v]);
            }
        }
        PixelFormat::Rgb8 => {
            let (r, g, b) = (frame.plane(0), frame.plane(1), frame.plane(2));
            for i in 0..n {
                store(i, [r[i] as f64, g[i] as f64, b[i] as f64]);
            }
        }
        PixelFormat::Yuv420p8 => {
            let (luma, cb, cr) = (frame.plane(0), frame.plane(1), frame.plane(2));
            let cw = w.div_ceil(2);
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    let ci = (y / 2) * cw + x / 2;
                    store(i, yuv_to_rgb(luma[i], cb[ci], cr[ci]));
                }
            }
        }
    }

    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidFrame(
            "non-finite value after normalization".into(),
        ));
    }
    Ok(BackboneInput {
        width: w,
        height: h,
        data,
        normalization: norm,
    })
}

fn yuv_to_rgb(y: u8, cb: u8, cr: u8) -> [f64; 3] {
    let y = y as f64;
    let u = cb as f64 - 128.0;
    let v = cr as f64 - 128.0;
    [
        (y + KR_V * v).clamp(0.0, 255.0),
        (y - KG_U * u - KG_V * v).clamp(0.0, 255.0),
        (y + KB_U * u).clamp(0.0, 255.0),
    ]
}
