//! Synthetic banding stimuli: smooth ramps reduced to a coarser bit depth
//! and expanded back to 8 bits, optionally with 4x4 ordered dithering.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Frame, PixelFormat};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gradient {
    /// Ramp from left to right.
    #[default]
    Horizontal,
    /// Ramp from top to bottom.
    Vertical,
    /// Ramp from the center outwards, reaching `high` at the corners.
    Radial,
}

impl fmt::Display for Gradient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gradient::Horizontal => "horizontal",
            Gradient::Vertical => "vertical",
            Gradient::Radial => "radial",
        })
    }
}

impl FromStr for Gradient {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "horizontal" => Ok(Gradient::Horizontal),
            "vertical" => Ok(Gradient::Vertical),
            "radial" => Ok(Gradient::Radial),
            other => Err(Error::InvalidSpec(format!(
                "gradient must be horizontal, vertical or radial, got {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub gradient: Gradient,
    pub low: u8,
    pub high: u8,
    pub bits: u8,
    pub dither: bool,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            width: 256,
            height: 256,
            gradient: Gradient::Horizontal,
            low: 0,
            high: 255,
            bits: 8,
            dither: false,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidSpec(format!(
                "empty frame {}x{}",
                self.width, self.height
            )));
        }
        if self.low >= self.high {
            return Err(Error::InvalidSpec(format!(
                "range must satisfy low < high, got ({}, {})",
                self.low, self.high
            )));
        }
        check_bits(self.bits)
    }
}

fn check_bits(bits: u8) -> Result<()> {
    if !(2..=8).contains(&bits) {
        return Err(Error::InvalidSpec(format!(
            "bit depth must be in [2, 8], got {bits}"
        )));
    }
    Ok(())
}

/// The unquantized 8-bit ramp described by `spec`.
pub fn ramp_frame(spec: &SynthSpec) -> Result<Frame> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let (low, span) = (spec.low as f64, (spec.high - spec.low) as f64);
    let frac = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let max_r = cx.hypot(cy);
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let t = match spec.gradient {
                Gradient::Horizontal => frac(x as f64, (w - 1) as f64),
                Gradient::Vertical => frac(y as f64, (h - 1) as f64),
                Gradient::Radial => frac((x as f64 - cx).hypot(y as f64 - cy), max_r),
            };
            data.push((low + span * t).round() as u8);
        }
    }
    Frame::gray(w, h, data)
}

/// The ramp reduced to `spec.bits` (dithered if `spec.dither`).
pub fn gradient_frame(spec: &SynthSpec) -> Result<Frame> {
    render(&ramp_frame(spec)?, spec.bits, spec.dither, spec.seed)
}

fn render(ramp: &Frame, bits: u8, dither: bool, seed: u64) -> Result<Frame> {
    if dither {
        quantize_dithered(ramp, bits, seed)
    } else {
        quantize_bitdepth(ramp, bits)
    }
}

/// `v -> round(v / 2^(8-bits)) * 2^(8-bits)`, clamped to 255.
pub fn quantize_bitdepth(frame: &Frame, bits: u8) -> Result<Frame> {
    check_bits(bits)?;
    let step = 1u32 << (8 - bits);
    map_samples(frame, |v, _, _| quantize(v as f64, step))
}

/// 4x4 Bayer ordered dithering before quantization; `seed` picks the
/// matrix phase.
pub fn quantize_dithered(frame: &Frame, bits: u8, seed: u64) -> Result<Frame> {
    check_bits(bits)?;
    const BAYER: [[u8; 4]; 4] = [[0, 8, 2, 10], [12, 4, 14, 6], [3, 11, 1, 9], [15, 7, 13, 5]];
    let step = 1u32 << (8 - bits);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ox, oy) = (rng.random_range(0..4usize), rng.random_range(0..4usize));
    map_samples(frame, |v, x, y| {
        let threshold = (BAYER[(y + oy) % 4][(x + ox) % 4] as f64 + 0.5) / 16.0 - 0.5;
        quantize(v as f64 + threshold * step as f64, step)
    })
}

fn quantize(v: f64, step: u32) -> u8 {
    let step = step as f64;
    ((v / step).round() * step).clamp(0.0, 255.0) as u8
}

fn map_samples(frame: &Frame, f: impl Fn(u8, usize, usize) -> u8) -> Result<Frame> {
    match frame.format() {
        PixelFormat::Gray8 | PixelFormat::Rgb8 => {}
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "bit-depth reduction needs GRAY8 or RGB8, got {other}"
            )))
        }
    }
    let w = frame.width();
    let planes = frame
        .planes()
        .iter()
        .map(|p| {
            p.iter()
                .enumerate()
                .map(|(i, &v)| f(v, i % w, i / w))
                .collect()
        })
        .collect();
    let out = Frame::new(w, frame.height(), frame.format(), planes)?.with_index(frame.index);
    Ok(match frame.timestamp {
        Some(t) => out.with_timestamp(t),
        None => out,
    })
}

/// One frame per bit depth over the same ramp. `bits` must be strictly
/// decreasing.
pub fn severity_ladder(spec: &SynthSpec, bits: &[u8]) -> Result<Vec<Frame>> {
    if bits.is_empty() {
        return Err(Error::EmptyLadder);
    }
    if bits.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::InvalidSpec(format!(
            "ladder bit depths must strictly decrease, got {bits:?}"
        )));
    }
    let ramp = ramp_frame(spec)?;
    bits.iter()
        .enumerate()
        .map(|(i, &b)| Ok(render(&ramp, b, spec.dither, spec.seed)?.with_index(i)))
        .collect()
}

/// Number of distinct sample values in a plane.
pub fn unique_levels(plane: &[u8]) -> usize {
    let mut seen = [false; 256];
    plane.iter().for_each(|&v| seen[v as usize] = true);
    seen.iter().filter(|&&s| s).count()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn spec(w: usize, h: usize, gradient: Gradient) -> SynthSpec {
        SynthSpec {
            width: w,
            height: h,
            gradient,
            ..Default::default()
        }
    }

    #[test]
    fn horizontal_ramp_is_identity_on_columns() {
        let f = gradient_frame(&spec(256, 64, Gradient::Horizontal)).unwrap();
        assert_eq!(f.format(), PixelFormat::Gray8);
        for y in 0..64 {
            for x in 0..256 {
                assert_eq!(f.plane(0)[y * 256 + x] as usize, x);
            }
        }
    }

    #[test]
    fn vertical_is_transposed_horizontal() {
        let v = gradient_frame(&spec(40, 70, Gradient::Vertical)).unwrap();
        let h = gradient_frame(&spec(70, 40, Gradient::Horizontal)).unwrap();
        for y in 0..70 {
            for x in 0..40 {
                assert_eq!(v.plane(0)[y * 40 + x], h.plane(0)[x * 70 + y]);
            }
        }
    }

    #[test]
    fn radial_spans_the_range() {
        let f = gradient_frame(&spec(65, 65, Gradient::Radial)).unwrap();
        assert_eq!(f.plane(0)[32 * 65 + 32], 0);
        assert_eq!(f.plane(0)[0], 255);
        assert_eq!(f.plane(0)[65 * 65 - 1], 255);
    }

    #[test]
    fn invalid_specs() {
        let degenerate = SynthSpec {
            low: 100,
            high: 100,
            ..Default::default()
        };
        assert!(matches!(
            gradient_frame(&degenerate),
            Err(Error::InvalidSpec(_))
        ));
        assert!(matches!(
            gradient_frame(&SynthSpec {
                bits: 1,
                ..Default::default()
            }),
            Err(Error::InvalidSpec(_))
        ));
        assert!(matches!(
            gradient_frame(&SynthSpec {
                width: 0,
                ..Default::default()
            }),
            Err(Error::InvalidSpec(_))
        ));
        assert!("diagonal".parse::<Gradient>().is_err());
    }

    #[test]
    fn bit_depth_examples() {
        let ramp = gradient_frame(&spec(256, 4, Gradient::Horizontal)).unwrap();
        assert_eq!(quantize_bitdepth(&ramp, 8).unwrap(), ramp);

        let two = quantize_bitdepth(&ramp, 2).unwrap();
        let mut levels: Vec<u8> = two.plane(0).to_vec();
        levels.sort();
        levels.dedup();
        // four multiples of 64 plus the clamped top level
        assert_eq!(levels, vec![0, 64, 128, 192, 255]);

        let four = quantize_bitdepth(&ramp, 4).unwrap();
        let row = &four.plane(0)[..256];
        let edges: Vec<usize> = (1..256).filter(|&x| row[x] != row[x - 1]).collect();
        assert!(edges.windows(2).all(|w| w[1] - w[0] == 16), "{edges:?}");
    }

    #[test]
    fn rgb_is_quantized_per_plane() {
        let data: Vec<u8> = (0..48).map(|i| (i * 5) as u8).collect();
        let f = Frame::rgb_interleaved(4, 4, &data).unwrap();
        let q = quantize_bitdepth(&f, 3).unwrap();
        assert_eq!(q.format(), PixelFormat::Rgb8);
        assert!(q
            .planes()
            .iter()
            .flatten()
            .all(|&v| v % 32 == 0 || v == 255));
        let yuv = f.planes()[0].clone();
        let gray = Frame::gray(4, 4, yuv).unwrap().gray_to_yuv420().unwrap();
        assert!(matches!(
            quantize_bitdepth(&gray, 4),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn ladder_levels_never_increase() {
        let frames =
            severity_ladder(&spec(256, 16, Gradient::Horizontal), &[8, 6, 5, 4, 3]).unwrap();
        assert_eq!(frames.len(), 5);
        let counts: Vec<usize> = frames.iter().map(|f| unique_levels(f.plane(0))).collect();
        assert!(counts.windows(2).all(|w| w[0] > w[1]), "{counts:?}");
        assert_eq!(
            severity_ladder(&SynthSpec::default(), &[5]).unwrap().len(),
            1
        );
        assert!(matches!(
            severity_ladder(&SynthSpec::default(), &[]),
            Err(Error::EmptyLadder)
        ));
        assert!(matches!(
            severity_ladder(&SynthSpec::default(), &[4, 6]),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn dither_masks_contours() {
        let s = SynthSpec {
            width: 256,
            height: 32,
            bits: 3,
            ..Default::default()
        };
        let plain = gradient_frame(&s).unwrap();
        let dithered = gradient_frame(&SynthSpec {
            dither: true,
            ..s.clone()
        })
        .unwrap();
        // 4-column band means of the dithered ramp track the ramp far better
        let col_err = |f: &Frame| {
            (0..64)
                .map(|band| {
                    let xs = band * 4..band * 4 + 4;
                    let sum: f64 = xs
                        .clone()
                        .flat_map(|x| (0..32).map(move |y| f.plane(0)[y * 256 + x] as f64))
                        .sum();
                    let truth = xs.map(|x| x as f64).sum::<f64>() / 4.0;
                    (sum / 128.0 - truth).abs()
                })
                .sum::<f64>()
                / 64.0
        };
        assert!(col_err(&dithered) < col_err(&plain) / 2.0);
        assert_eq!(
            dithered,
            gradient_frame(&SynthSpec { dither: true, ..s }).unwrap()
        );
    }

    #[test]
    fn spec_json_round_trip() {
        let s = SynthSpec {
            gradient: Gradient::Radial,
            bits: 5,
            dither: true,
            seed: 9,
            ..Default::default()
        };
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"radial\""));
        assert_eq!(serde_json::from_str::<SynthSpec>(&json).unwrap(), s);
    }

    proptest! {
        #[test]
        fn quantization_is_idempotent(values in prop::collection::vec(any::<u8>(), 16), bits in 2u8..=8) {
            let f = Frame::gray(4, 4, values).unwrap();
            let once = quantize_bitdepth(&f, bits).unwrap();
            prop_assert_eq!(quantize_bitdepth(&once, bits).unwrap(), once);
        }

        #[test]
        fn ramp_level_count(low in 0u8..200, extra in 1u8..55, bits in 2u8..=8) {
            let high = low.saturating_add(extra.max(1)).max(low + 1);
            let width = (high - low) as usize + 1;
            let s = SynthSpec { width, height: 2, low, high, bits, ..Default::default() };
            let f = gradient_frame(&s).unwrap();
            // every integer in [low, high] appears, so the levels are the
            // multiples of the step between round(low/step) and round(high/step)
            let step = (1u32 << (8 - bits)) as f64;
            let expected = ((high as f64 / step).round() - (low as f64 / step).round()) as usize + 1;
            prop_assert_eq!(unique_levels(f.plane(0)), expected);
        }
    }
}
