//! Natural-scene statistics of activation maps.
//!
//! Each channel of a frame's activation maps is MSCN-normalized and
//! summarized by two numbers, by default the shape and scale of a zero-mean
//! generalized Gaussian fit. Per-channel pairs are concatenated in channel
//! order: `(alpha_1, sigma_1, alpha_2, sigma_2, ...)`.

pub mod cache;
mod ggd;
mod mscn;
mod window;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backbone::ActivationMaps;
use crate::error::{Error, Result};

pub use ggd::{fit_ggd, ggd_ratio, warm_up, GgdParams, ALPHA_MAX, ALPHA_MIN, MIN_SAMPLES};
pub use mscn::{mscn, MscnMap, DEFAULT_C1};
pub use window::{build_window, build_window_with_sigma, GaussianWindow};

/// What is extracted per channel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMode {
    /// GGD `(alpha, sigma)` of the MSCN coefficients.
    #[default]
    Ggd,
    /// Mean and standard deviation of the MSCN coefficients.
    MeanStd,
    AlphaOnly,
    SigmaOnly,
}

impl FeatureMode {
    pub fn per_channel(self) -> usize {
        match self {
            FeatureMode::Ggd | FeatureMode::MeanStd => 2,
            FeatureMode::AlphaOnly | FeatureMode::SigmaOnly => 1,
        }
    }

    pub fn dimension(self, channels: usize) -> usize {
        self.per_channel() * channels
    }

    pub fn code(self) -> u8 {
        match self {
            FeatureMode::Ggd => 0,
            FeatureMode::MeanStd => 1,
            FeatureMode::AlphaOnly => 2,
            FeatureMode::SigmaOnly => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(FeatureMode::Ggd),
            1 => Some(FeatureMode::MeanStd),
            2 => Some(FeatureMode::AlphaOnly),
            3 => Some(FeatureMode::SigmaOnly),
            _ => None,
        }
    }

    /// Column names for one channel, in storage order.
    pub fn labels(self) -> &'static [&'static str] {
        match self {
            FeatureMode::Ggd => &["alpha", "sigma"],
            FeatureMode::MeanStd => &["mean", "std"],
            FeatureMode::AlphaOnly => &["alpha"],
            FeatureMode::SigmaOnly => &["sigma"],
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMode::Ggd => "ggd",
            FeatureMode::MeanStd => "mean-std",
            FeatureMode::AlphaOnly => "alpha",
            FeatureMode::SigmaOnly => "sigma",
        })
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ggd" => Ok(FeatureMode::Ggd),
            "mean-std" => Ok(FeatureMode::MeanStd),
            "alpha" | "alpha-only" => Ok(FeatureMode::AlphaOnly),
            "sigma" | "sigma-only" => Ok(FeatureMode::SigmaOnly),
            other => Err(Error::InvalidConfig(format!(
                "feature mode must be ggd, mean-std, alpha or sigma, got {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct NssConfig {
    pub mode: FeatureMode,
    pub window: GaussianWindow,
    pub c1: f64,
}

impl Default for NssConfig {
    fn default() -> Self {
        NssConfig {
            mode: FeatureMode::Ggd,
            window: GaussianWindow::default(),
            c1: DEFAULT_C1,
        }
    }
}

impl NssConfig {
    pub fn with_mode(mode: FeatureMode) -> Self {
        NssConfig {
            mode,
            ..Default::default()
        }
    }
}

/// A channel whose MSCN coefficients were identically zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelDiagnostic {
    pub channel: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NssFeatureVector {
    pub values: Vec<f32>,
    pub mode: FeatureMode,
    pub frame_index: usize,
    pub diagnostics: Vec<ChannelDiagnostic>,
}

impl NssFeatureVector {
    pub fn channels(&self) -> usize {
        self.values.len() / self.mode.per_channel()
    }
}

/// Extracts the per-frame feature vector from activation maps.
///
/// Constant channels cannot be fitted; they contribute
/// `(ALPHA_MAX, 0)` and are listed in `diagnostics`.
pub fn frame_features(maps: &ActivationMaps, config: &NssConfig) -> Result<NssFeatureVector> {
    if maps.channels == 0 {
        return Err(Error::Shape("activation maps have no channels".into()));
    }
    let per_channel: Vec<Result<(Vec<f32>, Option<ChannelDiagnostic>)>> = (0..maps.channels)
        .into_par_iter()
        .map(|c| channel_features(maps, c, config))
        .collect();

    let mut values = Vec::with_capacity(config.mode.dimension(maps.channels));
    let mut diagnostics = Vec::new();
    for result in per_channel {
        let (v, diag) = result?;
        values.extend(v);
        diagnostics.extend(diag);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput(format!(
            "non-finite feature in frame {}",
            maps.frame_index
        )));
    }
    Ok(NssFeatureVector {
        values,
        mode: config.mode,
        frame_index: maps.frame_index,
        diagnostics,
    })
}

fn channel_features(
    maps: &ActivationMaps,
    c: usize,
    config: &NssConfig,
) -> Result<(Vec<f32>, Option<ChannelDiagnostic>)> {
    let coeffs = mscn(
        maps.channel(c),
        maps.width,
        maps.height,
        &config.window,
        config.c1,
    )?
    .coefficients;
    let moments = || {
        let n = coeffs.len() as f64;
        let mean = coeffs.iter().sum::<f64>() / n;
        let var = coeffs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    let fitted = || match fit_ggd(&coeffs) {
        Ok(p) => Ok((p.alpha, p.sigma, None)),
        Err(Error::DegenerateInput(reason)) => Ok((
            ALPHA_MAX,
            0.0,
            Some(ChannelDiagnostic { channel: c, reason }),
        )),
        Err(e) => Err(e),
    };
    Ok(match config.mode {
        FeatureMode::MeanStd => {
            let (mean, std) = moments();
            (vec![mean as f32, std as f32], None)
        }
        FeatureMode::Ggd => {
            let (alpha, sigma, diag) = fitted()?;
            (vec![alpha as f32, sigma as f32], diag)
        }
        FeatureMode::AlphaOnly => {
            let (alpha, _, diag) = fitted()?;
            (vec![alpha as f32], diag)
        }
        FeatureMode::SigmaOnly => {
            let (_, sigma, diag) = fitted()?;
            (vec![sigma as f32], diag)
        }
    })
}
