//! Truncated pretrained CNN backbones loaded from ONNX.
//!
//! A backbone is an ONNX graph holding the first `s` stages of a
//! classification network (a stage ends wherever spatial resolution drops),
//! plus a JSON manifest sidecar:
//!
//! ```json
//! {"name": "resnet50-stage2", "stage_index": 2, "expected_channels": 512,
//!  "cumulative_stride": 8, "sha256": "...", "spatial_rounding": "ceil"}
//! ```
//!
//! Graphs must take a single `1 x 3 x H x W` float input with dynamic `H`
//! and `W`, so frames are processed at native resolution.

pub mod zoo;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tract_onnx::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::BackboneInput;

/// Smallest spatial size accepted by default.
pub const DEFAULT_MIN_INPUT: usize = 32;
const PROBE_SIZE: usize = 64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpatialRounding {
    #[default]
    Ceil,
    Floor,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub stage_index: u32,
    pub expected_channels: usize,
    pub cumulative_stride: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
    #[serde(default)]
    pub spatial_rounding: SpatialRounding,
    #[serde(default = "default_min_input")]
    pub min_input: usize,
}

fn default_min_input() -> usize {
    DEFAULT_MIN_INPUT
}

impl Manifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = match fs::read_to_string(path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::ManifestMissing(path.to_path_buf()))
            }
            Err(e) => return Err(e.into()),
        };
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::ManifestMismatch(format!("{}: {e}", path.display())))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if !(1..=6).contains(&self.stage_index) {
            return Err(Error::ManifestMismatch(format!(
                "stage_index {} outside 1..=6",
                self.stage_index
            )));
        }
        if self.expected_channels == 0 || self.cumulative_stride == 0 {
            return Err(Error::ManifestMismatch(
                "expected_channels and cumulative_stride must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Output `(height, width)` for an input of the given size.
    pub fn output_dims(&self, height: usize, width: usize) -> (usize, usize) {
        let s = self.cumulative_stride;
        match self.spatial_rounding {
            SpatialRounding::Ceil => (height.div_ceil(s), width.div_ceil(s)),
            SpatialRounding::Floor => (height / s, width / s),
        }
    }
}

/// Conventional sidecar location: `model.onnx` -> `model.json`.
pub fn manifest_path_for(model_path: impl AsRef<Path>) -> PathBuf {
    model_path.as_ref().with_extension("json")
}

type Plan = Arc<TypedRunnableModel>;

/// A validated, immutable backbone ready for inference.
///
/// Optimized execution plans are built lazily per input size and cached;
/// the handle can be shared across threads.
pub struct BackboneHandle {
    manifest: Manifest,
    model: InferenceModel,
    plans: Mutex<HashMap<(usize, usize), Plan>>,
}

impl std::fmt::Debug for BackboneHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackboneHandle")
            .field("manifest", &self.manifest)
            .finish_non_exhaustive()
    }
}

/// Activation maps of one frame, channel-major (`C x H' x W'`).
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationMaps {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
    pub frame_index: usize,
}

impl ActivationMaps {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f32>,
        frame_index: usize,
    ) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "{} values for {channels}x{height}x{width} maps",
                data.len()
            )));
        }
        Ok(ActivationMaps {
            channels,
            height,
            width,
            data,
            frame_index,
        })
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }
}

/// Loads an ONNX backbone and checks it against its manifest with a
/// `3 x 64 x 64` probe inference.
pub fn load_backbone(
    model_path: impl AsRef<Path>,
    manifest_path: impl AsRef<Path>,
) -> Result<BackboneHandle> {
    let manifest = Manifest::read(manifest_path)?;
    let model_path = model_path.as_ref();
    let bytes = fs::read(model_path)
        .map_err(|e| Error::ModelLoad(format!("{}: {e}", model_path.display())))?;
    BackboneHandle::from_bytes(&bytes, manifest)
}

impl BackboneHandle {
    pub fn from_bytes(bytes: &[u8], manifest: Manifest) -> Result<Self> {
        manifest.validate()?;
        if let Some(expected) = manifest.sha256.as_deref().filter(|s| !s.is_empty()) {
            let actual = hex::encode(Sha256::digest(bytes));
            if !actual.eq_ignore_ascii_case(expected) {
                return Err(Error::ManifestMismatch(format!(
                    "sha256 {actual} does not match manifest {expected}"
                )));
            }
        }
        let model = tract_onnx::onnx()
            .model_for_read(&mut &bytes[..])
            .map_err(|e| Error::ModelLoad(format!("{e:#}")))?;
        let handle = BackboneHandle {
            manifest,
            model,
            plans: Mutex::new(HashMap::new()),
        };
        handle.probe()?;
        Ok(handle)
    }

    fn probe(&self) -> Result<()> {
        let probe = BackboneInput {
            width: PROBE_SIZE,
            height: PROBE_SIZE,
            data: vec![0.0; 3 * PROBE_SIZE * PROBE_SIZE],
            normalization: Default::default(),
        };
        let (c, h, w, _) = self.run(&probe).map_err(|e| match e {
            Error::Inference(msg) => Error::ModelLoad(msg),
            other => other,
        })?;
        if c != self.manifest.expected_channels {
            return Err(Error::ManifestMismatch(format!(
                "{} declares {} channels but the graph emits {c}",
                self.manifest.name, self.manifest.expected_channels
            )));
        }
        let expected = self.manifest.output_dims(PROBE_SIZE, PROBE_SIZE);
        if (h, w) != expected {
            return Err(Error::ManifestMismatch(format!(
                "{} declares stride {} ({:?} at {PROBE_SIZE}x{PROBE_SIZE}) but the graph emits {:?}",
                self.manifest.name,
                self.manifest.cumulative_stride,
                expected,
                (h, w)
            )));
        }
        Ok(())
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn name(&self) -> &str {
        &self.manifest.name
    }

    pub fn stage_index(&self) -> u32 {
        self.manifest.stage_index
    }

    pub fn expected_channels(&self) -> usize {
        self.manifest.expected_channels
    }

    fn plan(&self, height: usize, width: usize) -> Result<Plan> {
        if let Some(plan) = self
            .plans
            .lock()
            .expect("plan cache poisoned")
            .get(&(height, width))
        {
            return Ok(plan.clone());
        }
        let plan = self
            .model
            .clone()
            .with_input_fact(0, f32::fact([1, 3, height, width]).into())
            .and_then(|m| m.into_optimized())
            .and_then(|m| m.into_runnable())
            .map_err(|e| Error::Inference(format!("{e:#}")))?;
        self.plans
            .lock()
            .expect("plan cache poisoned")
            .insert((height, width), plan.clone());
        Ok(plan)
    }

    fn run(&self, input: &BackboneInput) -> Result<(usize, usize, usize, Vec<f32>)> {
        let (h, w) = (input.height, input.width);
        let plan = self.plan(h, w)?;
        let tensor = Tensor::from_shape(&[1, 3, h, w], &input.data)
            .map_err(|e| Error::Inference(format!("{e:#}")))?;
        let outputs = plan
            .run(tvec!(tensor.into_tvalue()))
            .map_err(|e| Error::Inference(format!("{e:#}")))?;
        let out = outputs[0]
            .to_plain_array_view::<f32>()
            .map_err(|e| Error::Inference(format!("{e:#}")))?;
        let shape = out.shape().to_vec();
        if shape.len() != 4 || shape[0] != 1 {
            return Err(Error::Inference(format!(
                "expected a 1xCxHxW output, got {shape:?}"
            )));
        }
        let data: Vec<f32> = out.iter().copied().collect();
        Ok((shape[1], shape[2], shape[3], data))
    }
}

/// Runs the truncated backbone on one frame.
pub fn extract_activation_maps(
    handle: &BackboneHandle,
    input: &BackboneInput,
    frame_index: usize,
) -> Result<ActivationMaps> {
    let min = handle.manifest.min_input;
    if input.width < min || input.height < min {
        return Err(Error::InputTooSmall {
            width: input.width,
            height: input.height,
            min,
        });
    }
    if input.data.len() != 3 * input.width * input.height {
        return Err(Error::Shape(format!(
            "input holds {} values, expected 3x{}x{}",
            input.data.len(),
            input.height,
            input.width
        )));
    }
    let (c, h, w, data) = handle.run(input)?;
    if c != handle.manifest.expected_channels {
        return Err(Error::ManifestMismatch(format!(
            "graph emitted {c} channels, manifest declares {}",
            handle.manifest.expected_channels
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Inference("non-finite activation".into()));
    }
    ActivationMaps::new(c, h, w, data, frame_index)
}
