//! Writes truncated ResNet50 / VGG16 graphs as ONNX.
//!
//! The layer layout follows torchvision (ResNet50 v1.5 with the stride on
//! the 3x3 convolution of each bottleneck; VGG16 configuration "D"). Stages
//! end wherever the spatial resolution drops:
//!
//! | stage | ResNet50                       | VGG16                 |
//! |-------|--------------------------------|-----------------------|
//! | 1     | conv 7x7/2, maxpool, layer1 (256) | 2x conv 64, pool   |
//! | 2     | layer2 (512)                   | 2x conv 128, pool     |
//! | 3     | layer3 (1024)                  | 3x conv 256, pool     |
//! | 4     | layer4 (2048)                  | 3x conv 512, pool     |
//! | 5     | -                              | 3x conv 512, pool     |
//!
//! Weights are drawn from a seeded Kaiming-normal initializer with eval-mode
//! batch normalization folded into each convolution. These graphs exercise
//! the full inference path without access to pretrained checkpoints; use
//! `tools/export_backbone.py` to export ImageNet weights.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use prost::Message;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};
use tract_onnx::pb;

use super::{manifest_path_for, Manifest, SpatialRounding, DEFAULT_MIN_INPUT};
use crate::error::{Error, Result};

const BN_EPS: f32 = 1e-5;
const OPSET: i64 = 13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Architecture {
    ResNet50,
    Vgg16,
}

impl Architecture {
    pub fn stages(self) -> u32 {
        match self {
            Architecture::ResNet50 => 4,
            Architecture::Vgg16 => 5,
        }
    }

    pub fn channels(self, stage: u32) -> usize {
        match self {
            Architecture::ResNet50 => 256 << (stage - 1),
            Architecture::Vgg16 => [64, 128, 256, 512, 512][stage as usize - 1],
        }
    }

    pub fn cumulative_stride(self, stage: u32) -> usize {
        match self {
            Architecture::ResNet50 => 4 << (stage - 1),
            Architecture::Vgg16 => 2 << (stage - 1),
        }
    }

    fn rounding(self) -> SpatialRounding {
        match self {
            // padded convs and the padded 3x3 maxpool round up
            Architecture::ResNet50 => SpatialRounding::Ceil,
            // unpadded 2x2 maxpools round down
            Architecture::Vgg16 => SpatialRounding::Floor,
        }
    }

    pub fn name(self, stage: u32) -> String {
        format!("{self}-stage{stage}")
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::ResNet50 => "resnet50",
            Architecture::Vgg16 => "vgg16",
        })
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "resnet50" | "rn50" => Ok(Architecture::ResNet50),
            "vgg16" => Ok(Architecture::Vgg16),
            other => Err(Error::InvalidConfig(format!(
                "unknown architecture {other:?}"
            ))),
        }
    }
}

/// A serialized graph together with its manifest.
#[derive(Clone, Debug)]
pub struct Export {
    pub onnx: Vec<u8>,
    pub manifest: Manifest,
}

pub fn export(arch: Architecture, stage: u32, seed: u64) -> Result<Export> {
    if !(1..=arch.stages()).contains(&stage) {
        return Err(Error::InvalidConfig(format!(
            "{arch} has stages 1..={}, got {stage}",
            arch.stages()
        )));
    }
    let mut g = GraphBuilder::new(seed);
    let out = match arch {
        Architecture::ResNet50 => g.resnet50(stage),
        Architecture::Vgg16 => g.vgg16(stage),
    };
    let onnx = g.finish(&out, &arch.name(stage)).encode_to_vec();
    let manifest = Manifest {
        name: arch.name(stage),
        stage_index: stage,
        expected_channels: arch.channels(stage),
        cumulative_stride: arch.cumulative_stride(stage),
        sha256: Some(hex::encode(Sha256::digest(&onnx))),
        spatial_rounding: arch.rounding(),
        min_input: DEFAULT_MIN_INPUT,
    };
    Ok(Export { onnx, manifest })
}

/// Writes `model_path` and its `.json` manifest sidecar, returning both paths.
pub fn write_export(
    arch: Architecture,
    stage: u32,
    seed: u64,
    model_path: impl AsRef<Path>,
) -> Result<(PathBuf, PathBuf)> {
    let model_path = model_path.as_ref().to_path_buf();
    let export = export(arch, stage, seed)?;
    if let Some(dir) = model_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&model_path, &export.onnx)?;
    let manifest_path = manifest_path_for(&model_path);
    export.manifest.write(&manifest_path)?;
    Ok((model_path, manifest_path))
}

struct GraphBuilder {
    nodes: Vec<pb::NodeProto>,
    initializers: Vec<pb::TensorProto>,
    next_id: usize,
    rng: ChaCha8Rng,
}

impl GraphBuilder {
    fn new(seed: u64) -> Self {
        GraphBuilder {
            nodes: Vec::new(),
            initializers: Vec::new(),
            next_id: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn fresh(&mut self, prefix: &str) -> String {
        self.next_id += 1;
        format!("{prefix}_{}", self.next_id)
    }

    fn resnet50(&mut self, stage: u32) -> String {
        let mut x = self.conv("input", 3, 64, 7, 2, 3);
        x = self.relu(&x);
        x = self.maxpool(&x, 3, 2, 1);
        let mut in_c = 64;
        for (layer, &(planes, blocks)) in [(64, 3), (128, 4), (256, 6), (512, 3)].iter().enumerate()
        {
            if layer as u32 >= stage {
                break;
            }
            for block in 0..blocks {
                let stride = if layer > 0 && block == 0 { 2 } else { 1 };
                x = self.bottleneck(&x, in_c, planes, stride);
                in_c = planes * 4;
            }
        }
        x
    }

    fn bottleneck(&mut self, x: &str, in_c: usize, planes: usize, stride: usize) -> String {
        let out_c = planes * 4;
        let mut y = self.conv(x, in_c, planes, 1, 1, 0);
        y = self.relu(&y);
        y = self.conv(&y, planes, planes, 3, stride, 1);
        y = self.relu(&y);
        y = self.conv(&y, planes, out_c, 1, 1, 0);
        let identity = if stride != 1 || in_c != out_c {
            self.conv(x, in_c, out_c, 1, stride, 0)
        } else {
            x.to_string()
        };
        let sum = self.binary("Add", &y, &identity);
        self.relu(&sum)
    }

    fn vgg16(&mut self, stage: u32) -> String {
        let blocks: [(usize, usize); 5] = [(64, 2), (128, 2), (256, 3), (512, 3), (512, 3)];
        let mut x = "input".to_string();
        let mut in_c = 3;
        for &(out_c, convs) in blocks.iter().take(stage as usize) {
            for _ in 0..convs {
                x = self.conv(&x, in_c, out_c, 3, 1, 1);
                x = self.relu(&x);
                in_c = out_c;
            }
            x = self.maxpool(&x, 2, 2, 0);
        }
        x
    }

    fn conv(
        &mut self,
        x: &str,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> String {
        // Kaiming normal, fan_out mode, as torchvision initializes both families.
        let std = (2.0 / (out_c * k * k) as f32).sqrt();
        let normal = Normal::new(0.0f32, std).expect("positive std");
        let bn_scale = 1.0 / (1.0 + BN_EPS).sqrt();
        let weights: Vec<f32> = (0..out_c * in_c * k * k)
            .map(|_| normal.sample(&mut self.rng) * bn_scale)
            .collect();
        let w = self.fresh("w");
        let b = self.fresh("b");
        self.initializer(&w, &[out_c, in_c, k, k], &weights);
        self.initializer(&b, &[out_c], &vec![0.0; out_c]);
        let y = self.fresh("conv");
        let (k, s, p) = (k as i64, stride as i64, pad as i64);
        self.node(
            "Conv",
            &[x, &w, &b],
            &y,
            vec![
                ints("kernel_shape", &[k, k]),
                ints("strides", &[s, s]),
                ints("pads", &[p, p, p, p]),
            ],
        );
        y
    }

    fn relu(&mut self, x: &str) -> String {
        let y = self.fresh("relu");
        self.node("Relu", &[x], &y, vec![]);
        y
    }

    fn maxpool(&mut self, x: &str, k: i64, s: i64, p: i64) -> String {
        let y = self.fresh("pool");
        self.node(
            "MaxPool",
            &[x],
            &y,
            vec![
                ints("kernel_shape", &[k, k]),
                ints("strides", &[s, s]),
                ints("pads", &[p, p, p, p]),
            ],
        );
        y
    }

    fn binary(&mut self, op: &str, a: &str, b: &str) -> String {
        let y = self.fresh(&op.to_ascii_lowercase());
        self.node(op, &[a, b], &y, vec![]);
        y
    }

    fn node(
        &mut self,
        op: &str,
        inputs: &[&str],
        output: &str,
        attribute: Vec<pb::AttributeProto>,
    ) {
        self.nodes.push(pb::NodeProto {
            name: output.to_string(),
            op_type: op.to_string(),
            input: inputs.iter().map(|s| s.to_string()).collect(),
            output: vec![output.to_string()],
            attribute,
            ..Default::default()
        });
    }

    fn initializer(&mut self, name: &str, dims: &[usize], values: &[f32]) {
        self.initializers.push(pb::TensorProto {
            name: name.to_string(),
            dims: dims.iter().map(|&d| d as i64).collect(),
            data_type: pb::tensor_proto::DataType::Float as i32,
            raw_data: values.iter().flat_map(|v| v.to_le_bytes()).collect(),
            ..Default::default()
        });
    }

    fn finish(mut self, output: &str, name: &str) -> pb::ModelProto {
        // Rename the last value so the graph output has a stable name.
        for node in &mut self.nodes {
            for o in node.output.iter_mut().chain(node.input.iter_mut()) {
                if o == output {
                    *o = "activations".to_string();
                }
            }
        }
        let graph = pb::GraphProto {
            name: name.to_string(),
            node: self.nodes,
            initializer: self.initializers,
            input: vec![value_info(
                "input",
                &[
                    Dim::Fixed(1),
                    Dim::Fixed(3),
                    Dim::Sym("height"),
                    Dim::Sym("width"),
                ],
            )],
            output: vec![value_info(
                "activations",
                &[
                    Dim::Fixed(1),
                    Dim::Sym("channels"),
                    Dim::Sym("out_height"),
                    Dim::Sym("out_width"),
                ],
            )],
            ..Default::default()
        };
        pb::ModelProto {
            ir_version: 7,
            opset_import: vec![pb::OperatorSetIdProto {
                domain: String::new(),
                version: OPSET,
            }],
            producer_name: "cband".to_string(),
            producer_version: env!("CARGO_PKG_VERSION").to_string(),
            graph: Some(graph),
            ..Default::default()
        }
    }
}

enum Dim {
    Fixed(i64),
    Sym(&'static str),
}

fn value_info(name: &str, dims: &[Dim]) -> pb::ValueInfoProto {
    use pb::tensor_shape_proto::{dimension, Dimension};
    let dim = dims
        .iter()
        .map(|d| Dimension {
            value: Some(match d {
                Dim::Fixed(v) => dimension::Value::DimValue(*v),
                Dim::Sym(s) => dimension::Value::DimParam(s.to_string()),
            }),
            ..Default::default()
        })
        .collect();
    pb::ValueInfoProto {
        name: name.to_string(),
        r#type: Some(pb::TypeProto {
            value: Some(pb::type_proto::Value::TensorType(pb::type_proto::Tensor {
                elem_type: pb::tensor_proto::DataType::Float as i32,
                shape: Some(pb::TensorShapeProto { dim }),
            })),
            ..Default::default()
        }),
        ..Default::default()
    }
}

fn ints(name: &str, values: &[i64]) -> pb::AttributeProto {
    pb::AttributeProto {
        name: name.to_string(),
        r#type: pb::attribute_proto::AttributeType::Ints as i32,
        ints: values.to_vec(),
        ..Default::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_table() {
        let rn: Vec<_> = (1..=4)
            .map(|s| Architecture::ResNet50.channels(s))
            .collect();
        assert_eq!(rn, vec![256, 512, 1024, 2048]);
        let vgg: Vec<_> = (1..=5).map(|s| Architecture::Vgg16.channels(s)).collect();
        assert_eq!(vgg, vec![64, 128, 256, 512, 512]);
        assert_eq!(Architecture::ResNet50.cumulative_stride(2), 8);
        assert_eq!(Architecture::Vgg16.cumulative_stride(2), 4);
    }

    #[test]
    fn export_is_deterministic_and_hashed() {
        let a = export(Architecture::Vgg16, 1, 3).unwrap();
        let b = export(Architecture::Vgg16, 1, 3).unwrap();
        assert_eq!(a.onnx, b.onnx);
        assert_eq!(
            a.manifest.sha256.as_deref(),
            Some(hex::encode(Sha256::digest(&a.onnx)).as_str())
        );
        let c = export(Architecture::Vgg16, 1, 4).unwrap();
        assert_ne!(a.onnx, c.onnx);
    }

    #[test]
    fn rejects_missing_stages() {
        assert!(export(Architecture::ResNet50, 5, 0).is_err());
        assert!(export(Architecture::Vgg16, 0, 0).is_err());
    }
}
