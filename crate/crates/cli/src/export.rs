use std::path::PathBuf;

use anyhow::Result;
use cband_core::backbone::zoo::{write_export, Architecture};
use cband_core::backbone::Manifest;

use crate::output::{self, SCHEMA_VERSION};

#[derive(clap::Args)]
pub struct Args {
    /// resnet50 | vgg16
    #[arg(long)]
    pub arch: Architecture,
    #[arg(long, default_value_t = 2)]
    pub stage: u32,
    /// Weight seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// ONNX file to write; the manifest goes next to it as `.json`
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<()> {
    let (model, manifest_path) = write_export(args.arch, args.stage, args.seed, &args.out)?;
    let manifest = Manifest::read(&manifest_path)?;
    output::write_json(
        &serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "model": model,
            "manifest": manifest_path,
            "name": manifest.name,
            "expected_channels": manifest.expected_channels,
            "cumulative_stride": manifest.cumulative_stride,
            "sha256": manifest.sha256,
        }),
        None,
    )
}
