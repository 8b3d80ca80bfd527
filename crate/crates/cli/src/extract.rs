use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cband_core::backbone::{
    extract_activation_maps, load_backbone, manifest_path_for, BackboneHandle,
};
use cband_core::ingest::{
    open_image_sequence, open_y4m, sample_frames, to_backbone_input, FrameRate, FrameStream,
    SamplingPolicy,
};
use cband_core::nss::cache::FeatureCache;
use cband_core::nss::{build_window_with_sigma, frame_features, FeatureMode, NssConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::output::{self, require_file, sidecar_path, stem, usage, Stopwatch, SCHEMA_VERSION};

#[derive(clap::Args)]
pub struct Args {
    /// Y4M file or directory of images
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Feature cache to write; metadata goes to `<out>.json`
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(clap::Args, Clone)]
pub struct PipelineArgs {
    /// Backbone ONNX graph
    #[arg(long)]
    pub backbone: PathBuf,
    /// Backbone manifest [default: <backbone stem>.json]
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Expected stage index; must match the manifest
    #[arg(long)]
    pub stage: Option<u32>,
    /// every-frame | every-n:N | per-second
    #[arg(long, default_value = "per-second")]
    pub sampling: SamplingPolicy,
    /// ggd | mean-std | alpha | sigma
    #[arg(long, default_value = "ggd")]
    pub feature_mode: FeatureMode,
    /// Standard deviation of the 7x7 MSCN window
    #[arg(long, default_value_t = 1.0)]
    pub mscn_sigma: f64,
    /// Glob for image-sequence inputs
    #[arg(long, default_value = "*.png")]
    pub pattern: String,
    /// Frame rate for image sequences, `N` or `N:D`
    #[arg(long)]
    pub fps: Option<String>,
    /// Worker threads for frame-parallel extraction [default: all cores]
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// Metadata stored next to a feature cache.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CacheMeta {
    pub schema_version: u32,
    pub video_id: String,
    pub backbone: String,
    pub stage: u32,
    pub sampling: String,
    pub feature_mode: FeatureMode,
    pub mscn_sigma: f64,
    pub channels: usize,
    pub frame_indices: Vec<usize>,
}

impl CacheMeta {
    pub fn read(cache: &Path) -> Result<Option<CacheMeta>> {
        let path = sidecar_path(cache);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path)?;
        Ok(Some(
            serde_json::from_str(&text).with_context(|| format!("reading {}", path.display()))?,
        ))
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct StageTimings {
    pub decode: f64,
    pub inference: f64,
    pub nss: f64,
    pub regression: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FrameTiming {
    pub frame_index: usize,
    pub inference_s: f64,
    pub nss_s: f64,
}

pub struct Extraction {
    pub cache: FeatureCache,
    pub meta: CacheMeta,
    pub timings: StageTimings,
    pub per_frame: Vec<FrameTiming>,
}

fn parse_rate(s: &str) -> Result<FrameRate> {
    let bad = || {
        usage(
            "InvalidConfig",
            format!("--fps must be N or N:D, got {s:?}"),
        )
    };
    let (num, den) = match s.split_once(':') {
        Some((n, d)) => (n.parse().map_err(|_| bad())?, d.parse().map_err(|_| bad())?),
        None => (s.parse().map_err(|_| bad())?, 1),
    };
    if num == 0 || den == 0 {
        return Err(bad());
    }
    Ok(FrameRate::new(num, den))
}

fn open_input(input: &Path, args: &PipelineArgs) -> Result<FrameStream> {
    let mut stream = if input.is_dir() {
        open_image_sequence(input, &args.pattern)?
    } else {
        require_file(input, "input")?;
        match input.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("y4m") => open_y4m(input)?,
            _ => {
                return Err(usage(
                    "UnsupportedInput",
                    format!(
                        "{}: expected a .y4m file or an image directory",
                        input.display()
                    ),
                ))
            }
        }
    };
    if let Some(fps) = &args.fps {
        stream = stream.with_frame_rate(parse_rate(fps)?);
    }
    Ok(stream)
}

pub fn load_handle(args: &PipelineArgs) -> Result<BackboneHandle> {
    require_file(&args.backbone, "backbone")?;
    let manifest = args
        .manifest
        .clone()
        .unwrap_or_else(|| manifest_path_for(&args.backbone));
    if !manifest.is_file() {
        return Err(cband_core::Error::ManifestMissing(manifest).into());
    }
    let handle = load_backbone(&args.backbone, &manifest)?;
    if let Some(stage) = args.stage {
        if stage != handle.stage_index() {
            return Err(cband_core::Error::ManifestMismatch(format!(
                "--stage {stage} but {} is stage {}",
                handle.name(),
                handle.stage_index()
            ))
            .into());
        }
    }
    Ok(handle)
}

/// Decodes, samples and featurizes `input`. Frames are processed in
/// parallel and merged in frame order.
pub fn extract_features(
    input: &Path,
    args: &PipelineArgs,
    handle: &BackboneHandle,
) -> Result<Extraction> {
    let nss = NssConfig {
        mode: args.feature_mode,
        window: build_window_with_sigma(3, 3, args.mscn_sigma)?,
        ..Default::default()
    };
    let clock = Stopwatch::start();
    let frames = sample_frames(open_input(input, args)?, args.sampling)?;
    let decode = clock.secs();
    if frames.is_empty() {
        return Err(cband_core::Error::NoFrames(input.display().to_string()).into());
    }

    let work = || {
        frames
            .par_iter()
            .map(|frame| {
                let clock = Stopwatch::start();
                let maps =
                    extract_activation_maps(handle, &to_backbone_input(frame)?, frame.index)?;
                let inference_s = clock.secs();
                let clock = Stopwatch::start();
                let features = frame_features(&maps, &nss)?;
                let timing = FrameTiming {
                    frame_index: frame.index,
                    inference_s,
                    nss_s: clock.secs(),
                };
                Ok((features, timing))
            })
            .collect::<cband_core::Result<Vec<_>>>()
    };
    let results = match args.jobs {
        Some(0) => return Err(usage("InvalidConfig", "--jobs must be >= 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()?
            .install(work)?,
        None => work()?,
    };

    let (features, per_frame): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let timings = StageTimings {
        decode,
        inference: per_frame.iter().map(|t: &FrameTiming| t.inference_s).sum(),
        nss: per_frame.iter().map(|t| t.nss_s).sum(),
        regression: 0.0,
    };
    let meta = CacheMeta {
        schema_version: SCHEMA_VERSION,
        video_id: stem(input),
        backbone: handle.name().to_string(),
        stage: handle.stage_index(),
        sampling: args.sampling.to_string(),
        feature_mode: args.feature_mode,
        mscn_sigma: args.mscn_sigma,
        channels: handle.expected_channels(),
        frame_indices: frames.iter().map(|f| f.index).collect(),
    };
    let cache = FeatureCache::new(handle.expected_channels(), args.feature_mode, features)?;
    Ok(Extraction {
        cache,
        meta,
        timings,
        per_frame,
    })
}

pub fn save(extraction: &Extraction, out: &Path) -> Result<()> {
    output::create_parent(out)?;
    extraction.cache.save(out)?;
    output::write_json(&extraction.meta, Some(&sidecar_path(out)))
}

pub fn run(args: Args) -> Result<()> {
    let handle = load_handle(&args.pipeline)?;
    let extraction = extract_features(&args.input, &args.pipeline, &handle)?;
    save(&extraction, &args.out)?;
    output::write_json(
        &serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "cache": args.out,
            "video_id": extraction.meta.video_id,
            "frames": extraction.cache.frames.len(),
            "dimension": extraction.cache.dimension(),
            "timings": extraction.timings,
            "per_frame": extraction.per_frame,
        }),
        None,
    )
}
