use std::path::{Path, PathBuf};

use anyhow::Result;
use cband_core::nss::cache::FeatureCache;
use cband_core::regressor::{load_model, video_score};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::extract::{self, CacheMeta, PipelineArgs, StageTimings};
use crate::output::{self, require_file, stem, usage, Stopwatch, SCHEMA_VERSION};

/// Directory for intermediate feature caches of `score --input`.
pub const CACHE_DIR_ENV: &str = "CBAND_CACHE_DIR";

#[derive(clap::Args)]
pub struct Args {
    /// Video to extract and score (Y4M file or image directory)
    #[arg(
        long,
        conflicts_with = "features",
        required_unless_present = "features",
        requires = "backbone"
    )]
    pub input: Option<PathBuf>,
    /// Feature cache written by `extract`
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Trained model file
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub backbone: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "per-second")]
    pub sampling: cband_core::ingest::SamplingPolicy,
    #[arg(long, default_value = "ggd")]
    pub feature_mode: cband_core::nss::FeatureMode,
    #[arg(long, default_value_t = 1.0)]
    pub mscn_sigma: f64,
    #[arg(long, default_value = "*.png")]
    pub pattern: String,
    #[arg(long)]
    pub fps: Option<String>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Score JSON [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct ScoreReport {
    pub schema_version: u32,
    pub video_id: String,
    pub frame_scores: Vec<f64>,
    pub video_score: f64,
    pub model_id: String,
    pub backbone: Option<String>,
    pub sampling: Option<String>,
    pub frame_indices: Option<Vec<usize>>,
}

/// Reuses `<CBAND_CACHE_DIR>/<key>.cbnd` when present, keyed on the input
/// bytes, the backbone graph and every extraction setting.
fn cached_extraction(
    input: &Path,
    pipeline: &PipelineArgs,
    timings: &mut StageTimings,
) -> Result<(FeatureCache, CacheMeta)> {
    let handle = extract::load_handle(pipeline)?;
    let cache_dir = std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from);
    let cache_path = match &cache_dir {
        Some(dir) => {
            let mut h = Sha256::new();
            for part in input_digests(input, pipeline)? {
                h.update(part.as_bytes());
                h.update([0]);
            }
            Some(dir.join(format!("{}.cbnd", hex::encode(h.finalize()))))
        }
        None => None,
    };
    if let Some(path) = cache_path.as_ref().filter(|p| p.is_file()) {
        if let (Ok(cache), Ok(Some(mut meta))) = (FeatureCache::load(path), CacheMeta::read(path)) {
            meta.video_id = stem(input);
            return Ok((cache, meta));
        }
    }
    let extraction = extract::extract_features(input, pipeline, &handle)?;
    *timings = extraction.timings;
    if let Some(path) = &cache_path {
        extract::save(&extraction, path)?;
    }
    Ok((extraction.cache, extraction.meta))
}

fn input_digests(input: &Path, p: &PipelineArgs) -> Result<Vec<String>> {
    let mut parts = Vec::new();
    if input.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(input)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        files.sort();
        for f in files.iter().filter(|f| f.is_file()) {
            parts.push(format!(
                "{}={}",
                f.file_name().unwrap_or_default().to_string_lossy(),
                output::sha256_file(f)?
            ));
        }
    } else {
        parts.push(output::sha256_file(input)?);
    }
    parts.push(output::sha256_file(&p.backbone)?);
    parts.push(format!(
        "{}|{}|{}|{}|{:?}|{:?}",
        p.sampling, p.feature_mode, p.mscn_sigma, p.pattern, p.fps, p.stage
    ));
    Ok(parts)
}

pub fn run(args: Args) -> Result<()> {
    require_file(&args.model, "model")?;
    let clock = Stopwatch::start();
    let mut timings = StageTimings::default();

    let (cache, meta, video_id) = match (&args.input, &args.features) {
        (Some(input), _) => {
            let pipeline = PipelineArgs {
                backbone: args
                    .backbone
                    .clone()
                    .expect("clap requires --backbone with --input"),
                manifest: args.manifest.clone(),
                stage: None,
                sampling: args.sampling,
                feature_mode: args.feature_mode,
                mscn_sigma: args.mscn_sigma,
                pattern: args.pattern.clone(),
                fps: args.fps.clone(),
                jobs: args.jobs,
            };
            let (cache, meta) = cached_extraction(input, &pipeline, &mut timings)?;
            (cache, Some(meta), stem(input))
        }
        (None, Some(features)) => {
            require_file(features, "feature cache")?;
            let decode = Stopwatch::start();
            let cache = FeatureCache::load(features)?;
            timings.decode = decode.secs();
            let meta = CacheMeta::read(features)?;
            let id = meta
                .as_ref()
                .map(|m| m.video_id.clone())
                .unwrap_or_else(|| stem(features));
            (cache, meta, id)
        }
        (None, None) => {
            return Err(usage(
                "UsageError",
                "one of --input or --features is required",
            ))
        }
    };

    let model = load_model(&args.model)?;
    let backbone = meta.as_ref().map(|m| m.backbone.clone());
    model.ensure_compatible(
        cache.dimension(),
        cache.mode,
        backbone.as_deref().unwrap_or(model.backbone.as_str()),
    )?;

    let regression = Stopwatch::start();
    let frame_scores = cache
        .frames
        .iter()
        .map(|f| model.predict(&f.values).map(f64::from))
        .collect::<cband_core::Result<Vec<_>>>()?;
    let video = video_score(&frame_scores)?;
    timings.regression = regression.secs();

    let report = ScoreReport {
        schema_version: SCHEMA_VERSION,
        video_id,
        frame_scores,
        video_score: video,
        model_id: output::sha256_file(&args.model)?,
        backbone,
        sampling: meta.as_ref().map(|m| m.sampling.clone()),
        frame_indices: meta.map(|m| m.frame_indices),
    };
    output::write_json(&report, args.out.as_deref())?;
    if args.out.is_some() {
        output::write_json(
            &serde_json::json!({
                "schema_version": SCHEMA_VERSION,
                "out": args.out,
                "video_score": report.video_score,
                "timings": timings,
                "total_s": clock.secs(),
            }),
            None,
        )?;
    }
    Ok(())
}
