use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use cband_core::eval::{read_mos_csv, MosRecord};
use cband_core::nss::cache::FeatureCache;
use cband_core::nss::FeatureMode;
use cband_core::regressor::{
    mean_l1, mlp_init, save_model, train_logged, LabeledFeatureSet, LabeledRow, TrainConfig,
};

use crate::extract::CacheMeta;
use crate::output::{self, require_dir, require_file, Stopwatch, SCHEMA_VERSION};

#[derive(clap::Args, Clone)]
pub struct TrainArgs {
    /// Directory holding `<video_id>.cbnd` caches
    #[arg(long)]
    pub features_dir: PathBuf,
    /// MOS table: video_id,content_id,crf,mos
    #[arg(long)]
    pub mos: PathBuf,
    /// Training configuration JSON (lr, batch_size, epochs, seed, adam)
    #[arg(long)]
    pub cfg: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(clap::Args)]
pub struct Args {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Model file to write
    #[arg(long)]
    pub out: PathBuf,
    /// Training log CSV (epoch,loss) [default: <out> with extension .log.csv]
    #[arg(long)]
    pub log: Option<PathBuf>,
}

impl TrainArgs {
    pub fn config(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.cfg {
            Some(path) => {
                require_file(path, "training config")?;
                serde_json::from_str(&std::fs::read_to_string(path)?)
                    .with_context(|| format!("reading {}", path.display()))?
            }
            None => TrainConfig::default(),
        };
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Feature caches of every MOS video, keyed by video id.
pub struct Corpus {
    pub mos: Vec<MosRecord>,
    pub features: BTreeMap<String, Vec<Vec<f32>>>,
    pub mode: FeatureMode,
    pub backbone: String,
}

impl Corpus {
    pub fn load(dir: &Path, mos_path: &Path) -> Result<Corpus> {
        require_dir(dir, "features directory")?;
        require_file(mos_path, "MOS table")?;
        let mos = read_mos_csv(File::open(mos_path)?)?;
        let mut features = BTreeMap::new();
        let mut shape: Option<(FeatureMode, usize)> = None;
        let mut backbone: Option<String> = None;
        for r in &mos {
            let path = dir.join(format!("{}.cbnd", r.video_id));
            if !path.is_file() {
                return Err(cband_core::Error::DataIntegrity(format!(
                    "no feature cache for video {} ({})",
                    r.video_id,
                    path.display()
                ))
                .into());
            }
            let cache = FeatureCache::load(&path)?;
            let this = (cache.mode, cache.dimension());
            match shape {
                None => shape = Some(this),
                Some(s) if s != this => {
                    return Err(cband_core::Error::DataIntegrity(format!(
                        "{} has {} features of mode {}, others have {} of mode {}",
                        path.display(),
                        this.1,
                        this.0,
                        s.1,
                        s.0
                    ))
                    .into())
                }
                _ => {}
            }
            if let Some(meta) = CacheMeta::read(&path)? {
                match &backbone {
                    None => backbone = Some(meta.backbone),
                    Some(b) if *b != meta.backbone => {
                        return Err(cband_core::Error::DataIntegrity(format!(
                            "{} was extracted with {}, others with {b}",
                            path.display(),
                            meta.backbone
                        ))
                        .into())
                    }
                    _ => {}
                }
            }
            features.insert(
                r.video_id.clone(),
                cache.frames.into_iter().map(|f| f.values).collect(),
            );
        }
        let (mode, _) =
            shape.ok_or_else(|| cband_core::Error::EmptyInput("MOS table has no rows".into()))?;
        Ok(Corpus {
            mos,
            features,
            mode,
            backbone: backbone.unwrap_or_else(|| "unknown".into()),
        })
    }

    /// Every frame labelled with its video's MOS.
    pub fn labeled(&self) -> Result<LabeledFeatureSet> {
        let mut rows = Vec::new();
        for r in &self.mos {
            for (i, f) in self.features[&r.video_id].iter().enumerate() {
                rows.push(LabeledRow {
                    content_id: r.content_id.clone(),
                    frame_index: i,
                    features: f.clone(),
                    target: r.mos,
                });
            }
        }
        Ok(LabeledFeatureSet::new(rows)?)
    }
}

pub fn run(args: Args) -> Result<()> {
    let clock = Stopwatch::start();
    let cfg = args.train.config()?;
    let corpus = Corpus::load(&args.train.features_dir, &args.train.mos)?;
    let data = corpus.labeled()?;
    let dim = data.dim().unwrap_or(0);

    let init = mlp_init(dim, cfg.seed)?.with_features(corpus.mode, corpus.backbone.clone());
    let (model, log) = train_logged(&init, &data, &cfg)?;
    output::create_parent(&args.out)?;
    save_model(&model, &args.out)?;

    let log_path = args
        .log
        .unwrap_or_else(|| args.out.with_extension("log.csv"));
    output::create_parent(&log_path)?;
    let mut w = std::io::BufWriter::new(File::create(&log_path)?);
    use std::io::Write;
    writeln!(w, "epoch,loss")?;
    for (epoch, loss) in log.iter().enumerate() {
        writeln!(w, "{},{loss}", epoch + 1)?;
    }
    w.flush()?;

    output::write_json(
        &serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "model": args.out,
            "model_id": output::sha256_file(&args.out)?,
            "log": log_path,
            "videos": corpus.mos.len(),
            "frames": data.len(),
            "input_dim": dim,
            "epochs": cfg.epochs,
            "final_loss": log.last(),
            "train_l1": mean_l1(&model, &data)?,
            "elapsed_s": clock.secs(),
        }),
        None,
    )
}
