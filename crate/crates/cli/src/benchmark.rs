use std::path::PathBuf;

use anyhow::{Context, Result};
use cband_core::eval::{make_splits, run_benchmark, BenchmarkConfig, LogisticForm, SplitConfig};

use crate::output::{self, require_file, Stopwatch, SCHEMA_VERSION};
use crate::train::{Corpus, TrainArgs};

#[derive(clap::Args)]
pub struct Args {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Split configuration JSON (repeats, train_fraction, seed)
    #[arg(long)]
    pub splits: Option<PathBuf>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// standard | as-printed
    #[arg(long, default_value = "standard")]
    pub logistic_form: LogisticForm,
    /// Report JSON
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-repeat CSV
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<()> {
    let clock = Stopwatch::start();
    let mut split = match &args.splits {
        Some(path) => {
            require_file(path, "split config")?;
            serde_json::from_str(&std::fs::read_to_string(path)?)
                .with_context(|| format!("reading {}", path.display()))?
        }
        None => SplitConfig::default(),
    };
    if let Some(r) = args.repeats {
        split.repeats = r;
    }
    if let Some(s) = args.split_seed {
        split.seed = s;
    }
    let train = args.train.config()?;
    let corpus = Corpus::load(&args.train.features_dir, &args.train.mos)?;
    let contents: Vec<String> = corpus.mos.iter().map(|r| r.content_id.clone()).collect();
    let plan = make_splits(&contents, &split)?;
    let cfg = BenchmarkConfig {
        train,
        logistic: args.logistic_form,
    };
    let report = run_benchmark(&corpus.features, &corpus.mos, &plan, &cfg)?;

    let mut body = serde_json::to_value(&report)?;
    body["schema_version"] = SCHEMA_VERSION.into();
    body["splits"] = serde_json::to_value(&plan.splits)?;
    output::write_json(&body, Some(&args.out))?;
    if let Some(csv) = &args.csv {
        output::create_parent(csv)?;
        report.write_csv(std::fs::File::create(csv)?)?;
    }
    output::write_json(
        &serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "out": args.out,
            "repeats": report.repeats.len(),
            "mean": report.mean,
            "std": report.std,
            "elapsed_s": clock.secs(),
        }),
        None,
    )
}
