use std::path::PathBuf;

use anyhow::Result;
use cband_core::sureal::{estimate, plain_mos, Objective, RatingsTable, SurealConfig};

use crate::output::{self, require_file, SCHEMA_VERSION};

#[derive(clap::Args)]
pub struct Args {
    /// Ratings CSV: subject_id,stimulus_id,content_id,score
    #[arg(long)]
    pub ratings: PathBuf,
    /// Estimate JSON [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fix content ambiguity at zero
    #[arg(long)]
    pub no_ambiguity: bool,
    /// reml | ml
    #[arg(long, default_value = "reml")]
    pub objective: Objective,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub v_floor: f64,
}

pub fn run(args: Args) -> Result<()> {
    require_file(&args.ratings, "ratings")?;
    let table = RatingsTable::read_csv(std::fs::File::open(&args.ratings)?)?;
    let cfg = SurealConfig {
        max_iter: args.max_iter,
        tol: args.tol,
        v_floor: args.v_floor,
        with_ambiguity: !args.no_ambiguity,
        objective: args.objective,
    };
    let est = estimate(&table, &cfg)?;
    let mut body = serde_json::to_value(&est)?;
    body["schema_version"] = SCHEMA_VERSION.into();
    body["config"] = serde_json::to_value(&cfg)?;
    body["plain_mos"] = serde_json::to_value(plain_mos(&table))?;
    output::write_json(&body, args.out.as_deref())
}
