use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::correlation::{krocc, srocc};
use super::logistic::{fit_logistic4, plcc_rmse, LogisticForm, LogisticParams};
use super::split::{derive_seed, SplitConfig, SplitPlan};
use crate::error::{Error, Result};
use crate::regressor::{train, video_score, LabeledFeatureSet, LabeledRow, MlpModel, TrainConfig};

/// One row of the MOS file `video_id,content_id,crf,mos`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MosRecord {
    pub video_id: String,
    pub content_id: String,
    pub crf: String,
    pub mos: f64,
}

pub fn read_mos_csv<R: Read>(reader: R) -> Result<Vec<MosRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for row in rdr.deserialize() {
        let rec: MosRecord = row?;
        if !rec.mos.is_finite() {
            return Err(Error::DataIntegrity(format!(
                "non-finite MOS for video {}",
                rec.video_id
            )));
        }
        if !seen.insert(rec.video_id.clone()) {
            return Err(Error::DataIntegrity(format!(
                "duplicate MOS row for video {}",
                rec.video_id
            )));
        }
        records.push(rec);
    }
    Ok(records)
}

pub fn write_mos_csv<W: Write>(records: &[MosRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub train: TrainConfig,
    pub logistic: LogisticForm,
}

/// Metrics of one repeat. Undefined metrics (constant predictions, fewer
/// than eight test videos for the logistic fit) are NaN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split_id: usize,
    pub n: usize,
    pub srocc: f64,
    pub krocc: f64,
    pub plcc: f64,
    pub rmse: f64,
    pub logistic: Option<LogisticParams>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub srocc: f64,
    pub krocc: f64,
    pub plcc: f64,
    pub rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub split: SplitConfig,
    pub train: TrainConfig,
    pub logistic_form: LogisticForm,
    pub repeats: Vec<EvalReport>,
    pub mean: MetricSummary,
    pub std: MetricSummary,
}

impl BenchmarkReport {
    /// Per-repeat rows followed by `mean` and `std` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["split_id", "n", "srocc", "krocc", "plcc", "rmse"])?;
        for r in &self.repeats {
            w.write_record([
                r.split_id.to_string(),
                r.n.to_string(),
                r.srocc.to_string(),
                r.krocc.to_string(),
                r.plcc.to_string(),
                r.rmse.to_string(),
            ])?;
        }
        for (label, s) in [("mean", &self.mean), ("std", &self.std)] {
            w.write_record([
                label.to_string(),
                String::new(),
                s.srocc.to_string(),
                s.krocc.to_string(),
                s.plcc.to_string(),
                s.rmse.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trains on the frames of each split's training contents (video MOS
/// broadcast to every frame), scores the test videos by average pooling and
/// evaluates them. Repeats run in parallel; each derives its own seed.
pub fn run_benchmark(
    features_by_video: &BTreeMap<String, Vec<Vec<f32>>>,
    mos: &[MosRecord],
    plan: &SplitPlan,
    cfg: &BenchmarkConfig,
) -> Result<BenchmarkReport> {
    let by_video: HashMap<&str, &MosRecord> =
        mos.iter().map(|r| (r.video_id.as_str(), r)).collect();
    for video in features_by_video.keys() {
        if !by_video.contains_key(video.as_str()) {
            return Err(Error::DataIntegrity(format!("no MOS for video {video}")));
        }
    }
    for r in mos {
        match features_by_video.get(&r.video_id) {
            None => {
                return Err(Error::DataIntegrity(format!(
                    "no features for video {}",
                    r.video_id
                )))
            }
            Some(frames) if frames.is_empty() => {
                return Err(Error::DataIntegrity(format!(
                    "video {} has no frames",
                    r.video_id
                )))
            }
            _ => {}
        }
    }
    let known: BTreeSet<&str> = mos.iter().map(|r| r.content_id.as_str()).collect();
    for split in &plan.splits {
        if let Some(c) = split
            .train
            .iter()
            .chain(&split.test)
            .find(|c| !known.contains(c.as_str()))
        {
            return Err(Error::DataIntegrity(format!(
                "split references unknown content {c}"
            )));
        }
    }

    let mut rows = Vec::new();
    for r in mos {
        for (i, f) in features_by_video[&r.video_id].iter().enumerate() {
            rows.push(LabeledRow {
                content_id: r.content_id.clone(),
                frame_index: i,
                features: f.clone(),
                target: r.mos,
            });
        }
    }
    let all = LabeledFeatureSet::new(rows)?;
    let dim = all.dim().unwrap_or(0);

    let repeats = plan
        .splits
        .par_iter()
        .enumerate()
        .map(|(split_id, split)| {
            let train_set: BTreeSet<&str> = split.train.iter().map(String::as_str).collect();
            let test_set: BTreeSet<&str> = split.test.iter().map(String::as_str).collect();
            let data = all.subset(|c| train_set.contains(c));
            let seed = derive_seed(cfg.train.seed, split_id as u64);
            let model = MlpModel::init(dim, seed)?;
            let model = train(
                &model,
                &data,
                &TrainConfig {
                    seed,
                    ..cfg.train.clone()
                },
            )?;

            let mut pred = Vec::new();
            let mut truth = Vec::new();
            for r in mos
                .iter()
                .filter(|r| test_set.contains(r.content_id.as_str()))
            {
                let scores = features_by_video[&r.video_id]
                    .iter()
                    .map(|f| model.predict(f).map(|s| s as f64))
                    .collect::<Result<Vec<_>>>()?;
                pred.push(video_score(&scores)?);
                truth.push(r.mos);
            }
            Ok(evaluate(split_id, &pred, &truth, cfg.logistic))
        })
        .collect::<Result<Vec<_>>>()?;

    let (mean, std) = summarize(&repeats);
    Ok(BenchmarkReport {
        split: plan.config,
        train: cfg.train.clone(),
        logistic_form: cfg.logistic,
        repeats,
        mean,
        std,
    })
}

/// All four metrics for one set of video predictions.
pub fn evaluate(split_id: usize, pred: &[f64], mos: &[f64], form: LogisticForm) -> EvalReport {
    let logistic = fit_logistic4(pred, mos, form).ok();
    let (plcc, rmse) = logistic
        .as_ref()
        .and_then(|p| plcc_rmse(pred, mos, p).ok())
        .unwrap_or((f64::NAN, f64::NAN));
    EvalReport {
        split_id,
        n: pred.len(),
        srocc: srocc(pred, mos).unwrap_or(f64::NAN),
        krocc: krocc(pred, mos).unwrap_or(f64::NAN),
        plcc,
        rmse,
        logistic,
    }
}

fn summarize(reports: &[EvalReport]) -> (MetricSummary, MetricSummary) {
    let stat = |get: fn(&EvalReport) -> f64| {
        let v: Vec<f64> = reports.iter().map(get).filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return (f64::NAN, f64::NAN);
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    let (s, ss) = stat(|r| r.srocc);
    let (k, ks) = stat(|r| r.krocc);
    let (p, ps) = stat(|r| r.plcc);
    let (e, es) = stat(|r| r.rmse);
    (
        MetricSummary {
            srocc: s,
            krocc: k,
            plcc: p,
            rmse: e,
        },
        MetricSummary {
            srocc: ss,
            krocc: ks,
            plcc: ps,
            rmse: es,
        },
    )
}

#[cfg(test)]
mod tests {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::eval::make_splits;

    const DIM: usize = 16;

    /// 40 contents x 2 videos x 3 frames; MOS is linear in the mean features.
    fn fixture(seed: u64) -> (BTreeMap<String, Vec<Vec<f32>>>, Vec<MosRecord>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..DIM).map(|_| rng.random_range(0.5..1.5)).collect();
        let mut features = BTreeMap::new();
        let mut mos = Vec::new();
        for c in 0..40 {
            for v in 0..2 {
                let level = rng.random_range(0.0..1.0f64);
                let frames: Vec<Vec<f32>> = (0..3)
                    .map(|_| {
                        (0..DIM)
                            .map(|_| (level + rng.random_range(-0.05..0.05)) as f32)
                            .collect()
                    })
                    .collect();
                let mean: Vec<f64> = (0..DIM)
                    .map(|j| frames.iter().map(|f| f[j] as f64).sum::<f64>() / 3.0)
                    .collect();
                let score = 10.0 + 5.0 * mean.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
                let id = format!("c{c:02}_v{v}");
                features.insert(id.clone(), frames);
                mos.push(MosRecord {
                    video_id: id,
                    content_id: format!("c{c:02}"),
                    crf: (20 + 10 * v).to_string(),
                    mos: score,
                });
            }
        }
        (features, mos)
    }

    fn fast_train(seed: u64) -> TrainConfig {
        TrainConfig {
            lr: 1e-2,
            epochs: 60,
            ..TrainConfig::with_seed(seed)
        }
    }

    fn contents(mos: &[MosRecord]) -> Vec<String> {
        mos.iter().map(|r| r.content_id.clone()).collect()
    }

    #[test]
    fn learnable_fixture_ranks_well() {
        let (features, mos) = fixture(1);
        let plan = make_splits(
            &contents(&mos),
            &SplitConfig {
                repeats: 5,
                seed: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let cfg = BenchmarkConfig {
            train: fast_train(3),
            ..Default::default()
        };
        let report = run_benchmark(&features, &mos, &plan, &cfg).unwrap();
        assert_eq!(report.repeats.len(), 5);
        assert!(report.mean.srocc > 0.95, "{:?}", report.mean);
        assert!(report.repeats.iter().all(|r| r.n == 16));
    }

    #[test]
    fn shuffled_mos_is_a_null() {
        let (features, mut mos) = fixture(4);
        let mut scores: Vec<f64> = mos.iter().map(|r| r.mos).collect();
        scores.shuffle(&mut ChaCha8Rng::seed_from_u64(5));
        for (r, s) in mos.iter_mut().zip(scores) {
            r.mos = s;
        }
        let plan = make_splits(
            &contents(&mos),
            &SplitConfig {
                repeats: 10,
                seed: 6,
                ..Default::default()
            },
        )
        .unwrap();
        let cfg = BenchmarkConfig {
            train: fast_train(7),
            ..Default::default()
        };
        let report = run_benchmark(&features, &mos, &plan, &cfg).unwrap();
        assert!(report.mean.srocc.abs() < 0.35, "{:?}", report.mean);
    }

    #[test]
    fn single_repeat_plan() {
        let (features, mos) = fixture(8);
        let plan = make_splits(
            &contents(&mos),
            &SplitConfig {
                repeats: 1,
                seed: 0,
                ..Default::default()
            },
        )
        .unwrap();
        let cfg = BenchmarkConfig {
            train: TrainConfig {
                epochs: 2,
                ..fast_train(0)
            },
            ..Default::default()
        };
        let report = run_benchmark(&features, &mos, &plan, &cfg).unwrap();
        assert_eq!(report.repeats.len(), 1);
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 4);
    }

    #[test]
    fn missing_mos_names_the_video() {
        let (features, mut mos) = fixture(9);
        let plan = make_splits(
            &contents(&mos),
            &SplitConfig {
                repeats: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let dropped = mos.remove(3).video_id;
        let err = run_benchmark(&features, &mos, &plan, &BenchmarkConfig::default()).unwrap_err();
        match err {
            Error::DataIntegrity(msg) => assert!(msg.contains(&dropped), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mos_csv_round_trip() {
        let (_, mos) = fixture(10);
        let mut bytes = Vec::new();
        write_mos_csv(&mos, &mut bytes).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("video_id,content_id,crf,mos\n"));
        assert_eq!(read_mos_csv(&bytes[..]).unwrap(), mos);

        let dup = "video_id,content_id,crf,mos\na,c,1,50\na,c,2,40\n";
        assert!(matches!(
            read_mos_csv(dup.as_bytes()),
            Err(Error::DataIntegrity(_))
        ));
    }
}
