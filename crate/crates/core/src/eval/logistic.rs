use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::correlation::{pearson, rmse};
use crate::error::{Error, Result};

pub const MIN_FIT_POINTS: usize = 8;
pub const MAX_ITERATIONS: usize = 2000;
pub const DIAMETER_TOLERANCE: f64 = 1e-8;

/// Where `beta3` and `|beta4|` enter the exponent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogisticForm {
    /// `beta2 + (beta1 - beta2) / (1 + exp(-(x - beta3) / |beta4|))`
    #[default]
    Standard,
    /// `beta2 + (beta1 - beta2) / (1 + exp(-x + beta3 / |beta4|))`
    AsPrinted,
}

impl fmt::Display for LogisticForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LogisticForm::Standard => "standard",
            LogisticForm::AsPrinted => "as-printed",
        })
    }
}

impl FromStr for LogisticForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(LogisticForm::Standard),
            "as-printed" => Ok(LogisticForm::AsPrinted),
            other => Err(Error::InvalidConfig(format!(
                "logistic form must be standard or as-printed, got {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub beta4: f64,
    pub form: LogisticForm,
    pub converged: bool,
    pub iterations: usize,
}

impl LogisticParams {
    pub fn new(beta: [f64; 4], form: LogisticForm) -> Self {
        LogisticParams {
            beta1: beta[0],
            beta2: beta[1],
            beta3: beta[2],
            beta4: beta[3],
            form,
            converged: true,
            iterations: 0,
        }
    }

    pub fn betas(&self) -> [f64; 4] {
        [self.beta1, self.beta2, self.beta3, self.beta4]
    }

    pub fn apply(&self, x: f64) -> f64 {
        logistic(self.form, &self.betas(), x)
    }
}

pub fn logistic(form: LogisticForm, b: &[f64; 4], x: f64) -> f64 {
    let s = b[3].abs();
    let exponent = match form {
        LogisticForm::Standard => -(x - b[2]) / s,
        LogisticForm::AsPrinted => -x + b[2] / s,
    };
    b[1] + (b[0] - b[1]) / (1.0 + exponent.exp())
}

/// Least-squares fit of the 4-parameter logistic by Nelder-Mead.
///
/// The search restarts from the incumbent while the budget lasts and the
/// previous run improved the residual. The result is never worse than the
/// constant predictor or a near-linear logistic. `converged` reports whether
/// the last run ended on the simplex-diameter test.
pub fn fit_logistic4(pred: &[f64], mos: &[f64], form: LogisticForm) -> Result<LogisticParams> {
    if pred.len() != mos.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} scores",
            pred.len(),
            mos.len()
        )));
    }
    if pred.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientSamples {
            needed: MIN_FIT_POINTS,
            got: pred.len(),
        });
    }
    if pred.iter().chain(mos).any(|v| !v.is_finite()) {
        return Err(Error::NotDefined("non-finite input to logistic fit".into()));
    }
    let n = pred.len() as f64;
    let mean = pred.iter().sum::<f64>() / n;
    let std = (pred.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n).sqrt();
    if std == 0.0 {
        return Err(Error::NotDefined("constant predictions".into()));
    }
    let max = mos.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = mos.iter().cloned().fold(f64::INFINITY, f64::min);

    let sse = |b: &[f64; 4]| {
        let v: f64 = pred
            .iter()
            .zip(mos)
            .map(|(&x, &y)| (logistic(form, b, x) - y).powi(2))
            .sum();
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut used = 0;
    let search = |start: [f64; 4], used: &mut usize| {
        let mut best = (start, sse(&start), false);
        while *used < MAX_ITERATIONS {
            let run = nelder_mead(&sse, best.0, MAX_ITERATIONS - *used);
            *used += run.iterations;
            let improved = run.value < best.1 * (1.0 - 1e-12);
            if run.value <= best.1 {
                best = (run.point, run.value, run.converged);
            }
            if !improved || !run.converged {
                break;
            }
        }
        best
    };
    let (mut best, mut best_value, mut converged) = search([max, min, mean, std], &mut used);

    // Closed-form fallbacks the simplex can miss when the optimum lies at
    // infinity: the constant mean predictor and a wide logistic whose
    // central slope matches the least-squares line.
    let mos_mean = mos.iter().sum::<f64>() / n;
    let cov = pred
        .iter()
        .zip(mos)
        .map(|(x, y)| (x - mean) * (y - mos_mean))
        .sum::<f64>()
        / n;
    let slope = cov / (std * std);
    let width = match form {
        LogisticForm::Standard => 1e3 * std,
        LogisticForm::AsPrinted => 1.0,
    };
    let half_rise = 2.0 * slope * width;
    let anchors = [
        [mos_mean, mos_mean, mean, std],
        [mos_mean + half_rise, mos_mean - half_rise, mean, width],
    ];
    for anchor in anchors {
        if sse(&anchor) < best_value {
            let (point, value, ok) = search(anchor, &mut used);
            best = point;
            best_value = value;
            converged = ok;
        }
    }
    Ok(LogisticParams {
        converged,
        iterations: used,
        ..LogisticParams::new(best, form)
    })
}

/// PLCC and RMSE between the linearized predictions and the scores.
pub fn plcc_rmse(pred: &[f64], mos: &[f64], params: &LogisticParams) -> Result<(f64, f64)> {
    let mapped: Vec<f64> = pred.iter().map(|&x| params.apply(x)).collect();
    Ok((pearson(&mapped, mos)?, rmse(&mapped, mos)?))
}

struct Run {
    point: [f64; 4],
    value: f64,
    iterations: usize,
    converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

fn nelder_mead(f: &impl Fn(&[f64; 4]) -> f64, start: [f64; 4], budget: usize) -> Run {
    let mut simplex: Vec<([f64; 4], f64)> = Vec::with_capacity(5);
    simplex.push((start, f(&start)));
    for i in 0..4 {
        let mut p = start;
        p[i] = if p[i] != 0.0 { p[i] * 1.05 } else { 0.00025 };
        simplex.push((p, f(&p)));
    }

    let mut iterations = 0;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if diameter(&simplex) < DIAMETER_TOLERANCE {
            return finish(simplex, iterations, true);
        }
        if iterations >= budget {
            return finish(simplex, iterations, false);
        }
        iterations += 1;

        let worst = simplex[4];
        let mut centroid = [0.0; 4];
        for (p, _) in &simplex[..4] {
            for k in 0..4 {
                centroid[k] += p[k] / 4.0;
            }
        }
        let towards = |t: f64| -> [f64; 4] {
            let mut p = [0.0; 4];
            for k in 0..4 {
                p[k] = centroid[k] + t * (worst.0[k] - centroid[k]);
            }
            p
        };

        let reflected = towards(-REFLECT);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = towards(-REFLECT * EXPAND);
            let fe = f(&expanded);
            simplex[4] = if fe < fr {
                (expanded, fe)
            } else {
                (reflected, fr)
            };
            continue;
        }
        if fr < simplex[3].1 {
            simplex[4] = (reflected, fr);
            continue;
        }
        let outside = fr < worst.1;
        let contracted = if outside {
            towards(-REFLECT * CONTRACT)
        } else {
            towards(CONTRACT)
        };
        let fc = f(&contracted);
        if (outside && fc <= fr) || (!outside && fc < worst.1) {
            simplex[4] = (contracted, fc);
            continue;
        }
        let anchor = simplex[0].0;
        for v in simplex.iter_mut().skip(1) {
            for (x, a) in v.0.iter_mut().zip(anchor) {
                *x = a + SHRINK * (*x - a);
            }
            v.1 = f(&v.0);
        }
    }
}

fn finish(simplex: Vec<([f64; 4], f64)>, iterations: usize, converged: bool) -> Run {
    let (point, value) = simplex[0];
    Run {
        point,
        value,
        iterations,
        converged,
    }
}

fn diameter(simplex: &[([f64; 4], f64)]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, a) in simplex.iter().enumerate() {
        for b in &simplex[i + 1..] {
            let dist =
                a.0.iter()
                    .zip(&b.0)
                    .map(|(x, y)| (x - y).powi(2))
                    .sum::<f64>()
                    .sqrt();
            d = d.max(dist);
        }
    }
    d
}
