//! Maximum-likelihood recovery of subjective scores.
//!
//! Each opinion score is modelled as
//! `x[e,s] ~ N(q[e] + b[s], v[s]^2 + a[c(e)]^2)` with true quality `q`,
//! subject bias `b`, subject inconsistency `v` and content ambiguity `a`.
//! Estimation alternates closed-form weighted means for `q` and `b` with
//! safeguarded Newton solves for the variances, so the log-likelihood never
//! decreases. Biases are reported in the zero-sum gauge.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const Z95: f64 = 1.96;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub subject_id: String,
    pub stimulus_id: String,
    pub content_id: String,
    pub score: f64,
}

/// Validated ratings: `(subject, stimulus)` pairs are unique and every
/// stimulus belongs to exactly one content.
#[derive(Clone, Debug, PartialEq)]
pub struct RatingsTable {
    entries: Vec<Rating>,
}

impl RatingsTable {
    pub fn new(entries: Vec<Rating>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyInput("no ratings".into()));
        }
        let mut pairs = HashSet::new();
        let mut content_of: HashMap<&str, &str> = HashMap::new();
        for r in &entries {
            if !r.score.is_finite() {
                return Err(Error::InvalidRatings(format!(
                    "non-finite score from {} for {}",
                    r.subject_id, r.stimulus_id
                )));
            }
            if !pairs.insert((r.subject_id.as_str(), r.stimulus_id.as_str())) {
                return Err(Error::InvalidRatings(format!(
                    "subject {} rated {} more than once",
                    r.subject_id, r.stimulus_id
                )));
            }
            if let Some(prev) = content_of.insert(&r.stimulus_id, &r.content_id) {
                if prev != r.content_id {
                    return Err(Error::InvalidRatings(format!(
                        "stimulus {} maps to contents {prev} and {}",
                        r.stimulus_id, r.content_id
                    )));
                }
            }
        }
        Ok(RatingsTable { entries })
    }

    pub fn entries(&self) -> &[Rating] {
        &self.entries
    }

    /// Reads `subject_id,stimulus_id,content_id,score`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let entries = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<Rating>, _>>()?;
        Self::new(entries)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.entries {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Function maximized by the coordinate sweeps.
///
/// `Ml` is the plain log-likelihood. With one rating per (subject, stimulus)
/// pair its supremum sends the most consistent subject's `v` to the floor,
/// because that subject's weight pulls every `q` toward its own scores.
/// `Reml` adds `-0.5 ln det` of the information of `(q, b)`, the restricted
/// likelihood of the residual contrasts, which is bounded in that limit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Ml,
    #[default]
    Reml,
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Objective::Ml => "ml",
            Objective::Reml => "reml",
        })
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ml" => Ok(Objective::Ml),
            "reml" => Ok(Objective::Reml),
            other => Err(Error::InvalidConfig(format!(
                "unknown objective {other:?} (ml or reml)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurealConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub v_floor: f64,
    pub with_ambiguity: bool,
    pub objective: Objective,
}

impl Default for SurealConfig {
    fn default() -> Self {
        SurealConfig {
            max_iter: 500,
            tol: 1e-8,
            v_floor: 1e-3,
            with_ambiguity: true,
            objective: Objective::Reml,
        }
    }
}

/// A named estimate with its 95% interval; `ci95` is `[NaN, NaN]` (null in
/// JSON) where the observed information is not positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub id: String,
    pub value: f64,
    pub ci95: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MosEstimate {
    /// True quality `q` per stimulus.
    pub quality: Vec<Estimate>,
    /// Bias `b` per subject; sums to zero.
    pub bias: Vec<Estimate>,
    /// Inconsistency `v` per subject.
    pub inconsistency: Vec<Estimate>,
    /// Ambiguity `a` per content; all zero when disabled.
    pub ambiguity: Vec<Estimate>,
    /// Plain log-likelihood at the returned iterate.
    pub loglik: f64,
    pub objective: Objective,
    /// Objective value at the start and after every accepted sweep.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// A sweep decreased the objective even after safeguarding; the
    /// previous iterate is returned.
    pub numerical_issue: bool,
}

impl MosEstimate {
    pub fn quality_of(&self, stimulus: &str) -> Option<f64> {
        self.quality
            .iter()
            .find(|e| e.id == stimulus)
            .map(|e| e.value)
    }

    pub fn bias_of(&self, subject: &str) -> Option<f64> {
        self.bias.iter().find(|e| e.id == subject).map(|e| e.value)
    }
}

/// Per-stimulus arithmetic mean, keyed by stimulus id.
pub fn plain_mos(ratings: &RatingsTable) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in ratings.entries() {
        let e = sums.entry(r.stimulus_id.clone()).or_default();
        e.0 += r.score;
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(k, (s, n))| (k, s / n as f64))
        .collect()
}

struct Obs {
    e: usize,
    s: usize,
    c: usize,
    x: f64,
}

struct Problem {
    stimuli: Vec<String>,
    subjects: Vec<String>,
    contents: Vec<String>,
    obs: Vec<Obs>,
    by_stimulus: Vec<Vec<usize>>,
    by_subject: Vec<Vec<usize>>,
    by_content: Vec<Vec<usize>>,
}

impl Problem {
    fn build(ratings: &RatingsTable) -> Result<Self> {
        fn index(ids: &mut Vec<String>, map: &mut HashMap<String, usize>, id: &str) -> usize {
            *map.entry(id.to_string()).or_insert_with(|| {
                ids.push(id.to_string());
                ids.len() - 1
            })
        }
        let (mut stimuli, mut subjects, mut contents) = (Vec::new(), Vec::new(), Vec::new());
        let (mut sm, mut um, mut cm) = (HashMap::new(), HashMap::new(), HashMap::new());
        let mut sorted: Vec<&Rating> = ratings.entries().iter().collect();
        sorted
            .sort_by(|a, b| (&a.stimulus_id, &a.subject_id).cmp(&(&b.stimulus_id, &b.subject_id)));
        // ids are indexed in sorted order so results do not depend on row order
        let mut ids: Vec<&str> = sorted.iter().map(|r| r.subject_id.as_str()).collect();
        ids.sort();
        ids.dedup();
        for id in ids {
            index(&mut subjects, &mut um, id);
        }
        let mut obs = Vec::with_capacity(sorted.len());
        for r in sorted {
            obs.push(Obs {
                e: index(&mut stimuli, &mut sm, &r.stimulus_id),
                s: um[&r.subject_id],
                c: index(&mut contents, &mut cm, &r.content_id),
                x: r.score,
            });
        }
        let mut by_stimulus = vec![Vec::new(); stimuli.len()];
        let mut by_subject = vec![Vec::new(); subjects.len()];
        let mut by_content = vec![Vec::new(); contents.len()];
        for (i, o) in obs.iter().enumerate() {
            by_stimulus[o.e].push(i);
            by_subject[o.s].push(i);
            by_content[o.c].push(i);
        }
        if let Some(e) = by_stimulus.iter().position(|v| v.len() < 2) {
            return Err(Error::Underdetermined(format!(
                "stimulus {} has fewer than 2 ratings",
                stimuli[e]
            )));
        }
        if let Some(s) = by_subject.iter().position(|v| v.len() < 2) {
            return Err(Error::Underdetermined(format!(
                "subject {} rated fewer than 2 stimuli",
                subjects[s]
            )));
        }
        if !connected(subjects.len(), stimuli.len(), &obs) {
            return Err(Error::Underdetermined(
                "ratings split into disconnected subject groups; biases are not comparable".into(),
            ));
        }
        Ok(Problem {
            stimuli,
            subjects,
            contents,
            obs,
            by_stimulus,
            by_subject,
            by_content,
        })
    }
}

fn connected(subjects: usize, stimuli: usize, obs: &[Obs]) -> bool {
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut parent: Vec<usize> = (0..subjects + stimuli).collect();
    for o in obs {
        let (a, b) = (root(&mut parent, o.s), root(&mut parent, subjects + o.e));
        parent[a] = b;
    }
    let r = root(&mut parent, 0);
    (0..subjects + stimuli).all(|i| root(&mut parent, i) == r)
}

#[derive(Clone)]
struct Params {
    q: Vec<f64>,
    b: Vec<f64>,
    /// Variances `v^2` and `a^2`.
    v2: Vec<f64>,
    a2: Vec<f64>,
}

impl Params {
    fn variance(&self, o: &Obs) -> f64 {
        self.v2[o.s] + self.a2[o.c]
    }

    fn residual(&self, o: &Obs) -> f64 {
        o.x - self.q[o.e] - self.b[o.s]
    }

    fn loglik(&self, p: &Problem) -> f64 {
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        p.obs
            .iter()
            .map(|o| {
                let var = self.variance(o);
                -0.5 * (ln2pi + var.ln() + self.residual(o).powi(2) / var)
            })
            .sum()
    }

    fn objective(&self, p: &Problem, objective: Objective) -> f64 {
        match objective {
            Objective::Ml => self.loglik(p),
            Objective::Reml => self.loglik(p) - 0.5 * self.information_logdet(p),
        }
    }

    /// `ln det` of the Fisher information of `(q, b)` restricted to the
    /// zero-sum gauge: the `q` block is diagonal and the Schur complement on
    /// `b` is a weighted Laplacian, whose cofactors all equal its reduced
    /// determinant.
    fn information_logdet(&self, p: &Problem) -> f64 {
        let m = p.subjects.len() - 1;
        let mut schur = vec![0.0; m * m];
        let mut logdet = 0.0;
        let mut ws: Vec<(usize, f64)> = Vec::new();
        for idx in &p.by_stimulus {
            ws.clear();
            ws.extend(
                idx.iter()
                    .map(|&i| (p.obs[i].s, 1.0 / self.variance(&p.obs[i]))),
            );
            let dq: f64 = ws.iter().map(|w| w.1).sum();
            logdet += dq.ln();
            for &(s, w_s) in ws.iter().filter(|w| w.0 < m) {
                schur[s * m + s] += w_s;
                for &(t, w_t) in ws.iter().filter(|w| w.0 < m) {
                    schur[s * m + t] -= w_s * w_t / dq;
                }
            }
        }
        logdet + cholesky_logdet(&mut schur, m)
    }
}

/// `ln det` of a symmetric positive-definite `n x n` matrix, destroying it;
/// `-inf` if it is not positive definite.
fn cholesky_logdet(a: &mut [f64], n: usize) -> f64 {
    let mut logdet = 0.0;
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return f64::NEG_INFINITY;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        logdet += 2.0 * d.ln();
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / d;
        }
    }
    logdet
}

/// Gradient and curvature of `sum_i -0.5 ln(u + d_i) - r_i^2 / (2 (u + d_i))`,
/// the part of the log-likelihood that depends on one variance `u`.
fn variance_derivatives(u: f64, terms: &[(f64, f64)]) -> (f64, f64) {
    terms.iter().fold((0.0, 0.0), |(g, h), &(d, r2)| {
        let s = u + d;
        (
            g - 0.5 / s + r2 / (2.0 * s * s),
            h + 0.5 / (s * s) - r2 / (s * s * s),
        )
    })
}

fn variance_loglik(u: f64, terms: &[(f64, f64)]) -> f64 {
    terms
        .iter()
        .map(|&(d, r2)| {
            let s = u + d;
            -0.5 * s.ln() - r2 / (2.0 * s)
        })
        .sum()
}

/// Central (or one-sided at the bound) finite-difference derivatives.
fn numeric_derivatives(f: &mut impl FnMut(f64) -> f64, u: f64, fu: f64, lower: f64) -> (f64, f64) {
    let h = 1e-4 * (u + 1e-2);
    if u - h >= lower {
        let (fp, fm) = (f(u + h), f(u - h));
        ((fp - fm) / (2.0 * h), (fp - 2.0 * fu + fm) / (h * h))
    } else {
        let (f1, f2) = (f(u + h), f(u + 2.0 * h));
        (
            (-3.0 * fu + 4.0 * f1 - f2) / (2.0 * h),
            (fu - 2.0 * f1 + f2) / (h * h),
        )
    }
}

/// Maximizes `f` over `u >= lower` by projected Newton with backtracking.
/// `derivs` supplies analytic derivatives; without it they are taken
/// numerically. The result is never worse than `u0`.
fn maximize_variance(
    u0: f64,
    lower: f64,
    mut f: impl FnMut(f64) -> f64,
    derivs: Option<&dyn Fn(f64) -> (f64, f64)>,
) -> f64 {
    let mut u = u0.max(lower);
    let mut fu = f(u);
    for _ in 0..100 {
        let (g, h) = match derivs {
            Some(d) => d(u),
            None => numeric_derivatives(&mut f, u, fu, lower),
        };
        if g == 0.0 || !g.is_finite() || (u <= lower && g < 0.0) {
            break;
        }
        // Newton where the function is locally concave, otherwise a
        // gradient step scaled to the current variance.
        let newton = h < 0.0;
        let mut step = if newton {
            -g / h
        } else {
            g.signum() * u.max(1.0)
        };
        let mut moved = false;
        for _ in 0..60 {
            let cand = (u + step).max(lower);
            let fc = f(cand);
            // near the maximum f is flat to rounding, so Newton steps only
            // need to not lose ground
            if fc > fu || (newton && fc >= fu) {
                moved = (cand - u).abs() > 1e-12 * (u + 1e-6);
                u = cand;
                fu = fc;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    u
}

fn solve_variance(u0: f64, lower: f64, terms: &[(f64, f64)]) -> f64 {
    maximize_variance(
        u0,
        lower,
        |u| variance_loglik(u, terms),
        Some(&|u| variance_derivatives(u, terms)),
    )
}

/// Alternating maximization of the likelihood.
pub fn estimate(ratings: &RatingsTable, cfg: &SurealConfig) -> Result<MosEstimate> {
    if !(cfg.v_floor > 0.0 && cfg.tol > 0.0 && cfg.max_iter > 0) {
        return Err(Error::InvalidConfig(
            "v_floor, tol and max_iter must be positive".into(),
        ));
    }
    let p = Problem::build(ratings)?;
    let floor2 = cfg.v_floor * cfg.v_floor;

    let mut cur = Params {
        q: p.by_stimulus
            .iter()
            .map(|idx| idx.iter().map(|&i| p.obs[i].x).sum::<f64>() / idx.len() as f64)
            .collect(),
        b: vec![0.0; p.subjects.len()],
        v2: vec![1.0; p.subjects.len()],
        a2: vec![0.0; p.contents.len()],
    };
    for (s, idx) in p.by_subject.iter().enumerate() {
        let ms = idx
            .iter()
            .map(|&i| cur.residual(&p.obs[i]).powi(2))
            .sum::<f64>()
            / idx.len() as f64;
        cur.v2[s] = ms.max(floor2);
    }

    let mut trace = vec![cur.objective(&p, cfg.objective)];
    let mut converged = false;
    let mut numerical_issue = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let prev = cur.clone();

        for (e, idx) in p.by_stimulus.iter().enumerate() {
            let (mut num, mut den) = (0.0, 0.0);
            for &i in idx {
                let o = &p.obs[i];
                let w = 1.0 / cur.variance(o);
                num += w * (o.x - cur.b[o.s]);
                den += w;
            }
            cur.q[e] = num / den;
        }
        for (s, idx) in p.by_subject.iter().enumerate() {
            let (mut num, mut den) = (0.0, 0.0);
            for &i in idx {
                let o = &p.obs[i];
                let w = 1.0 / cur.variance(o);
                num += w * (o.x - cur.q[o.e]);
                den += w;
            }
            cur.b[s] = num / den;
        }
        for (s, idx) in p.by_subject.iter().enumerate() {
            cur.v2[s] = match cfg.objective {
                Objective::Ml => {
                    let terms: Vec<(f64, f64)> = idx
                        .iter()
                        .map(|&i| (cur.a2[p.obs[i].c], cur.residual(&p.obs[i]).powi(2)))
                        .collect();
                    solve_variance(cur.v2[s], floor2, &terms)
                }
                Objective::Reml => {
                    let mut trial = cur.clone();
                    maximize_variance(
                        cur.v2[s],
                        floor2,
                        |u| {
                            trial.v2[s] = u;
                            trial.objective(&p, Objective::Reml)
                        },
                        None,
                    )
                }
            };
        }
        if cfg.with_ambiguity {
            for (c, idx) in p.by_content.iter().enumerate() {
                cur.a2[c] = match cfg.objective {
                    Objective::Ml => {
                        let terms: Vec<(f64, f64)> = idx
                            .iter()
                            .map(|&i| (cur.v2[p.obs[i].s], cur.residual(&p.obs[i]).powi(2)))
                            .collect();
                        solve_variance(cur.a2[c], 0.0, &terms)
                    }
                    Objective::Reml => {
                        let mut trial = cur.clone();
                        maximize_variance(
                            cur.a2[c],
                            0.0,
                            |u| {
                                trial.a2[c] = u;
                                trial.objective(&p, Objective::Reml)
                            },
                            None,
                        )
                    }
                };
            }
        }
        // zero-sum gauge; the likelihood is invariant to this shift
        let shift = cur.b.iter().sum::<f64>() / cur.b.len() as f64;
        cur.b.iter_mut().for_each(|b| *b -= shift);
        cur.q.iter_mut().for_each(|q| *q += shift);

        let ll = cur.objective(&p, cfg.objective);
        let last = *trace.last().unwrap();
        if ll < last {
            // rounding-level losses mean the sweep cannot improve further
            numerical_issue = ll < last - 1e-9 * last.abs().max(1.0);
            converged = !numerical_issue;
            cur = prev;
            break;
        }
        trace.push(ll);

        let change = max_change(&prev, &cur);
        if change < cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(report(
        &p,
        &cur,
        trace,
        iterations,
        converged,
        numerical_issue,
        cfg,
    ))
}

fn max_change(a: &Params, b: &Params) -> f64 {
    let diff = |x: &[f64], y: &[f64]| {
        x.iter()
            .zip(y)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    };
    diff(&a.q, &b.q)
        .max(diff(&a.b, &b.b))
        .max(diff(&sqrt_all(&a.v2), &sqrt_all(&b.v2)))
        .max(diff(&sqrt_all(&a.a2), &sqrt_all(&b.a2)))
}

fn sqrt_all(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.sqrt()).collect()
}

fn interval(value: f64, information: f64) -> [f64; 2] {
    if information > 0.0 && information.is_finite() {
        let half = Z95 / information.sqrt();
        [value - half, value + half]
    } else {
        [f64::NAN, f64::NAN]
    }
}

/// Observed information of a standard deviation parameter `sd` entering
/// the variance as `sd^2 + d_i`.
fn sd_information(sd: f64, terms: impl Iterator<Item = (f64, f64)>) -> f64 {
    let t2 = sd * sd;
    terms
        .map(|(d, r2)| {
            let s = t2 + d;
            1.0 / s - 2.0 * t2 / (s * s) - r2 / (s * s) + 4.0 * r2 * t2 / (s * s * s)
        })
        .sum()
}

fn report(
    p: &Problem,
    cur: &Params,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
    numerical_issue: bool,
    cfg: &SurealConfig,
) -> MosEstimate {
    let weight_sum = |idx: &[usize]| {
        idx.iter()
            .map(|&i| 1.0 / cur.variance(&p.obs[i]))
            .sum::<f64>()
    };

    let quality = p
        .stimuli
        .iter()
        .enumerate()
        .map(|(e, id)| Estimate {
            id: id.clone(),
            value: cur.q[e],
            ci95: interval(cur.q[e], weight_sum(&p.by_stimulus[e])),
        })
        .collect();
    let bias = p
        .subjects
        .iter()
        .enumerate()
        .map(|(s, id)| Estimate {
            id: id.clone(),
            value: cur.b[s],
            ci95: interval(cur.b[s], weight_sum(&p.by_subject[s])),
        })
        .collect();
    let inconsistency = p
        .subjects
        .iter()
        .enumerate()
        .map(|(s, id)| {
            let v = cur.v2[s].sqrt();
            let info = sd_information(
                v,
                p.by_subject[s]
                    .iter()
                    .map(|&i| (cur.a2[p.obs[i].c], cur.residual(&p.obs[i]).powi(2))),
            );
            Estimate {
                id: id.clone(),
                value: v,
                ci95: clip(interval(v, info)),
            }
        })
        .collect();
    let ambiguity = p
        .contents
        .iter()
        .enumerate()
        .map(|(c, id)| {
            let a = cur.a2[c].sqrt();
            let ci95 = if cfg.with_ambiguity {
                let info = sd_information(
                    a,
                    p.by_content[c]
                        .iter()
                        .map(|&i| (cur.v2[p.obs[i].s], cur.residual(&p.obs[i]).powi(2))),
                );
                clip(interval(a, info))
            } else {
                [0.0, 0.0]
            };
            Estimate {
                id: id.clone(),
                value: a,
                ci95,
            }
        })
        .collect();
    MosEstimate {
        quality,
        bias,
        inconsistency,
        ambiguity,
        loglik: cur.loglik(p),
        objective: cfg.objective,
        objective_trace: trace,
        iterations,
        converged,
        numerical_issue,
    }
}

fn clip(ci: [f64; 2]) -> [f64; 2] {
    [ci[0].max(0.0), ci[1]]
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    use super::*;

    fn table(rows: &[(&str, &str, &str, f64)]) -> RatingsTable {
        RatingsTable::new(
            rows.iter()
                .map(|&(s, e, c, x)| Rating {
                    subject_id: s.into(),
                    stimulus_id: e.into(),
                    content_id: c.into(),
                    score: x,
                })
                .collect(),
        )
        .unwrap()
    }

    fn panel(q: &[f64], b: &[f64], v: &[f64], seed: u64) -> RatingsTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for (e, &qe) in q.iter().enumerate() {
            for (s, (&bs, &vs)) in b.iter().zip(v).enumerate() {
                let noise = if vs > 0.0 {
                    Normal::new(0.0, vs).unwrap().sample(&mut rng)
                } else {
                    0.0
                };
                rows.push(Rating {
                    subject_id: format!("s{s:02}"),
                    stimulus_id: format!("e{e:02}"),
                    content_id: format!("c{}", e % 5),
                    score: (qe + bs + noise).round(),
                });
            }
        }
        RatingsTable::new(rows).unwrap()
    }

    #[test]
    fn plain_mean() {
        let t = table(&[("a", "x", "c", 40.0), ("b", "x", "c", 60.0)]);
        assert_eq!(plain_mos(&t)["x"], 50.0);
    }

    #[test]
    fn zero_noise_panel_is_recovered_exactly() {
        let q: Vec<f64> = (0..12).map(|i| 20.0 + 5.0 * i as f64).collect();
        let b = [-3.0, 1.0, 2.0, 0.0];
        let est = estimate(&panel(&q, &b, &[0.0; 4], 0), &SurealConfig::default()).unwrap();
        for (e, &qe) in q.iter().enumerate() {
            assert!((est.quality_of(&format!("e{e:02}")).unwrap() - qe).abs() <= 0.5);
        }
        for v in &est.inconsistency {
            assert!((v.value - 1e-3).abs() < 1e-9, "{v:?}");
        }
        let mos = plain_mos(&panel(&q, &b, &[0.0; 4], 0));
        for (id, m) in mos {
            assert!((est.quality_of(&id).unwrap() - m).abs() <= 0.5);
        }
    }

    #[test]
    fn two_subject_offset() {
        let mut rows = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for e in 0..10 {
            let base: f64 = rng.random_range(20.0..80.0f64).round();
            rows.push(("one", e, base + 10.0));
            rows.push(("two", e, base));
        }
        let names: Vec<String> = (0..10).map(|e| format!("e{e}")).collect();
        let t = table(
            &rows
                .iter()
                .map(|&(s, e, x)| (s, names[e].as_str(), "c", x))
                .collect::<Vec<_>>(),
        );
        let est = estimate(&t, &SurealConfig::default()).unwrap();
        let diff = est.bias_of("one").unwrap() - est.bias_of("two").unwrap();
        assert!((diff - 10.0).abs() < 0.5, "{diff}");
    }

    #[test]
    fn loglik_never_decreases() {
        let q: Vec<f64> = (0..15).map(|i| 25.0 + 4.0 * i as f64).collect();
        let b = [-4.0, -1.0, 0.0, 2.0, 3.0];
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        for objective in [Objective::Ml, Objective::Reml] {
            let cfg = SurealConfig {
                objective,
                ..Default::default()
            };
            let est = estimate(&panel(&q, &b, &v, 7), &cfg).unwrap();
            assert!(
                est.objective_trace.windows(2).all(|w| w[1] >= w[0]),
                "{:?}",
                est.objective_trace
            );
            assert!(!est.numerical_issue);
            let bsum: f64 = est.bias.iter().map(|e| e.value).sum();
            assert!(bsum.abs() < 1e-9);
            assert!(est.ambiguity.iter().all(|a| a.value >= 0.0));
            assert!(est.inconsistency.iter().all(|v| v.value >= cfg.v_floor));
            assert!(est
                .quality
                .iter()
                .all(|e| e.ci95[0] < e.value && e.value < e.ci95[1]));
        }
    }

    #[test]
    fn information_logdet_matches_dense_oracle() {
        // drop b for the last subject, build the full information matrix
        // of the remaining (q, b) and factor it directly
        let q: Vec<f64> = (0..6).map(|i| 30.0 + 9.0 * i as f64).collect();
        let t = panel(&q, &[-2.0, 0.0, 2.0, 1.0], &[1.0, 2.0, 3.0, 1.5], 3);
        let p = Problem::build(&t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = Params {
            q: vec![0.0; p.stimuli.len()],
            b: vec![0.0; p.subjects.len()],
            v2: (0..p.subjects.len())
                .map(|_| rng.random_range(0.5..9.0))
                .collect(),
            a2: (0..p.contents.len())
                .map(|_| rng.random_range(0.0..4.0))
                .collect(),
        };
        let (ne, ns) = (p.stimuli.len(), p.subjects.len());
        let n = ne + ns - 1;
        let mut m = vec![0.0; n * n];
        for o in &p.obs {
            let w = 1.0 / params.variance(o);
            let mut cols = vec![o.e];
            if o.s < ns - 1 {
                cols.push(ne + o.s);
            }
            for &i in &cols {
                for &j in &cols {
                    m[i * n + j] += w;
                }
            }
        }
        let dense = cholesky_logdet(&mut m, n);
        assert!(
            (params.information_logdet(&p) - dense).abs() < 1e-9,
            "{dense}"
        );
    }

    #[test]
    fn restricted_objective_prevents_collapse() {
        // one very consistent subject among noisy ones
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q: Vec<f64> = (0..20).map(|_| rng.random_range(20.0..90.0)).collect();
        let v = [1.0, 5.0, 5.5, 6.0, 4.5, 5.0, 6.0, 5.5];
        let t = panel(&q, &[0.0; 8], &v, 8);
        let reml = estimate(&t, &SurealConfig::default()).unwrap();
        let v0 = reml
            .inconsistency
            .iter()
            .find(|e| e.id == "s00")
            .unwrap()
            .value;
        assert!(v0 > 0.3, "{v0}");
    }

    #[test]
    fn disconnected_panels_are_underdetermined() {
        let t = table(&[
            ("a", "x", "c", 1.0),
            ("b", "x", "c", 2.0),
            ("a", "y", "c", 1.0),
            ("b", "y", "c", 2.0),
            ("c", "z", "c", 1.0),
            ("d", "z", "c", 2.0),
            ("c", "w", "c", 1.0),
            ("d", "w", "c", 2.0),
        ]);
        assert!(matches!(
            estimate(&t, &SurealConfig::default()),
            Err(Error::Underdetermined(_))
        ));
    }

    #[test]
    fn translation_shifts_only_quality() {
        let q: Vec<f64> = (0..10).map(|i| 30.0 + 5.0 * i as f64).collect();
        let t = panel(&q, &[-2.0, 0.0, 2.0, 1.0], &[1.0, 2.0, 3.0, 1.5], 3);
        let shifted = RatingsTable::new(
            t.entries()
                .iter()
                .map(|r| Rating {
                    score: r.score + 7.0,
                    ..r.clone()
                })
                .collect(),
        )
        .unwrap();
        let cfg = SurealConfig::default();
        let (a, b) = (
            estimate(&t, &cfg).unwrap(),
            estimate(&shifted, &cfg).unwrap(),
        );
        for (x, y) in a.quality.iter().zip(&b.quality) {
            assert!((y.value - x.value - 7.0).abs() < 1e-6);
        }
        for (x, y) in a
            .bias
            .iter()
            .zip(&b.bias)
            .chain(a.inconsistency.iter().zip(&b.inconsistency))
        {
            assert!((x.value - y.value).abs() < 1e-6);
        }
    }

    #[test]
    fn subject_relabeling_is_equivariant() {
        let q: Vec<f64> = (0..10).map(|i| 30.0 + 5.0 * i as f64).collect();
        let t = panel(&q, &[-2.0, 0.0, 2.0], &[1.0, 2.0, 3.0], 5);
        let renamed = RatingsTable::new(
            t.entries()
                .iter()
                .map(|r| Rating {
                    subject_id: format!("z{}", r.subject_id),
                    ..r.clone()
                })
                .rev()
                .collect(),
        )
        .unwrap();
        let cfg = SurealConfig::default();
        let (a, b) = (
            estimate(&t, &cfg).unwrap(),
            estimate(&renamed, &cfg).unwrap(),
        );
        for s in &a.bias {
            assert!((b.bias_of(&format!("z{}", s.id)).unwrap() - s.value).abs() < 1e-9);
        }
        for e in &a.quality {
            assert!((b.quality_of(&e.id).unwrap() - e.value).abs() < 1e-9);
        }
    }

    #[test]
    fn ambiguity_can_be_disabled() {
        let q: Vec<f64> = (0..10).map(|i| 30.0 + 5.0 * i as f64).collect();
        let t = panel(&q, &[-2.0, 0.0, 2.0], &[1.0, 2.0, 3.0], 5);
        let cfg = SurealConfig {
            with_ambiguity: false,
            ..Default::default()
        };
        let est = estimate(&t, &cfg).unwrap();
        assert!(est.ambiguity.iter().all(|a| a.value == 0.0));
        assert!(est.converged);
    }

    #[test]
    fn invalid_tables() {
        assert!(matches!(
            RatingsTable::new(vec![
                Rating {
                    subject_id: "a".into(),
                    stimulus_id: "x".into(),
                    content_id: "c".into(),
                    score: 1.0
                },
                Rating {
                    subject_id: "a".into(),
                    stimulus_id: "x".into(),
                    content_id: "c".into(),
                    score: 2.0
                },
            ]),
            Err(Error::InvalidRatings(_))
        ));
        assert!(matches!(
            RatingsTable::new(vec![
                Rating {
                    subject_id: "a".into(),
                    stimulus_id: "x".into(),
                    content_id: "c".into(),
                    score: 1.0
                },
                Rating {
                    subject_id: "b".into(),
                    stimulus_id: "x".into(),
                    content_id: "d".into(),
                    score: 2.0
                },
            ]),
            Err(Error::InvalidRatings(_))
        ));
        let single = table(&[
            ("a", "x", "c", 1.0),
            ("a", "y", "c", 2.0),
            ("b", "x", "c", 3.0),
        ]);
        assert!(matches!(
            estimate(&single, &SurealConfig::default()),
            Err(Error::Underdetermined(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let t = table(&[("a", "x", "c", 40.0), ("b", "x", "c", 60.0)]);
        let mut bytes = Vec::new();
        t.write_csv(&mut bytes).unwrap();
        assert!(String::from_utf8(bytes.clone())
            .unwrap()
            .starts_with("subject_id,stimulus_id,content_id,score"));
        assert_eq!(RatingsTable::read_csv(&bytes[..]).unwrap(), t);
    }

    #[test]
    fn variance_solver_matches_closed_form() {
        // with d = 0 the maximizer is the mean squared residual
        let terms = [(0.0, 4.0), (0.0, 9.0), (0.0, 1.0), (0.0, 2.0)];
        let u = solve_variance(1.0, 1e-6, &terms);
        assert!((u - 4.0).abs() < 1e-10, "{u}");
        // lower bound binds when residuals vanish
        assert_eq!(solve_variance(3.0, 0.25, &[(0.0, 0.0), (0.0, 0.0)]), 0.25);
    }
}
