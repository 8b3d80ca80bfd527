//! Zero-mean generalized Gaussian fitting by moment matching.
//!
//! For `x ~ GGD(alpha, sigma)` the ratio `E[x^2] / E[|x|]^2` depends on the
//! shape only:
//!
//! ```text
//! r(alpha) = Gamma(1/alpha) Gamma(3/alpha) / Gamma(2/alpha)^2
//! ```
//!
//! `r` is strictly decreasing, so the sample ratio is inverted on a fixed
//! grid and refined by bisection. The scale is `sigma = sqrt(E[x^2])`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

pub const ALPHA_MIN: f64 = 0.05;
pub const ALPHA_MAX: f64 = 10.0;
pub const ALPHA_STEP: f64 = 0.001;
pub const ALPHA_TOLERANCE: f64 = 1e-6;
pub const MIN_SAMPLES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GgdParams {
    pub alpha: f64,
    pub sigma: f64,
    /// The sample ratio fell outside the grid and `alpha` sits on a bound.
    pub clamped: bool,
}

/// The generalized Gaussian ratio `r(alpha)`.
pub fn ggd_ratio(alpha: f64) -> f64 {
    (ln_gamma(1.0 / alpha) + ln_gamma(3.0 / alpha) - 2.0 * ln_gamma(2.0 / alpha)).exp()
}

struct RatioTable {
    alphas: Vec<f64>,
    ratios: Vec<f64>,
}

impl RatioTable {
    fn build() -> Self {
        // integer grid indices keep every node (and both ends) exact
        let per_unit = (1.0 / ALPHA_STEP).round();
        let first = (ALPHA_MIN * per_unit).round() as usize;
        let last = (ALPHA_MAX * per_unit).round() as usize;
        let alphas: Vec<f64> = (first..=last).map(|i| i as f64 / per_unit).collect();
        let ratios: Vec<f64> = alphas.iter().map(|&a| ggd_ratio(a)).collect();
        assert!(
            ratios.windows(2).all(|w| w[0] > w[1]),
            "r(alpha) must be strictly decreasing on the grid"
        );
        RatioTable { alphas, ratios }
    }

    fn global() -> &'static RatioTable {
        static TABLE: OnceLock<RatioTable> = OnceLock::new();
        TABLE.get_or_init(RatioTable::build)
    }

    fn solve(&self, rho: f64) -> (f64, bool) {
        let last = self.ratios.len() - 1;
        if rho >= self.ratios[0] {
            return (self.alphas[0], true);
        }
        if rho <= self.ratios[last] {
            return (self.alphas[last], true);
        }
        // ratios are decreasing: first index whose ratio drops below rho
        let upper = self.ratios.partition_point(|&r| r >= rho);
        let (mut lo, mut hi) = (self.alphas[upper - 1], self.alphas[upper]);
        while hi - lo >= ALPHA_TOLERANCE {
            let mid = 0.5 * (lo + hi);
            if ggd_ratio(mid) >= rho {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi), false)
    }
}

/// Fits a zero-mean GGD to `samples`.
pub fn fit_ggd(samples: &[f64]) -> Result<GgdParams> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_SAMPLES,
            got: samples.len(),
        });
    }
    let n = samples.len() as f64;
    let m1 = samples.iter().map(|v| v.abs()).sum::<f64>() / n;
    let m2 = samples.iter().map(|v| v * v).sum::<f64>() / n;
    if !(m1.is_finite() && m2.is_finite()) {
        return Err(Error::DegenerateInput("non-finite samples".into()));
    }
    if m1 == 0.0 {
        return Err(Error::DegenerateInput("all samples are zero".into()));
    }
    let (alpha, clamped) = RatioTable::global().solve(m2 / (m1 * m1));
    Ok(GgdParams {
        alpha,
        sigma: m2.sqrt(),
        clamped,
    })
}

/// Forces the ratio table to be built (and its monotonicity checked).
pub fn warm_up() {
    RatioTable::global();
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_closed_forms() {
        assert!((ggd_ratio(2.0) - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((ggd_ratio(1.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn grid_is_monotone() {
        let t = RatioTable::global();
        assert_eq!(t.alphas.len(), 9951);
        assert_eq!(*t.alphas.last().unwrap(), ALPHA_MAX);
    }

    #[test]
    fn exact_inversion() {
        for alpha in [0.3, 0.7, 1.0, 1.5, 2.0, 4.0, 7.25] {
            let (got, clamped) = RatioTable::global().solve(ggd_ratio(alpha));
            assert!(!clamped);
            assert!((got - alpha).abs() < 1e-6, "{alpha} -> {got}");
        }
    }

    #[test]
    fn clamps_outside_grid() {
        // |x| constant: rho = 1, below r(10)
        let binary: Vec<f64> = (0..32)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let p = fit_ggd(&binary).unwrap();
        assert!(p.clamped);
        assert_eq!(p.alpha, ALPHA_MAX);
        assert_eq!(p.sigma, 1.0);

        // one spike among zeros: rho = n, far above r(0.05)
        let mut spike = vec![0.0; 100_000];
        spike[0] = 1.0;
        let p = fit_ggd(&spike).unwrap();
        assert!(p.clamped);
        assert_eq!(p.alpha, ALPHA_MIN);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            fit_ggd(&[0.0; 32]),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(
            fit_ggd(&[1.0; 8]),
            Err(Error::InsufficientSamples { .. })
        ));
    }
}
