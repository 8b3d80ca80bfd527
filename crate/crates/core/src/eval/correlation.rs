use crate::error::{Error, Result};

pub const MIN_POINTS: usize = 3;

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.len() < MIN_POINTS {
        return Err(Error::InsufficientSamples {
            needed: MIN_POINTS,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NotDefined("non-finite value".into()));
    }
    Ok(())
}

/// 1-based ranks; tied values share the average of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson linear correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::NotDefined("correlation of a constant vector".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank-order correlation: Pearson correlation of average ranks.
pub fn srocc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Kendall tau-b over all pairs.
pub fn krocc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let (mut concordant, mut discordant, mut tied_x, mut tied_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let dx = x[i].partial_cmp(&x[j]).map_or(0, |o| o as i64);
            let dy = y[i].partial_cmp(&y[j]).map_or(0, |o| o as i64);
            match (dx, dy) {
                (0, 0) => {}
                (0, _) => tied_x += 1,
                (_, 0) => tied_y += 1,
                _ if dx == dy => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n1 = (concordant + discordant + tied_x) as f64;
    let n2 = (concordant + discordant + tied_y) as f64;
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::NotDefined("correlation of a constant vector".into()));
    }
    Ok(((concordant - discordant) as f64 / (n1 * n2).sqrt()).clamp(-1.0, 1.0))
}

pub fn rmse(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Shape(format!("{} vs {} values", x.len(), y.len())));
    }
    Ok((x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(
            average_ranks(&[10.0, 20.0, 10.0, 5.0]),
            vec![2.5, 4.0, 2.5, 1.0]
        );
    }

    #[test]
    fn perfect_orderings() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(srocc(&a, &a).unwrap(), 1.0);
        assert_eq!(srocc(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert_eq!(krocc(&a, &a).unwrap(), 1.0);
        assert_eq!(krocc(&a, &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
    }

    #[test]
    fn hand_computed_values() {
        // ranks equal values; d = (1,1,1,1,0), rho = 1 - 6*4/(5*24) = 0.8
        let s = srocc(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 4.0, 3.0, 5.0]).unwrap();
        assert!((s - 0.8).abs() < 1e-12);
        // 6 pairs: only (2,3) discordant -> (5 - 1) / 6
        let k = krocc(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((k - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn tau_b_with_ties() {
        // x ties on (0,1); y ties on (2,3). Pairs: (0,1) tx, (0,2) C, (0,3) C,
        // (1,2) C, (1,3) C, (2,3) ty -> 4 / sqrt(5 * 5)
        let k = krocc(&[1.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 3.0]).unwrap();
        assert!((k - 0.8).abs() < 1e-12);
    }

    #[test]
    fn undefined_cases() {
        assert!(matches!(
            srocc(&[1.0; 4], &[1.0, 2.0, 3.0, 4.0]),
            Err(Error::NotDefined(_))
        ));
        assert!(matches!(
            krocc(&[1.0, 2.0, 3.0, 4.0], &[2.0; 4]),
            Err(Error::NotDefined(_))
        ));
        assert!(matches!(
            pearson(&[1.0, 2.0], &[1.0, 2.0]),
            Err(Error::InsufficientSamples { .. })
        ));
        assert!(matches!(
            pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]),
            Err(Error::Shape(_))
        ));
    }

    proptest! {
        #[test]
        fn rank_correlations_ignore_monotone_maps(
            pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40),
            a in 0.1f64..5.0,
            b in -10.0f64..10.0,
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0.round()).collect();
            let y: Vec<f64> = pairs.iter().map(|p| (p.1 * 100.0).round() / 100.0).collect();
            let fx: Vec<f64> = x.iter().map(|v| (v * 0.05).exp() * a + b).collect();
            let gy: Vec<f64> = y.iter().map(|v| v.powi(3) + b).collect();
            match (srocc(&x, &y), srocc(&fx, &gy)) {
                (Ok(s1), Ok(s2)) => prop_assert!((s1 - s2).abs() < 1e-9),
                (Err(_), Err(_)) => {}
                other => prop_assert!(false, "{other:?}"),
            }
            match (krocc(&x, &y), krocc(&fx, &gy)) {
                (Ok(k1), Ok(k2)) => prop_assert!((k1 - k2).abs() < 1e-12),
                (Err(_), Err(_)) => {}
                other => prop_assert!(false, "{other:?}"),
            }
        }
    }
}
