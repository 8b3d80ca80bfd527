use super::window::GaussianWindow;
use crate::error::{Error, Result};

/// Saturation constant in the MSCN denominator.
pub const DEFAULT_C1: f64 = 1.0;

/// Mean-subtracted contrast-normalized coefficients of a 2-D map.
#[derive(Clone, Debug, PartialEq)]
pub struct MscnMap {
    pub width: usize,
    pub height: usize,
    pub coefficients: Vec<f64>,
}

/// Computes `(x - mu) / (sigma + c1)` where `mu` and `sigma` are the local
/// window-weighted mean and (population) standard deviation.
///
/// Borders use symmetric padding (`... b a | a b c ... | c b ...`). The
/// convolution is separable, so cost is `O(HW (K + L))`.
pub fn mscn(
    map: &[f32],
    width: usize,
    height: usize,
    window: &GaussianWindow,
    c1: f64,
) -> Result<MscnMap> {
    if width == 0 || height == 0 || map.len() != width * height {
        return Err(Error::Shape(format!(
            "{} samples for a {width}x{height} map",
            map.len()
        )));
    }
    // MSCN is invariant to a global offset; removing it keeps the
    // E[x^2] - mu^2 variance well conditioned.
    let offset = map.iter().map(|&v| v as f64).sum::<f64>() / map.len() as f64;
    let x: Vec<f64> = map.iter().map(|&v| v as f64 - offset).collect();
    let x2: Vec<f64> = x.iter().map(|v| v * v).collect();

    let mu = blur(&x, width, height, window);
    let mu2 = blur(&x2, width, height, window);

    let coefficients = x
        .iter()
        .zip(mu.iter().zip(&mu2))
        .map(|(&v, (&m, &m2))| {
            let var = (m2 - m * m).max(0.0);
            (v - m) / (var.sqrt() + c1)
        })
        .collect();
    Ok(MscnMap {
        width,
        height,
        coefficients,
    })
}

fn blur(src: &[f64], width: usize, height: usize, window: &GaussianWindow) -> Vec<f64> {
    let row = window.row_kernel();
    let col = window.col_kernel();
    let (k, l) = (window.half_width() as i64, window.half_height() as i64);

    let mut horizontal = vec![0.0; src.len()];
    for y in 0..height {
        let line = &src[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (i, &w) in row.iter().enumerate() {
                acc += w * line[reflect(x as i64 + i as i64 - k, width)];
            }
            horizontal[y * width + x] = acc;
        }
    }

    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        for (j, &w) in col.iter().enumerate() {
            let sy = reflect(y as i64 + j as i64 - l, height);
            let from = &horizontal[sy * width..(sy + 1) * width];
            let to = &mut out[y * width..(y + 1) * width];
            for (o, &v) in to.iter_mut().zip(from) {
                *o += w * v;
            }
        }
    }
    out
}

/// Symmetric (edge-repeating) reflection, valid for any offset.
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nss::window::build_window;

    #[test]
    fn reflect_is_symmetric_padding() {
        let got: Vec<usize> = (-4..8).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0]);
        assert_eq!(reflect(-3, 1), 0);
        assert_eq!(reflect(5, 2), 1);
    }

    #[test]
    fn constant_map_is_zero() {
        let w = build_window(3, 3).unwrap();
        let out = mscn(&[5.0; 64], 8, 8, &w, DEFAULT_C1).unwrap();
        assert!(out.coefficients.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_pixel_map() {
        let w = build_window(3, 3).unwrap();
        let out = mscn(&[3.5], 1, 1, &w, DEFAULT_C1).unwrap();
        assert_eq!(out.coefficients, vec![0.0]);
    }

    #[test]
    fn shape_is_checked() {
        let w = build_window(3, 3).unwrap();
        assert!(mscn(&[0.0; 5], 2, 2, &w, DEFAULT_C1).is_err());
    }
}
