use crate::error::{Error, Result};

/// Circularly symmetric Gaussian weights over a `(2K+1) x (2L+1)` support,
/// normalized to unit sum.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianWindow {
    half_width: usize,
    half_height: usize,
    sigma: f64,
    // Normalized 1-D factors; the 2-D window is their outer product.
    row: Vec<f64>,
    col: Vec<f64>,
}

/// Builds the window with `sigma = K / 3`, so the support reaches three
/// standard deviations.
pub fn build_window(k: usize, l: usize) -> Result<GaussianWindow> {
    build_window_with_sigma(k, l, k as f64 / 3.0)
}

pub fn build_window_with_sigma(k: usize, l: usize, sigma: f64) -> Result<GaussianWindow> {
    if k < 1 || l < 1 {
        return Err(Error::InvalidConfig(format!(
            "window half sizes must be >= 1, got {k}x{l}"
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "window sigma must be positive, got {sigma}"
        )));
    }
    Ok(GaussianWindow {
        half_width: k,
        half_height: l,
        sigma,
        row: gaussian_1d(k, sigma),
        col: gaussian_1d(l, sigma),
    })
}

fn gaussian_1d(half: usize, sigma: f64) -> Vec<f64> {
    let raw: Vec<f64> = (-(half as i64)..=half as i64)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

impl Default for GaussianWindow {
    fn default() -> Self {
        build_window(3, 3).expect("3x3 half-size window is valid")
    }
}

impl GaussianWindow {
    /// Horizontal half size `K`.
    pub fn half_width(&self) -> usize {
        self.half_width
    }

    /// Vertical half size `L`.
    pub fn half_height(&self) -> usize {
        self.half_height
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Weight at horizontal offset `k` and vertical offset `l`, both
    /// centered on zero.
    pub fn weight(&self, k: i64, l: i64) -> f64 {
        let (kk, ll) = (k + self.half_width as i64, l + self.half_height as i64);
        assert!(
            (0..self.row.len() as i64).contains(&kk) && (0..self.col.len() as i64).contains(&ll),
            "offset ({k}, {l}) outside the window"
        );
        self.row[kk as usize] * self.col[ll as usize]
    }

    /// The full window, row-major over `l` then `k`.
    pub fn weights(&self) -> Vec<f64> {
        self.col
            .iter()
            .flat_map(|&c| self.row.iter().map(move |&r| r * c))
            .collect()
    }

    pub(crate) fn row_kernel(&self) -> &[f64] {
        &self.row
    }

    pub(crate) fn col_kernel(&self) -> &[f64] {
        &self.col
    }
}
