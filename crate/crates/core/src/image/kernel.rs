use crate::error::{Error, Result};

/// A normalized convolution kernel with odd dimensions, centered at
/// `(rows / 2, cols / 2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlurKernel {
    rows: usize,
    cols: usize,
    taps: Vec<f64>,
}

impl BlurKernel {
    /// Builds a kernel from row-major taps and rescales them to unit sum.
    pub fn new(rows: usize, cols: usize, taps: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || rows.is_multiple_of(2) || cols.is_multiple_of(2) {
            return Err(Error::Dimension(format!(
                "kernel dimensions must be odd and positive, got {rows}x{cols}"
            )));
        }
        if taps.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} kernel needs {} taps, got {}",
                rows * cols,
                taps.len()
            )));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::Data("kernel taps must be finite".into()));
        }
        let sum: f64 = taps.iter().sum();
        if sum.abs() < 1e-300 || !sum.is_finite() {
            return Err(Error::Data(format!("kernel taps sum to {sum}, cannot normalize")));
        }
        Ok(BlurKernel {
            rows,
            cols,
            taps: taps.into_iter().map(|t| t / sum).collect(),
        })
    }

    pub fn identity() -> Self {
        BlurKernel {
            rows: 1,
            cols: 1,
            taps: vec![1.0],
        }
    }

    /// `size x size` box filter.
    pub fn uniform(size: usize) -> Result<Self> {
        Self::new(size, size, vec![1.0; size * size])
    }

    /// Taps `1 / (1 + i² + j²)` for `i, j` in `-radius..=radius`.
    pub fn inverse_quadratic(radius: usize) -> Self {
        let n = 2 * radius + 1;
        let r = radius as f64;
        let taps = (0..n * n)
            .map(|k| {
                let i = (k / n) as f64 - r;
                let j = (k % n) as f64 - r;
                1.0 / (1.0 + i * i + j * j)
            })
            .collect();
        Self::new(n, n, taps).expect("positive taps")
    }

    /// Outer product `v vᵀ` of a 1-D profile.
    pub fn separable(profile: &[f64]) -> Result<Self> {
        let n = profile.len();
        let taps = (0..n * n).map(|k| profile[k / n] * profile[k % n]).collect();
        Self::new(n, n, taps)
    }

    /// Sampled isotropic Gaussian on a `size x size` support.
    pub fn gaussian(size: usize, std: f64) -> Result<Self> {
        if !(std > 0.0) {
            return Err(Error::Argument(format!("gaussian std must be positive, got {std}")));
        }
        let c = (size / 2) as f64;
        let taps = (0..size * size)
            .map(|k| {
                let i = (k / size) as f64 - c;
                let j = (k % size) as f64 - c;
                (-(i * i + j * j) / (2.0 * std * std)).exp()
            })
            .collect();
        Self::new(size, size, taps)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn tap(&self, i: usize, j: usize) -> f64 {
        self.taps[i * self.cols + j]
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().sum()
    }

    pub fn center(&self) -> (usize, usize) {
        (self.rows / 2, self.cols / 2)
    }
}
