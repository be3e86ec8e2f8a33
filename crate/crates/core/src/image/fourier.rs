use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{BlurKernel, Image};
use crate::error::{Error, Result};

/// A 2-D discrete Fourier transform, row-major, unnormalized forward.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub height: usize,
    pub width: usize,
    pub data: Vec<Complex64>,
}

impl Spectrum {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.width + col]
    }
}

/// Row and column FFT plans for one image shape (any sizes, not only powers
/// of two).
pub(crate) struct Fft2 {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub(crate) fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let (h, w) = (self.height, self.width);
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        row.process(data);
        let mut column = vec![Complex64::new(0.0, 0.0); h];
        for c in 0..w {
            for r in 0..h {
                column[r] = data[r * w + c];
            }
            col.process(&mut column);
            for r in 0..h {
                data[r * w + c] = column[r];
            }
        }
    }

    pub(crate) fn forward(&self, image: &Image) -> Spectrum {
        debug_assert_eq!(image.shape(), (self.height, self.width));
        let mut data: Vec<Complex64> = image.as_slice().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        Spectrum {
            height: self.height,
            width: self.width,
            data,
        }
    }

    /// Inverse transform keeping the real part.
    pub(crate) fn inverse_real(&self, spectrum: &Spectrum) -> Image {
        let mut data = spectrum.data.clone();
        self.transform(&mut data, true);
        let scale = 1.0 / (self.height * self.width) as f64;
        Image::from_raw(self.height, self.width, data.iter().map(|z| z.re * scale).collect())
    }
}

pub fn fft2(image: &Image) -> Spectrum {
    Fft2::new(image.height(), image.width()).forward(image)
}

pub fn ifft2_real(spectrum: &Spectrum) -> Image {
    Fft2::new(spectrum.height, spectrum.width).inverse_real(spectrum)
}

fn check_fits(kernel: &BlurKernel, shape: (usize, usize)) -> Result<()> {
    if kernel.rows() > shape.0 || kernel.cols() > shape.1 {
        return Err(Error::Dimension(format!(
            "{}x{} kernel does not fit a {}x{} grid",
            kernel.rows(),
            kernel.cols(),
            shape.0,
            shape.1
        )));
    }
    Ok(())
}

/// Kernel zero-padded to `shape` with its center moved to `(0, 0)`.
pub(crate) fn padded_kernel(kernel: &BlurKernel, shape: (usize, usize)) -> Image {
    let (h, w) = shape;
    let (cr, cc) = kernel.center();
    let mut out = Image::zeros(h, w);
    for i in 0..kernel.rows() {
        for j in 0..kernel.cols() {
            let r = (i + h - cr) % h;
            let c = (j + w - cc) % w;
            let prev = out.get(r, c);
            out.set(r, c, prev + kernel.tap(i, j));
        }
    }
    out
}

/// Frequency response of periodic convolution with `kernel` on a grid of
/// the given shape. The DC bin equals the kernel sum.
pub fn transfer_function(kernel: &BlurKernel, shape: (usize, usize)) -> Result<Spectrum> {
    check_fits(kernel, shape)?;
    Ok(Fft2::new(shape.0, shape.1).forward(&padded_kernel(kernel, shape)))
}

fn filter(image: &Image, kernel: &BlurKernel, adjoint: bool) -> Result<Image> {
    check_fits(kernel, image.shape())?;
    let plan = Fft2::new(image.height(), image.width());
    let response = plan.forward(&padded_kernel(kernel, image.shape()));
    let mut spec = plan.forward(image);
    for (s, h) in spec.data.iter_mut().zip(&response.data) {
        *s *= if adjoint { h.conj() } else { *h };
    }
    Ok(plan.inverse_real(&spec))
}

/// Circular convolution computed through the FFT.
pub fn convolve_periodic(image: &Image, kernel: &BlurKernel) -> Result<Image> {
    filter(image, kernel, false)
}

/// Circular correlation, the adjoint of [`convolve_periodic`].
pub fn correlate_periodic(image: &Image, kernel: &BlurKernel) -> Result<Image> {
    filter(image, kernel, true)
}

/// Circular convolution by direct summation.
pub fn convolve_periodic_direct(image: &Image, kernel: &BlurKernel) -> Result<Image> {
    check_fits(kernel, image.shape())?;
    let (h, w) = image.shape();
    let (cr, cc) = kernel.center();
    Ok(Image::from_fn(h, w, |r, c| {
        let mut acc = 0.0;
        for i in 0..kernel.rows() {
            let sr = (r + cr + h - i % h) % h;
            for j in 0..kernel.cols() {
                let sc = (c + cc + w - j % w) % w;
                acc += kernel.tap(i, j) * image.get(sr, sc);
            }
        }
        acc
    }))
}
