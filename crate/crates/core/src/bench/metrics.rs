use std::fmt;

use crate::error::{Error, Result};
use crate::image::Image;

/// Peak intensity for 8-bit data.
pub const PEAK: f64 = 255.0;

pub fn mse(estimate: &Image, reference: &Image) -> Result<f64> {
    estimate.ensure_same_shape(reference)?;
    let sum: f64 = estimate
        .as_slice()
        .iter()
        .zip(reference.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / estimate.len() as f64)
}

/// `10 log10(peak² / MSE)`; `+inf` for identical images.
pub fn psnr_with_peak(estimate: &Image, reference: &Image, peak: f64) -> Result<f64> {
    let e = mse(estimate, reference)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / e).log10())
}

pub fn psnr(estimate: &Image, reference: &Image) -> Result<f64> {
    psnr_with_peak(estimate, reference, PEAK)
}

/// Output PSNR minus input PSNR. Zero when the two are equal, including
/// when both are infinite.
pub fn isnr(observed: &Image, estimate: &Image, reference: &Image) -> Result<f64> {
    let out = psnr(estimate, reference)?;
    let inp = psnr(observed, reference)?;
    Ok(if out == inp { 0.0 } else { out - inp })
}

/// `10 log10(var(Ax) / σ²)`; `+inf` for noise-free observations.
pub fn bsnr(blurred_noiseless: &Image, noise_variance: f64) -> Result<f64> {
    if !(noise_variance.is_finite() && noise_variance >= 0.0) {
        return Err(Error::Argument(format!(
            "noise variance must be finite and >= 0, got {noise_variance}"
        )));
    }
    if noise_variance == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (blurred_noiseless.variance() / noise_variance).log10())
}

/// Decibel value with two decimals, or `inf`.
pub fn format_db(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:.2}")
    }
}

/// Quality figures of one restoration, in dB.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub psnr_in: f64,
    pub psnr_out: f64,
    pub isnr: f64,
    pub bsnr: f64,
}

impl MetricReport {
    pub fn compute(
        reference: &Image,
        observed: &Image,
        estimate: &Image,
        blurred_noiseless: &Image,
        noise_variance: f64,
    ) -> Result<Self> {
        Ok(MetricReport {
            psnr_in: psnr(observed, reference)?,
            psnr_out: psnr(estimate, reference)?,
            isnr: isnr(observed, estimate, reference)?,
            bsnr: bsnr(blurred_noiseless, noise_variance)?,
        })
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "bsnr {}", format_db(self.bsnr))?;
        writeln!(f, "psnr_in {}", format_db(self.psnr_in))?;
        writeln!(f, "psnr_out {}", format_db(self.psnr_out))?;
        writeln!(f, "isnr {}", format_db(self.isnr))
    }
}
