use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{GmmModel, Spectral, COVARIANCE_FLOOR};
use crate::error::{Error, Result};
use crate::image::PatchMatrix;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Columns processed per work item.
pub(crate) const CHUNK: usize = 256;

/// Components whose posterior falls below this contribute nothing to the
/// MMSE estimate.
const POSTERIOR_CUTOFF: f64 = 1e-15;

/// MMSE estimates of every patch and a scalar posterior variance per patch.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoisedPatchSet {
    pub estimates: PatchMatrix,
    /// Mean over coordinates of the posterior variance, one per patch.
    pub variances: Vec<f64>,
}

/// `out = Uᵀ (Y - μ 1ᵀ)` for `n` column-major patches.
///
/// Goes straight to `matrixmultiply` so that every output column is
/// computed the same way regardless of how many columns share the call.
pub(crate) fn project(sp: &Spectral, mean: &[f64], cols: &[f64], n: usize) -> Vec<f64> {
    let d = mean.len();
    let mut centered = cols.to_vec();
    for col in centered.chunks_exact_mut(d) {
        for (v, m) in col.iter_mut().zip(mean) {
            *v -= m;
        }
    }
    let mut out = vec![0.0; d * n];
    // SAFETY: all three buffers are dense column-major with the stated
    // shapes (d x d, d x n, d x n).
    unsafe {
        matrixmultiply::dgemm(
            d,
            d,
            n,
            1.0,
            sp.basis_t.as_ptr(),
            1,
            d as isize,
            centered.as_ptr(),
            1,
            d as isize,
            0.0,
            out.as_mut_ptr(),
            1,
            d as isize,
        );
    }
    out
}

/// Per-component quantities at a fixed observation noise level.
struct NoiseTerms {
    /// `1 / (λ_k + σ²)`
    inv: Vec<f64>,
    /// `λ_k / (λ_k + σ²)`, the Wiener gains
    gain: Vec<f64>,
    /// `ln α_m - ½ (d ln 2π + Σ ln(λ_k + σ²))`
    log_scale: f64,
    /// `Σ σ² λ_k / (λ_k + σ²)`, trace of the component posterior covariance
    posterior_trace: f64,
}

fn noise_terms(model: &GmmModel, noise_var: f64) -> Vec<NoiseTerms> {
    let d = model.dim() as f64;
    model
        .spectral
        .iter()
        .zip(&model.weights)
        .map(|(sp, &alpha)| {
            let shifted: Vec<f64> = sp.values.iter().map(|l| l + noise_var).collect();
            let log_det: f64 = shifted.iter().map(|s| s.ln()).sum();
            NoiseTerms {
                inv: shifted.iter().map(|s| 1.0 / s).collect(),
                gain: sp.values.iter().zip(&shifted).map(|(l, s)| l / s).collect(),
                log_scale: alpha.ln() - 0.5 * (d * LN_2PI + log_det),
                posterior_trace: sp.values.iter().zip(&shifted).map(|(l, s)| noise_var * l / s).sum(),
            }
        })
        .collect()
}

/// Log joint `ln α_m + ln N(y_j; μ_m, C_m + σ²I)` for a batch of columns,
/// laid out component-major (`m * n + j`). Projections are returned when
/// requested.
struct BatchEval {
    log_joint: Vec<f64>,
    projections: Vec<Vec<f64>>,
}

fn evaluate_batch(model: &GmmModel, terms: &[NoiseTerms], cols: &[f64], keep_projections: bool) -> BatchEval {
    let d = model.dim();
    let n = cols.len() / d;
    let k = model.components();
    let mut log_joint = vec![0.0; k * n];
    let mut projections = Vec::with_capacity(if keep_projections { k } else { 0 });
    for m in 0..k {
        let z = project(&model.spectral[m], model.means[m].as_slice(), cols, n);
        let t = &terms[m];
        for (j, zc) in z.chunks_exact(d).enumerate() {
            let quad: f64 = zc.iter().zip(&t.inv).map(|(zi, iv)| zi * zi * iv).sum();
            log_joint[m * n + j] = t.log_scale - 0.5 * quad;
        }
        if keep_projections {
            projections.push(z);
        }
    }
    BatchEval { log_joint, projections }
}

/// `ln Σ_m exp(v_m)` over a strided column of the log-joint table.
#[inline]
fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn column_lse(log_joint: &[f64], k: usize, n: usize, j: usize) -> f64 {
    log_sum_exp((0..k).map(move |m| log_joint[m * n + j]))
}

pub(crate) fn check_sigma(sigma: f64) -> Result<f64> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::Argument(format!(
            "noise standard deviation must be finite and non-negative, got {sigma}"
        )));
    }
    Ok(sigma * sigma)
}

fn check_patch(y: &[f64], model: &GmmModel) -> Result<()> {
    if y.len() != model.dim() {
        return Err(Error::Dimension(format!(
            "patch has {} entries, model expects {}",
            y.len(),
            model.dim()
        )));
    }
    Ok(())
}

fn check_patches(patches: &PatchMatrix, model: &GmmModel) -> Result<()> {
    if model.patch_size() != Some(patches.patch_size()) {
        return Err(Error::Argument(format!(
            "patch size {} does not match model patch size {:?}",
            patches.patch_size(),
            model.patch_size()
        )));
    }
    Ok(())
}

/// Log joint table for EM, `K x n` component-major, plus per-column
/// log-likelihoods.
pub(crate) fn log_joint_table(model: &GmmModel, cols: &[f64], noise_var: f64) -> (Vec<f64>, Vec<f64>) {
    let d = model.dim();
    let k = model.components();
    let terms = noise_terms(model, noise_var);
    let n = cols.len() / d;
    let parts: Vec<(Vec<f64>, Vec<f64>)> = cols
        .par_chunks(d * CHUNK)
        .map(|chunk| {
            let b = evaluate_batch(model, &terms, chunk, false);
            let nc = chunk.len() / d;
            let lse = (0..nc).map(|j| column_lse(&b.log_joint, k, nc, j)).collect();
            (b.log_joint, lse)
        })
        .collect();
    let mut table = vec![0.0; k * n];
    let mut loglik = Vec::with_capacity(n);
    let mut offset = 0;
    for (lj, lse) in parts {
        let nc = lse.len();
        for m in 0..k {
            table[m * n + offset..m * n + offset + nc].copy_from_slice(&lj[m * nc..(m + 1) * nc]);
        }
        loglik.extend(lse);
        offset += nc;
    }
    (table, loglik)
}

/// Posterior probability of each mixture component given a noisy patch,
/// `β_m ∝ α_m N(y; μ_m, C_m + σ²I)`.
pub fn component_posteriors(y: &[f64], model: &GmmModel, sigma: f64) -> Result<Vec<f64>> {
    check_patch(y, model)?;
    let noise_var = check_sigma(sigma)?;
    let terms = noise_terms(model, noise_var);
    let b = evaluate_batch(model, &terms, y, false);
    let lse = log_sum_exp(b.log_joint.iter().copied());
    Ok(b.log_joint.iter().map(|v| (v - lse).exp()).collect())
}

/// `ln Σ_m α_m N(y; μ_m, C_m + σ²I)`.
pub fn class_log_likelihood(y: &[f64], model: &GmmModel, sigma: f64) -> Result<f64> {
    check_patch(y, model)?;
    let noise_var = check_sigma(sigma)?;
    let terms = noise_terms(model, noise_var);
    let b = evaluate_batch(model, &terms, y, false);
    Ok(log_sum_exp(b.log_joint.iter().copied()))
}

/// [`class_log_likelihood`] for every column of a patch matrix.
pub fn class_log_likelihoods(patches: &PatchMatrix, model: &GmmModel, sigma: f64) -> Result<Vec<f64>> {
    check_patches(patches, model)?;
    let noise_var = check_sigma(sigma)?;
    Ok(log_joint_table(model, patches.matrix().as_slice(), noise_var).1)
}

/// MMSE estimates and scalar posterior variances for a batch of columns.
fn mmse_batch(model: &GmmModel, terms: &[NoiseTerms], cols: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = model.dim();
    let k = model.components();
    let n = cols.len() / d;
    let b = evaluate_batch(model, terms, cols, true);
    let mut estimates = vec![0.0; d * n];
    let mut variances = Vec::with_capacity(n);
    let mut active: Vec<(f64, usize, Vec<f64>)> = Vec::with_capacity(k);
    let mut scaled = vec![0.0; d];
    for j in 0..n {
        let lse = column_lse(&b.log_joint, k, n, j);
        active.clear();
        let est = &mut estimates[j * d..(j + 1) * d];
        for m in 0..k {
            let beta = (b.log_joint[m * n + j] - lse).exp();
            if beta < POSTERIOR_CUTOFF {
                continue;
            }
            // v_m = μ_m + U diag(gain) z
            let z = &b.projections[m][j * d..(j + 1) * d];
            for ((s, zi), g) in scaled.iter_mut().zip(z).zip(&terms[m].gain) {
                *s = zi * g;
            }
            let sp = &model.spectral[m];
            let mut v = model.means[m].as_slice().to_vec();
            for (c, s) in scaled.iter().enumerate() {
                let basis_col = &sp.basis.as_slice()[c * d..(c + 1) * d];
                for (vi, u) in v.iter_mut().zip(basis_col) {
                    *vi += u * s;
                }
            }
            for (e, vi) in est.iter_mut().zip(&v) {
                *e += beta * vi;
            }
            active.push((beta, m, v));
        }
        let spread: f64 = active
            .iter()
            .map(|(beta, m, v)| {
                let dev: f64 = v.iter().zip(est.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                beta * (terms[*m].posterior_trace + dev)
            })
            .sum();
        variances.push((spread / d as f64).max(f64::MIN_POSITIVE));
    }
    (estimates, variances)
}

/// MMSE estimate `Σ_m β_m v_m(y)` of one clean patch, with the mean
/// posterior variance over its coordinates. `v_m` is the Wiener estimate
/// `μ_m + C_m (C_m + σ²I)⁻¹ (y - μ_m)`.
pub fn mmse_denoise_patch(y: &[f64], model: &GmmModel, sigma: f64) -> Result<(Vec<f64>, f64)> {
    check_patch(y, model)?;
    let noise_var = check_sigma(sigma)?;
    if noise_var == 0.0 {
        return Ok((y.to_vec(), COVARIANCE_FLOOR));
    }
    let terms = noise_terms(model, noise_var);
    let (est, var) = mmse_batch(model, &terms, y);
    Ok((est, var[0]))
}

fn denoise_columns(model: &GmmModel, cols: &[f64], noise_var: f64) -> (Vec<f64>, Vec<f64>) {
    let d = model.dim();
    if noise_var == 0.0 {
        return (cols.to_vec(), vec![COVARIANCE_FLOOR; cols.len() / d]);
    }
    let terms = noise_terms(model, noise_var);
    let parts: Vec<(Vec<f64>, Vec<f64>)> = cols
        .par_chunks(d * CHUNK)
        .map(|chunk| mmse_batch(model, &terms, chunk))
        .collect();
    let mut est = Vec::with_capacity(cols.len());
    let mut var = Vec::with_capacity(cols.len() / d);
    for (e, v) in parts {
        est.extend(e);
        var.extend(v);
    }
    (est, var)
}

/// Applies [`mmse_denoise_patch`] to every column.
pub fn denoise_patchset(patches: &PatchMatrix, model: &GmmModel, sigma: f64) -> Result<DenoisedPatchSet> {
    check_patches(patches, model)?;
    let noise_var = check_sigma(sigma)?;
    let d = model.dim();
    let (est, variances) = denoise_columns(model, patches.matrix().as_slice(), noise_var);
    Ok(DenoisedPatchSet {
        estimates: patches.with_data(DMatrix::from_vec(d, patches.count(), est))?,
        variances,
    })
}

/// Denoises each patch with the model its label selects.
pub fn denoise_patchset_labeled(
    patches: &PatchMatrix,
    models: &[&GmmModel],
    labels: &[usize],
    sigma: f64,
) -> Result<DenoisedPatchSet> {
    let noise_var = check_sigma(sigma)?;
    if labels.len() != patches.count() {
        return Err(Error::Dimension(format!(
            "{} labels for {} patches",
            labels.len(),
            patches.count()
        )));
    }
    for model in models {
        check_patches(patches, model)?;
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= models.len()) {
        return Err(Error::Argument(format!(
            "label {bad} out of range for {} models",
            models.len()
        )));
    }
    let d = patches.dim();
    let src = patches.matrix().as_slice();
    let mut est = vec![0.0; src.len()];
    let mut variances = vec![0.0; labels.len()];
    for (c, model) in models.iter().enumerate() {
        let members: Vec<usize> = (0..labels.len()).filter(|&j| labels[j] == c).collect();
        if members.is_empty() {
            continue;
        }
        let mut gathered = Vec::with_capacity(members.len() * d);
        for &j in &members {
            gathered.extend_from_slice(&src[j * d..(j + 1) * d]);
        }
        let (e, v) = denoise_columns(model, &gathered, noise_var);
        for (i, &j) in members.iter().enumerate() {
            est[j * d..(j + 1) * d].copy_from_slice(&e[i * d..(i + 1) * d]);
            variances[j] = v[i];
        }
    }
    Ok(DenoisedPatchSet {
        estimates: patches.with_data(DMatrix::from_vec(d, patches.count(), est))?,
        variances,
    })
}
