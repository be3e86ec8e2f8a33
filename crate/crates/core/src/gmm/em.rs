use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::eval::{check_sigma, log_joint_table};
use super::{GmmModel, Spectral, COVARIANCE_FLOOR};
use crate::error::{Error, Result};
use crate::image::PatchMatrix;

/// Seeding draws from at most this many patches per component.
const SEED_SAMPLES_PER_COMPONENT: usize = 50;

/// Components with less responsibility mass than this keep their previous
/// mean and covariance.
const DEAD_COMPONENT_MASS: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct EmOptions {
    pub components: usize,
    pub max_iters: usize,
    /// Stop when the relative gain in average log-likelihood drops below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            components: 20,
            max_iters: 100,
            tol: 1e-6,
            seed: 0,
        }
    }
}

/// A trained mixture and the average log-likelihood of the training
/// patches before each M-step (the last entry scores the returned model).
#[derive(Clone, Debug)]
pub struct GmmFit {
    pub model: GmmModel,
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// EM on clean patches.
pub fn em_fit_clean(patches: &PatchMatrix, options: &EmOptions) -> Result<GmmFit> {
    fit(patches, 0.0, options)
}

/// EM for the clean-patch mixture given patches observed under additive
/// white noise of standard deviation `sigma`.
///
/// Responsibilities use the noisy-domain densities `N(y; μ, C + σ²I)`; the
/// M-step computes the noisy scatter, subtracts `σ²I` and floors the
/// eigenvalues. This is the exact maximizer of the noisy-domain objective
/// under the constraint `C ⪰ ε I`, so the likelihood never decreases.
pub fn em_fit_noisy(patches: &PatchMatrix, sigma: f64, options: &EmOptions) -> Result<GmmFit> {
    let noise_var = check_sigma(sigma)?;
    fit(patches, noise_var, options)
}

fn fit(patches: &PatchMatrix, noise_var: f64, options: &EmOptions) -> Result<GmmFit> {
    let k = options.components;
    let n = patches.count();
    let d = patches.dim();
    if k == 0 {
        return Err(Error::Argument("component count must be positive".into()));
    }
    if k > n {
        return Err(Error::Argument(format!(
            "{k} components requested from only {n} patches"
        )));
    }
    if options.max_iters == 0 {
        return Err(Error::Argument("max_iters must be at least 1".into()));
    }
    let cols = patches.matrix().as_slice();
    if cols.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("training patches contain non-finite values".into()));
    }

    let mut model = initialize(cols, d, patches.patch_size(), k, noise_var, options.seed);
    let mut trace = Vec::with_capacity(options.max_iters + 1);
    let mut converged = false;
    let mut iterations = 0;
    loop {
        let (table, loglik) = log_joint_table(&model, cols, noise_var);
        let avg = loglik.iter().sum::<f64>() / n as f64;
        if let Some(&prev) = trace.last() {
            let gain = (avg - prev) / f64::abs(prev).max(f64::MIN_POSITIVE);
            trace.push(avg);
            if gain < options.tol {
                converged = true;
                break;
            }
        } else {
            trace.push(avg);
        }
        if iterations == options.max_iters {
            break;
        }
        let resp = responsibilities(table, &loglik, k);
        model = m_step(cols, d, patches.patch_size(), &resp, noise_var, &model);
        iterations += 1;
    }
    Ok(GmmFit {
        model,
        log_likelihood_trace: trace,
        iterations,
        converged,
    })
}

/// Turns the log-joint table into responsibilities in place.
fn responsibilities(mut table: Vec<f64>, loglik: &[f64], k: usize) -> Vec<f64> {
    let n = loglik.len();
    for m in 0..k {
        for (r, l) in table[m * n..(m + 1) * n].iter_mut().zip(loglik) {
            *r = (*r - l).exp();
        }
    }
    table
}

/// Weighted scatter `Σ_j w_j (y_j - μ)(y_j - μ)ᵀ / total` minus the noise
/// variance, factored with eigenvalues floored.
fn floored_covariance(
    cols: &[f64],
    d: usize,
    mean: &[f64],
    weights: impl Iterator<Item = f64>,
    total: f64,
    noise_var: f64,
) -> Spectral {
    let mut scaled = Vec::with_capacity(cols.len());
    for (col, w) in cols.chunks_exact(d).zip(weights) {
        let s = w.sqrt();
        scaled.extend(col.iter().zip(mean).map(|(v, m)| (v - m) * s));
    }
    let n = scaled.len() / d;
    let mut scatter = DMatrix::<f64>::zeros(d, d);
    // SAFETY: `scaled` is d x n column-major; reading it with swapped
    // strides yields its transpose. `scatter` is d x d column-major.
    unsafe {
        matrixmultiply::dgemm(
            d,
            n,
            d,
            1.0 / total,
            scaled.as_ptr(),
            1,
            d as isize,
            scaled.as_ptr(),
            d as isize,
            1,
            0.0,
            scatter.as_mut_ptr(),
            1,
            d as isize,
        );
    }
    for i in 0..d {
        scatter[(i, i)] -= noise_var;
    }
    let symmetric = (&scatter + scatter.transpose()) * 0.5;
    let mut sp = Spectral::of(&symmetric);
    for v in sp.values.iter_mut() {
        *v = v.max(COVARIANCE_FLOOR);
    }
    sp
}

fn m_step(cols: &[f64], d: usize, patch_size: usize, resp: &[f64], noise_var: f64, prev: &GmmModel) -> GmmModel {
    let n = cols.len() / d;
    let k = prev.components();
    let mut masses = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut spectral = Vec::with_capacity(k);
    for m in 0..k {
        let r = &resp[m * n..(m + 1) * n];
        let mass: f64 = r.iter().sum();
        masses.push(mass);
        if mass < DEAD_COMPONENT_MASS {
            means.push(prev.means[m].clone());
            spectral.push(prev.spectral[m].clone());
            continue;
        }
        let mut mean = vec![0.0; d];
        for (col, &w) in cols.chunks_exact(d).zip(r) {
            for (acc, v) in mean.iter_mut().zip(col) {
                *acc += w * v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= mass);
        spectral.push(floored_covariance(cols, d, &mean, r.iter().copied(), mass, noise_var));
        means.push(DVector::from_vec(mean));
    }
    let total: f64 = masses.iter().sum();
    let weights = masses.iter().map(|m| m / total).collect();
    GmmModel::from_spectral(patch_size, weights, means, spectral)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding on a random subsample, then one hard-assignment
/// M-step over all patches.
fn initialize(cols: &[f64], d: usize, patch_size: usize, k: usize, noise_var: f64, seed: u64) -> GmmModel {
    let n = cols.len() / d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool: Vec<usize> = index::sample(&mut rng, n, n.min(SEED_SAMPLES_PER_COMPONENT * k)).into_vec();
    let col = |j: usize| &cols[j * d..(j + 1) * d];

    let mut seeds = vec![pool[rng.random_range(0..pool.len())]];
    let mut nearest: Vec<f64> = pool.iter().map(|&j| sq_dist(col(j), col(seeds[0]))).collect();
    while seeds.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = pool.len() - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..pool.len())
        };
        let s = pool[pick];
        seeds.push(s);
        for (dist, &j) in nearest.iter_mut().zip(&pool) {
            *dist = dist.min(sq_dist(col(j), col(s)));
        }
    }

    let assignment: Vec<usize> = (0..n)
        .map(|j| {
            let mut best = (f64::INFINITY, 0);
            for (m, &s) in seeds.iter().enumerate() {
                let dist = sq_dist(col(j), col(s));
                if dist < best.0 {
                    best = (dist, m);
                }
            }
            best.1
        })
        .collect();

    let global_mean: Vec<f64> = (0..d)
        .map(|i| cols.chunks_exact(d).map(|c| c[i]).sum::<f64>() / n as f64)
        .collect();
    let mut global: Option<Spectral> = None;

    let mut masses = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut spectral = Vec::with_capacity(k);
    for m in 0..k {
        let count = assignment.iter().filter(|&&a| a == m).count();
        if count == 0 {
            masses.push(1.0);
            means.push(DVector::from_column_slice(col(seeds[m])));
            let g = global.get_or_insert_with(|| {
                floored_covariance(cols, d, &global_mean, std::iter::repeat(1.0), n as f64, noise_var)
            });
            spectral.push(g.clone());
            continue;
        }
        let indicator = assignment.iter().map(|&a| if a == m { 1.0 } else { 0.0 });
        let mut mean = vec![0.0; d];
        for (c, _) in cols.chunks_exact(d).zip(&assignment).filter(|(_, &a)| a == m) {
            for (acc, v) in mean.iter_mut().zip(c) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= count as f64);
        spectral.push(floored_covariance(cols, d, &mean, indicator, count as f64, noise_var));
        means.push(DVector::from_vec(mean));
        masses.push(count as f64);
    }
    let total: f64 = masses.iter().sum();
    GmmModel::from_spectral(patch_size, masses.iter().map(|m| m / total).collect(), means, spectral)
}
