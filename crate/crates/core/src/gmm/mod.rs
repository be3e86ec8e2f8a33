//! Gaussian-mixture patch priors: training, component posteriors, MMSE
//! patch denoising and class likelihoods.

mod em;
mod eval;

pub use em::{em_fit_clean, em_fit_noisy, EmOptions, GmmFit};
pub use eval::{
    class_log_likelihood, class_log_likelihoods, component_posteriors, denoise_patchset, denoise_patchset_labeled,
    mmse_denoise_patch, DenoisedPatchSet,
};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Smallest admissible covariance eigenvalue, on the `[0, 255]` scale.
pub const COVARIANCE_FLOOR: f64 = 1e-4;

/// Eigenvalues below `COVARIANCE_FLOOR * LOAD_SLACK` are rejected on
/// construction; anything between that and the floor is clamped.
const LOAD_SLACK: f64 = 0.5;

/// Cached spectral factorization `C = U diag(λ) Uᵀ` of one covariance.
#[derive(Clone, Debug)]
pub(crate) struct Spectral {
    /// `Uᵀ`, so projections are a single product with centered patches.
    pub(crate) basis_t: DMatrix<f64>,
    /// `U`
    pub(crate) basis: DMatrix<f64>,
    pub(crate) values: Vec<f64>,
}

impl Spectral {
    fn of(cov: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(cov.clone());
        Spectral {
            basis_t: eig.eigenvectors.transpose(),
            basis: eig.eigenvectors,
            values: eig.eigenvalues.iter().copied().collect(),
        }
    }

    fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// A `K`-component Gaussian mixture, usually over vectorized `p x p` patches.
#[derive(Clone, Debug)]
pub struct GmmModel {
    dim: usize,
    patch_size: Option<usize>,
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
    spectral: Vec<Spectral>,
}

impl PartialEq for GmmModel {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.patch_size == other.patch_size
            && self.weights == other.weights
            && self.means == other.means
            && self.covariances == other.covariances
    }
}

impl GmmModel {
    /// Mixture over vectorized `p x p` patches (`d = p²`).
    pub fn for_patches(
        patch_size: usize,
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        covariances: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        if patch_size == 0 {
            return Err(Error::Argument("patch size must be positive".into()));
        }
        let mut model = Self::build(patch_size * patch_size, weights, means, covariances)?;
        model.patch_size = Some(patch_size);
        Ok(model)
    }

    /// Mixture over plain vectors; the dimension is taken from the means.
    pub fn new(weights: Vec<f64>, means: Vec<DVector<f64>>, covariances: Vec<DMatrix<f64>>) -> Result<Self> {
        let d = means.first().map_or(0, |m| m.len());
        if d == 0 {
            return Err(Error::Argument("mixture needs at least one non-empty mean".into()));
        }
        Self::build(d, weights, means, covariances)
    }

    /// Validates and assembles a mixture. Covariances must be symmetric to
    /// 1e-10 and positive definite; eigenvalues slightly under the floor are
    /// clamped to it in the cached factorization.
    fn build(d: usize, weights: Vec<f64>, means: Vec<DVector<f64>>, covariances: Vec<DMatrix<f64>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::Argument("mixture needs at least one component".into()));
        }
        if means.len() != k || covariances.len() != k {
            return Err(Error::Dimension(format!(
                "{k} weights but {} means and {} covariances",
                means.len(),
                covariances.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Data("mixture weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Data(format!("mixture weights sum to {total}, not 1")));
        }
        let mut spectral = Vec::with_capacity(k);
        for (m, (mean, cov)) in means.iter().zip(&covariances).enumerate() {
            if mean.len() != d || cov.nrows() != d || cov.ncols() != d {
                return Err(Error::Dimension(format!(
                    "component {m} has mean length {} and covariance {}x{}, expected d = {d}",
                    mean.len(),
                    cov.nrows(),
                    cov.ncols()
                )));
            }
            if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("component {m} has non-finite parameters")));
            }
            let asym = (cov - cov.transpose()).amax();
            if asym > 1e-10 {
                return Err(Error::Data(format!(
                    "covariance {m} is not symmetric (max deviation {asym:e})"
                )));
            }
            let mut sp = Spectral::of(cov);
            if sp.min_value() < COVARIANCE_FLOOR * LOAD_SLACK {
                return Err(Error::Data(format!(
                    "covariance {m} has eigenvalue {:e} below the floor {COVARIANCE_FLOOR:e}",
                    sp.min_value()
                )));
            }
            for v in sp.values.iter_mut() {
                *v = v.max(COVARIANCE_FLOOR);
            }
            spectral.push(sp);
        }
        Ok(GmmModel {
            dim: d,
            patch_size: None,
            weights,
            means,
            covariances,
            spectral,
        })
    }

    /// Builds a model from already-factored covariances, as produced by the
    /// EM M-step. The stored covariance is reassembled from the factors and
    /// symmetrized.
    pub(crate) fn from_spectral(
        patch_size: usize,
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        spectral: Vec<Spectral>,
    ) -> Self {
        let covariances = spectral
            .iter()
            .map(|sp| {
                let scaled = DMatrix::from_fn(sp.basis.nrows(), sp.basis.ncols(), |i, j| {
                    sp.basis[(i, j)] * sp.values[j]
                });
                let c = &scaled * &sp.basis_t;
                (&c + c.transpose()) * 0.5
            })
            .collect();
        GmmModel {
            dim: patch_size * patch_size,
            patch_size: Some(patch_size),
            weights,
            means,
            covariances,
            spectral,
        }
    }

    /// Side length of the patches this mixture models, if it is bound to a
    /// patch geometry.
    #[inline]
    pub fn patch_size(&self) -> Option<usize> {
        self.patch_size
    }

    /// Vector dimension `d`.
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of mixture components `K`.
    #[inline]
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    /// Eigenvalues of covariance `m` as used in evaluation.
    pub fn eigenvalues(&self, m: usize) -> &[f64] {
        &self.spectral[m].values
    }

    /// Prior mean `Σ α_m μ_m`.
    pub fn mean(&self) -> DVector<f64> {
        self.weights
            .iter()
            .zip(&self.means)
            .fold(DVector::zeros(self.dim()), |acc, (w, mu)| acc + mu * *w)
    }

    /// Copy of this mixture with `extra * I` added to every covariance.
    pub fn with_added_variance(&self, extra: f64) -> Result<Self> {
        let covs = self
            .covariances
            .iter()
            .map(|c| c + DMatrix::identity(c.nrows(), c.ncols()) * extra)
            .collect();
        let mut model = Self::build(self.dim, self.weights.clone(), self.means.clone(), covs)?;
        model.patch_size = self.patch_size;
        Ok(model)
    }
}
