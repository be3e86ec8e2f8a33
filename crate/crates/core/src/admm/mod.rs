//! Plug-and-play ADMM restoration with a class-adapted GMM patch denoiser.

use std::time::Instant;

use rustfft::num_complex::Complex64;

use crate::classify::{classify_patches, ClassLibrary, ClassifyMode, LabelField};
use crate::error::{Error, Result};
use crate::gmm::{denoise_patchset_labeled, em_fit_clean, EmOptions};
use crate::image::{aggregate_patches, convolve_periodic, extract_patches, transfer_function, BlurKernel, Fft2, Image};

/// Linear part of the observation model.
#[derive(Clone, Debug, PartialEq)]
pub enum Operator {
    Identity,
    PeriodicConvolution(BlurKernel),
}

/// `y = A x + n` with `n ~ N(0, sigma² I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DegradationModel {
    operator: Operator,
    sigma: f64,
}

impl DegradationModel {
    pub fn new(operator: Operator, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::Argument(format!(
                "noise level must be finite and >= 0, got {sigma}"
            )));
        }
        Ok(DegradationModel { operator, sigma })
    }

    pub fn identity(sigma: f64) -> Result<Self> {
        Self::new(Operator::Identity, sigma)
    }

    pub fn blur(kernel: BlurKernel, sigma: f64) -> Result<Self> {
        Self::new(Operator::PeriodicConvolution(kernel), sigma)
    }

    pub fn operator(&self) -> &Operator {
        &self.operator
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Noise-free forward map `A x`.
    pub fn apply(&self, x: &Image) -> Result<Image> {
        match &self.operator {
            Operator::Identity => Ok(x.clone()),
            Operator::PeriodicConvolution(k) => convolve_periodic(x, k),
        }
    }

    /// Denoiser noise level paired with penalty `mu`. The data term is
    /// `½‖Ax − y‖²` with σ² folded into `mu`, so the prior subproblem is a
    /// Gaussian denoising problem with variance `σ²/μ`.
    pub fn effective_sigma(&self, mu: f64) -> f64 {
        self.sigma / mu.sqrt()
    }
}

/// Iterates of the scaled-form ADMM.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmmState {
    pub x: Image,
    pub v: Image,
    pub d: Image,
    pub mu: f64,
    pub k: usize,
}

impl AdmmState {
    pub fn new(x: Image, v: Image, d: Image, mu: f64) -> Result<Self> {
        x.ensure_same_shape(&v)?;
        x.ensure_same_shape(&d)?;
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(Error::Argument(format!("penalty must be finite and >= 0, got {mu}")));
        }
        if !(x.is_finite() && v.is_finite() && d.is_finite()) {
            return Err(Error::Data("ADMM state must be finite".into()));
        }
        Ok(AdmmState { x, v, d, mu, k: 0 })
    }

    /// `x = v = y`, `d = 0`.
    pub fn initial(y: &Image, mu: f64) -> Result<Self> {
        Self::new(y.clone(), y.clone(), Image::zeros(y.height(), y.width()), mu)
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.v.is_finite() && self.d.is_finite()
    }
}

/// Parameters of one restoration run.
#[derive(Clone, Debug, PartialEq)]
pub struct RestorationConfig {
    pub patch_size: usize,
    /// Penalty; `None` picks [`default_mu`].
    pub mu: Option<f64>,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub classify_mode: ClassifyMode,
    pub beta: f64,
    /// Iteration after which the generic model is retrained on the current
    /// estimate; `None` disables the switch.
    pub switch_iteration: Option<usize>,
    pub switch_components: usize,
    pub seed: u64,
}

impl Default for RestorationConfig {
    fn default() -> Self {
        RestorationConfig {
            patch_size: 8,
            mu: None,
            max_iters: 200,
            rel_tol: 1e-4,
            classify_mode: ClassifyMode::Ml,
            beta: 2.0,
            switch_iteration: Some(100),
            switch_components: 20,
            seed: 0,
        }
    }
}

impl RestorationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 2 {
            return Err(Error::Argument(format!(
                "patch size must be >= 2, got {}",
                self.patch_size
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Argument("max_iters must be >= 1".into()));
        }
        if let Some(mu) = self.mu {
            if !(mu.is_finite() && mu > 0.0) {
                return Err(Error::Argument(format!("mu must be finite and > 0, got {mu}")));
            }
        }
        if !(self.rel_tol.is_finite() && self.rel_tol >= 0.0) {
            return Err(Error::Argument(format!(
                "rel_tol must be finite and >= 0, got {}",
                self.rel_tol
            )));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Argument(format!(
                "beta must be finite and >= 0, got {}",
                self.beta
            )));
        }
        if let Some(t) = self.switch_iteration {
            if t > self.max_iters {
                return Err(Error::Argument(format!(
                    "switch iteration {t} exceeds max_iters {}",
                    self.max_iters
                )));
            }
            if self.switch_components == 0 {
                return Err(Error::Argument("switch_components must be >= 1".into()));
            }
        }
        Ok(())
    }

    /// The penalty to use against noise level `sigma`.
    pub fn resolved_mu(&self, sigma: f64) -> f64 {
        self.mu.unwrap_or_else(|| default_mu(sigma))
    }
}

/// Fallback penalty when none is given: `0.05 σ²`, clamped to
/// `[1e-6, 1e6]`. The denoiser then runs at `σ/√μ = √20`.
pub fn default_mu(sigma: f64) -> f64 {
    (DEFAULT_MU_SCALE * sigma * sigma).clamp(1e-6, 1e6)
}

pub const DEFAULT_MU_SCALE: f64 = 0.05;

/// Cached solver for `(AᵀA + μI) x = Aᵀy + μ w`.
pub struct XSolver {
    mu: f64,
    y: Image,
    fourier: Option<FourierSolve>,
}

struct FourierSolve {
    plan: Fft2,
    /// `conj(H) · F(y)`
    aty: Vec<Complex64>,
    /// `|H|² + μ`
    denom: Vec<f64>,
}

impl XSolver {
    pub fn new(model: &DegradationModel, y: &Image, mu: f64) -> Result<Self> {
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(Error::Argument(format!("penalty must be finite and >= 0, got {mu}")));
        }
        let fourier = match &model.operator {
            Operator::Identity => None,
            Operator::PeriodicConvolution(kernel) => {
                let h = transfer_function(kernel, y.shape())?;
                let plan = Fft2::new(y.height(), y.width());
                let fy = plan.forward(y);
                let denom: Vec<f64> = h.data.iter().map(|z| z.norm_sqr() + mu).collect();
                let smallest = denom.iter().copied().fold(f64::INFINITY, f64::min);
                if smallest <= f64::EPSILON {
                    return Err(Error::Conditioning(format!(
                        "AᵀA + μI is singular (smallest eigenvalue {smallest:e}, μ = {mu})"
                    )));
                }
                let aty = h.data.iter().zip(&fy.data).map(|(h, y)| h.conj() * y).collect();
                Some(FourierSolve { plan, aty, denom })
            }
        };
        Ok(XSolver {
            mu,
            y: y.clone(),
            fourier,
        })
    }

    /// Minimizer of `½‖Ax − y‖² + (μ/2)‖x − w‖²`.
    pub fn solve(&self, w: &Image) -> Result<Image> {
        self.y.ensure_same_shape(w)?;
        let mu = self.mu;
        match &self.fourier {
            None => self.y.zip_map(w, |y, w| (y + mu * w) / (1.0 + mu)),
            Some(f) => {
                let mut spec = f.plan.forward(w);
                for ((s, aty), den) in spec.data.iter_mut().zip(&f.aty).zip(&f.denom) {
                    *s = (aty + *s * mu) / den;
                }
                Ok(f.plan.inverse_real(&spec))
            }
        }
    }
}

/// `x ← (AᵀA + μI)⁻¹ (Aᵀy + μ(v + d))`.
pub fn x_update(state: &AdmmState, y: &Image, model: &DegradationModel) -> Result<Image> {
    let target = state.v.zip_map(&state.d, |v, d| v + d)?;
    XSolver::new(model, y, state.mu)?.solve(&target)
}

/// Multi-class GMM denoising of a whole image: extract patches, classify,
/// denoise each patch with its class model, and aggregate with inverse
/// posterior-variance weights.
pub fn denoise_image(
    z: &Image,
    library: &ClassLibrary,
    sigma: f64,
    mode: ClassifyMode,
    beta: f64,
    previous: Option<&LabelField>,
) -> Result<(Image, LabelField)> {
    let patches = extract_patches(z, library.patch_size())?;
    let labels = classify_patches(&patches, library, sigma, mode, beta, previous)?;
    let models: Vec<_> = library.models().iter().collect();
    let denoised = denoise_patchset_labeled(&patches, &models, labels.labels(), sigma)?;
    let weights: Vec<f64> = denoised.variances.iter().map(|v| 1.0 / v).collect();
    let image = aggregate_patches(&denoised.estimates, &weights, z.shape())?;
    Ok((image, labels))
}

/// Prior step: denoises `z = x − d` at `sigma_eff` with the class library.
pub fn v_update(
    state: &AdmmState,
    library: &ClassLibrary,
    config: &RestorationConfig,
    sigma_eff: f64,
    previous: Option<&LabelField>,
) -> Result<(Image, LabelField)> {
    if library.patch_size() != config.patch_size {
        return Err(Error::Argument(format!(
            "library patch size {} differs from configured {}",
            library.patch_size(),
            config.patch_size
        )));
    }
    let z = state.x.zip_map(&state.d, |x, d| x - d)?;
    denoise_image(&z, library, sigma_eff, config.classify_mode, config.beta, previous)
}

/// `d ← d − (x − v)`.
pub fn dual_update(state: &AdmmState) -> Image {
    let d = state.d.as_slice();
    let x = state.x.as_slice();
    let v = state.v.as_slice();
    let data = (0..d.len()).map(|i| d[i] - (x[i] - v[i])).collect();
    Image::from_raw(state.d.height(), state.d.width(), data)
}

/// Library with its generic model replaced by a clean-data fit on the
/// patches of `x`. Unchanged when the switch is disabled.
pub fn gmm_switch(x: &Image, library: &ClassLibrary, config: &RestorationConfig) -> Result<ClassLibrary> {
    if config.switch_iteration.is_none() {
        return Ok(library.clone());
    }
    let patches = extract_patches(x, library.patch_size())?;
    let options = EmOptions {
        components: config.switch_components,
        seed: config.seed,
        ..EmOptions::default()
    };
    let fit = em_fit_clean(&patches, &options)?;
    let mut next = library.clone();
    next.replace_model(library.generic_index(), fit.model)?;
    Ok(next)
}

/// The prior step of the ADMM loop.
pub trait Denoiser {
    /// Denoises `z` at noise level `sigma` during iteration `k` (1-based),
    /// optionally returning a patch label field.
    fn denoise(&mut self, z: &Image, sigma: f64, k: usize) -> Result<(Image, Option<LabelField>)>;

    /// Called with the estimate `x` after iteration `k` completes.
    fn observe_iterate(&mut self, _k: usize, _x: &Image) -> Result<()> {
        Ok(())
    }
}

/// Class-adapted GMM denoiser with warm-started labels and the mid-run
/// generic-model switch.
pub struct ClassAdaptedDenoiser {
    library: ClassLibrary,
    config: RestorationConfig,
    labels: Option<LabelField>,
    switched_at: Option<usize>,
}

impl ClassAdaptedDenoiser {
    pub fn new(library: ClassLibrary, config: &RestorationConfig) -> Result<Self> {
        config.validate()?;
        if library.patch_size() != config.patch_size {
            return Err(Error::Argument(format!(
                "library patch size {} differs from configured {}",
                library.patch_size(),
                config.patch_size
            )));
        }
        Ok(ClassAdaptedDenoiser {
            library,
            config: config.clone(),
            labels: None,
            switched_at: None,
        })
    }

    pub fn library(&self) -> &ClassLibrary {
        &self.library
    }

    pub fn labels(&self) -> Option<&LabelField> {
        self.labels.as_ref()
    }

    pub fn switched_at(&self) -> Option<usize> {
        self.switched_at
    }

    pub fn into_library(self) -> ClassLibrary {
        self.library
    }
}

impl Denoiser for ClassAdaptedDenoiser {
    fn denoise(&mut self, z: &Image, sigma: f64, _k: usize) -> Result<(Image, Option<LabelField>)> {
        let (image, labels) = denoise_image(
            z,
            &self.library,
            sigma,
            self.config.classify_mode,
            self.config.beta,
            self.labels.as_ref(),
        )?;
        self.labels = Some(labels.clone());
        Ok((image, Some(labels)))
    }

    fn observe_iterate(&mut self, k: usize, x: &Image) -> Result<()> {
        if self.config.switch_iteration == Some(k) {
            self.library = gmm_switch(x, &self.library, &self.config)?;
            self.switched_at = Some(k);
        }
        Ok(())
    }
}

/// One row of the per-iteration diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    /// `‖x − v‖₂`
    pub primal_residual: f64,
    /// `‖xᵏ⁺¹ − xᵏ‖₂ / ‖xᵏ‖₂`
    pub relative_change: f64,
    pub sigma_eff: f64,
    pub labels_changed: usize,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
}

impl Diagnostics {
    pub const CSV_HEADER: &'static str = "k,primal_residual,relative_change,sigma_eff,labels_changed,wall_ms";

    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    /// Whether the last recorded primal residual is below the first one.
    pub fn residual_decreased(&self) -> bool {
        match (self.records.first(), self.records.last()) {
            (Some(a), Some(b)) => b.primal_residual < a.primal_residual || b.primal_residual == 0.0,
            _ => false,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.9e},{:.9e},{:.9e},{},{:.3}\n",
                r.k, r.primal_residual, r.relative_change, r.sigma_eff, r.labels_changed, r.wall_ms
            ));
        }
        out
    }
}

/// Output of [`restore`].
#[derive(Clone, Debug)]
pub struct Restoration {
    pub image: Image,
    pub labels: LabelField,
    pub diagnostics: Diagnostics,
    /// Library in use at the end of the run (after any switch).
    pub library: ClassLibrary,
}

/// Restores `y` with the class-adapted GMM denoiser.
pub fn restore(
    y: &Image,
    model: &DegradationModel,
    library: &ClassLibrary,
    config: &RestorationConfig,
) -> Result<Restoration> {
    let mut denoiser = ClassAdaptedDenoiser::new(library.clone(), config)?;
    let (image, labels, diagnostics) = restore_with(y, model, &mut denoiser, config)?;
    let labels = match labels {
        Some(l) => l,
        None => {
            let grid = extract_patches(y, config.patch_size)?;
            LabelField::uniform(grid.grid_rows(), grid.grid_cols(), library.generic_index())
        }
    };
    Ok(Restoration {
        image,
        labels,
        diagnostics,
        library: denoiser.into_library(),
    })
}

/// The ADMM loop with an arbitrary prior step.
pub fn restore_with(
    y: &Image,
    model: &DegradationModel,
    denoiser: &mut dyn Denoiser,
    config: &RestorationConfig,
) -> Result<(Image, Option<LabelField>, Diagnostics)> {
    config.validate()?;
    if !y.is_finite() {
        return Err(Error::Data("observation contains non-finite pixels".into()));
    }
    let mu = config.resolved_mu(model.sigma);
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::Argument(format!("penalty must be finite and > 0, got {mu}")));
    }
    let sigma_eff = model.effective_sigma(mu);
    let solver = XSolver::new(model, y, mu)?;
    let mut state = AdmmState::initial(y, mu)?;
    let mut labels: Option<LabelField> = None;
    let mut diag = Diagnostics::default();

    for k in 1..=config.max_iters {
        let started = Instant::now();
        let previous_x = state.x.clone();
        state.k = k;
        state.x = solver.solve(&state.v.zip_map(&state.d, |v, d| v + d)?)?;
        let z = state.x.zip_map(&state.d, |x, d| x - d)?;
        let (v, new_labels) = denoiser.denoise(&z, sigma_eff, k)?;
        z.ensure_same_shape(&v)?;
        state.v = v;
        state.d = dual_update(&state);
        if !state.is_finite() {
            return Err(Error::Divergence { iteration: k });
        }
        let labels_changed = match (&labels, &new_labels) {
            (Some(old), Some(new)) => old.changed_from(new),
            (None, Some(new)) => new.len(),
            _ => 0,
        };
        if new_labels.is_some() {
            labels = new_labels;
        }
        let norm = previous_x.norm();
        let change = state.x.distance(&previous_x);
        let relative_change = if norm > 0.0 { change / norm } else { change };
        diag.records.push(IterationRecord {
            k,
            primal_residual: state.x.distance(&state.v),
            relative_change,
            sigma_eff,
            labels_changed,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        denoiser.observe_iterate(k, &state.x)?;
        // With an identity operator the first x-update returns y unchanged.
        if k > 1 && relative_change < config.rel_tol {
            diag.converged = true;
            break;
        }
    }
    Ok((state.x, labels, diag))
}
