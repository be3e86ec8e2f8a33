use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::metrics::bsnr;
use crate::error::{Error, Result};
use crate::image::{convolve_periodic, BlurKernel, Image};

/// A blur kernel, a noise variance (intensity² units) and a noise seed.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub kernel: BlurKernel,
    pub noise_variance: f64,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn new(name: impl Into<String>, kernel: BlurKernel, noise_variance: f64, seed: u64) -> Result<Self> {
        if !(noise_variance.is_finite() && noise_variance >= 0.0) {
            return Err(Error::Argument(format!(
                "noise variance must be finite and >= 0, got {noise_variance}"
            )));
        }
        Ok(ExperimentSpec {
            name: name.into(),
            kernel,
            noise_variance,
            seed,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.noise_variance.sqrt()
    }
}

/// How a registry entry sets its noise level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseLevel {
    Variance(f64),
    /// Variance chosen so the blurred reference reaches this BSNR (dB).
    TargetBsnr(f64),
}

/// One of the six standard deblurring experiments.
#[derive(Clone, Debug, PartialEq)]
pub struct RegistryEntry {
    pub number: usize,
    pub kernel: BlurKernel,
    pub noise: NoiseLevel,
}

impl RegistryEntry {
    pub fn name(&self) -> String {
        format!("exp{}", self.number)
    }

    /// Concrete spec for `reference`, resolving a BSNR target against its
    /// blurred version.
    pub fn instantiate(&self, reference: &Image, seed: u64) -> Result<ExperimentSpec> {
        let variance = match self.noise {
            NoiseLevel::Variance(v) => v,
            NoiseLevel::TargetBsnr(db) => {
                let blurred = convolve_periodic(reference, &self.kernel)?;
                blurred.variance() / 10f64.powf(db / 10.0)
            }
        };
        ExperimentSpec::new(self.name(), self.kernel.clone(), variance, seed)
    }
}

/// Experiments 1 to 6.
pub fn registry() -> Vec<RegistryEntry> {
    (1..=6)
        .map(|n| registry_entry(n).expect("valid experiment number"))
        .collect()
}

pub fn registry_entry(number: usize) -> Result<RegistryEntry> {
    let (kernel, noise) = match number {
        1 => (BlurKernel::inverse_quadratic(7), NoiseLevel::Variance(2.0)),
        2 => (BlurKernel::inverse_quadratic(7), NoiseLevel::Variance(8.0)),
        3 => (BlurKernel::uniform(9)?, NoiseLevel::TargetBsnr(40.0)),
        4 => (
            BlurKernel::separable(&[1.0, 4.0, 6.0, 4.0, 1.0])?,
            NoiseLevel::Variance(49.0),
        ),
        5 => (BlurKernel::gaussian(25, 1.6)?, NoiseLevel::Variance(4.0)),
        6 => (BlurKernel::gaussian(25, 0.4)?, NoiseLevel::Variance(64.0)),
        _ => return Err(Error::Argument(format!("no experiment {number} (expected 1-6)"))),
    };
    Ok(RegistryEntry { number, kernel, noise })
}

/// I.i.d. `N(0, std²)` samples from a seeded ChaCha stream via Box-Muller.
pub fn gaussian_noise(height: usize, width: usize, std: f64, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = height * width;
    let mut data = Vec::with_capacity(n + 1);
    while data.len() < n {
        // u1 in (0, 1] keeps the logarithm finite
        let u1 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        data.push(std * radius * angle.cos());
        data.push(std * radius * angle.sin());
    }
    data.truncate(n);
    Image::new(height, width, data).expect("finite samples")
}

/// Periodic blur followed by additive Gaussian noise.
pub fn degrade(reference: &Image, spec: &ExperimentSpec) -> Result<Image> {
    let blurred = convolve_periodic(reference, &spec.kernel)?;
    if spec.noise_variance == 0.0 {
        return Ok(blurred);
    }
    let noise = gaussian_noise(reference.height(), reference.width(), spec.sigma(), spec.seed);
    blurred.zip_map(&noise, |a, b| a + b)
}

/// BSNR an experiment produces on `reference`.
pub fn experiment_bsnr(reference: &Image, spec: &ExperimentSpec) -> Result<f64> {
    bsnr(&convolve_periodic(reference, &spec.kernel)?, spec.noise_variance)
}
