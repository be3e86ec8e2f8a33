//! Degradation synthesis, quality metrics, procedural test data and the
//! experiment harness.

mod composite;
mod degrade;
mod harness;
mod metrics;
mod synthetic;

pub use composite::{make_composite, Composite, Layout};
pub use degrade::{
    degrade, experiment_bsnr, gaussian_noise, registry, registry_entry, ExperimentSpec, NoiseLevel, RegistryEntry,
};
pub use harness::{report_text, run_experiment, run_harness, write_run, HarnessConfig, HarnessResult, RunOutput};
pub use metrics::{bsnr, format_db, isnr, mse, psnr, psnr_with_peak, MetricReport, PEAK};
pub use synthetic::{blob_image, generic_image, grating_image, text_image, SyntheticClass};

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gmm::{em_fit_clean, EmOptions, GmmModel};
use crate::image::{extract_patches, Image, PatchMatrix};

/// All patches of `images`, or a seeded uniform subsample of at most
/// `max_patches` of them, as a `1 x N` patch grid.
pub fn sample_patches(
    images: &[Image],
    patch_size: usize,
    max_patches: Option<usize>,
    seed: u64,
) -> Result<PatchMatrix> {
    if images.is_empty() {
        return Err(Error::Argument("no training images".into()));
    }
    let sets: Vec<PatchMatrix> = images
        .iter()
        .map(|img| extract_patches(img, patch_size))
        .collect::<Result<_>>()?;
    let d = patch_size * patch_size;
    let total: usize = sets.iter().map(|s| s.count()).sum();
    let mut chosen: Vec<usize> = match max_patches {
        Some(m) if m < total => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample(&mut rng, total, m).into_vec()
        }
        _ => (0..total).collect(),
    };
    chosen.sort_unstable();
    let mut data = Vec::with_capacity(chosen.len() * d);
    let mut set = 0;
    let mut start = 0;
    for j in chosen {
        while j >= start + sets[set].count() {
            start += sets[set].count();
            set += 1;
        }
        data.extend_from_slice(sets[set].column(j - start));
    }
    let n = data.len() / d;
    PatchMatrix::from_matrix(patch_size, 1, n, DMatrix::from_vec(d, n, data))
}

/// Clean-data GMM fit on (a subsample of) the patches of `images`.
pub fn train_model(
    images: &[Image],
    patch_size: usize,
    options: &EmOptions,
    max_patches: Option<usize>,
) -> Result<GmmModel> {
    let patches = sample_patches(images, patch_size, max_patches, options.seed)?;
    Ok(em_fit_clean(&patches, options)?.model)
}
