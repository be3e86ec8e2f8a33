//! Trend-level criteria on the synthetic two-class composite.

use classpnp::admm::{denoise_image, restore, DegradationModel, RestorationConfig};
use classpnp::bench::{degrade, gaussian_noise, isnr, psnr, registry_entry, Composite};
use classpnp::classify::{ClassLibrary, ClassifyMode, LabelField};
use classpnp::image::Image;

use super::fixtures;
use super::Outcome;

const SIGMA: f64 = 30.0;
const BETA: f64 = 2.0;

/// Noisy composite, p = 8 library, and the ML / α label fields from the
/// classified denoising runs.
pub struct DenoiseRun {
    composite: Composite,
    library: ClassLibrary,
    noisy: Image,
    ml_labels: Option<LabelField>,
}

impl DenoiseRun {
    pub fn prepare() -> Self {
        let composite = fixtures::composite(8);
        let library = fixtures::library(8);
        let (h, w) = composite.image.shape();
        let noise = gaussian_noise(h, w, SIGMA, 5);
        let noisy = composite.image.zip_map(&noise, |a, b| a + b).expect("same shape");
        DenoiseRun {
            composite,
            library,
            noisy,
            ml_labels: None,
        }
    }
}

pub fn c6_denoise_trend(run: &mut DenoiseRun) -> Outcome {
    let err = |e: classpnp::Error| e.to_string();
    let generic = fixtures::generic_only(&run.library);
    let (single, _) = denoise_image(&run.noisy, &generic, SIGMA, ClassifyMode::None, BETA, None).map_err(err)?;
    let (multi, labels) = denoise_image(&run.noisy, &run.library, SIGMA, ClassifyMode::Ml, BETA, None).map_err(err)?;
    run.ml_labels = Some(labels);
    let reference = &run.composite.image;
    let (p_in, p_single, p_multi) = (
        psnr(&run.noisy, reference).map_err(err)?,
        psnr(&single, reference).map_err(err)?,
        psnr(&multi, reference).map_err(err)?,
    );
    let gain = p_multi - p_single;
    let detail = format!("PSNR noisy {p_in:.2}, generic {p_single:.2}, classified {p_multi:.2} (gain {gain:+.2} dB)");
    if gain >= 0.15 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

pub fn c8_segmentation_coherence(run: &DenoiseRun) -> Outcome {
    let err = |e: classpnp::Error| e.to_string();
    let ml = match &run.ml_labels {
        Some(l) => l.clone(),
        None => {
            denoise_image(&run.noisy, &run.library, SIGMA, ClassifyMode::Ml, BETA, None)
                .map_err(err)?
                .1
        }
    };
    let (_, alpha) = denoise_image(&run.noisy, &run.library, SIGMA, ClassifyMode::Alpha, BETA, None).map_err(err)?;
    let truth = &run.composite.labels;
    let (acc_ml, acc_alpha) = (ml.accuracy(truth), alpha.accuracy(truth));
    let (dis_ml, dis_alpha) = (ml.disagreements(), alpha.disagreements());
    let detail = format!(
        "disagreeing pairs ML {dis_ml}, alpha {dis_alpha}; accuracy ML {:.2}%, alpha {:.2}%",
        100.0 * acc_ml,
        100.0 * acc_alpha
    );
    if dis_alpha <= dis_ml && acc_alpha >= acc_ml - 0.01 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

pub fn c7_deblur_trend() -> Outcome {
    let err = |e: classpnp::Error| e.to_string();
    let composite = fixtures::composite(6);
    let library = fixtures::library(6);
    let spec = registry_entry(3)
        .and_then(|e| e.instantiate(&composite.image, 11))
        .map_err(err)?;
    let observed = degrade(&composite.image, &spec).map_err(err)?;
    let model = DegradationModel::blur(spec.kernel.clone(), spec.sigma()).map_err(err)?;
    let mut gains = Vec::new();
    for mode in [ClassifyMode::None, ClassifyMode::Ml, ClassifyMode::Alpha] {
        let config = RestorationConfig {
            patch_size: 6,
            classify_mode: mode,
            switch_components: fixtures::COMPONENTS,
            ..RestorationConfig::default()
        };
        let restored = restore(&observed, &model, &library, &config).map_err(err)?;
        gains.push(isnr(&observed, &restored.image, &composite.image).map_err(err)?);
    }
    let (none, ml, alpha) = (gains[0], gains[1], gains[2]);
    let detail = format!("ISNR none {none:.2}, ml {ml:.2}, alpha {alpha:.2} dB");
    if ml > none && none > 0.0 && (alpha - ml).abs() <= 0.3 {
        Ok(detail)
    } else {
        Err(detail)
    }
}
