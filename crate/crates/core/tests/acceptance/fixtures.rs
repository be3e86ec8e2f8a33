//! Shared synthetic data for the trend criteria.

use classpnp::bench::{make_composite, train_model, Composite, Layout, SyntheticClass};
use classpnp::classify::ClassLibrary;
use classpnp::gmm::EmOptions;
use classpnp::image::Image;

pub const HEIGHT: usize = 128;
pub const HALF_WIDTH: usize = 128;
pub const COMPONENTS: usize = 12;
pub const TRAIN_PATCHES: usize = 8000;
pub const TRAIN_ITERS: usize = 30;

/// Blobs on the left, text on the right. Labels: 0 blobs, 1 text.
pub fn composite(patch_size: usize) -> Composite {
    let parts = [
        (
            SyntheticClass::Blobs.generate(HEIGHT, HALF_WIDTH, 1),
            "blobs".to_string(),
        ),
        (SyntheticClass::Text.generate(HEIGHT, HALF_WIDTH, 2), "text".to_string()),
    ];
    make_composite(&parts, Layout::Horizontal, patch_size).expect("composite")
}

fn held_out(class: SyntheticClass, seeds: &[u64]) -> Vec<Image> {
    seeds.iter().map(|&s| class.generate(HEIGHT, HALF_WIDTH, s)).collect()
}

/// Classes `blobs`, `text` and `generic` (index 2), trained on clean
/// images disjoint from the composite. The generic corpus holds no text.
pub fn library(patch_size: usize) -> ClassLibrary {
    let options = EmOptions {
        components: COMPONENTS,
        max_iters: TRAIN_ITERS,
        tol: 1e-6,
        seed: 7,
    };
    let fit = |images: Vec<Image>| train_model(&images, patch_size, &options, Some(TRAIN_PATCHES)).expect("training");
    let blobs = fit(held_out(SyntheticClass::Blobs, &[101, 102, 103]));
    let text = fit(held_out(SyntheticClass::Text, &[201, 202, 203]));
    let mut generic_corpus = held_out(SyntheticClass::Generic, &[301, 302, 303, 304]);
    generic_corpus.extend(held_out(SyntheticClass::Gratings, &[401]));
    generic_corpus.extend(held_out(SyntheticClass::Blobs, &[501]));
    let generic = fit(generic_corpus);
    ClassLibrary::new(
        vec![
            ("blobs".into(), blobs),
            ("text".into(), text),
            ("generic".into(), generic),
        ],
        2,
    )
    .expect("library")
}

/// Generic-only library with the same generic model.
pub fn generic_only(library: &ClassLibrary) -> ClassLibrary {
    ClassLibrary::single("generic", library.model(library.generic_index()).clone()).expect("library")
}
