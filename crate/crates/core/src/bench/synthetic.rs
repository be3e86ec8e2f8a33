//! Procedural test imagery standing in for class-specific corpora.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::Image;

/// Procedural image families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SyntheticClass {
    /// Dark glyph strokes on a light page.
    Text,
    /// Smooth overlapping blobs and shading.
    Blobs,
    /// Oriented sinusoidal gratings.
    Gratings,
    /// Soft-edged flat shapes over smooth shading, gratings in places.
    Generic,
}

impl SyntheticClass {
    pub const ALL: [SyntheticClass; 4] = [Self::Text, Self::Blobs, Self::Gratings, Self::Generic];

    pub fn name(self) -> &'static str {
        match self {
            Self::Text => "text",
            Self::Blobs => "blobs",
            Self::Gratings => "gratings",
            Self::Generic => "generic",
        }
    }

    pub fn generate(self, height: usize, width: usize, seed: u64) -> Image {
        match self {
            Self::Text => text_image(height, width, seed),
            Self::Blobs => blob_image(height, width, seed),
            Self::Gratings => grating_image(height, width, seed),
            Self::Generic => generic_image(height, width, seed),
        }
    }
}

impl fmt::Display for SyntheticClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SyntheticClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown synthetic class {s:?}")))
    }
}

const PAGE: f64 = 232.0;
const INK: f64 = 28.0;

/// Segments of a 5x7 glyph skeleton as (row0, col0, row1, col1).
const SEGMENTS: [(i32, i32, i32, i32); 12] = [
    (0, 0, 0, 4),
    (3, 0, 3, 4),
    (6, 0, 6, 4),
    (0, 0, 3, 0),
    (3, 0, 6, 0),
    (0, 4, 3, 4),
    (3, 4, 6, 4),
    (0, 2, 6, 2),
    (0, 0, 6, 4),
    (0, 4, 6, 0),
    (3, 0, 6, 4),
    (0, 0, 3, 4),
];

/// Lines of random glyphs made of skeleton strokes.
pub fn text_image(height: usize, width: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = vec![PAGE; height * width];
    let scale = rng.random_range(1..=2usize) as i32;
    let (gw, gh) = (5 * scale, 7 * scale);
    let (adv, line) = (gw + 2 * scale, gh + 4 * scale);
    let margin = 2 * scale;
    let mut top = margin;
    while top + gh <= height as i32 {
        let mut left = margin;
        while left + gw <= width as i32 {
            if rng.random_bool(0.15) {
                left += adv;
                continue;
            }
            let mut strokes = 0;
            while strokes < 2 {
                for &(r0, c0, r1, c1) in &SEGMENTS {
                    if rng.random_bool(0.3) {
                        stroke(&mut img, height, width, (top, left), scale, (r0, c0, r1, c1));
                        strokes += 1;
                    }
                }
            }
            left += adv;
        }
        top += line;
    }
    Image::new(height, width, img).expect("finite pixels")
}

fn stroke(img: &mut [f64], h: usize, w: usize, origin: (i32, i32), scale: i32, seg: (i32, i32, i32, i32)) {
    let (r0, c0, r1, c1) = seg;
    let steps = (r1 - r0).abs().max((c1 - c0).abs()) * scale;
    for s in 0..=steps {
        let t = if steps == 0 { 0.0 } else { s as f64 / steps as f64 };
        let r = origin.0 + ((r0 as f64 + t * (r1 - r0) as f64) * scale as f64).round() as i32;
        let c = origin.1 + ((c0 as f64 + t * (c1 - c0) as f64) * scale as f64).round() as i32;
        for dr in 0..scale {
            for dc in 0..scale {
                let (rr, cc) = (r + dr, c + dc);
                if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w {
                    img[rr as usize * w + cc as usize] = INK;
                }
            }
        }
    }
}

fn add_blobs(img: &mut [f64], h: usize, w: usize, rng: &mut ChaCha8Rng, count: usize) {
    for _ in 0..count {
        let (cr, cc) = (rng.random_range(0.0..h as f64), rng.random_range(0.0..w as f64));
        let s = rng.random_range(5.0..22.0);
        let amp = rng.random_range(-70.0..70.0);
        let inv = 1.0 / (2.0 * s * s);
        for r in 0..h {
            for c in 0..w {
                let (dr, dc) = (r as f64 - cr, c as f64 - cc);
                img[r * w + c] += amp * (-(dr * dr + dc * dc) * inv).exp();
            }
        }
    }
}

/// Smooth shading with overlapping Gaussian bumps.
pub fn blob_image(height: usize, width: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (gr, gc) = (rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
    let base = rng.random_range(100.0..150.0);
    let mut img: Vec<f64> = (0..height * width)
        .map(|k| base + gr * (k / width) as f64 + gc * (k % width) as f64)
        .collect();
    let count = 6 + (height * width) / 1500;
    add_blobs(&mut img, height, width, &mut rng, count);
    Image::new(height, width, img)
        .expect("finite pixels")
        .clamped(0.0, 255.0)
}

fn add_grating(img: &mut [f64], h: usize, w: usize, rng: &mut ChaCha8Rng, amp: f64) {
    let theta = rng.random_range(0.0..std::f64::consts::PI);
    let freq = rng.random_range(0.04..0.18);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let (ct, st) = (theta.cos(), theta.sin());
    for r in 0..h {
        for c in 0..w {
            let u = c as f64 * ct + r as f64 * st;
            img[r * w + c] += amp * (std::f64::consts::TAU * freq * u + phase).sin();
        }
    }
}

/// One or two superimposed oriented gratings.
pub fn grating_image(height: usize, width: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = vec![128.0; height * width];
    let layers = rng.random_range(1..=2);
    for _ in 0..layers {
        let amp = rng.random_range(25.0..60.0);
        add_grating(&mut img, height, width, &mut rng, amp);
    }
    Image::new(height, width, img)
        .expect("finite pixels")
        .clamped(0.0, 255.0)
}

/// Flat rectangles and discs with slightly soft edges over smooth shading,
/// with a faint grating.
pub fn generic_image(height: usize, width: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = vec![rng.random_range(80.0..170.0); height * width];
    add_blobs(&mut img, height, width, &mut rng, 4 + (height * width) / 3000);
    let shapes = 5 + (height * width) / 800;
    for _ in 0..shapes {
        let level = rng.random_range(20.0..235.0);
        let (cr, cc) = (
            rng.random_range(0.0..height as f64),
            rng.random_range(0.0..width as f64),
        );
        let (a, b) = (rng.random_range(3.0..25.0), rng.random_range(3.0..25.0));
        let disc = rng.random_bool(0.5);
        for r in 0..height {
            for c in 0..width {
                let (dr, dc) = ((r as f64 - cr) / a, (c as f64 - cc) / b);
                let inside = if disc {
                    dr * dr + dc * dc <= 1.0
                } else {
                    dr.abs() <= 1.0 && dc.abs() <= 1.0
                };
                if inside {
                    img[r * width + c] = level;
                }
            }
        }
    }
    let amp = rng.random_range(0.0..12.0);
    add_grating(&mut img, height, width, &mut rng, amp);
    let sharp = Image::new(height, width, img).expect("finite pixels");
    soften(&sharp).clamped(0.0, 255.0)
}

/// 3x3 binomial smoothing with edge replication.
fn soften(img: &Image) -> Image {
    let (h, w) = img.shape();
    let wts = [1.0, 2.0, 1.0];
    Image::from_fn(h, w, |r, c| {
        let mut acc = 0.0;
        for (i, wi) in wts.iter().enumerate() {
            for (j, wj) in wts.iter().enumerate() {
                let rr = (r + i).saturating_sub(1).min(h - 1);
                let cc = (c + j).saturating_sub(1).min(w - 1);
                acc += wi * wj * img.get(rr, cc);
            }
        }
        acc / 16.0
    })
}
