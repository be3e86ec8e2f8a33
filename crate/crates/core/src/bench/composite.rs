use crate::classify::LabelField;
use crate::error::{Error, Result};
use crate::image::Image;

/// How composite parts are placed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// Side by side, left to right; parts share a height.
    Horizontal,
    /// Stacked top to bottom; parts share a width.
    Vertical,
}

/// A multi-class test image with its true patch labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Composite {
    pub image: Image,
    pub labels: LabelField,
    /// Class names indexed by label, in order of first appearance.
    pub class_names: Vec<String>,
}

/// Joins `parts` and labels every `patch_size` patch by the class owning
/// most of its pixels (ties go to the lower class index). Parts with the
/// same name share a class.
pub fn make_composite(parts: &[(Image, String)], layout: Layout, patch_size: usize) -> Result<Composite> {
    if parts.is_empty() {
        return Err(Error::Argument("composite needs at least one part".into()));
    }
    if patch_size == 0 {
        return Err(Error::Argument("patch size must be positive".into()));
    }
    let mut class_names: Vec<String> = Vec::new();
    let mut part_class = Vec::with_capacity(parts.len());
    for (_, name) in parts {
        let idx = match class_names.iter().position(|n| n == name) {
            Some(i) => i,
            None => {
                class_names.push(name.clone());
                class_names.len() - 1
            }
        };
        part_class.push(idx);
    }

    let (h, w) = match layout {
        Layout::Horizontal => {
            let h = parts[0].0.height();
            if let Some((img, name)) = parts.iter().find(|(img, _)| img.height() != h) {
                return Err(Error::Dimension(format!(
                    "part {name:?} has height {}, expected {h} for a horizontal layout",
                    img.height()
                )));
            }
            (h, parts.iter().map(|(img, _)| img.width()).sum())
        }
        Layout::Vertical => {
            let w = parts[0].0.width();
            if let Some((img, name)) = parts.iter().find(|(img, _)| img.width() != w) {
                return Err(Error::Dimension(format!(
                    "part {name:?} has width {}, expected {w} for a vertical layout",
                    img.width()
                )));
            }
            (parts.iter().map(|(img, _)| img.height()).sum(), w)
        }
    };
    if h < patch_size || w < patch_size {
        return Err(Error::Dimension(format!(
            "{h}x{w} composite is smaller than a {patch_size}x{patch_size} patch"
        )));
    }

    let mut data = vec![0.0; h * w];
    let mut owner = vec![0usize; h * w];
    let mut offset = 0;
    for ((img, _), &class) in parts.iter().zip(&part_class) {
        for r in 0..img.height() {
            for c in 0..img.width() {
                let (rr, cc) = match layout {
                    Layout::Horizontal => (r, c + offset),
                    Layout::Vertical => (r + offset, c),
                };
                data[rr * w + cc] = img.get(r, c);
                owner[rr * w + cc] = class;
            }
        }
        offset += match layout {
            Layout::Horizontal => img.width(),
            Layout::Vertical => img.height(),
        };
    }

    let (gr, gc) = (h - patch_size + 1, w - patch_size + 1);
    let c = class_names.len();
    let mut labels = Vec::with_capacity(gr * gc);
    let mut counts = vec![0usize; c];
    for r in 0..gr {
        for col in 0..gc {
            counts.iter_mut().for_each(|n| *n = 0);
            for dr in 0..patch_size {
                for dc in 0..patch_size {
                    counts[owner[(r + dr) * w + col + dc]] += 1;
                }
            }
            let mut best = 0;
            for k in 1..c {
                if counts[k] > counts[best] {
                    best = k;
                }
            }
            labels.push(best);
        }
    }
    Ok(Composite {
        image: Image::new(h, w, data)?,
        labels: LabelField::new(gr, gc, labels)?,
        class_names,
    })
}
