use nalgebra::DMatrix;

use super::Image;
use crate::error::{Error, Result};

/// All stride-1 `p x p` patches of an image, one per column.
///
/// Columns follow row-major order over patch-grid locations: the patch whose
/// top-left pixel is `(r, c)` lives in column `r * grid_cols + c`. Inside a
/// column, pixels are stacked column-major, so entry `dc * p + dr` holds
/// pixel `(r + dr, c + dc)`. Model files depend on this ordering.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchMatrix {
    patch_size: usize,
    grid_rows: usize,
    grid_cols: usize,
    data: DMatrix<f64>,
}

impl PatchMatrix {
    /// Wraps a `p² x (grid_rows * grid_cols)` matrix.
    pub fn from_matrix(patch_size: usize, grid_rows: usize, grid_cols: usize, data: DMatrix<f64>) -> Result<Self> {
        if patch_size == 0 {
            return Err(Error::Argument("patch size must be positive".into()));
        }
        if data.nrows() != patch_size * patch_size || data.ncols() != grid_rows * grid_cols {
            return Err(Error::Dimension(format!(
                "patch matrix is {}x{}, expected {}x{}",
                data.nrows(),
                data.ncols(),
                patch_size * patch_size,
                grid_rows * grid_cols
            )));
        }
        Ok(PatchMatrix {
            patch_size,
            grid_rows,
            grid_cols,
            data,
        })
    }

    #[inline]
    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    /// Patch dimension `d = p²`.
    #[inline]
    pub fn dim(&self) -> usize {
        self.patch_size * self.patch_size
    }

    #[inline]
    pub fn grid_rows(&self) -> usize {
        self.grid_rows
    }

    #[inline]
    pub fn grid_cols(&self) -> usize {
        self.grid_cols
    }

    /// Number of patches `N`.
    #[inline]
    pub fn count(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.data.as_slice()[j * d..(j + 1) * d]
    }

    /// Same grid, new per-patch contents (e.g. denoised estimates).
    pub fn with_data(&self, data: DMatrix<f64>) -> Result<Self> {
        Self::from_matrix(self.patch_size, self.grid_rows, self.grid_cols, data)
    }

    /// Shape of the image the patches were taken from.
    pub fn image_shape(&self) -> (usize, usize) {
        (
            self.grid_rows + self.patch_size - 1,
            self.grid_cols + self.patch_size - 1,
        )
    }
}

/// Extracts every overlapping `p x p` patch (valid positions only).
pub fn extract_patches(image: &Image, p: usize) -> Result<PatchMatrix> {
    if p == 0 {
        return Err(Error::Argument("patch size must be positive".into()));
    }
    let (h, w) = image.shape();
    if p > h || p > w {
        return Err(Error::Dimension(format!("patch size {p} exceeds {h}x{w} image")));
    }
    let (gr, gc) = (h - p + 1, w - p + 1);
    let d = p * p;
    let src = image.as_slice();
    let mut out = vec![0.0; d * gr * gc];
    for (j, column) in out.chunks_exact_mut(d).enumerate() {
        let (r, c) = (j / gc, j % gc);
        for dc in 0..p {
            for dr in 0..p {
                column[dc * p + dr] = src[(r + dr) * w + c + dc];
            }
        }
    }
    Ok(PatchMatrix {
        patch_size: p,
        grid_rows: gr,
        grid_cols: gc,
        data: DMatrix::from_vec(d, gr * gc, out),
    })
}

/// Puts patch estimates back in place, averaging the overlapping estimates
/// of each pixel with the given per-patch weights.
///
/// The weighted mean is accumulated incrementally in patch order, so a pixel
/// whose estimates all agree is reproduced bit-exactly.
pub fn aggregate_patches(patches: &PatchMatrix, weights: &[f64], image_shape: (usize, usize)) -> Result<Image> {
    let (h, w) = image_shape;
    if image_shape != patches.image_shape() {
        return Err(Error::Dimension(format!(
            "patch grid {}x{} (p={}) does not tile a {h}x{w} image",
            patches.grid_rows, patches.grid_cols, patches.patch_size
        )));
    }
    if weights.len() != patches.count() {
        return Err(Error::Dimension(format!(
            "{} weights for {} patches",
            weights.len(),
            patches.count()
        )));
    }
    if let Some(i) = weights.iter().position(|&wt| !(wt.is_finite() && wt > 0.0)) {
        return Err(Error::Argument(format!(
            "patch weight {i} is {} (must be positive and finite)",
            weights[i]
        )));
    }

    let p = patches.patch_size;
    let gc = patches.grid_cols;
    let mut mean = vec![0.0; h * w];
    let mut total = vec![0.0; h * w];
    for (j, &wt) in weights.iter().enumerate() {
        let column = patches.column(j);
        let (r, c) = (j / gc, j % gc);
        for dc in 0..p {
            for dr in 0..p {
                let idx = (r + dr) * w + c + dc;
                total[idx] += wt;
                let m = &mut mean[idx];
                *m += (wt / total[idx]) * (column[dc * p + dr] - *m);
            }
        }
    }
    Ok(Image::from_raw(h, w, mean))
}
