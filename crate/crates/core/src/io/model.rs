//! GMMPRIOR v1 model files.
//!
//! Binary layout, all little-endian: the 12-byte line `GMMPRIOR v1\n`;
//! `K`, `p`, `d` as u64 (`p = 0` for models without patch geometry); `K`
//! weights, `K·d` mean entries and `K·d·d` row-major covariance entries as
//! f64; a CRC-32 (IEEE) of all preceding bytes as u32.
//!
//! The text variant starts with `GMMPRIOR v1 text` and ends with a
//! `crc32 <hex>` line covering everything before it.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{read_bytes, write_atomic};
use crate::error::{Error, Result};
use crate::gmm::GmmModel;

pub const MODEL_MAGIC: &[u8; 12] = b"GMMPRIOR v1\n";
const TEXT_MAGIC: &str = "GMMPRIOR v1 text";
const KIND: &str = "GMMPRIOR";

pub fn model_to_bytes(model: &GmmModel) -> Vec<u8> {
    let (k, d) = (model.components(), model.dim());
    let mut out = Vec::with_capacity(12 + 24 + 8 * k * (1 + d + d * d) + 4);
    out.extend_from_slice(MODEL_MAGIC);
    for v in [k, model.patch_size().unwrap_or(0), d] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for w in model.weights() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    for mean in model.means() {
        for v in mean.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for cov in model.covariances() {
        for i in 0..d {
            for j in 0..d {
                out.extend_from_slice(&cov[(i, j)].to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn assemble(
    patch_size: usize,
    d: usize,
    weights: Vec<f64>,
    flat_means: &[f64],
    flat_covs: &[f64],
) -> std::result::Result<GmmModel, String> {
    let k = weights.len();
    let means: Vec<DVector<f64>> = (0..k)
        .map(|m| DVector::from_column_slice(&flat_means[m * d..(m + 1) * d]))
        .collect();
    let covs: Vec<DMatrix<f64>> = (0..k)
        .map(|m| DMatrix::from_row_slice(d, d, &flat_covs[m * d * d..(m + 1) * d * d]))
        .collect();
    let built = if patch_size == 0 {
        GmmModel::new(weights, means, covs)
    } else {
        if patch_size * patch_size != d {
            return Err(format!("patch size {patch_size} does not match dimension {d}"));
        }
        GmmModel::for_patches(patch_size, weights, means, covs)
    };
    built.map_err(|e| e.to_string())
}

pub fn model_from_bytes(bytes: &[u8]) -> std::result::Result<GmmModel, String> {
    if bytes.len() < MODEL_MAGIC.len() + 28 || &bytes[..MODEL_MAGIC.len()] != MODEL_MAGIC {
        return Err("missing GMMPRIOR v1 header".into());
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(format!(
            "checksum mismatch (stored {stored:08x}, computed {actual:08x})"
        ));
    }
    let mut pos = MODEL_MAGIC.len();
    let mut next_u64 = || {
        let v = u64::from_le_bytes(body[pos..pos + 8].try_into().expect("8 bytes"));
        pos += 8;
        v
    };
    let (k, p, d) = (next_u64(), next_u64(), next_u64());
    let start = MODEL_MAGIC.len() + 24;
    if k == 0 || d == 0 || k > 1 << 20 || d > 1 << 16 {
        return Err(format!("implausible sizes K={k}, d={d}"));
    }
    let (k, p, d) = (k as usize, p as usize, d as usize);
    let count = k * (1 + d + d * d);
    if body.len() != start + 8 * count {
        return Err(format!(
            "payload is {} bytes, expected {} for K={k}, d={d}",
            body.len() - start,
            8 * count
        ));
    }
    let values: Vec<f64> = body[start..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let (weights, rest) = values.split_at(k);
    let (means, covs) = rest.split_at(k * d);
    assemble(p, d, weights.to_vec(), means, covs)
}

pub fn save_model(path: impl AsRef<Path>, model: &GmmModel) -> Result<()> {
    write_atomic(path.as_ref(), &model_to_bytes(model))
}

/// Loads either the binary or the text variant.
pub fn load_model(path: impl AsRef<Path>) -> Result<GmmModel> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let parsed = if bytes.starts_with(TEXT_MAGIC.as_bytes()) {
        std::str::from_utf8(&bytes)
            .map_err(|_| "text model is not UTF-8".to_string())
            .and_then(model_from_text)
    } else {
        model_from_bytes(&bytes)
    };
    parsed.map_err(|reason| Error::format(KIND, path, reason))
}

fn join(values: impl Iterator<Item = f64>) -> String {
    values.map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ")
}

pub fn model_to_text(model: &GmmModel) -> String {
    let d = model.dim();
    let mut out = format!(
        "{TEXT_MAGIC}\ncomponents {}\npatch_size {}\ndim {d}\n",
        model.components(),
        model.patch_size().unwrap_or(0)
    );
    for m in 0..model.components() {
        out.push_str(&format!("weight {:e}\n", model.weights()[m]));
        out.push_str(&format!("mean {}\n", join(model.means()[m].iter().copied())));
        let cov = &model.covariances()[m];
        for i in 0..d {
            out.push_str(&format!("cov {}\n", join((0..d).map(|j| cov[(i, j)]))));
        }
    }
    let crc = crc32fast::hash(out.as_bytes());
    out.push_str(&format!("crc32 {crc:08x}\n"));
    out
}

pub fn save_model_text(path: impl AsRef<Path>, model: &GmmModel) -> Result<()> {
    write_atomic(path.as_ref(), model_to_text(model).as_bytes())
}

pub fn model_from_text(text: &str) -> std::result::Result<GmmModel, String> {
    let body_end = text.rfind("crc32 ").ok_or("missing crc32 line")?;
    let (body, tail) = text.split_at(body_end);
    let stored = u32::from_str_radix(tail["crc32 ".len()..].trim(), 16).map_err(|_| "bad crc32 line")?;
    let actual = crc32fast::hash(body.as_bytes());
    if stored != actual {
        return Err(format!(
            "checksum mismatch (stored {stored:08x}, computed {actual:08x})"
        ));
    }
    let mut lines = body.lines();
    if lines.next() != Some(TEXT_MAGIC) {
        return Err("missing text header".into());
    }
    let mut field = |name: &str| -> std::result::Result<Vec<f64>, String> {
        let line = lines.next().ok_or_else(|| format!("missing {name} line"))?;
        let rest = line
            .strip_prefix(name)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| format!("expected {name}, found {line:?}"))?;
        rest.split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| format!("bad number {t:?} in {name}")))
            .collect()
    };
    let header = |v: Vec<f64>, name: &str| -> std::result::Result<usize, String> {
        match v.as_slice() {
            [x] if *x >= 0.0 && x.fract() == 0.0 => Ok(*x as usize),
            _ => Err(format!("bad {name} value")),
        }
    };
    let k = header(field("components")?, "components")?;
    let p = header(field("patch_size")?, "patch_size")?;
    let d = header(field("dim")?, "dim")?;
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k * d);
    let mut covs = Vec::with_capacity(k * d * d);
    for _ in 0..k {
        let w = field("weight")?;
        if w.len() != 1 {
            return Err("weight line needs one value".into());
        }
        weights.push(w[0]);
        let mean = field("mean")?;
        if mean.len() != d {
            return Err(format!("mean has {} entries, expected {d}", mean.len()));
        }
        means.extend(mean);
        for _ in 0..d {
            let row = field("cov")?;
            if row.len() != d {
                return Err(format!("covariance row has {} entries, expected {d}", row.len()));
            }
            covs.extend(row);
        }
    }
    if k == 0 || d == 0 {
        return Err("empty model".into());
    }
    assemble(p, d, weights, &means, &covs)
}
