use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::model::{load_model, save_model};
use super::pgm::write_pgm;
use super::{read_text, write_atomic};
use crate::classify::{ClassLibrary, LabelField};
use crate::error::{Error, Result};
use crate::image::{BlurKernel, Image};

const MANIFEST_HEADER: &str = "library v1";

/// One class line of a library manifest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub name: String,
    pub path: PathBuf,
    pub generic: bool,
}

/// Parses a manifest: a `library v1` header, then one
/// `name = path [generic]` line per class. Blank lines and `#` comments are
/// ignored.
pub fn parse_manifest(text: &str) -> std::result::Result<Vec<ManifestEntry>, String> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    match lines.next() {
        Some((_, MANIFEST_HEADER)) => {}
        Some((n, other)) => return Err(format!("line {n}: expected {MANIFEST_HEADER:?}, found {other:?}")),
        None => return Err("empty manifest".into()),
    }
    let mut entries = Vec::new();
    let mut names = HashSet::new();
    for (n, line) in lines {
        let (name, rest) = line
            .split_once('=')
            .ok_or_else(|| format!("line {n}: expected `name = path [generic]`"))?;
        let name = name.trim();
        let mut words = rest.split_whitespace();
        let path = words.next().ok_or_else(|| format!("line {n}: missing model path"))?;
        let generic = match words.next() {
            None => false,
            Some("generic") => true,
            Some(other) => return Err(format!("line {n}: unexpected token {other:?}")),
        };
        if let Some(extra) = words.next() {
            return Err(format!("line {n}: unexpected token {extra:?}"));
        }
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(format!("line {n}: invalid class name {name:?}"));
        }
        if !names.insert(name.to_string()) {
            return Err(format!("line {n}: duplicate class {name:?}"));
        }
        entries.push(ManifestEntry {
            name: name.to_string(),
            path: PathBuf::from(path),
            generic,
        });
    }
    if entries.is_empty() {
        return Err("manifest lists no classes".into());
    }
    let generic = entries.iter().filter(|e| e.generic).count();
    if generic > 1 || (generic == 0 && entries.len() > 1) {
        return Err(format!("exactly one class must be marked generic, found {generic}"));
    }
    Ok(entries)
}

/// Loads a class library from a manifest; model paths are relative to the
/// manifest's directory.
pub fn load_library(manifest: impl AsRef<Path>) -> Result<ClassLibrary> {
    let manifest = manifest.as_ref();
    let entries =
        parse_manifest(&read_text(manifest)?).map_err(|reason| Error::format("manifest", manifest, reason))?;
    let base = manifest.parent().unwrap_or_else(|| Path::new(""));
    let generic = entries.iter().position(|e| e.generic).unwrap_or(0);
    let mut classes = Vec::with_capacity(entries.len());
    for entry in entries {
        let model = load_model(base.join(&entry.path))?;
        classes.push((entry.name, model));
    }
    ClassLibrary::new(classes, generic).map_err(|e| Error::format("manifest", manifest, e.to_string()))
}

/// Writes one `<name>.gmm` file per class plus `library.txt` into `dir`,
/// returning the manifest path.
pub fn save_library(dir: impl AsRef<Path>, library: &ClassLibrary) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = format!("{MANIFEST_HEADER}\n");
    for (i, (name, model)) in library.names().iter().zip(library.models()).enumerate() {
        let file = format!("{name}.gmm");
        save_model(dir.join(&file), model)?;
        let marker = if i == library.generic_index() { " generic" } else { "" };
        writeln!(manifest, "{name} = {file}{marker}").expect("string write");
    }
    let path = dir.join("library.txt");
    write_atomic(&path, manifest.as_bytes())?;
    Ok(path)
}

/// Reads a kernel file: `rows cols` followed by the taps in row-major order.
/// Taps are normalized to unit sum.
pub fn read_kernel(path: impl AsRef<Path>) -> Result<BlurKernel> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let fail = |reason: String| Error::format("kernel", path, reason);
    let mut numbers = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    let mut dim = |what: &str| -> Result<usize> {
        numbers
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| fail(format!("missing or invalid {what}")))
    };
    let (rows, cols) = (dim("row count")?, dim("column count")?);
    let taps: Vec<f64> = numbers
        .map(|t| t.parse::<f64>().map_err(|_| fail(format!("bad tap {t:?}"))))
        .collect::<Result<_>>()?;
    if taps.len() != rows * cols {
        return Err(fail(format!("{} taps for a {rows}x{cols} kernel", taps.len())));
    }
    BlurKernel::new(rows, cols, taps).map_err(|e| fail(e.to_string()))
}

pub fn write_kernel(path: impl AsRef<Path>, kernel: &BlurKernel) -> Result<()> {
    let mut out = format!("{} {}\n", kernel.rows(), kernel.cols());
    for r in 0..kernel.rows() {
        let row: Vec<String> = (0..kernel.cols()).map(|c| format!("{:e}", kernel.tap(r, c))).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

/// Label field as an 8-bit image, class `c` of `C` mapped to gray
/// `round(255 c / (C − 1))`.
pub fn write_label_map(path: impl AsRef<Path>, labels: &LabelField, classes: usize) -> Result<()> {
    labels.ensure_classes(classes)?;
    let scale = if classes > 1 { 255.0 / (classes - 1) as f64 } else { 0.0 };
    let data = labels.labels().iter().map(|&l| l as f64 * scale).collect();
    write_pgm(path, &Image::new(labels.grid_rows(), labels.grid_cols(), data)?)
}

/// Sidecar legend, one `index gray name` line per class.
pub fn write_legend(path: impl AsRef<Path>, names: &[String]) -> Result<()> {
    let c = names.len();
    let mut out = String::new();
    for (i, name) in names.iter().enumerate() {
        let gray = if c > 1 {
            (i as f64 * 255.0 / (c - 1) as f64).round() as u8
        } else {
            0
        };
        writeln!(out, "{i} {gray} {name}").expect("string write");
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

/// Class names from a legend written by [`write_legend`], in index order.
pub fn read_legend(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let mut names = Vec::new();
    for (n, line) in read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let mut parts = line.split_whitespace();
        let index = parts.next().and_then(|t| t.parse::<usize>().ok());
        let name = parts.nth(1);
        match (index, name) {
            (Some(i), Some(name)) if i == names.len() => names.push(name.to_string()),
            _ => return Err(Error::format("legend", path, format!("bad line {}: {line:?}", n + 1))),
        }
    }
    Ok(names)
}
