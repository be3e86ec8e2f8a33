//! Per-patch class assignment: independent maximum likelihood, or joint
//! labeling under a Potts prior minimized with α-expansion.

mod expansion;
mod maxflow;

pub use expansion::{alpha_expansion, alpha_expansion_traced, Expansion};
pub use maxflow::{max_flow_min_cut, FlowArc, FlowNetwork, MinCut};

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gmm::{class_log_likelihoods, GmmModel};
use crate::image::PatchMatrix;

/// Upper bound on expansion cycles inside [`classify_patches`].
pub const MAX_EXPANSION_CYCLES: usize = 10;

/// Named class priors sharing one patch size, one of which is the generic
/// fallback.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassLibrary {
    names: Vec<String>,
    models: Vec<GmmModel>,
    generic: usize,
}

impl ClassLibrary {
    pub fn new(classes: Vec<(String, GmmModel)>, generic_index: usize) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Argument("class library needs at least one class".into()));
        }
        if generic_index >= classes.len() {
            return Err(Error::Argument(format!(
                "generic index {generic_index} out of range for {} classes",
                classes.len()
            )));
        }
        let mut seen = HashSet::new();
        let p = classes[0].1.patch_size();
        for (name, model) in &classes {
            if !seen.insert(name.as_str()) {
                return Err(Error::Argument(format!("duplicate class name {name:?}")));
            }
            if model.patch_size().is_none() || model.patch_size() != p {
                return Err(Error::Argument(format!(
                    "class {name:?} has patch size {:?}, expected {:?}",
                    model.patch_size(),
                    p
                )));
            }
        }
        let (names, models) = classes.into_iter().unzip();
        Ok(ClassLibrary {
            names,
            models,
            generic: generic_index,
        })
    }

    /// Library holding a single model, which is also the generic one.
    pub fn single(name: &str, model: GmmModel) -> Result<Self> {
        Self::new(vec![(name.to_string(), model)], 0)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn patch_size(&self) -> usize {
        self.models[0].patch_size().expect("validated on construction")
    }

    pub fn generic_index(&self) -> usize {
        self.generic
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn models(&self) -> &[GmmModel] {
        &self.models
    }

    pub fn model(&self, index: usize) -> &GmmModel {
        &self.models[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Swaps in a new model for one class, keeping its name.
    pub fn replace_model(&mut self, index: usize, model: GmmModel) -> Result<()> {
        if model.patch_size() != Some(self.patch_size()) {
            return Err(Error::Argument(format!(
                "replacement model has patch size {:?}, library uses {}",
                model.patch_size(),
                self.patch_size()
            )));
        }
        self.models[index] = model;
        Ok(())
    }

    /// Appends a class; returns its index.
    pub fn push(&mut self, name: &str, model: GmmModel) -> Result<usize> {
        if self.index_of(name).is_some() {
            return Err(Error::Argument(format!("duplicate class name {name:?}")));
        }
        if model.patch_size() != Some(self.patch_size()) {
            return Err(Error::Argument(format!(
                "class {name:?} has patch size {:?}, library uses {}",
                model.patch_size(),
                self.patch_size()
            )));
        }
        self.names.push(name.to_string());
        self.models.push(model);
        Ok(self.models.len() - 1)
    }
}

/// Class label for every location of a patch grid (row-major).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelField {
    grid_rows: usize,
    grid_cols: usize,
    labels: Vec<usize>,
}

impl LabelField {
    pub fn new(grid_rows: usize, grid_cols: usize, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != grid_rows * grid_cols {
            return Err(Error::Dimension(format!(
                "{} labels for a {grid_rows}x{grid_cols} grid",
                labels.len()
            )));
        }
        Ok(LabelField {
            grid_rows,
            grid_cols,
            labels,
        })
    }

    pub fn uniform(grid_rows: usize, grid_cols: usize, label: usize) -> Self {
        LabelField {
            grid_rows,
            grid_cols,
            labels: vec![label; grid_rows * grid_cols],
        }
    }

    pub fn grid_rows(&self) -> usize {
        self.grid_rows
    }

    pub fn grid_cols(&self) -> usize {
        self.grid_cols
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> usize {
        self.labels[row * self.grid_cols + col]
    }

    pub fn ensure_classes(&self, classes: usize) -> Result<()> {
        match self.labels.iter().find(|&&l| l >= classes) {
            Some(bad) => Err(Error::Argument(format!(
                "label {bad} out of range for {classes} classes"
            ))),
            None => Ok(()),
        }
    }

    /// Number of 4-neighbor pairs carrying different labels.
    pub fn disagreements(&self) -> usize {
        let (r, c) = (self.grid_rows, self.grid_cols);
        let mut count = 0;
        for i in 0..r {
            for j in 0..c {
                let l = self.labels[i * c + j];
                if j + 1 < c && self.labels[i * c + j + 1] != l {
                    count += 1;
                }
                if i + 1 < r && self.labels[(i + 1) * c + j] != l {
                    count += 1;
                }
            }
        }
        count
    }

    /// Number of sites whose label differs from `other`.
    pub fn changed_from(&self, other: &LabelField) -> usize {
        self.labels.iter().zip(&other.labels).filter(|(a, b)| a != b).count()
    }

    /// Fraction of sites agreeing with `truth`.
    pub fn accuracy(&self, truth: &LabelField) -> f64 {
        let hits = self.labels.iter().zip(&truth.labels).filter(|(a, b)| a == b).count();
        hits as f64 / self.labels.len() as f64
    }
}

/// Negative class log-likelihoods, one row of `C` costs per patch.
#[derive(Clone, Debug, PartialEq)]
pub struct UnaryCosts {
    sites: usize,
    classes: usize,
    costs: Vec<f64>,
}

impl UnaryCosts {
    pub fn new(sites: usize, classes: usize, costs: Vec<f64>) -> Result<Self> {
        if classes == 0 {
            return Err(Error::Argument("need at least one class".into()));
        }
        if costs.len() != sites * classes {
            return Err(Error::Dimension(format!(
                "{} costs for {sites} sites x {classes} classes",
                costs.len()
            )));
        }
        if costs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Data("unary costs must be finite".into()));
        }
        Ok(UnaryCosts { sites, classes, costs })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    #[inline]
    pub fn cost(&self, site: usize, class: usize) -> f64 {
        self.costs[site * self.classes + class]
    }

    pub fn row(&self, site: usize) -> &[f64] {
        &self.costs[site * self.classes..(site + 1) * self.classes]
    }
}

/// How patches are assigned to classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassifyMode {
    /// Every patch uses the generic model.
    None,
    /// Independent maximum likelihood per patch.
    Ml,
    /// Joint Potts labeling by α-expansion.
    Alpha,
}

impl fmt::Display for ClassifyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifyMode::None => "none",
            ClassifyMode::Ml => "ml",
            ClassifyMode::Alpha => "alpha",
        })
    }
}

impl FromStr for ClassifyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(ClassifyMode::None),
            "ml" => Ok(ClassifyMode::Ml),
            "alpha" => Ok(ClassifyMode::Alpha),
            other => Err(Error::Argument(format!(
                "unknown classification mode {other:?} (expected none, ml or alpha)"
            ))),
        }
    }
}

/// `costs[i][c] = -ln p(y_i | c)` under noise level `sigma`.
pub fn unary_costs(patches: &PatchMatrix, library: &ClassLibrary, sigma: f64) -> Result<UnaryCosts> {
    check_library(patches, library)?;
    let n = patches.count();
    let c = library.len();
    let mut costs = vec![0.0; n * c];
    for (k, model) in library.models().iter().enumerate() {
        for (i, ll) in class_log_likelihoods(patches, model, sigma)?.into_iter().enumerate() {
            costs[i * c + k] = -ll;
        }
    }
    UnaryCosts::new(n, c, costs)
}

fn check_library(patches: &PatchMatrix, library: &ClassLibrary) -> Result<()> {
    if patches.patch_size() != library.patch_size() {
        return Err(Error::Argument(format!(
            "patches are {}x{0}, library expects {}x{1}",
            patches.patch_size(),
            library.patch_size()
        )));
    }
    Ok(())
}

/// Lowest-cost class per site; ties go to the lowest class index.
pub fn ml_labels(unary: &UnaryCosts) -> Vec<usize> {
    (0..unary.sites())
        .map(|i| {
            let row = unary.row(i);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate().skip(1) {
                if v < row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Maximum-likelihood labeling on a `grid_rows x grid_cols` patch grid.
pub fn ml_classify(unary: &UnaryCosts, grid_rows: usize, grid_cols: usize) -> Result<LabelField> {
    LabelField::new(grid_rows, grid_cols, ml_labels(unary))
}

/// `Σ_i unary[i][c_i] + β · #{4-neighbor pairs with c_i ≠ c_j}`.
pub fn potts_energy(labels: &LabelField, unary: &UnaryCosts, beta: f64) -> Result<f64> {
    if labels.len() != unary.sites() {
        return Err(Error::Dimension(format!(
            "{} labels for {} unary sites",
            labels.len(),
            unary.sites()
        )));
    }
    labels.ensure_classes(unary.classes())?;
    Ok(energy_unchecked(labels, unary, beta))
}

pub(crate) fn energy_unchecked(labels: &LabelField, unary: &UnaryCosts, beta: f64) -> f64 {
    let data: f64 = labels.labels.iter().enumerate().map(|(i, &l)| unary.cost(i, l)).sum();
    data + beta * labels.disagreements() as f64
}

/// Labels every patch location according to `mode`. In `Alpha` mode the
/// expansion starts from `previous` when its shape matches, otherwise from
/// the ML labeling.
pub fn classify_patches(
    patches: &PatchMatrix,
    library: &ClassLibrary,
    sigma: f64,
    mode: ClassifyMode,
    beta: f64,
    previous: Option<&LabelField>,
) -> Result<LabelField> {
    check_library(patches, library)?;
    let (rows, cols) = (patches.grid_rows(), patches.grid_cols());
    match mode {
        ClassifyMode::None => Ok(LabelField::uniform(rows, cols, library.generic_index())),
        ClassifyMode::Ml => ml_classify(&unary_costs(patches, library, sigma)?, rows, cols),
        ClassifyMode::Alpha => {
            let unary = unary_costs(patches, library, sigma)?;
            let init = match previous {
                Some(prev)
                    if prev.grid_rows() == rows
                        && prev.grid_cols() == cols
                        && prev.ensure_classes(library.len()).is_ok() =>
                {
                    prev.clone()
                }
                _ => ml_classify(&unary, rows, cols)?,
            };
            alpha_expansion(&unary, beta, &init, MAX_EXPANSION_CYCLES)
        }
    }
}
