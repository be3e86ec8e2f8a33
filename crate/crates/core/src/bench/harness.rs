use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::degrade::{degrade, registry_entry, ExperimentSpec};
use super::metrics::MetricReport;
use crate::admm::{restore, DegradationModel, Diagnostics, RestorationConfig};
use crate::classify::{ClassLibrary, ClassifyMode, LabelField};
use crate::error::{Error, Result};
use crate::image::{convolve_periodic, Image};
use crate::io::{load_library, read_pgm, read_text, write_atomic, write_label_map, write_legend, write_pgm};

/// Everything one degrade-restore-evaluate run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub experiment: String,
    pub mode: ClassifyMode,
    pub noise_variance: f64,
    pub observed: Image,
    pub restored: Image,
    pub labels: LabelField,
    pub report: MetricReport,
    pub diagnostics: Diagnostics,
}

/// Degrades `reference` per `spec`, restores it, and scores the result.
pub fn run_experiment(
    reference: &Image,
    spec: &ExperimentSpec,
    library: &ClassLibrary,
    config: &RestorationConfig,
) -> Result<RunOutput> {
    let observed = degrade(reference, spec)?;
    let model = DegradationModel::blur(spec.kernel.clone(), spec.sigma())?;
    let restored = restore(&observed, &model, library, config)?;
    let blurred = convolve_periodic(reference, &spec.kernel)?;
    let report = MetricReport::compute(reference, &observed, &restored.image, &blurred, spec.noise_variance)?;
    Ok(RunOutput {
        experiment: spec.name.clone(),
        mode: config.classify_mode,
        noise_variance: spec.noise_variance,
        observed,
        restored: restored.image,
        labels: restored.labels,
        report,
        diagnostics: restored.diagnostics,
    })
}

/// Text body of `report.txt`.
pub fn report_text(output: &RunOutput) -> String {
    let mut out = String::new();
    writeln!(out, "experiment {}", output.experiment).expect("string write");
    writeln!(out, "mode {}", output.mode).expect("string write");
    writeln!(out, "noise_variance {:.6}", output.noise_variance).expect("string write");
    writeln!(out, "iterations {}", output.diagnostics.iterations()).expect("string write");
    writeln!(out, "converged {}", output.diagnostics.converged).expect("string write");
    out.push_str(&output.report.to_string());
    out
}

/// Writes `observed.pgm`, `restored.pgm`, `labels.pgm`, `labels.txt`,
/// `diag.csv` and `report.txt` into `dir`, each atomically.
pub fn write_run(dir: &Path, output: &RunOutput, class_names: &[String]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_pgm(dir.join("observed.pgm"), &output.observed)?;
    write_pgm(dir.join("restored.pgm"), &output.restored)?;
    write_label_map(dir.join("labels.pgm"), &output.labels, class_names.len())?;
    write_legend(dir.join("labels.txt"), class_names)?;
    write_atomic(&dir.join("diag.csv"), output.diagnostics.to_csv().as_bytes())?;
    write_atomic(&dir.join("report.txt"), report_text(output).as_bytes())
}

/// Harness settings read from a `key = value` file.
#[derive(Clone, Debug, PartialEq)]
pub struct HarnessConfig {
    pub references: Vec<PathBuf>,
    pub library: PathBuf,
    pub experiments: Vec<usize>,
    pub modes: Vec<ClassifyMode>,
    pub output: PathBuf,
    pub restoration: RestorationConfig,
}

fn parse_list<T>(value: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(item)
        .collect()
}

fn parse_number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Argument(format!("invalid value {value:?} for {key}")))
}

impl HarnessConfig {
    /// Parses harness settings. Relative paths resolve against `base`.
    ///
    /// Keys: `reference` (repeatable), `library`, `experiments` (e.g.
    /// `1,3`), `modes` (e.g. `none,ml,alpha`), `output`, and the restoration
    /// settings `patch_size`, `mu`, `max_iters`, `rel_tol`, `beta`,
    /// `switch_iter` (a number or `off`), `switch_k`, `seed`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut references = Vec::new();
        let mut library = None;
        let mut experiments = vec![1, 2, 3, 4, 5, 6];
        let mut modes = vec![ClassifyMode::None, ClassifyMode::Ml, ClassifyMode::Alpha];
        let mut output = None;
        let mut r = RestorationConfig {
            patch_size: 6,
            ..RestorationConfig::default()
        };
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Argument(format!("config line {}: expected key = value", n + 1)))?;
            match key {
                "reference" => references.push(base.join(value)),
                "library" => library = Some(base.join(value)),
                "output" => output = Some(base.join(value)),
                "experiments" => experiments = parse_list(value, |s| parse_number(key, s))?,
                "modes" => modes = parse_list(value, str::parse)?,
                "patch_size" => r.patch_size = parse_number(key, value)?,
                "mu" => r.mu = Some(parse_number(key, value)?),
                "max_iters" => r.max_iters = parse_number(key, value)?,
                "rel_tol" => r.rel_tol = parse_number(key, value)?,
                "beta" => r.beta = parse_number(key, value)?,
                "switch_iter" => {
                    r.switch_iteration = match value {
                        "off" | "none" => None,
                        v => Some(parse_number(key, v)?),
                    }
                }
                "switch_k" => r.switch_components = parse_number(key, value)?,
                "seed" => r.seed = parse_number(key, value)?,
                other => return Err(Error::Argument(format!("config line {}: unknown key {other:?}", n + 1))),
            }
        }
        if references.is_empty() {
            return Err(Error::Argument("config names no reference images".into()));
        }
        for &e in &experiments {
            registry_entry(e)?;
        }
        r.validate()?;
        Ok(HarnessConfig {
            references,
            library: library.ok_or_else(|| Error::Argument("config is missing `library`".into()))?,
            experiments,
            modes,
            output: output.ok_or_else(|| Error::Argument("config is missing `output`".into()))?,
            restoration: r,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&read_text(path)?, path.parent().unwrap_or_else(|| Path::new("")))
    }
}

/// Summary line of one harness run.
#[derive(Clone, Debug, PartialEq)]
pub struct HarnessResult {
    pub run: String,
    pub report: MetricReport,
}

/// Runs every (reference, experiment, mode) combination, writing one run
/// directory each plus `summary.txt`.
pub fn run_harness(config: &HarnessConfig) -> Result<Vec<HarnessResult>> {
    let library = load_library(&config.library)?;
    let mut results = Vec::new();
    for reference_path in &config.references {
        let reference = read_pgm(reference_path)?;
        let stem = reference_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "image".into());
        for &e in &config.experiments {
            let spec = registry_entry(e)?.instantiate(&reference, config.restoration.seed)?;
            for &mode in &config.modes {
                let run_config = RestorationConfig {
                    classify_mode: mode,
                    ..config.restoration.clone()
                };
                let output = run_experiment(&reference, &spec, &library, &run_config)?;
                let run = format!("{stem}_{}_{mode}", spec.name);
                write_run(&config.output.join(&run), &output, library.names())?;
                results.push(HarnessResult {
                    run,
                    report: output.report,
                });
            }
        }
    }
    let mut summary = String::from("run bsnr psnr_in psnr_out isnr\n");
    for r in &results {
        writeln!(
            summary,
            "{} {} {} {} {}",
            r.run,
            super::format_db(r.report.bsnr),
            super::format_db(r.report.psnr_in),
            super::format_db(r.report.psnr_out),
            super::format_db(r.report.isnr)
        )
        .expect("string write");
    }
    write_atomic(&config.output.join("summary.txt"), summary.as_bytes())?;
    Ok(results)
}
