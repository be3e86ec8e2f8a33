use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use classpnp::admm::{denoise_image, restore, DegradationModel, RestorationConfig};
use classpnp::bench::{
    bsnr, degrade, format_db, isnr, psnr, registry_entry, run_harness, sample_patches, ExperimentSpec, HarnessConfig,
    SyntheticClass,
};
use classpnp::classify::{classify_patches, ClassLibrary, ClassifyMode};
use classpnp::gmm::{em_fit_clean, em_fit_noisy, EmOptions};
use classpnp::image::{convolve_periodic, extract_patches, BlurKernel, Image};
use classpnp::io::{
    load_library, read_kernel, read_pgm, save_model, save_model_text, write_atomic, write_label_map, write_legend,
    write_pgm,
};
use classpnp::{Error, Result};

/// Class-adapted GMM patch-prior restoration.
///
/// The thread pool size can be set with CLASSPNP_THREADS.
#[derive(Parser)]
#[command(name = "classpnp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a GMM patch prior to a set of images.
    Train(TrainArgs),
    /// Single-pass multi-class denoising of a noisy image.
    Denoise(DenoiseArgs),
    /// Plug-and-play ADMM deblurring.
    Deblur(DeblurArgs),
    /// Export the patch classification of an image.
    Segment(SegmentArgs),
    /// Print PSNR / ISNR / BSNR for a restoration.
    Evaluate(EvaluateArgs),
    /// Run the experiment harness from a config file.
    Bench(BenchArgs),
    /// Blur and add noise to a clean image.
    Degrade(DegradeArgs),
    /// Write a procedurally generated test image.
    Synth(SynthArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Training images (PGM).
    #[arg(required = true)]
    images: Vec<PathBuf>,
    #[arg(short = 'k', long, default_value_t = 20)]
    components: usize,
    #[arg(short = 'p', long, default_value_t = 8)]
    patch_size: usize,
    /// Fit to noisy patches with this noise standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Train on a random subset of at most this many patches.
    #[arg(long)]
    max_patches: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the text model format instead of binary.
    #[arg(long)]
    text: bool,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Library manifest.
    #[arg(short, long)]
    library: PathBuf,
    #[arg(long, default_value = "ml")]
    mode: ClassifyMode,
    /// Potts penalty per disagreeing neighbour pair.
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
}

#[derive(Args)]
struct DenoiseArgs {
    #[arg(short, long)]
    input: PathBuf,
    /// Noise standard deviation.
    #[arg(long)]
    sigma: f64,
    #[command(flatten)]
    classify: ClassifyArgs,
    /// Add a class fitted to the input itself with this many components.
    #[arg(long)]
    self_model: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out: PathBuf,
    /// Label map output (PGM); a legend is written next to it.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args)]
struct DeblurArgs {
    #[arg(short, long)]
    input: PathBuf,
    /// Kernel file; omit for pure denoising.
    #[arg(long)]
    kernel: Option<PathBuf>,
    #[arg(long)]
    sigma: f64,
    #[command(flatten)]
    classify: ClassifyArgs,
    #[arg(short = 'p', long, default_value_t = 8)]
    patch_size: usize,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    rel_tol: f64,
    /// Iteration of the generic-model retraining, or `off`.
    #[arg(long, default_value = "100")]
    switch_iter: String,
    #[arg(long, default_value_t = 20)]
    switch_k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long)]
    sigma: f64,
    #[command(flatten)]
    classify: ClassifyArgs,
    /// Label map output (PGM); a legend is written next to it.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(short, long)]
    reference: PathBuf,
    /// Restored image.
    #[arg(short, long, required_unless_present = "run_dir")]
    estimate: Option<PathBuf>,
    /// Degraded input, for input PSNR and ISNR.
    #[arg(long)]
    observed: Option<PathBuf>,
    /// Run directory with observed.pgm and restored.pgm.
    #[arg(long, conflicts_with_all = ["estimate", "observed"])]
    run_dir: Option<PathBuf>,
    /// Blur kernel, for BSNR (identity when omitted).
    #[arg(long)]
    kernel: Option<PathBuf>,
    /// Noise variance, for BSNR.
    #[arg(long)]
    noise_var: Option<f64>,
}

#[derive(Args)]
struct BenchArgs {
    config: PathBuf,
}

#[derive(Args)]
struct DegradeArgs {
    #[arg(short, long)]
    input: PathBuf,
    /// Registry experiment number (1-6).
    #[arg(long, conflicts_with_all = ["kernel", "noise_var"])]
    experiment: Option<usize>,
    #[arg(long)]
    kernel: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    noise_var: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    class: SyntheticClass,
    #[arg(long, default_value_t = 128)]
    height: usize,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out: PathBuf,
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("sigma must be finite and > 0, got {sigma}")))
    }
}

fn legend_path(labels: &Path) -> PathBuf {
    labels.with_extension("txt")
}

fn write_labels(path: &Path, labels: &classpnp::classify::LabelField, library: &ClassLibrary) -> Result<()> {
    write_label_map(path, labels, library.len())?;
    write_legend(legend_path(path), library.names())
}

fn train(a: TrainArgs) -> Result<()> {
    let images: Vec<Image> = a.images.iter().map(read_pgm).collect::<Result<_>>()?;
    let patches = sample_patches(&images, a.patch_size, a.max_patches, a.seed)?;
    let options = EmOptions {
        components: a.components,
        max_iters: a.max_iters,
        tol: a.tol,
        seed: a.seed,
    };
    let fit = match a.sigma {
        Some(s) => em_fit_noisy(&patches, s, &options)?,
        None => em_fit_clean(&patches, &options)?,
    };
    if a.text {
        save_model_text(&a.out, &fit.model)?;
    } else {
        save_model(&a.out, &fit.model)?;
    }
    println!(
        "components {} dim {} patches {} iterations {} log_likelihood {:.6}",
        fit.model.components(),
        fit.model.dim(),
        patches.count(),
        fit.iterations,
        fit.log_likelihood_trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn with_self_model(mut library: ClassLibrary, y: &Image, sigma: f64, k: usize, seed: u64) -> Result<ClassLibrary> {
    let patches = extract_patches(y, library.patch_size())?;
    let options = EmOptions {
        components: k,
        seed,
        ..EmOptions::default()
    };
    let fit = em_fit_noisy(&patches, sigma, &options)?;
    library.push("self", fit.model)?;
    Ok(library)
}

fn denoise(a: DenoiseArgs) -> Result<()> {
    check_sigma(a.sigma)?;
    let y = read_pgm(&a.input)?;
    let mut library = load_library(&a.classify.library)?;
    if let Some(k) = a.self_model {
        library = with_self_model(library, &y, a.sigma, k, a.seed)?;
    }
    let (image, labels) = denoise_image(&y, &library, a.sigma, a.classify.mode, a.classify.beta, None)?;
    write_pgm(&a.out, &image)?;
    if let Some(path) = &a.labels {
        write_labels(path, &labels, &library)?;
    }
    Ok(())
}

fn parse_switch(value: &str) -> Result<Option<usize>> {
    match value {
        "off" | "none" => Ok(None),
        v => v
            .parse()
            .map(Some)
            .map_err(|_| Error::Argument(format!("invalid --switch-iter {v:?}"))),
    }
}

fn deblur(a: DeblurArgs) -> Result<()> {
    check_sigma(a.sigma)?;
    let y = read_pgm(&a.input)?;
    let library = load_library(&a.classify.library)?;
    let model = match &a.kernel {
        Some(k) => DegradationModel::blur(read_kernel(k)?, a.sigma)?,
        None => DegradationModel::identity(a.sigma)?,
    };
    let config = RestorationConfig {
        patch_size: a.patch_size,
        mu: a.mu,
        max_iters: a.max_iters,
        rel_tol: a.rel_tol,
        classify_mode: a.classify.mode,
        beta: a.classify.beta,
        switch_iteration: parse_switch(&a.switch_iter)?,
        switch_components: a.switch_k,
        seed: a.seed,
    };
    config.validate()?;
    let result = restore(&y, &model, &library, &config)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::Data(format!("cannot create {}: {e}", a.out.display())))?;
    write_pgm(a.out.join("restored.pgm"), &result.image)?;
    write_labels(&a.out.join("labels.pgm"), &result.labels, &library)?;
    write_atomic(&a.out.join("diag.csv"), result.diagnostics.to_csv().as_bytes())?;
    println!(
        "iterations {} converged {}",
        result.diagnostics.iterations(),
        result.diagnostics.converged
    );
    Ok(())
}

fn segment(a: SegmentArgs) -> Result<()> {
    check_sigma(a.sigma)?;
    let y = read_pgm(&a.input)?;
    let library = load_library(&a.classify.library)?;
    let patches = extract_patches(&y, library.patch_size())?;
    let labels = classify_patches(&patches, &library, a.sigma, a.classify.mode, a.classify.beta, None)?;
    write_labels(&a.out, &labels, &library)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let reference = read_pgm(&a.reference)?;
    let (estimate, observed) = match &a.run_dir {
        Some(dir) => {
            let observed = dir.join("observed.pgm");
            let observed = if observed.is_file() {
                Some(read_pgm(observed)?)
            } else {
                None
            };
            (read_pgm(dir.join("restored.pgm"))?, observed)
        }
        None => {
            let estimate = a.estimate.as_ref().expect("clap requires --estimate without --run-dir");
            (read_pgm(estimate)?, a.observed.as_ref().map(read_pgm).transpose()?)
        }
    };
    if let Some(var) = a.noise_var {
        let kernel = match &a.kernel {
            Some(k) => read_kernel(k)?,
            None => BlurKernel::identity(),
        };
        let blurred = convolve_periodic(&reference, &kernel)?;
        println!("bsnr {}", format_db(bsnr(&blurred, var)?));
    }
    if let Some(obs) = &observed {
        println!("psnr_in {}", format_db(psnr(obs, &reference)?));
    }
    println!("psnr_out {}", format_db(psnr(&estimate, &reference)?));
    if let Some(obs) = &observed {
        println!("isnr {}", format_db(isnr(obs, &estimate, &reference)?));
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let config = HarnessConfig::load(&a.config)?;
    for r in run_harness(&config)? {
        println!(
            "{} bsnr {} psnr_in {} psnr_out {} isnr {}",
            r.run,
            format_db(r.report.bsnr),
            format_db(r.report.psnr_in),
            format_db(r.report.psnr_out),
            format_db(r.report.isnr)
        );
    }
    Ok(())
}

fn degrade_cmd(a: DegradeArgs) -> Result<()> {
    let reference = read_pgm(&a.input)?;
    let spec = match a.experiment {
        Some(n) => registry_entry(n)?.instantiate(&reference, a.seed)?,
        None => {
            let kernel = match &a.kernel {
                Some(k) => read_kernel(k)?,
                None => BlurKernel::identity(),
            };
            ExperimentSpec::new("custom", kernel, a.noise_var, a.seed)?
        }
    };
    write_pgm(&a.out, &degrade(&reference, &spec)?)?;
    println!("noise_var {:.6} sigma {:.6}", spec.noise_variance, spec.sigma());
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    if a.height == 0 || a.width == 0 {
        return Err(Error::Argument("image dimensions must be positive".into()));
    }
    write_pgm(&a.out, &a.class.generate(a.height, a.width, a.seed))
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("CLASSPNP_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Error::Argument(format!("CLASSPNP_THREADS must be a number, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Argument(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Train(a) => train(a),
        Command::Denoise(a) => denoise(a),
        Command::Deblur(a) => deblur(a),
        Command::Segment(a) => segment(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Bench(a) => bench(a),
        Command::Degrade(a) => degrade_cmd(a),
        Command::Synth(a) => synth(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
