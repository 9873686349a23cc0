//! `jetpat` — local jet pattern texture descriptor CLI.
//!
//! Exit codes: 0 success, 1 usage/configuration error, 2 data or runtime
//! error. Reports go to stdout, logs (including the resolved configuration
//! echo) to stderr.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use jetpat_core::harness::report::loglog_slope;
use jetpat_core::{
    dtg_kernel_2d, extract_dataset_features, generate_synthetic, run_experiment, standardize,
    write_dataset_images, Classifier, Dataset, ExperimentConfig, FeatureConfig, GrayImage,
    Interpolation, Mapping, Protocol, SubspaceRule, SynthSpec,
};

#[derive(Parser)]
#[command(
    name = "jetpat",
    version,
    about = "Jet-space texture descriptor: feature extraction, classification, and benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dump one derivative-of-Gaussian kernel as CSV (dense row-major grid)
    KernelDump(KernelDumpArgs),
    /// Extract features from a single image or a whole dataset
    Extract(ExtractArgs),
    /// Run a cross-validated classification experiment
    Experiment(ExperimentArgs),
    /// Generate a synthetic texture dataset as a PNG directory tree
    Synth(SynthArgs),
    /// Time feature extraction across image sizes and fit the scaling slope
    Bench(BenchArgs),
}

/// Flags shared by every subcommand that extracts features; they mirror the
/// feature configuration one to one.
#[derive(Args, Debug)]
struct FeatureArgs {
    /// Descriptor: the jet family (ljp) or the raw-intensity baseline (lbp)
    #[arg(long, default_value = "ljp")]
    descriptor: String,

    /// Gaussian scale of the jet
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,

    /// Kernel sampling half-width in pixels [default: ceil(4*sigma)]
    #[arg(long)]
    support_radius: Option<usize>,

    /// Neighbor circle radius R
    #[arg(long, default_value_t = 1.0)]
    radius: f64,

    /// Neighbor count N
    #[arg(long, default_value_t = 8)]
    neighbors: usize,

    /// Keep the zeroth-order jet channel
    #[arg(long, default_value_t = false, action = ArgAction::Set)]
    include_zeroth: bool,

    /// Histogram bin mapping: uniform (u2 reduction) or raw (2^N bins)
    #[arg(long, default_value = "uniform")]
    mapping: String,

    /// Sampling rule at fractional neighbor positions
    #[arg(long, default_value = "bilinear")]
    interpolation: String,

    /// Weber-law contrast normalization constant
    #[arg(long, default_value_t = 0.03)]
    weber: f64,
}

impl FeatureArgs {
    fn to_config(&self) -> Result<FeatureConfig, CliError> {
        let config = FeatureConfig {
            descriptor: self.descriptor.parse().map_err(usage)?,
            sigma: self.sigma,
            support_radius: self.support_radius,
            radius: self.radius,
            neighbors: self.neighbors,
            include_zeroth: self.include_zeroth,
            mapping: self.mapping.parse::<Mapping>().map_err(usage)?,
            interpolation: self.interpolation.parse::<Interpolation>().map_err(usage)?,
            weber_constant: self.weber,
        };
        config.validate().map_err(usage)?;
        Ok(config)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Args)]
struct KernelDumpArgs {
    /// x-derivative order (m + n <= 2)
    #[arg(long, default_value_t = 0)]
    m: usize,

    /// y-derivative order (m + n <= 2)
    #[arg(long, default_value_t = 0)]
    n: usize,

    /// Gaussian scale
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,

    /// Sampling half-width [default: ceil(4*sigma)]
    #[arg(long)]
    support_radius: Option<usize>,

    /// Output file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    feature: FeatureArgs,

    /// Single image to featurize
    #[arg(long, conflicts_with = "data")]
    image: Option<PathBuf>,

    /// Dataset directory to featurize in bulk
    #[arg(long)]
    data: Option<PathBuf>,

    /// Output format for single-image extraction
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// CSV export path (dataset mode)
    #[arg(long)]
    out_csv: Option<PathBuf>,

    /// Feature cache directory (dataset mode)
    #[arg(long, env = "JETPAT_CACHE_DIR")]
    cache_dir: Option<PathBuf>,

    /// Dump jet channels as <PREFIX>-mn.pgm / .csv; format follows the
    /// extension of PREFIX (single-image mode)
    #[arg(long)]
    dump_jet: Option<PathBuf>,

    /// Worker threads (0 = auto)
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    feature: FeatureArgs,

    /// Dataset directory (class-per-directory tree or Outex-style suite)
    #[arg(long)]
    data: PathBuf,

    /// Classifier: chi-square nearest neighbor (nnc) or nearest subspace (nsc)
    #[arg(long, default_value = "nsc")]
    classifier: String,

    /// Fold count for cross-validation
    #[arg(long, default_value_t = 10)]
    k: usize,

    /// Experiment seed; every random draw derives from it
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Inject white Gaussian noise at this SNR (dB) after standardization
    #[arg(long)]
    snr_db: Option<f64>,

    /// NSC subspace rule: an energy fraction in (0,1] or a fixed integer dimension
    #[arg(long, default_value = "0.99")]
    nsc_dim: String,

    /// Evaluation protocol: stratified k-fold or the suite's own split
    #[arg(long, default_value = "kfold")]
    protocol: String,

    /// Worker threads (0 = auto)
    #[arg(long, default_value_t = 0)]
    threads: usize,

    /// Feature cache directory
    #[arg(long, env = "JETPAT_CACHE_DIR")]
    cache_dir: Option<PathBuf>,

    /// Report format
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Omit timing fields so identical runs print identical bytes
    #[arg(long, default_value_t = false)]
    no_timing: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for the PNG tree
    #[arg(long)]
    out: PathBuf,

    /// Number of texture classes
    #[arg(long, default_value_t = 6)]
    classes: usize,

    /// Samples rendered per class
    #[arg(long, default_value_t = 20)]
    samples_per_class: usize,

    /// Square sample side in pixels
    #[arg(long, default_value_t = 64)]
    size: usize,

    /// Comma-separated rotation angles in degrees
    #[arg(long, value_delimiter = ',', default_value = "0,15,30,45,60,75,90")]
    rotations: Vec<f64>,

    /// Brightness offsets drawn from [-j, +j]
    #[arg(long, default_value_t = 20.0)]
    brightness_jitter: f64,

    /// Generator seed
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    feature: FeatureArgs,

    /// Comma-separated square image sizes
    #[arg(long, value_delimiter = ',', default_value = "64,128,256,512")]
    sizes: Vec<usize>,

    /// Timing repetitions per size (best is kept)
    #[arg(long, default_value_t = 3)]
    repeats: usize,

    /// Output format
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

enum CliError {
    Usage(String),
    Runtime(jetpat_core::Error),
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

impl From<jetpat_core::Error> for CliError {
    fn from(e: jetpat_core::Error) -> Self {
        CliError::Runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version land here with a "success" error kind.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::KernelDump(args) => kernel_dump(args),
        Command::Extract(args) => extract(args),
        Command::Experiment(args) => experiment(args),
        Command::Synth(args) => synth(args),
        Command::Bench(args) => bench(args),
    }
}

fn echo_config(config: &impl serde::Serialize) {
    eprintln!(
        "resolved config: {}",
        serde_json::to_string(config).expect("config serializes")
    );
}

fn kernel_dump(args: KernelDumpArgs) -> Result<(), CliError> {
    let radius = args
        .support_radius
        .unwrap_or_else(|| jetpat_core::default_support_radius(args.sigma));
    let kernel = dtg_kernel_2d(args.m, args.n, args.sigma, radius).map_err(usage)?;
    eprintln!(
        "resolved config: {{\"m\":{},\"n\":{},\"sigma\":{},\"support_radius\":{}}}",
        kernel.m, kernel.n, kernel.sigma, kernel.support_radius
    );
    match args.out {
        Some(path) => kernel.write_csv(&path)?,
        None => {
            let side = kernel.side();
            let dense = kernel.dense();
            for row in dense.chunks(side) {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                println!("{}", line.join(","));
            }
        }
    }
    Ok(())
}

fn extract(args: ExtractArgs) -> Result<(), CliError> {
    let feature = args.feature.to_config()?;
    echo_config(&feature);
    // The experiment runner reads config.threads itself; here the global
    // pool is capped before any parallel work starts.
    jetpat_core::harness::build_global_pool(args.threads).map_err(usage)?;

    if let Some(image_path) = &args.image {
        let image = GrayImage::load(image_path)?;
        let image = standardize(&image);

        if let Some(prefix) = &args.dump_jet {
            let jet = jetpat_core::compute_jet(
                &image,
                feature.sigma,
                feature.effective_support_radius(),
            )?;
            let ext = prefix
                .extension()
                .and_then(|e| e.to_str())
                .unwrap_or("pgm")
                .to_string();
            let stem = prefix.with_extension("");
            for (idx, (m, n)) in jetpat_core::JET_ORDERS.iter().enumerate() {
                let path = PathBuf::from(format!("{}-{m}{n}.{ext}", stem.display()));
                jet.dump_channel(idx, &path)?;
            }
        }

        let feat = jetpat_core::extract_feature(&image, &feature)?;
        match args.format {
            Format::Json => {
                let record = serde_json::json!({
                    "path": image_path.display().to_string(),
                    "fingerprint": format!("{:016x}", feature.fingerprint()),
                    "length": feat.len(),
                    "values": feat.values,
                });
                println!("{}", serde_json::to_string_pretty(&record).expect("json"));
            }
            Format::Text => {
                let header: Vec<String> = (0..feat.len()).map(|i| format!("f{i}")).collect();
                println!("path,label,{}", header.join(","));
                let row: Vec<String> = feat.values.iter().map(|v| v.to_string()).collect();
                println!("{},0,{}", image_path.display(), row.join(","));
            }
        }
        return Ok(());
    }

    let Some(data) = &args.data else {
        return Err(CliError::Usage(
            "either --image or --data is required".into(),
        ));
    };
    let dataset = Dataset::from_directory(data)?;
    let config = ExperimentConfig {
        feature,
        cache_dir: args.cache_dir.clone(),
        ..ExperimentConfig::default()
    };
    let extraction = extract_dataset_features(&dataset, &config)?;
    if let Some(csv) = &args.out_csv {
        jetpat_core::encoder::cache::export_csv(csv, &extraction.records)?;
    }
    eprintln!(
        "extracted {} features ({} fresh, {} cached)",
        extraction.records.len(),
        extraction.fresh_count,
        extraction.records.len() - extraction.fresh_count
    );
    if args.out_csv.is_none() {
        // No target file: stream the CSV to stdout.
        let width = extraction.records.first().map_or(0, |r| r.values.len());
        let header: Vec<String> = (0..width).map(|i| format!("f{i}")).collect();
        println!("path,label,{}", header.join(","));
        for rec in &extraction.records {
            let row: Vec<String> = rec.values.iter().map(|v| v.to_string()).collect();
            println!("{},{},{}", rec.rel_path, rec.label, row.join(","));
        }
    }
    Ok(())
}

fn experiment(args: ExperimentArgs) -> Result<(), CliError> {
    let config = ExperimentConfig {
        feature: args.feature.to_config()?,
        classifier: args.classifier.parse::<Classifier>().map_err(usage)?,
        k: args.k,
        seed: args.seed,
        snr_db: args.snr_db,
        nsc_dim: args.nsc_dim.parse::<SubspaceRule>().map_err(usage)?,
        protocol: args.protocol.parse::<Protocol>().map_err(usage)?,
        threads: args.threads,
        cache_dir: args.cache_dir.clone(),
    };
    config.validate().map_err(usage)?;
    echo_config(&config);

    let dataset = Dataset::from_directory(&args.data)?;
    let mut report = run_experiment(&dataset, &config)?;
    if args.no_timing {
        report.timing = None;
    }
    match args.format {
        Format::Json => println!("{}", report.to_json()),
        Format::Text => print!("{}", report.to_text()),
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<(), CliError> {
    let spec = SynthSpec {
        classes: args.classes,
        samples_per_class: args.samples_per_class,
        size: args.size,
        rotations_deg: args.rotations.clone(),
        brightness_jitter: args.brightness_jitter,
        seed: args.seed,
    };
    echo_config(&spec);
    let dataset = generate_synthetic(&spec)?;
    write_dataset_images(&dataset, &args.out)?;
    println!(
        "{}",
        serde_json::json!({
            "dir": args.out.display().to_string(),
            "classes": dataset.class_count(),
            "samples": dataset.len(),
            "class_names": dataset.class_names,
        })
    );
    Ok(())
}

fn bench(args: BenchArgs) -> Result<(), CliError> {
    let feature = args.feature.to_config()?;
    echo_config(&feature);
    if args.sizes.len() < 2 {
        return Err(CliError::Usage("need at least two sizes".into()));
    }
    if args.repeats < 1 {
        return Err(CliError::Usage("repeats must be at least 1".into()));
    }

    let mut points = Vec::new();
    for &size in &args.sizes {
        let image = synthetic_bench_image(size);
        let image = standardize(&image);
        let mut best = f64::INFINITY;
        for _ in 0..args.repeats {
            let started = Instant::now();
            let feat = jetpat_core::extract_feature(&image, &feature)?;
            let elapsed = started.elapsed().as_secs_f64();
            std::hint::black_box(&feat);
            best = best.min(elapsed);
        }
        points.push((size, best));
    }
    let slope = loglog_slope(
        &points
            .iter()
            .map(|&(s, t)| ((s * s) as f64, t))
            .collect::<Vec<_>>(),
    );

    match args.format {
        Format::Json => {
            let per_size: Vec<serde_json::Value> = points
                .iter()
                .map(|&(s, t)| serde_json::json!({"size": s, "seconds": t}))
                .collect();
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::json!({
                    "per_size": per_size,
                    "loglog_slope": slope,
                }))
                .expect("json")
            );
        }
        Format::Text => {
            println!("{:>6}  {:>12}", "size", "seconds");
            for (s, t) in &points {
                println!("{s:>6}  {t:>12.6}");
            }
            println!("\nlog-log slope vs pixel count: {slope:.3}");
        }
    }
    Ok(())
}

/// Deterministic multi-scale test pattern for timing runs.
fn synthetic_bench_image(size: usize) -> GrayImage {
    GrayImage::from_fn(size, size, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        128.0
            + 40.0 * (0.37 * xf).sin() * (0.21 * yf).cos()
            + 20.0 * (0.05 * (xf + 2.0 * yf)).sin()
    })
}
