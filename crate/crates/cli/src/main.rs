//! docbin: batch document binarization, parameter sweeps, method benchmarks,
//! synthetic fixture generation and mask scoring.
//!
//! Exit codes: 0 success; 1 when some batch images failed but the run
//! continued; 2 for usage or config errors; 3 for i/o errors. Diagnostics go
//! to stderr; machine-readable CSV/NDJSON goes to stdout untainted.

use clap::{Args, Parser, Subcommand, ValueEnum};
use docbin_core::evaluate::{
    self, bench_csv, score, sweep, sweep_csv, DegradationSpec, RankMetric, SweepSpec,
};
use docbin_core::image::{BinaryImage, GrayImage, Image};
use docbin_core::netpbm;
use docbin_core::pipeline::{self, records_to_csv, records_to_ndjson};
use docbin_core::Method;
use serde::Deserialize;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

const EXIT_PARTIAL: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

struct CliError {
    code: u8,
    message: String,
}

fn usage_error(message: impl Display) -> CliError {
    CliError {
        code: EXIT_USAGE,
        message: message.to_string(),
    }
}

fn io_error(message: impl Display) -> CliError {
    CliError {
        code: EXIT_IO,
        message: message.to_string(),
    }
}

#[derive(Parser)]
#[command(
    name = "docbin",
    version,
    about = "Document image binarization: preprocessing pipelines, global and local thresholding, \
             parameter sweeps, benchmarks and mask scoring"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured pipeline over one or more netpbm images
    Binarize(BinarizeArgs),
    /// Evaluate a parameter grid against a ground-truth mask, ranked CSV out
    Sweep(SweepArgs),
    /// Time end-to-end binarization methods on one image
    Bench(BenchArgs),
    /// Render a ground-truth mask into a synthetic degraded page
    Synth(SynthArgs),
    /// Compare a predicted mask against a ground-truth mask
    Score(ScoreArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Csv,
    Ndjson,
}

#[derive(Args)]
struct BinarizeArgs {
    /// Pipeline config file (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Directory for the binarized outputs
    #[arg(long)]
    out: PathBuf,
    /// Also write every stage's intermediate image
    #[arg(long)]
    emit_intermediates: bool,
    /// Report format; defaults to ndjson when only --report-file is given
    #[arg(long, value_enum)]
    report: Option<ReportFormat>,
    /// Write the report to this file instead of standard output
    #[arg(long)]
    report_file: Option<PathBuf>,
    /// Worker threads for the batch (default: available cores)
    #[arg(long)]
    jobs: Option<usize>,
    /// Input images (netpbm P4/P5/P6)
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Method to sweep: otsu, niblack, zhang_tan or sauvola
    #[arg(long)]
    method: String,
    /// Ground-truth mask (P4)
    #[arg(long)]
    truth: PathBuf,
    /// Grid file (JSON); defaults to the method's default parameters
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Write the ranked CSV here instead of standard output
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grayscale image to binarize (P5)
    image: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated method names
    #[arg(long, value_delimiter = ',', default_value = "otsu,niblack,zhang_tan,sauvola")]
    methods: Vec<String>,
    /// Timed repetitions per method (>= 3), after one discarded warm-up
    #[arg(long, default_value_t = 5)]
    reps: u32,
    /// Grayscale image to binarize (P5)
    image: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Ground-truth text mask (P4)
    #[arg(long)]
    mask: PathBuf,
    /// Maximum left-to-right darkening in gray levels
    #[arg(long, default_value_t = 0.0)]
    gradient: f64,
    /// Gaussian noise standard deviation in gray levels
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Number of dark spots to stamp
    #[arg(long, default_value_t = 0)]
    spots: u32,
    /// Spot radius in pixels
    #[arg(long, default_value_t = 4)]
    spot_radius: u32,
    /// Generator seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output graymap path (P5)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    /// Ground-truth mask (P4)
    #[arg(long)]
    truth: PathBuf,
    /// Predicted mask (P4)
    pred: PathBuf,
}

fn read_image(path: &Path) -> Result<Image, CliError> {
    netpbm::read_file(path).map_err(|e| io_error(format!("{}: {e}", path.display())))
}

fn require_gray(image: Image, path: &Path) -> Result<GrayImage, CliError> {
    match image {
        Image::Gray(g) => Ok(g),
        other => Err(usage_error(format!(
            "{}: expected a grayscale image (P5), got {}",
            path.display(),
            other.kind_name()
        ))),
    }
}

fn require_binary(image: Image, path: &Path) -> Result<BinaryImage, CliError> {
    match image {
        Image::Binary(b) => Ok(b),
        other => Err(usage_error(format!(
            "{}: expected a bitmap mask (P4), got {}",
            path.display(),
            other.kind_name()
        ))),
    }
}

fn parse_method(name: &str) -> Result<Method, CliError> {
    Method::parse(name).ok_or_else(|| {
        usage_error(format!(
            "unknown method \"{name}\" (expected otsu, niblack, zhang_tan or sauvola)"
        ))
    })
}

fn write_text(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content).map_err(|e| io_error(format!("{}: {e}", path.display())))
}

fn cmd_binarize(args: BinarizeArgs) -> Result<u8, CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| usage_error(format!("config {}: {e}", args.config.display())))?;
    let mut config = pipeline::parse_config(&text)
        .map_err(|e| usage_error(format!("config {}: {e}", args.config.display())))?;
    if args.emit_intermediates {
        config = config.with_emit_intermediates(true);
    }
    let jobs = args.jobs.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });

    let started = Instant::now();
    let records = pipeline::run_batch(&config, &args.inputs, &args.out, jobs)
        .map_err(|e| io_error(e.to_string()))?;
    let total_ms = started.elapsed().as_secs_f64() * 1e3;

    let format = args.report.or(args
        .report_file
        .as_ref()
        .map(|_| ReportFormat::Ndjson));
    let report_text = format.map(|f| match f {
        ReportFormat::Csv => records_to_csv(&records, &config),
        ReportFormat::Ndjson => records_to_ndjson(&records),
    });

    let failed = records.iter().filter(|r| r.error.is_some()).count();
    let summary = format!(
        "processed {}, failed {}, total {:.3} ms",
        records.len(),
        failed,
        total_ms
    );

    match (report_text, &args.report_file) {
        (Some(text), Some(path)) => {
            write_text(path, &text)?;
            println!("{summary}");
        }
        (Some(text), None) => {
            // Keep stdout machine-readable: the report owns it.
            print!("{text}");
            eprintln!("{summary}");
        }
        (None, _) => println!("{summary}"),
    }

    Ok(if failed > 0 { EXIT_PARTIAL } else { 0 })
}

/// Grid file schema: every key optional, axes default to the method's
/// standard parameters.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct GridFile {
    window: Option<Vec<u32>>,
    k: Option<Vec<f64>>,
    #[serde(rename = "R")]
    r: Option<Vec<f64>>,
    metric: Option<String>,
    cap: Option<usize>,
}

fn cmd_sweep(args: SweepArgs) -> Result<u8, CliError> {
    let method = parse_method(&args.method)?;

    let grid: GridFile = match &args.grid {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage_error(format!("grid {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| usage_error(format!("grid {}: {e}", path.display())))?
        }
        None => GridFile::default(),
    };

    let mut spec = SweepSpec::defaults_for(method);
    if let Some(windows) = grid.window {
        spec.windows = windows;
    }
    if let Some(ks) = grid.k {
        spec.ks = ks;
    }
    if let Some(rs) = grid.r {
        spec.rs = rs;
    }
    if let Some(name) = grid.metric {
        spec.metric = RankMetric::parse(&name)
            .ok_or_else(|| usage_error(format!("unknown ranking metric \"{name}\"")))?;
    }
    if let Some(cap) = grid.cap {
        spec.cap = cap;
    }

    let image = require_gray(read_image(&args.image)?, &args.image)?;
    let truth = require_binary(read_image(&args.truth)?, &args.truth)?;
    let rows = sweep(&image, &truth, &spec).map_err(usage_error)?;
    let csv = sweep_csv(&rows);
    match &args.out {
        Some(path) => write_text(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(0)
}

fn cmd_bench(args: BenchArgs) -> Result<u8, CliError> {
    let methods: Vec<Method> = args
        .methods
        .iter()
        .map(|name| parse_method(name))
        .collect::<Result<_, _>>()?;
    if args.reps < 3 {
        return Err(usage_error("--reps must be at least 3"));
    }
    let image = require_gray(read_image(&args.image)?, &args.image)?;
    let rows = evaluate::bench(&image, &methods, args.reps);
    print!("{}", bench_csv(&rows));
    Ok(0)
}

fn cmd_synth(args: SynthArgs) -> Result<u8, CliError> {
    if args.gradient < 0.0 || args.noise < 0.0 {
        return Err(usage_error("--gradient and --noise must be non-negative"));
    }
    let mask = require_binary(read_image(&args.mask)?, &args.mask)?;
    let spec = DegradationSpec {
        illumination_gradient: args.gradient,
        noise_sigma: args.noise,
        spot_count: args.spots,
        spot_radius: args.spot_radius,
        seed: args.seed,
    };
    let page = evaluate::synthesize(&mask, &spec);
    netpbm::write_file(&args.out, &Image::Gray(page))
        .map_err(|e| io_error(format!("{}: {e}", args.out.display())))?;
    Ok(0)
}

fn cmd_score(args: ScoreArgs) -> Result<u8, CliError> {
    let pred = require_binary(read_image(&args.pred)?, &args.pred)?;
    let truth = require_binary(read_image(&args.truth)?, &args.truth)?;
    let m = score(&pred, &truth).map_err(usage_error)?;
    println!("tp,fp,fn,tn,precision,recall,f,accuracy");
    println!(
        "{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
        m.true_pos, m.false_pos, m.false_neg, m.true_neg, m.precision, m.recall, m.f_measure,
        m.accuracy
    );
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Binarize(args) => cmd_binarize(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Score(args) => cmd_score(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("docbin: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
