//! Declarative pipeline engine: a JSON config describes an ordered chain of
//! preprocessing stages ending in exactly one thresholding stage, which is
//! then run over a single image or a whole batch.
//!
//! Config schema (all stage parameters are optional and fall back to the
//! module defaults):
//!
//! ```json
//! {
//!   "stages": [
//!     {"kind": "grayscale"},
//!     {"kind": "equalize"},
//!     {"kind": "erode", "width": 3, "height": 3},
//!     {"kind": "dilate", "width": 3, "height": 3},
//!     {"kind": "gaussian", "radius": 2, "sigma": 1.0},
//!     {"kind": "wiener", "window": 3, "noise_variance": "auto"},
//!     {"kind": "sauvola", "window": 15, "k": 0.5, "R": 128}
//!   ],
//!   "emit_intermediates": false
//! }
//! ```
//!
//! The thresholding stage is one of `otsu`, `niblack`, `zhang_tan`,
//! `sauvola` and must be last. `R` accepts a number or the string
//! `"dynamic"`, which resolves to the maximum window standard deviation of
//! the image being processed. `noise_variance` accepts a number or
//! `"auto"`.

use crate::global::{apply_global, otsu_threshold};
use crate::image::{histogram, BinaryImage, GrayImage, Image};
use crate::local::{apply_local, dynamic_range_r, LocalMethod, LocalParams};
use crate::netpbm;
use crate::preprocess::{
    dilate, equalize, erode, gaussian_filter, to_grayscale, wiener_filter, GaussianKernel,
    NoiseVariance, StructuringElement, WienerParams,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config: {0}")]
    Invalid(String),
    #[error("stage {index} ({kind}) expects {expected} input, got {got}")]
    TypeMismatch {
        index: usize,
        kind: &'static str,
        expected: &'static str,
        got: &'static str,
    },
    #[error("cannot prepare output directory {path}: {source}")]
    OutputDir {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot start worker pool: {0}")]
    ThreadPool(String),
}

// Serde-facing schema; validated into the typed stages below.

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    stages: Vec<RawStage>,
    #[serde(default)]
    emit_intermediates: bool,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawStage {
    Grayscale,
    Equalize,
    Erode {
        width: Option<u32>,
        height: Option<u32>,
    },
    Dilate {
        width: Option<u32>,
        height: Option<u32>,
    },
    Gaussian {
        radius: Option<u32>,
        sigma: Option<f64>,
    },
    Wiener {
        window: Option<u32>,
        noise_variance: Option<NoiseVarSpec>,
    },
    Otsu,
    Niblack {
        window: Option<u32>,
        k: Option<f64>,
    },
    ZhangTan {
        window: Option<u32>,
        k: Option<f64>,
        #[serde(rename = "R")]
        r: Option<RSpec>,
    },
    Sauvola {
        window: Option<u32>,
        k: Option<f64>,
        #[serde(rename = "R")]
        r: Option<RSpec>,
    },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NoiseVarSpec {
    Fixed(f64),
    Named(String),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RSpec {
    Fixed(f64),
    Named(String),
}

/// A validated preprocessing stage.
#[derive(Debug, Clone)]
pub enum PreStage {
    Grayscale,
    Equalize,
    Erode(StructuringElement),
    Dilate(StructuringElement),
    Gaussian(GaussianKernel),
    Wiener(WienerParams),
}

impl PreStage {
    pub fn kind_name(&self) -> &'static str {
        match self {
            PreStage::Grayscale => "grayscale",
            PreStage::Equalize => "equalize",
            PreStage::Erode(_) => "erode",
            PreStage::Dilate(_) => "dilate",
            PreStage::Gaussian(_) => "gaussian",
            PreStage::Wiener(_) => "wiener",
        }
    }
}

/// How a local method's R constant is obtained at run time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RMode {
    Fixed(f64),
    /// Maximum window standard deviation of the image being thresholded.
    Dynamic,
}

/// The validated final stage.
#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdStage {
    Otsu,
    Local {
        method: LocalMethod,
        window: u32,
        k: f64,
        r: RMode,
    },
}

impl ThresholdStage {
    pub fn method_name(&self) -> &'static str {
        match self {
            ThresholdStage::Otsu => "otsu",
            ThresholdStage::Local { method, .. } => method.name(),
        }
    }
}

/// A parsed and validated pipeline description.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pre_stages: Vec<PreStage>,
    threshold: ThresholdStage,
    emit_intermediates: bool,
}

impl PipelineConfig {
    pub fn pre_stages(&self) -> &[PreStage] {
        &self.pre_stages
    }

    pub fn threshold(&self) -> &ThresholdStage {
        &self.threshold
    }

    pub fn emit_intermediates(&self) -> bool {
        self.emit_intermediates
    }

    /// Override the config's intermediate-emission flag (CLI
    /// `--emit-intermediates`).
    pub fn with_emit_intermediates(mut self, emit: bool) -> Self {
        self.emit_intermediates = emit;
        self
    }

    /// Stage kind names in execution order, threshold last.
    pub fn stage_kinds(&self) -> Vec<&'static str> {
        let mut kinds: Vec<&'static str> =
            self.pre_stages.iter().map(PreStage::kind_name).collect();
        kinds.push(self.threshold.method_name());
        kinds
    }

    pub fn method_name(&self) -> &'static str {
        self.threshold.method_name()
    }
}

fn invalid(index: usize, detail: impl std::fmt::Display) -> PipelineError {
    PipelineError::Invalid(format!("stages[{index}]: {detail}"))
}

fn build_pre_stage(index: usize, raw: RawStage) -> Result<PreStage, PipelineError> {
    match raw {
        RawStage::Grayscale => Ok(PreStage::Grayscale),
        RawStage::Equalize => Ok(PreStage::Equalize),
        RawStage::Erode { width, height } => {
            let se = StructuringElement::rect(width.unwrap_or(3), height.unwrap_or(3))
                .map_err(|e| invalid(index, e))?;
            Ok(PreStage::Erode(se))
        }
        RawStage::Dilate { width, height } => {
            let se = StructuringElement::rect(width.unwrap_or(3), height.unwrap_or(3))
                .map_err(|e| invalid(index, e))?;
            Ok(PreStage::Dilate(se))
        }
        RawStage::Gaussian { radius, sigma } => {
            let kernel = GaussianKernel::new(radius.unwrap_or(2), sigma.unwrap_or(1.0))
                .map_err(|e| invalid(index, e))?;
            Ok(PreStage::Gaussian(kernel))
        }
        RawStage::Wiener {
            window,
            noise_variance,
        } => {
            let nv = match noise_variance {
                None => NoiseVariance::Auto,
                Some(NoiseVarSpec::Fixed(v)) => NoiseVariance::Fixed(v),
                Some(NoiseVarSpec::Named(s)) if s == "auto" => NoiseVariance::Auto,
                Some(NoiseVarSpec::Named(s)) => {
                    return Err(invalid(
                        index,
                        format!("noise_variance: expected a number or \"auto\", got \"{s}\""),
                    ))
                }
            };
            let w = window.unwrap_or(3);
            let params = WienerParams::new(w, w, nv).map_err(|e| invalid(index, e))?;
            Ok(PreStage::Wiener(params))
        }
        _ => unreachable!("threshold stages handled separately"),
    }
}

fn build_r_mode(index: usize, r: Option<RSpec>) -> Result<RMode, PipelineError> {
    match r {
        None => Ok(RMode::Fixed(128.0)),
        Some(RSpec::Fixed(v)) => {
            if v > 0.0 {
                Ok(RMode::Fixed(v))
            } else {
                Err(invalid(index, "R: must be positive"))
            }
        }
        Some(RSpec::Named(s)) if s == "dynamic" => Ok(RMode::Dynamic),
        Some(RSpec::Named(s)) => Err(invalid(
            index,
            format!("R: expected a number or \"dynamic\", got \"{s}\""),
        )),
    }
}

fn build_threshold_stage(index: usize, raw: RawStage) -> Result<ThresholdStage, PipelineError> {
    let local = |method: LocalMethod, window: Option<u32>, k: Option<f64>, r: RMode| {
        let window = window.unwrap_or(15);
        let k = k.unwrap_or(method.default_params().k);
        // Validates the window geometry; the R placeholder is resolved later.
        LocalParams::new(window, window, k, 128.0).map_err(|e| invalid(index, e))?;
        Ok(ThresholdStage::Local {
            method,
            window,
            k,
            r,
        })
    };
    match raw {
        RawStage::Otsu => Ok(ThresholdStage::Otsu),
        RawStage::Niblack { window, k } => {
            local(LocalMethod::Niblack, window, k, RMode::Fixed(128.0))
        }
        RawStage::ZhangTan { window, k, r } => {
            let r = build_r_mode(index, r)?;
            local(LocalMethod::ZhangTan, window, k, r)
        }
        RawStage::Sauvola { window, k, r } => {
            let r = build_r_mode(index, r)?;
            local(LocalMethod::Sauvola, window, k, r)
        }
        _ => unreachable!("preprocessing stages handled separately"),
    }
}

/// Parse and validate a JSON pipeline config.
pub fn parse_config(text: &str) -> Result<PipelineConfig, PipelineError> {
    let raw: RawConfig = serde_json::from_str(text)?;
    if raw.stages.is_empty() {
        return Err(PipelineError::Invalid(
            "stages: at least one stage (the thresholding stage) is required".into(),
        ));
    }
    let last = raw.stages.len() - 1;
    let mut pre_stages = Vec::new();
    let mut threshold = None;
    for (index, stage) in raw.stages.into_iter().enumerate() {
        let is_threshold = matches!(
            stage,
            RawStage::Otsu | RawStage::Niblack { .. } | RawStage::ZhangTan { .. } | RawStage::Sauvola { .. }
        );
        if is_threshold {
            if index != last {
                return Err(invalid(
                    index,
                    "the thresholding stage must be the last stage (exactly one is allowed)",
                ));
            }
            threshold = Some(build_threshold_stage(index, stage)?);
        } else {
            if index == last {
                return Err(invalid(
                    index,
                    "the last stage must be a thresholding stage \
                     (otsu, niblack, zhang_tan or sauvola)",
                ));
            }
            pre_stages.push(build_pre_stage(index, stage)?);
        }
    }
    Ok(PipelineConfig {
        pre_stages,
        threshold: threshold.expect("last stage checked above"),
        emit_intermediates: raw.emit_intermediates,
    })
}

/// Wall time of one executed stage.
#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub kind: String,
    pub ms: f64,
}

/// Per-image run metadata; the batch runner wraps it with paths.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub width: u32,
    pub height: u32,
    pub method: String,
    /// The chosen global threshold when the pipeline ends in Otsu.
    pub threshold: Option<u8>,
    pub stage_ms: Vec<StageTiming>,
    pub total_ms: f64,
}

/// Everything produced by one pipeline execution.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub output: BinaryImage,
    pub report: RunReport,
    /// Each stage's output keyed by stage index; populated only when the
    /// config asked for intermediates.
    pub intermediates: Vec<(usize, Image)>,
}

fn apply_pre_stage(index: usize, stage: &PreStage, input: Image) -> Result<Image, PipelineError> {
    let mismatch = |expected: &'static str, got: &Image| PipelineError::TypeMismatch {
        index,
        kind: stage.kind_name(),
        expected,
        got: got.kind_name(),
    };
    match stage {
        PreStage::Grayscale => match input {
            Image::Rgb(rgb) => Ok(Image::Gray(to_grayscale(&rgb))),
            other => Err(mismatch("rgb", &other)),
        },
        _ => {
            let gray = match input {
                Image::Gray(g) => g,
                other => return Err(mismatch("gray", &other)),
            };
            let out = match stage {
                PreStage::Equalize => equalize(&gray),
                PreStage::Erode(se) => erode(&gray, se),
                PreStage::Dilate(se) => dilate(&gray, se),
                PreStage::Gaussian(kernel) => gaussian_filter(&gray, kernel),
                PreStage::Wiener(params) => wiener_filter(&gray, params),
                PreStage::Grayscale => unreachable!(),
            };
            Ok(Image::Gray(out))
        }
    }
}

fn apply_threshold_stage(stage: &ThresholdStage, gray: &GrayImage) -> (BinaryImage, Option<u8>) {
    match stage {
        ThresholdStage::Otsu => {
            let scan = otsu_threshold(&histogram(gray)).expect("images are non-empty");
            (apply_global(gray, scan.chosen_t()), Some(scan.chosen_t()))
        }
        ThresholdStage::Local {
            method,
            window,
            k,
            r,
        } => {
            let r_value = match r {
                RMode::Fixed(v) => *v,
                // A constant image has zero dynamic range; keep R positive so
                // the s/R term stays defined (s is 0 there anyway).
                RMode::Dynamic => dynamic_range_r(gray, *window, *window).max(1e-12),
            };
            let params =
                LocalParams::new(*window, *window, *k, r_value).expect("validated at parse time");
            (apply_local(gray, *method, &params), None)
        }
    }
}

/// Run the configured stage chain over one image.
pub fn run_pipeline(config: &PipelineConfig, input: Image) -> Result<PipelineRun, PipelineError> {
    let started = Instant::now();
    let width = input.width();
    let height = input.height();
    let mut stage_ms = Vec::with_capacity(config.pre_stages.len() + 1);
    let mut intermediates = Vec::new();

    let mut current = input;
    for (index, stage) in config.pre_stages.iter().enumerate() {
        let t0 = Instant::now();
        current = apply_pre_stage(index, stage, current)?;
        stage_ms.push(StageTiming {
            kind: stage.kind_name().to_string(),
            ms: t0.elapsed().as_secs_f64() * 1e3,
        });
        if config.emit_intermediates {
            intermediates.push((index, current.clone()));
        }
    }

    let threshold_index = config.pre_stages.len();
    let gray = match &current {
        Image::Gray(g) => g,
        other => {
            return Err(PipelineError::TypeMismatch {
                index: threshold_index,
                kind: config.threshold.method_name(),
                expected: "gray",
                got: other.kind_name(),
            })
        }
    };
    let t0 = Instant::now();
    let (output, threshold) = apply_threshold_stage(&config.threshold, gray);
    stage_ms.push(StageTiming {
        kind: config.threshold.method_name().to_string(),
        ms: t0.elapsed().as_secs_f64() * 1e3,
    });
    if config.emit_intermediates {
        intermediates.push((threshold_index, Image::Binary(output.clone())));
    }

    Ok(PipelineRun {
        output,
        report: RunReport {
            width,
            height,
            method: config.method_name().to_string(),
            threshold,
            stage_ms,
            total_ms: started.elapsed().as_secs_f64() * 1e3,
        },
        intermediates,
    })
}

/// One batch entry: either a completed report or the error that stopped this
/// image. A failure never aborts the rest of the batch.
#[derive(Debug, Clone, Serialize)]
pub struct BatchRecord {
    pub path: String,
    pub output: Option<String>,
    pub error: Option<String>,
    #[serde(flatten)]
    pub report: Option<RunReport>,
}

fn process_one(config: &PipelineConfig, input: &Path, out_dir: &Path) -> BatchRecord {
    let path = input.display().to_string();
    let fail = |error: String| BatchRecord {
        path: path.clone(),
        output: None,
        error: Some(error),
        report: None,
    };

    let image = match netpbm::read_file(input) {
        Ok(image) => image,
        Err(e) => return fail(e.to_string()),
    };
    let run = match run_pipeline(config, image) {
        Ok(run) => run,
        Err(e) => return fail(e.to_string()),
    };
    let PipelineRun {
        output,
        report,
        intermediates,
    } = run;

    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".to_string());
    let out_path = out_dir.join(format!("{stem}.{}.pbm", config.method_name()));
    if let Err(e) = netpbm::write_file(&out_path, &Image::Binary(output)) {
        return fail(format!("writing {}: {e}", out_path.display()));
    }
    for (index, image) in &intermediates {
        let ext = match image {
            Image::Rgb(_) => "ppm",
            Image::Gray(_) => "pgm",
            Image::Binary(_) => "pbm",
        };
        let p = out_dir.join(format!("{stem}.stage{index}.{ext}"));
        if let Err(e) = netpbm::write_file(&p, image) {
            return fail(format!("writing {}: {e}", p.display()));
        }
    }

    BatchRecord {
        path,
        output: Some(out_path.display().to_string()),
        error: None,
        report: Some(report),
    }
}

/// Run the pipeline over many inputs, writing one `<stem>.<method>.pbm` per
/// image into `out_dir`. Images are processed on up to `jobs` worker
/// threads; records come back in input order and per-image failures are
/// recorded instead of aborting the batch.
pub fn run_batch(
    config: &PipelineConfig,
    inputs: &[PathBuf],
    out_dir: &Path,
    jobs: usize,
) -> Result<Vec<BatchRecord>, PipelineError> {
    std::fs::create_dir_all(out_dir).map_err(|source| PipelineError::OutputDir {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| PipelineError::ThreadPool(e.to_string()))?;
    Ok(pool.install(|| {
        inputs
            .par_iter()
            .map(|input| process_one(config, input, out_dir))
            .collect()
    }))
}

/// Serialize batch records as newline-delimited JSON, one record per image.
pub fn records_to_ndjson(records: &[BatchRecord]) -> String {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("records serialize"));
        out.push('\n');
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Serialize batch records as CSV with the header
/// `path,method,threshold,total_ms,<stage>_ms...,error`, stage columns taken
/// from the config in execution order.
pub fn records_to_csv(records: &[BatchRecord], config: &PipelineConfig) -> String {
    let kinds = config.stage_kinds();
    let mut out = String::from("path,method,threshold,total_ms");
    for kind in &kinds {
        out.push_str(&format!(",{kind}_ms"));
    }
    out.push_str(",error\n");

    for record in records {
        out.push_str(&csv_field(&record.path));
        match &record.report {
            Some(report) => {
                out.push_str(&format!(",{}", report.method));
                match report.threshold {
                    Some(t) => out.push_str(&format!(",{t}")),
                    None => out.push(','),
                }
                out.push_str(&format!(",{:.3}", report.total_ms));
                for timing in &report.stage_ms {
                    out.push_str(&format!(",{:.3}", timing.ms));
                }
            }
            None => {
                out.push_str(&format!(",{},,", config.method_name()));
                for _ in &kinds {
                    out.push(',');
                }
            }
        }
        match &record.error {
            Some(e) => out.push_str(&format!(",{}\n", csv_field(e))),
            None => out.push_str(",\n"),
        }
    }
    out
}
