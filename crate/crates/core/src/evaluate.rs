//! Pixel-level evaluation against ground-truth masks, synthetic degraded
//! fixtures, parameter sweeps, and wall-clock benchmarking.
//!
//! Foreground (ink) is the positive class everywhere. Fixture generation is
//! driven by [`crate::rng::Lcg64`] so identical specs produce identical
//! bytes on every platform.

use crate::global::{apply_global, otsu_threshold};
use crate::image::{histogram, round_clamp_u8, BinaryImage, GrayImage};
use crate::local::{apply_local, LocalParams};
use crate::rng::Lcg64;
use crate::Method;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("dimension mismatch: {pred_w}x{pred_h} prediction vs {truth_w}x{truth_h} truth")]
    DimensionMismatch {
        pred_w: u32,
        pred_h: u32,
        truth_w: u32,
        truth_h: u32,
    },
    #[error("sweep grids must be non-empty")]
    EmptyGrid,
    #[error("sweep grid of {got} combinations exceeds the cap of {cap}")]
    GridTooLarge { got: usize, cap: usize },
    #[error("invalid sweep parameters: {0}")]
    BadParams(String),
}

/// Confusion counts and derived ratios for a predicted mask against ground
/// truth. All 0/0 ratios are defined as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelMetrics {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Tally a prediction against ground truth, foreground as the positive class.
pub fn score(pred: &BinaryImage, truth: &BinaryImage) -> Result<PixelMetrics, EvalError> {
    if pred.width() != truth.width() || pred.height() != truth.height() {
        return Err(EvalError::DimensionMismatch {
            pred_w: pred.width(),
            pred_h: pred.height(),
            truth_w: truth.width(),
            truth_h: truth.height(),
        });
    }
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    let mut tn = 0u64;
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f_measure = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(PixelMetrics {
        true_pos: tp,
        false_pos: fp,
        false_neg: fn_,
        true_neg: tn,
        precision,
        recall,
        f_measure,
        accuracy: ratio(tp + tn, tp + fp + fn_ + tn),
    })
}

/// Gray level of ink pixels in synthesized fixtures.
pub const INK_LEVEL: u8 = 40;
/// Gray level of paper pixels in synthesized fixtures.
pub const PAPER_LEVEL: u8 = 220;
/// Gray level of stamped spot defects.
pub const SPOT_LEVEL: u8 = 80;

/// Degradations applied when rendering a ground-truth mask into a synthetic
/// "aged page" grayscale image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationSpec {
    /// Maximum darkening in gray levels, ramping linearly left to right.
    pub illumination_gradient: f64,
    /// Standard deviation of the added Gaussian noise, in gray levels.
    pub noise_sigma: f64,
    /// Number of dark circular spots stamped at seeded positions.
    pub spot_count: u32,
    /// Radius of each spot in pixels.
    pub spot_radius: u32,
    /// Seed for the deterministic generator.
    pub seed: u64,
}

impl Default for DegradationSpec {
    fn default() -> Self {
        DegradationSpec {
            illumination_gradient: 0.0,
            noise_sigma: 0.0,
            spot_count: 0,
            spot_radius: 4,
            seed: 0,
        }
    }
}

/// Render a text mask as a degraded grayscale page: ink at 40 over paper at
/// 220, a left-to-right illumination ramp, seeded Gaussian noise, then dark
/// spots stamped at value 80, and a final round-and-clamp to [0, 255].
///
/// The generator consumes randomness in a fixed order (per-pixel noise in
/// row-major order when `noise_sigma > 0`, then one x/y draw per spot), so
/// equal inputs always give bit-identical output.
pub fn synthesize(mask: &BinaryImage, spec: &DegradationSpec) -> GrayImage {
    let width = mask.width();
    let height = mask.height();
    let mut rng = Lcg64::new(spec.seed);

    let mut values = Vec::with_capacity(width as usize * height as usize);
    for y in 0..height {
        for x in 0..width {
            let base = if mask.get(x, y) {
                f64::from(INK_LEVEL)
            } else {
                f64::from(PAPER_LEVEL)
            };
            let darken = if width > 1 {
                spec.illumination_gradient * f64::from(x) / f64::from(width - 1)
            } else {
                0.0
            };
            values.push(base - darken);
        }
    }

    if spec.noise_sigma > 0.0 {
        for v in &mut values {
            *v += spec.noise_sigma * rng.next_gaussian();
        }
    }

    let radius = spec.spot_radius as i64;
    for _ in 0..spec.spot_count {
        let cx = rng.next_below(u64::from(width)) as i64;
        let cy = rng.next_below(u64::from(height)) as i64;
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                if dx * dx + dy * dy > radius * radius {
                    continue;
                }
                let (x, y) = (cx + dx, cy + dy);
                if x >= 0 && y >= 0 && x < i64::from(width) && y < i64::from(height) {
                    values[y as usize * width as usize + x as usize] = f64::from(SPOT_LEVEL);
                }
            }
        }
    }

    let data = values.into_iter().map(round_clamp_u8).collect();
    GrayImage::from_raw(width, height, data).expect("mask dimensions are valid")
}

/// Deterministic "text page" mask used as the standard fixture: one-pixel
/// strokes every 15 rows, broken into word-like dashes. The 15-row pitch
/// keeps some ink inside every default 15x15 window while the overall ink
/// fraction stays low.
pub fn synthetic_text_mask(width: u32, height: u32) -> BinaryImage {
    BinaryImage::from_fn(width, height, |x, y| y % 15 == 7 && x % 20 < 18)
}

/// Which [`PixelMetrics`] column a sweep ranks by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankMetric {
    Precision,
    Recall,
    FMeasure,
    Accuracy,
}

impl RankMetric {
    pub fn name(self) -> &'static str {
        match self {
            RankMetric::Precision => "precision",
            RankMetric::Recall => "recall",
            RankMetric::FMeasure => "f",
            RankMetric::Accuracy => "accuracy",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "precision" => Some(RankMetric::Precision),
            "recall" => Some(RankMetric::Recall),
            "f" | "f_measure" => Some(RankMetric::FMeasure),
            "accuracy" => Some(RankMetric::Accuracy),
            _ => None,
        }
    }

    pub fn of(self, m: &PixelMetrics) -> f64 {
        match self {
            RankMetric::Precision => m.precision,
            RankMetric::Recall => m.recall,
            RankMetric::FMeasure => m.f_measure,
            RankMetric::Accuracy => m.accuracy,
        }
    }
}

/// Parameter grid for one method. Local methods take the cartesian product
/// of windows x ks x rs; Otsu has no parameters and evaluates once.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub method: Method,
    pub windows: Vec<u32>,
    pub ks: Vec<f64>,
    pub rs: Vec<f64>,
    pub metric: RankMetric,
    pub cap: usize,
}

impl SweepSpec {
    /// One-point grid at the method's default parameters.
    pub fn defaults_for(method: Method) -> Self {
        let (k, r) = match method.local() {
            Some(local) => {
                let p = local.default_params();
                (p.k, p.r)
            }
            None => (0.0, 128.0),
        };
        SweepSpec {
            method,
            windows: vec![15],
            ks: vec![k],
            rs: vec![r],
            metric: RankMetric::FMeasure,
            cap: 4096,
        }
    }
}

/// One evaluated grid point. Parameter columns are `None` for Otsu.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: Method,
    pub window: Option<u32>,
    pub k: Option<f64>,
    pub r: Option<f64>,
    pub metrics: PixelMetrics,
}

/// Evaluate every grid combination and return the full table sorted by the
/// ranking metric, descending; ties keep grid enumeration order
/// (window, then k, then R).
pub fn sweep(
    image: &GrayImage,
    truth: &BinaryImage,
    spec: &SweepSpec,
) -> Result<Vec<SweepRow>, EvalError> {
    if image.width() != truth.width() || image.height() != truth.height() {
        return Err(EvalError::DimensionMismatch {
            pred_w: image.width(),
            pred_h: image.height(),
            truth_w: truth.width(),
            truth_h: truth.height(),
        });
    }

    let mut rows = Vec::new();
    match spec.method.local() {
        None => {
            let scan = otsu_threshold(&histogram(image)).expect("image is non-empty");
            let pred = apply_global(image, scan.chosen_t());
            rows.push(SweepRow {
                method: spec.method,
                window: None,
                k: None,
                r: None,
                metrics: score(&pred, truth)?,
            });
        }
        Some(local) => {
            if spec.windows.is_empty() || spec.ks.is_empty() || spec.rs.is_empty() {
                return Err(EvalError::EmptyGrid);
            }
            let combinations = spec.windows.len() * spec.ks.len() * spec.rs.len();
            if combinations > spec.cap {
                return Err(EvalError::GridTooLarge {
                    got: combinations,
                    cap: spec.cap,
                });
            }
            for &window in &spec.windows {
                for &k in &spec.ks {
                    for &r in &spec.rs {
                        let params = LocalParams::new(window, window, k, r)
                            .map_err(|e| EvalError::BadParams(e.to_string()))?;
                        let pred = apply_local(image, local, &params);
                        rows.push(SweepRow {
                            method: spec.method,
                            window: Some(window),
                            k: Some(k),
                            r: Some(r),
                            metrics: score(&pred, truth)?,
                        });
                    }
                }
            }
        }
    }

    // Stable sort keeps grid order on ties.
    rows.sort_by(|a, b| {
        spec.metric
            .of(&b.metrics)
            .partial_cmp(&spec.metric.of(&a.metrics))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(rows)
}

/// Render sweep rows as CSV with the header
/// `method,window,k,R,precision,recall,f,accuracy`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("method,window,k,R,precision,recall,f,accuracy\n");
    for row in rows {
        let fmt_opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
            row.method,
            row.window.map(|w| w.to_string()).unwrap_or_default(),
            fmt_opt(row.k),
            fmt_opt(row.r),
            row.metrics.precision,
            row.metrics.recall,
            row.metrics.f_measure,
            row.metrics.accuracy,
        ));
    }
    out
}

/// Median wall time of end-to-end binarization for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: Method,
    pub median_ms: f64,
}

fn binarize_once(image: &GrayImage, method: Method) -> BinaryImage {
    match method.local() {
        None => {
            let scan = otsu_threshold(&histogram(image)).expect("image is non-empty");
            apply_global(image, scan.chosen_t())
        }
        Some(local) => apply_local(image, local, &local.default_params()),
    }
}

fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2.0
    }
}

/// Time end-to-end binarization per method at default parameters: one
/// discarded warm-up run, then `repetitions` timed runs reduced to the
/// median. Runs are strictly sequential. `repetitions` must be at least 3.
pub fn bench(image: &GrayImage, methods: &[Method], repetitions: u32) -> Vec<BenchRow> {
    assert!(repetitions >= 3, "bench needs at least 3 repetitions");
    methods
        .iter()
        .map(|&method| {
            std::hint::black_box(binarize_once(image, method));
            let mut times: Vec<f64> = (0..repetitions)
                .map(|_| {
                    let start = Instant::now();
                    std::hint::black_box(binarize_once(image, method));
                    start.elapsed().as_secs_f64() * 1e3
                })
                .collect();
            BenchRow {
                method,
                median_ms: median(&mut times),
            }
        })
        .collect()
}

/// Render bench rows as CSV with the header `method,median_ms`.
pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("method,median_ms\n");
    for row in rows {
        out.push_str(&format!("{},{:.3}\n", row.method, row.median_ms));
    }
    out
}
