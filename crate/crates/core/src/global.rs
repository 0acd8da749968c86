//! Global thresholding: an exhaustive Otsu scan over all candidate levels,
//! minimizing the weighted within-class variance.
//!
//! Class 1 holds gray levels `i <= t`, class 2 holds `i > t`. Candidates run
//! over t in [0, 254]; only there can both classes be non-empty. Counts and
//! weighted sums are accumulated as exact integers and converted to doubles
//! once, and the class variances are evaluated directly from their
//! definitions rather than through incremental second-moment updates.

use crate::image::{BinaryImage, GrayImage, Histogram};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GlobalError {
    #[error("cannot threshold an empty histogram (total count is zero)")]
    EmptyHistogram,
}

/// Per-candidate statistics for one threshold `t` at which both classes are
/// occupied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdCandidate {
    pub t: u8,
    /// Class probabilities; q1 + q2 = 1.
    pub q1: f64,
    pub q2: f64,
    /// Class means in gray levels.
    pub mu1: f64,
    pub mu2: f64,
    /// Class variances.
    pub var1: f64,
    pub var2: f64,
    /// Weighted within-class variance q1*var1 + q2*var2, the scan objective.
    pub sigma_w: f64,
}

/// Result of a full Otsu scan.
#[derive(Debug, Clone)]
pub struct OtsuScan {
    candidates: Vec<ThresholdCandidate>,
    chosen_t: u8,
    degenerate: bool,
}

impl OtsuScan {
    /// The smallest t attaining the minimal within-class variance. For a
    /// degenerate (single-level) histogram this is the occupied level.
    pub fn chosen_t(&self) -> u8 {
        self.chosen_t
    }

    /// True when the histogram has a single occupied level, so no threshold
    /// separates two non-empty classes.
    pub fn degenerate(&self) -> bool {
        self.degenerate
    }

    /// All candidates where both classes were non-empty, in ascending t.
    pub fn candidates(&self) -> &[ThresholdCandidate] {
        &self.candidates
    }
}

/// Scan every candidate threshold and keep the one minimizing the weighted
/// within-class variance, breaking ties toward the smallest t.
pub fn otsu_threshold(hist: &Histogram) -> Result<OtsuScan, GlobalError> {
    let counts = hist.counts();
    let total = hist.total();
    if total == 0 {
        return Err(GlobalError::EmptyHistogram);
    }
    let n = total as f64;
    let weighted_total: u64 = counts.iter().enumerate().map(|(i, &c)| i as u64 * c).sum();

    let mut candidates = Vec::new();
    let mut best: Option<(f64, u8)> = None;
    let mut count1: u64 = 0;
    let mut weighted1: u64 = 0;

    for t in 0u8..=254 {
        count1 += counts[t as usize];
        weighted1 += u64::from(t) * counts[t as usize];
        let count2 = total - count1;
        if count1 == 0 || count2 == 0 {
            continue;
        }
        let weighted2 = weighted_total - weighted1;
        let mu1 = weighted1 as f64 / count1 as f64;
        let mu2 = weighted2 as f64 / count2 as f64;

        let mut dev1 = 0.0;
        for (i, &c) in counts.iter().enumerate().take(t as usize + 1) {
            if c > 0 {
                let d = i as f64 - mu1;
                dev1 += d * d * c as f64;
            }
        }
        let mut dev2 = 0.0;
        for (i, &c) in counts.iter().enumerate().skip(t as usize + 1) {
            if c > 0 {
                let d = i as f64 - mu2;
                dev2 += d * d * c as f64;
            }
        }

        let q1 = count1 as f64 / n;
        let q2 = count2 as f64 / n;
        let var1 = dev1 / count1 as f64;
        let var2 = dev2 / count2 as f64;
        let sigma_w = q1 * var1 + q2 * var2;

        candidates.push(ThresholdCandidate {
            t,
            q1,
            q2,
            mu1,
            mu2,
            var1,
            var2,
            sigma_w,
        });
        if best.is_none_or(|(b, _)| sigma_w < b) {
            best = Some((sigma_w, t));
        }
    }

    match best {
        Some((_, t)) => Ok(OtsuScan {
            candidates,
            chosen_t: t,
            degenerate: false,
        }),
        None => {
            // Single occupied level: report it rather than failing, so batch
            // pipelines survive blank pages.
            let level = counts
                .iter()
                .position(|&c| c > 0)
                .expect("total > 0 implies an occupied level") as u8;
            Ok(OtsuScan {
                candidates,
                chosen_t: level,
                degenerate: true,
            })
        }
    }
}

/// Binarize with a single global threshold: `pixel <= t` is foreground ink.
pub fn apply_global(image: &GrayImage, t: u8) -> BinaryImage {
    BinaryImage::from_fn(image.width(), image.height(), |x, y| image.get(x, y) <= t)
}
