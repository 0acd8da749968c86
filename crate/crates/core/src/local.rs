//! Local adaptive thresholding: Niblack, Zhang-Tan and Sauvola.
//!
//! Window mean and standard deviation come from a pair of summed-area tables
//! (values and squared values), so the per-pixel cost does not depend on the
//! window size. Accumulators are exact: with axes capped at 2^16 pixels the
//! squared-value total stays below 2^49, well inside `u64`.
//!
//! Windows at the image border truncate to the raster instead of replicating
//! edge pixels; the statistics always describe real pixels. This differs on
//! purpose from the replicate-border convolution filters in
//! [`crate::preprocess`].

use crate::image::{BinaryImage, GrayImage};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LocalError {
    #[error("window dimensions must be odd and at least 3, got {0}x{1}")]
    BadWindow(u32, u32),
    #[error("R must be positive")]
    NonPositiveR,
}

/// Summed-area tables of pixel values and squared pixel values, each with a
/// zero top row and left column.
#[derive(Debug, Clone)]
pub struct IntegralPair {
    width: u32,
    height: u32,
    sum: Vec<u64>,
    sum_sq: Vec<u64>,
}

impl IntegralPair {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Sum and squared sum over the half-open rectangle [x0, x1) x [y0, y1),
    /// four table lookups each.
    pub fn rect_sums(&self, x0: u32, y0: u32, x1: u32, y1: u32) -> (u64, u64) {
        debug_assert!(x0 <= x1 && x1 <= self.width && y0 <= y1 && y1 <= self.height);
        let stride = self.width as usize + 1;
        let idx = |x: u32, y: u32| y as usize * stride + x as usize;
        let sum = self.sum[idx(x1, y1)] + self.sum[idx(x0, y0)]
            - self.sum[idx(x1, y0)]
            - self.sum[idx(x0, y1)];
        let sum_sq = self.sum_sq[idx(x1, y1)] + self.sum_sq[idx(x0, y0)]
            - self.sum_sq[idx(x1, y0)]
            - self.sum_sq[idx(x0, y1)];
        (sum, sum_sq)
    }
}

/// Build both summed-area tables in one pass over the image.
pub fn build_integral(image: &GrayImage) -> IntegralPair {
    let w = image.width() as usize;
    let h = image.height() as usize;
    let stride = w + 1;
    let mut sum = vec![0u64; stride * (h + 1)];
    let mut sum_sq = vec![0u64; stride * (h + 1)];
    let data = image.data();
    for y in 0..h {
        let mut row = 0u64;
        let mut row_sq = 0u64;
        for x in 0..w {
            let v = data[y * w + x] as u64;
            row += v;
            row_sq += v * v;
            let i = (y + 1) * stride + (x + 1);
            sum[i] = sum[i - stride] + row;
            sum_sq[i] = sum_sq[i - stride] + row_sq;
        }
    }
    IntegralPair {
        width: image.width(),
        height: image.height(),
        sum,
        sum_sq,
    }
}

/// Mean and standard deviation of one pixel's window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalStats {
    pub mean: f64,
    pub std_dev: f64,
}

/// Window geometry and the k/R constants shared by the local methods.
/// Niblack only reads `k`; Zhang-Tan and Sauvola read both `k` and `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalParams {
    window_w: u32,
    window_h: u32,
    pub k: f64,
    pub r: f64,
}

impl LocalParams {
    pub fn new(window_w: u32, window_h: u32, k: f64, r: f64) -> Result<Self, LocalError> {
        if window_w < 3 || window_h < 3 || window_w.is_multiple_of(2) || window_h.is_multiple_of(2) {
            return Err(LocalError::BadWindow(window_w, window_h));
        }
        if r.is_nan() || r <= 0.0 {
            return Err(LocalError::NonPositiveR);
        }
        Ok(LocalParams {
            window_w,
            window_h,
            k,
            r,
        })
    }

    pub fn window(&self) -> (u32, u32) {
        (self.window_w, self.window_h)
    }

    pub fn with_window(self, window_w: u32, window_h: u32) -> Result<Self, LocalError> {
        Self::new(window_w, window_h, self.k, self.r)
    }
}

/// The windowed thresholding variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LocalMethod {
    Niblack,
    ZhangTan,
    Sauvola,
}

impl LocalMethod {
    pub fn name(self) -> &'static str {
        match self {
            LocalMethod::Niblack => "niblack",
            LocalMethod::ZhangTan => "zhang_tan",
            LocalMethod::Sauvola => "sauvola",
        }
    }

    /// Conventional defaults: 15x15 windows; Niblack k = -0.2 (dark
    /// foreground), Zhang-Tan k = 0.2, Sauvola k = 0.5; R = 128.
    pub fn default_params(self) -> LocalParams {
        let k = match self {
            LocalMethod::Niblack => -0.2,
            LocalMethod::ZhangTan => 0.2,
            LocalMethod::Sauvola => 0.5,
        };
        LocalParams::new(15, 15, k, 128.0).unwrap()
    }

    /// The per-pixel threshold for these window statistics.
    pub fn threshold(self, stats: LocalStats, params: &LocalParams) -> f64 {
        match self {
            LocalMethod::Niblack => niblack_threshold(stats, params),
            LocalMethod::ZhangTan => zhang_tan_threshold(stats, params),
            LocalMethod::Sauvola => sauvola_threshold(stats, params),
        }
    }
}

/// Niblack: T = m + k * s.
pub fn niblack_threshold(stats: LocalStats, params: &LocalParams) -> f64 {
    stats.mean + params.k * stats.std_dev
}

/// Zhang-Tan's improved Niblack: T = m * (1 + k * (1 - s/R)).
pub fn zhang_tan_threshold(stats: LocalStats, params: &LocalParams) -> f64 {
    stats.mean * (1.0 + params.k * (1.0 - stats.std_dev / params.r))
}

/// Sauvola: T = m * (1 - k * (1 - s/R)).
pub fn sauvola_threshold(stats: LocalStats, params: &LocalParams) -> f64 {
    stats.mean * (1.0 - params.k * (1.0 - stats.std_dev / params.r))
}

fn truncated_window(center: u32, half: u32, limit: u32) -> (u32, u32) {
    let lo = center.saturating_sub(half);
    let hi = (center + half + 1).min(limit);
    (lo, hi)
}

fn stats_from_sums(sum: u64, sum_sq: u64, count: u64) -> LocalStats {
    let n = count as f64;
    let mean = sum as f64 / n;
    let variance = (sum_sq as f64 / n - mean * mean).max(0.0);
    LocalStats {
        mean,
        std_dev: variance.sqrt(),
    }
}

/// Statistics of the window centered at (x, y), truncated to the image.
pub fn window_stats(ip: &IntegralPair, x: u32, y: u32, params: &LocalParams) -> LocalStats {
    let (x0, x1) = truncated_window(x, params.window_w / 2, ip.width());
    let (y0, y1) = truncated_window(y, params.window_h / 2, ip.height());
    let (sum, sum_sq) = ip.rect_sums(x0, y0, x1, y1);
    stats_from_sums(sum, sum_sq, u64::from(x1 - x0) * u64::from(y1 - y0))
}

/// Binarize with a per-pixel local threshold: `pixel <= T(x, y)` is
/// foreground ink, with T compared as an unrounded real.
pub fn apply_local(image: &GrayImage, method: LocalMethod, params: &LocalParams) -> BinaryImage {
    let ip = build_integral(image);
    BinaryImage::from_fn(image.width(), image.height(), |x, y| {
        let stats = window_stats(&ip, x, y, params);
        f64::from(image.get(x, y)) <= method.threshold(stats, params)
    })
}

/// Reference implementation of [`apply_local`] that rescans the whole
/// O(w*h) window for every pixel instead of using summed-area tables. It
/// exists for equivalence checks and speedup benchmarks; outputs are
/// bit-identical to the accelerated path.
pub fn apply_local_naive(
    image: &GrayImage,
    method: LocalMethod,
    params: &LocalParams,
) -> BinaryImage {
    BinaryImage::from_fn(image.width(), image.height(), |x, y| {
        let (x0, x1) = truncated_window(x, params.window_w / 2, image.width());
        let (y0, y1) = truncated_window(y, params.window_h / 2, image.height());
        let mut sum = 0u64;
        let mut sum_sq = 0u64;
        for yy in y0..y1 {
            for xx in x0..x1 {
                let v = image.get(xx, yy) as u64;
                sum += v;
                sum_sq += v * v;
            }
        }
        let stats = stats_from_sums(sum, sum_sq, u64::from(x1 - x0) * u64::from(y1 - y0));
        f64::from(image.get(x, y)) <= method.threshold(stats, params)
    })
}

/// The dynamic range of the window standard deviation: max s over every
/// pixel. Callers using this as R must guard the all-constant image, where
/// it is zero.
pub fn dynamic_range_r(image: &GrayImage, window_w: u32, window_h: u32) -> f64 {
    let ip = build_integral(image);
    let probe = LocalParams::new(window_w, window_h, 0.0, 1.0).expect("validated by caller");
    let mut max_s = 0.0f64;
    for y in 0..image.height() {
        for x in 0..image.width() {
            max_s = max_s.max(window_stats(&ip, x, y, &probe).std_dev);
        }
    }
    max_s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Lcg64;

    fn random_gray(rng: &mut Lcg64, width: u32, height: u32) -> GrayImage {
        GrayImage::from_fn(width, height, |_, _| (rng.next_u64() >> 56) as u8)
    }

    #[test]
    fn integral_single_pixel() {
        let img = GrayImage::from_raw(1, 1, vec![7]).unwrap();
        let ip = build_integral(&img);
        assert_eq!(ip.rect_sums(0, 0, 1, 1), (7, 49));
    }

    #[test]
    fn integral_full_white() {
        let img = GrayImage::filled(2, 2, 255);
        let ip = build_integral(&img);
        assert_eq!(ip.rect_sums(0, 0, 2, 2), (1020, 260100));
    }

    #[test]
    fn integral_rectangles_match_naive_sums() {
        let mut rng = Lcg64::new(60);
        let img = random_gray(&mut rng, 17, 11);
        let ip = build_integral(&img);
        for y0 in 0..=11u32 {
            for y1 in y0..=11 {
                for x0 in 0..=17u32 {
                    for x1 in x0..=17 {
                        let mut sum = 0u64;
                        let mut sum_sq = 0u64;
                        for y in y0..y1 {
                            for x in x0..x1 {
                                let v = img.get(x, y) as u64;
                                sum += v;
                                sum_sq += v * v;
                            }
                        }
                        assert_eq!(ip.rect_sums(x0, y0, x1, y1), (sum, sum_sq));
                    }
                }
            }
        }
    }

    #[test]
    fn window_stats_constant_image() {
        let img = GrayImage::filled(9, 9, 42);
        let ip = build_integral(&img);
        let params = LocalParams::new(5, 5, 0.0, 128.0).unwrap();
        for y in 0..9 {
            for x in 0..9 {
                let s = window_stats(&ip, x, y, &params);
                assert_eq!(s.mean, 42.0);
                assert_eq!(s.std_dev, 0.0);
            }
        }
    }

    #[test]
    fn window_stats_single_bright_pixel() {
        // 3x3 window over {0 x8, 255 x1}: m = 255/9, var = 65025/9 - m^2.
        let img = GrayImage::from_fn(3, 3, |x, y| if (x, y) == (1, 1) { 255 } else { 0 });
        let ip = build_integral(&img);
        let params = LocalParams::new(3, 3, 0.0, 128.0).unwrap();
        let s = window_stats(&ip, 1, 1, &params);
        let mean = 255.0 / 9.0;
        let var = 65025.0 / 9.0 - mean * mean;
        assert!((s.mean - mean).abs() < 1e-9);
        assert!((s.std_dev - var.sqrt()).abs() < 1e-9);
        assert!((s.mean - 28.333).abs() < 1e-3);
        assert!((s.std_dev - 80.139).abs() < 1e-3);
    }

    #[test]
    fn window_stats_match_naive_loops() {
        let mut rng = Lcg64::new(61);
        let params = LocalParams::new(7, 5, 0.0, 128.0).unwrap();
        for _ in 0..5 {
            let img = random_gray(&mut rng, 23, 14);
            let ip = build_integral(&img);
            for y in 0..img.height() {
                for x in 0..img.width() {
                    let got = window_stats(&ip, x, y, &params);
                    let x0 = x.saturating_sub(3);
                    let x1 = (x + 4).min(img.width());
                    let y0 = y.saturating_sub(2);
                    let y1 = (y + 3).min(img.height());
                    let mut vals = Vec::new();
                    for yy in y0..y1 {
                        for xx in x0..x1 {
                            vals.push(img.get(xx, yy) as f64);
                        }
                    }
                    let n = vals.len() as f64;
                    let mean = vals.iter().sum::<f64>() / n;
                    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                    assert!((got.mean - mean).abs() <= 1e-9 * mean.max(1.0));
                    assert!((got.std_dev - var.sqrt()).abs() <= 1e-9 * var.sqrt().max(1.0));
                }
            }
        }
    }

    #[test]
    fn threshold_formulas_closed_form() {
        let p = |k: f64, r: f64| LocalParams::new(15, 15, k, r).unwrap();
        let stats = |mean: f64, std_dev: f64| LocalStats { mean, std_dev };

        // Niblack collapses to the mean at k = 0.
        assert_eq!(niblack_threshold(stats(123.4, 56.0), &p(0.0, 128.0)), 123.4);
        assert!((niblack_threshold(stats(100.0, 20.0), &p(-0.2, 128.0)) - 96.0).abs() < 1e-12);

        // Zhang-Tan: s = R leaves the mean; s = 0 gives m * (1 + k).
        assert!((zhang_tan_threshold(stats(100.0, 128.0), &p(0.2, 128.0)) - 100.0).abs() < 1e-12);
        assert!((zhang_tan_threshold(stats(100.0, 0.0), &p(0.2, 128.0)) - 120.0).abs() < 1e-12);
        assert!((zhang_tan_threshold(stats(100.0, 64.0), &p(0.2, 128.0)) - 110.0).abs() < 1e-12);

        // Sauvola: s = R leaves the mean; s = 0 gives m * (1 - k).
        assert!((sauvola_threshold(stats(100.0, 128.0), &p(0.5, 128.0)) - 100.0).abs() < 1e-12);
        assert!((sauvola_threshold(stats(100.0, 0.0), &p(0.5, 128.0)) - 50.0).abs() < 1e-12);
        assert!((sauvola_threshold(stats(200.0, 32.0), &p(0.5, 128.0)) - 125.0).abs() < 1e-12);
    }

    #[test]
    fn niblack_threshold_increases_with_k() {
        let stats = LocalStats {
            mean: 90.0,
            std_dev: 12.5,
        };
        let mut last = f64::NEG_INFINITY;
        for i in 0..20 {
            let k = -1.0 + i as f64 * 0.1;
            let t = niblack_threshold(stats, &LocalParams::new(15, 15, k, 128.0).unwrap());
            assert!(t > last);
            last = t;
        }
    }

    #[test]
    fn constant_image_polarity() {
        let img = GrayImage::filled(8, 8, 180);
        // Sauvola: s = 0 everywhere so T = c/2 < c; everything is background.
        let sauvola = apply_local(
            &img,
            LocalMethod::Sauvola,
            &LocalMethod::Sauvola.default_params(),
        );
        assert_eq!(sauvola.count_foreground(), 0);
        // Niblack: T = c exactly; pixel <= T makes everything foreground.
        // This is the well-known Niblack blank-region artifact.
        for k in [-0.5, 0.0, 0.7] {
            let params = LocalParams::new(15, 15, k, 128.0).unwrap();
            let niblack = apply_local(&img, LocalMethod::Niblack, &params);
            assert_eq!(niblack.count_foreground(), 64);
        }
    }

    #[test]
    fn accelerated_equals_naive_bitwise() {
        let mut rng = Lcg64::new(62);
        let methods = [
            LocalMethod::Niblack,
            LocalMethod::ZhangTan,
            LocalMethod::Sauvola,
        ];
        for _ in 0..8 {
            let w = 5 + rng.next_below(40) as u32;
            let h = 5 + rng.next_below(40) as u32;
            let img = random_gray(&mut rng, w, h);
            for window in [3u32, 7, 15] {
                for method in methods {
                    let params = method.default_params().with_window(window, window).unwrap();
                    let fast = apply_local(&img, method, &params);
                    let naive = apply_local_naive(&img, method, &params);
                    assert_eq!(fast, naive, "{} window {}", method.name(), window);
                }
            }
        }
    }

    #[test]
    fn stats_never_produce_nan() {
        let mut rng = Lcg64::new(63);
        let params = LocalParams::new(3, 3, 0.0, 128.0).unwrap();
        for _ in 0..10 {
            let img = random_gray(&mut rng, 9, 9);
            let ip = build_integral(&img);
            for y in 0..9 {
                for x in 0..9 {
                    let s = window_stats(&ip, x, y, &params);
                    assert!(s.mean.is_finite() && s.std_dev.is_finite());
                    assert!((0.0..=255.0).contains(&s.mean));
                    assert!((0.0..=127.5).contains(&s.std_dev));
                }
            }
        }
    }

    #[test]
    fn dynamic_range_r_finds_max_std() {
        let img = GrayImage::from_fn(8, 8, |x, _| if x < 4 { 0 } else { 255 });
        let r = dynamic_range_r(&img, 3, 3);
        // Sharpest window is two columns of 0 and one of 255 (or vice versa).
        let mean = 255.0 / 3.0;
        let expected = (65025.0f64 * 3.0 / 9.0 - mean * mean).sqrt();
        assert!((r - expected).abs() < 1e-9);
        assert_eq!(dynamic_range_r(&GrayImage::filled(4, 4, 9), 3, 3), 0.0);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(matches!(
            LocalParams::new(4, 15, 0.5, 128.0),
            Err(LocalError::BadWindow(4, 15))
        ));
        assert!(matches!(
            LocalParams::new(15, 1, 0.5, 128.0),
            Err(LocalError::BadWindow(15, 1))
        ));
        assert!(matches!(
            LocalParams::new(15, 15, 0.5, 0.0),
            Err(LocalError::NonPositiveR)
        ));
    }
}
