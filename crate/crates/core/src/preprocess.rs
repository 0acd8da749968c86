//! Preprocessing chain: RGB to grayscale, histogram equalization, grayscale
//! erosion/dilation, Gaussian smoothing and adaptive Wiener denoising.
//!
//! All filters use replicate-border reads (out-of-bounds coordinates clamp
//! to the nearest edge pixel) and the crate-wide rounding convention of half
//! away from zero followed by a clamp to [0, 255].

use crate::image::{histogram, round_clamp_u8, GrayImage, RgbImage};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PreprocessError {
    #[error("structuring element: {0}")]
    StructuringElement(&'static str),
    #[error("gaussian kernel: {0}")]
    GaussianKernel(&'static str),
    #[error("wiener window: {0}")]
    WienerWindow(&'static str),
}

/// Neighborhood shape for grayscale morphology. Dimensions are odd so the
/// element has a well-defined center, and the center cell must be a member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuringElement {
    width: u32,
    height: u32,
    mask: Vec<bool>,
}

impl StructuringElement {
    pub fn new(width: u32, height: u32, mask: Vec<bool>) -> Result<Self, PreprocessError> {
        if width == 0 || height == 0 || width.is_multiple_of(2) || height.is_multiple_of(2) {
            return Err(PreprocessError::StructuringElement(
                "dimensions must be odd and at least 1",
            ));
        }
        if mask.len() != (width * height) as usize {
            return Err(PreprocessError::StructuringElement(
                "mask length must equal width x height",
            ));
        }
        if !mask[(height / 2 * width + width / 2) as usize] {
            return Err(PreprocessError::StructuringElement(
                "center cell must be a member",
            ));
        }
        Ok(StructuringElement {
            width,
            height,
            mask,
        })
    }

    /// Fully populated rectangle.
    pub fn rect(width: u32, height: u32) -> Result<Self, PreprocessError> {
        Self::new(width, height, vec![true; (width * height) as usize])
    }

    /// Fully populated square; `square(3)` is the conventional default.
    pub fn square(size: u32) -> Result<Self, PreprocessError> {
        Self::rect(size, size)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Member offsets relative to the center cell.
    pub fn offsets(&self) -> Vec<(i32, i32)> {
        let half_w = (self.width / 2) as i32;
        let half_h = (self.height / 2) as i32;
        let mut out = Vec::new();
        for (i, &member) in self.mask.iter().enumerate() {
            if member {
                let x = (i as u32 % self.width) as i32 - half_w;
                let y = (i as u32 / self.width) as i32 - half_h;
                out.push((x, y));
            }
        }
        out
    }

    /// The element rotated 180 degrees, as used by the erosion/dilation
    /// duality identity.
    pub fn reflect(&self) -> Self {
        let mut mask = self.mask.clone();
        mask.reverse();
        StructuringElement {
            width: self.width,
            height: self.height,
            mask,
        }
    }
}

/// Normalized isotropic Gaussian convolution kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    radius: u32,
    sigma: f64,
    weights: Vec<f64>,
}

impl GaussianKernel {
    pub fn new(radius: u32, sigma: f64) -> Result<Self, PreprocessError> {
        if radius < 1 {
            return Err(PreprocessError::GaussianKernel("radius must be at least 1"));
        }
        if sigma.is_nan() || sigma <= 0.0 {
            return Err(PreprocessError::GaussianKernel("sigma must be positive"));
        }
        let side = (2 * radius + 1) as i64;
        let r = radius as i64;
        let mut weights = Vec::with_capacity((side * side) as usize);
        let mut sum = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                let w = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
                weights.push(w);
                sum += w;
            }
        }
        for w in &mut weights {
            *w /= sum;
        }
        Ok(GaussianKernel {
            radius,
            sigma,
            weights,
        })
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Row-major (2*radius+1)^2 weights, summing to 1.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Noise power for the adaptive Wiener filter: a fixed variance, or the mean
/// of all local window variances estimated from the image itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseVariance {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WienerParams {
    window_w: u32,
    window_h: u32,
    noise_variance: NoiseVariance,
}

impl WienerParams {
    pub fn new(
        window_w: u32,
        window_h: u32,
        noise_variance: NoiseVariance,
    ) -> Result<Self, PreprocessError> {
        if window_w < 3 || window_h < 3 || window_w.is_multiple_of(2) || window_h.is_multiple_of(2) {
            return Err(PreprocessError::WienerWindow(
                "window dimensions must be odd and at least 3",
            ));
        }
        if let NoiseVariance::Fixed(v) = noise_variance {
            if v.is_nan() || v < 0.0 {
                return Err(PreprocessError::WienerWindow(
                    "noise variance must be non-negative",
                ));
            }
        }
        Ok(WienerParams {
            window_w,
            window_h,
            noise_variance,
        })
    }

    pub fn window(&self) -> (u32, u32) {
        (self.window_w, self.window_h)
    }

    pub fn noise_variance(&self) -> NoiseVariance {
        self.noise_variance
    }
}

impl Default for WienerParams {
    fn default() -> Self {
        WienerParams::new(3, 3, NoiseVariance::Auto).unwrap()
    }
}

/// BT.601 luminance conversion: gray = 0.2989 R + 0.5870 G + 0.1140 B,
/// rounded half away from zero.
pub fn to_grayscale(image: &RgbImage) -> GrayImage {
    GrayImage::from_fn(image.width(), image.height(), |x, y| {
        let (r, g, b) = image.get(x, y);
        round_clamp_u8(0.2989 * r as f64 + 0.5870 * g as f64 + 0.1140 * b as f64)
    })
}

/// Histogram equalization by CDF remapping. Output level is
/// `round(255 * (cdf(v) - cdf_min) / (N - cdf_min))` where `cdf_min` is the
/// cumulative count at the lowest occupied level. An image with a single
/// distinct value is returned unchanged.
pub fn equalize(image: &GrayImage) -> GrayImage {
    let hist = histogram(image);
    let counts = hist.counts();
    let lowest_occupied = match counts.iter().position(|&c| c > 0) {
        Some(i) => i,
        None => return image.clone(),
    };
    let cdf_min = counts[lowest_occupied];
    let total = hist.total();
    if cdf_min == total {
        // Single distinct value: the remap would divide by zero.
        return image.clone();
    }
    let denom = (total - cdf_min) as f64;
    let mut lut = [0u8; 256];
    let mut cdf = 0u64;
    for (v, l) in lut.iter_mut().enumerate() {
        cdf += counts[v];
        *l = round_clamp_u8(255.0 * cdf.saturating_sub(cdf_min) as f64 / denom);
    }
    GrayImage::from_fn(image.width(), image.height(), |x, y| {
        lut[image.get(x, y) as usize]
    })
}

fn morph(image: &GrayImage, se: &StructuringElement, take_min: bool) -> GrayImage {
    let offsets = se.offsets();
    GrayImage::from_fn(image.width(), image.height(), |x, y| {
        let mut acc: u8 = if take_min { 255 } else { 0 };
        for &(dx, dy) in &offsets {
            let v = image.get_clamped(x as i64 + dx as i64, y as i64 + dy as i64);
            acc = if take_min { acc.min(v) } else { acc.max(v) };
        }
        acc
    })
}

/// Grayscale erosion: each pixel becomes the minimum over the structuring
/// element's neighborhood.
pub fn erode(image: &GrayImage, se: &StructuringElement) -> GrayImage {
    morph(image, se, true)
}

/// Grayscale dilation, the max dual of [`erode`].
pub fn dilate(image: &GrayImage, se: &StructuringElement) -> GrayImage {
    morph(image, se, false)
}

/// Full 2-D Gaussian convolution with replicate borders; accumulation is in
/// double precision and rounding happens once at the end.
pub fn gaussian_filter(image: &GrayImage, kernel: &GaussianKernel) -> GrayImage {
    let r = kernel.radius() as i64;
    let side = (2 * r + 1) as usize;
    let weights = kernel.weights();
    GrayImage::from_fn(image.width(), image.height(), |x, y| {
        let mut acc = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                let w = weights[(dy + r) as usize * side + (dx + r) as usize];
                acc += w * image.get_clamped(x as i64 + dx, y as i64 + dy) as f64;
            }
        }
        round_clamp_u8(acc)
    })
}

/// Adaptive local Wiener denoising. Per pixel, with window mean `m` and
/// variance `s2` (replicate borders) and noise power `nv`:
///
/// ```text
/// out = m + max(0, s2 - nv) / max(s2, 1e-12) * (x - m)
/// ```
///
/// With `NoiseVariance::Auto`, `nv` is the mean of all local variances.
pub fn wiener_filter(image: &GrayImage, params: &WienerParams) -> GrayImage {
    let (win_w, win_h) = params.window();
    let half_w = (win_w / 2) as i64;
    let half_h = (win_h / 2) as i64;
    let n = (win_w * win_h) as f64;
    let pixel_count = image.width() as usize * image.height() as usize;

    let mut means = Vec::with_capacity(pixel_count);
    let mut variances = Vec::with_capacity(pixel_count);
    for y in 0..image.height() as i64 {
        for x in 0..image.width() as i64 {
            let mut sum = 0u64;
            let mut sum_sq = 0u64;
            for dy in -half_h..=half_h {
                for dx in -half_w..=half_w {
                    let v = image.get_clamped(x + dx, y + dy) as u64;
                    sum += v;
                    sum_sq += v * v;
                }
            }
            let mean = sum as f64 / n;
            means.push(mean);
            variances.push((sum_sq as f64 / n - mean * mean).max(0.0));
        }
    }

    let noise = match params.noise_variance() {
        NoiseVariance::Fixed(v) => v,
        NoiseVariance::Auto => variances.iter().sum::<f64>() / pixel_count as f64,
    };

    let width = image.width();
    GrayImage::from_fn(width, image.height(), |x, y| {
        let i = y as usize * width as usize + x as usize;
        let gain = (variances[i] - noise).max(0.0) / variances[i].max(1e-12);
        round_clamp_u8(means[i] + gain * (image.get(x, y) as f64 - means[i]))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Lcg64;

    fn random_gray(rng: &mut Lcg64, width: u32, height: u32) -> GrayImage {
        GrayImage::from_fn(width, height, |_, _| (rng.next_u64() >> 56) as u8)
    }

    #[test]
    fn grayscale_weights() {
        let img = RgbImage::from_raw(3, 1, vec![255, 255, 255, 0, 0, 0, 255, 0, 0]).unwrap();
        let gray = to_grayscale(&img);
        assert_eq!(gray.data(), &[255, 0, 76]);
    }

    #[test]
    fn equalize_constant_is_identity() {
        let img = GrayImage::filled(5, 4, 131);
        assert_eq!(equalize(&img), img);
    }

    #[test]
    fn equalize_keeps_extreme_endpoints() {
        let img = GrayImage::from_fn(4, 2, |x, _| if x < 2 { 0 } else { 255 });
        let eq = equalize(&img);
        assert_eq!(eq, img);
    }

    #[test]
    fn equalize_full_ramp_is_identity() {
        // cdf(v) = v + 1, cdf_min = 1, so L(v) = round(255 v / 255) = v.
        let img = GrayImage::from_fn(16, 16, |x, y| (y * 16 + x) as u8);
        assert_eq!(equalize(&img), img);
    }

    #[test]
    fn equalize_mapping_is_monotone() {
        let mut rng = Lcg64::new(5);
        for _ in 0..20 {
            let img = random_gray(&mut rng, 17, 13);
            let eq = equalize(&img);
            // Compare outputs for every ordered pair of occupied input levels.
            let mut mapped: Vec<Option<u8>> = vec![None; 256];
            for (inp, out) in img.data().iter().zip(eq.data()) {
                mapped[*inp as usize] = Some(*out);
            }
            let levels: Vec<u8> = mapped.iter().flatten().copied().collect();
            assert!(levels.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn erode_constant_unchanged() {
        let img = GrayImage::filled(6, 6, 77);
        let se = StructuringElement::square(3).unwrap();
        assert_eq!(erode(&img, &se), img);
        assert_eq!(dilate(&img, &se), img);
    }

    #[test]
    fn erode_absorbs_isolated_spike() {
        let img = GrayImage::from_fn(5, 5, |x, y| if (x, y) == (2, 2) { 255 } else { 0 });
        let se = StructuringElement::square(3).unwrap();
        assert!(erode(&img, &se).data().iter().all(|&v| v == 0));
    }

    #[test]
    fn morphology_matches_naive_oracle() {
        let mut rng = Lcg64::new(31);
        let se = StructuringElement::new(
            3,
            5,
            vec![
                false, true, false, //
                true, true, true, //
                false, true, false, //
                true, true, true, //
                false, true, false,
            ],
        )
        .unwrap();
        for _ in 0..10 {
            let img = random_gray(&mut rng, 14, 9);
            let eroded = erode(&img, &se);
            let dilated = dilate(&img, &se);
            for y in 0..img.height() {
                for x in 0..img.width() {
                    let mut lo = 255u8;
                    let mut hi = 0u8;
                    for dy in -2i64..=2 {
                        for dx in -1i64..=1 {
                            if se.offsets().contains(&(dx as i32, dy as i32)) {
                                let v = img.get_clamped(x as i64 + dx, y as i64 + dy);
                                lo = lo.min(v);
                                hi = hi.max(v);
                            }
                        }
                    }
                    assert_eq!(eroded.get(x, y), lo);
                    assert_eq!(dilated.get(x, y), hi);
                }
            }
        }
    }

    #[test]
    fn dilation_is_dual_of_erosion() {
        let mut rng = Lcg64::new(77);
        let se = StructuringElement::square(3).unwrap();
        for _ in 0..10 {
            let img = random_gray(&mut rng, 11, 8);
            let inverted = GrayImage::from_fn(11, 8, |x, y| 255 - img.get(x, y));
            let dual = erode(&inverted, &se.reflect());
            let dilated = dilate(&img, &se);
            for (a, b) in dilated.data().iter().zip(dual.data()) {
                assert_eq!(*a, 255 - *b);
            }
        }
    }

    #[test]
    fn gaussian_preserves_constant() {
        let img = GrayImage::filled(9, 9, 201);
        let kernel = GaussianKernel::new(2, 1.0).unwrap();
        assert_eq!(gaussian_filter(&img, &kernel), img);
    }

    #[test]
    fn gaussian_impulse_stamps_weights() {
        let kernel = GaussianKernel::new(2, 1.0).unwrap();
        let img = GrayImage::from_fn(9, 9, |x, y| if (x, y) == (4, 4) { 255 } else { 0 });
        let out = gaussian_filter(&img, &kernel);
        for dy in -2i64..=2 {
            for dx in -2i64..=2 {
                let w = kernel.weights()[((dy + 2) * 5 + dx + 2) as usize];
                let expected = round_clamp_u8(255.0 * w);
                assert_eq!(out.get((4 + dx) as u32, (4 + dy) as u32), expected);
            }
        }
        assert_eq!(out.get(0, 0), 0);
    }

    #[test]
    fn gaussian_matches_separable_oracle_within_one_level() {
        // Independent implementation: 1-D row pass then 1-D column pass in f64.
        let radius = 2i64;
        let sigma = 1.3f64;
        let kernel = GaussianKernel::new(radius as u32, sigma).unwrap();
        let mut rng = Lcg64::new(8);
        let img = random_gray(&mut rng, 21, 17);
        let out = gaussian_filter(&img, &kernel);

        let mut weights_1d = Vec::new();
        let mut norm = 0.0;
        for d in -radius..=radius {
            let w = (-(d * d) as f64 / (2.0 * sigma * sigma)).exp();
            weights_1d.push(w);
            norm += w;
        }
        for w in &mut weights_1d {
            *w /= norm;
        }

        let (w, h) = (img.width() as i64, img.height() as i64);
        let mut rows = vec![0.0f64; (w * h) as usize];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for d in -radius..=radius {
                    acc += weights_1d[(d + radius) as usize] * img.get_clamped(x + d, y) as f64;
                }
                rows[(y * w + x) as usize] = acc;
            }
        }
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for d in -radius..=radius {
                    let yy = (y + d).clamp(0, h - 1);
                    acc += weights_1d[(d + radius) as usize] * rows[(yy * w + x) as usize];
                }
                let expected = round_clamp_u8(acc);
                let got = out.get(x as u32, y as u32);
                assert!(
                    (expected as i32 - got as i32).abs() <= 1,
                    "({x},{y}): separable {expected} vs 2-D {got}"
                );
            }
        }
    }

    #[test]
    fn wiener_preserves_constant() {
        let img = GrayImage::filled(7, 7, 99);
        assert_eq!(wiener_filter(&img, &WienerParams::default()), img);
    }

    #[test]
    fn wiener_flattens_low_variance_windows_to_mean() {
        // Noise power far above any local variance forces output = round(m).
        let mut rng = Lcg64::new(14);
        let img = random_gray(&mut rng, 10, 10);
        let params = WienerParams::new(3, 3, NoiseVariance::Fixed(1e9)).unwrap();
        let out = wiener_filter(&img, &params);
        for y in 0..10i64 {
            for x in 0..10i64 {
                let mut sum = 0u64;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        sum += img.get_clamped(x + dx, y + dy) as u64;
                    }
                }
                assert_eq!(out.get(x as u32, y as u32), round_clamp_u8(sum as f64 / 9.0));
            }
        }
    }

    #[test]
    fn wiener_matches_naive_oracle() {
        let mut rng = Lcg64::new(44);
        let img = random_gray(&mut rng, 13, 11);
        let nv = 150.0;
        let params = WienerParams::new(5, 3, NoiseVariance::Fixed(nv)).unwrap();
        let out = wiener_filter(&img, &params);
        for y in 0..11i64 {
            for x in 0..13i64 {
                let mut sum = 0.0;
                let mut sum_sq = 0.0;
                for dy in -1..=1 {
                    for dx in -2..=2 {
                        let v = img.get_clamped(x + dx, y + dy) as f64;
                        sum += v;
                        sum_sq += v * v;
                    }
                }
                let m = sum / 15.0;
                let var = (sum_sq / 15.0 - m * m).max(0.0);
                let gain = (var - nv).max(0.0) / var.max(1e-12);
                let px = img.get(x as u32, y as u32) as f64;
                assert_eq!(out.get(x as u32, y as u32), round_clamp_u8(m + gain * (px - m)));
            }
        }
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(StructuringElement::rect(2, 3).is_err());
        assert!(StructuringElement::new(3, 3, vec![true; 8]).is_err());
        let mut no_center = vec![true; 9];
        no_center[4] = false;
        assert!(StructuringElement::new(3, 3, no_center).is_err());
        assert!(GaussianKernel::new(0, 1.0).is_err());
        assert!(GaussianKernel::new(2, 0.0).is_err());
        assert!(WienerParams::new(4, 3, NoiseVariance::Auto).is_err());
        assert!(WienerParams::new(3, 1, NoiseVariance::Auto).is_err());
    }

    #[test]
    fn gaussian_weights_sum_to_one_and_are_symmetric() {
        let kernel = GaussianKernel::new(3, 1.7).unwrap();
        let sum: f64 = kernel.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        let side = 7;
        for y in 0..side {
            for x in 0..side {
                let w = kernel.weights()[y * side + x];
                assert_eq!(w, kernel.weights()[y * side + (side - 1 - x)]);
                assert_eq!(w, kernel.weights()[(side - 1 - y) * side + x]);
            }
        }
    }
}
