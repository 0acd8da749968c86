//! Core raster types: RGB and grayscale rasters, binary ink masks, and
//! gray-level histograms.
//!
//! All types are immutable after construction and validate their invariants
//! up front, so downstream operations never have to re-check dimensions.
//! Axes are capped at 2^16 pixels per side; that bound is what lets the
//! squared-value summed-area tables in [`crate::local`] use exact `u64`
//! accumulators (2^32 pixels x 255^2 < 2^49).

use thiserror::Error;

/// Maximum width or height of any raster, exclusive bound 2^16.
pub const MAX_DIMENSION: u32 = 1 << 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: u32, height: u32 },
    #[error("image dimension {0} exceeds the maximum of {MAX_DIMENSION}")]
    DimensionTooLarge(u32),
    #[error("pixel buffer length {got} does not match {width}x{height} ({expected} expected)")]
    DataLength {
        width: u32,
        height: u32,
        expected: usize,
        got: usize,
    },
}

fn check_dimensions(width: u32, height: u32) -> Result<(), ImageError> {
    if width == 0 || height == 0 {
        return Err(ImageError::EmptyDimensions { width, height });
    }
    if width > MAX_DIMENSION {
        return Err(ImageError::DimensionTooLarge(width));
    }
    if height > MAX_DIMENSION {
        return Err(ImageError::DimensionTooLarge(height));
    }
    Ok(())
}

/// Round half away from zero, then clamp to the 8-bit range. This is the
/// single rounding convention used by every stage in the crate.
pub(crate) fn round_clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// 8-bit RGB raster, row-major interleaved (R, G, B) triples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImageError> {
        check_dimensions(width, height)?;
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(ImageError::DataLength {
                width,
                height,
                expected,
                got: data.len(),
            });
        }
        Ok(RgbImage {
            width,
            height,
            data,
        })
    }

    /// Build pixel-by-pixel from a closure returning (r, g, b).
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> (u8, u8, u8)) -> Self {
        check_dimensions(width, height).expect("valid dimensions");
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                let (r, g, b) = f(x, y);
                data.extend_from_slice(&[r, g, b]);
            }
        }
        RgbImage {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> (u8, u8, u8) {
        debug_assert!(x < self.width && y < self.height);
        let i = (y as usize * self.width as usize + x as usize) * 3;
        (self.data[i], self.data[i + 1], self.data[i + 2])
    }
}

/// 8-bit single-channel raster, the pipeline's working representation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImageError> {
        check_dimensions(width, height)?;
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(ImageError::DataLength {
                width,
                height,
                expected,
                got: data.len(),
            });
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Self {
        check_dimensions(width, height).expect("valid dimensions");
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayImage {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        debug_assert!(x < self.width && y < self.height);
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// Read with replicate-border semantics: coordinates outside the raster
    /// clamp to the nearest edge pixel.
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> u8 {
        let cx = x.clamp(0, self.width as i64 - 1) as u32;
        let cy = y.clamp(0, self.height as i64 - 1) as u32;
        self.get(cx, cy)
    }
}

/// Per-pixel ink mask. `true` is foreground ink, `false` is background paper.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl BinaryImage {
    pub fn from_raw(width: u32, height: u32, data: Vec<bool>) -> Result<Self, ImageError> {
        check_dimensions(width, height)?;
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(ImageError::DataLength {
                width,
                height,
                expected,
                got: data.len(),
            });
        }
        Ok(BinaryImage {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        check_dimensions(width, height).expect("valid dimensions");
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        BinaryImage {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        debug_assert!(x < self.width && y < self.height);
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn count_foreground(&self) -> u64 {
        self.data.iter().filter(|&&p| p).count() as u64
    }
}

/// Any raster the netpbm reader can produce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Image {
    Rgb(RgbImage),
    Gray(GrayImage),
    Binary(BinaryImage),
}

impl Image {
    pub fn width(&self) -> u32 {
        match self {
            Image::Rgb(i) => i.width(),
            Image::Gray(i) => i.width(),
            Image::Binary(i) => i.width(),
        }
    }

    pub fn height(&self) -> u32 {
        match self {
            Image::Rgb(i) => i.height(),
            Image::Gray(i) => i.height(),
            Image::Binary(i) => i.height(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Image::Rgb(_) => "rgb",
            Image::Gray(_) => "gray",
            Image::Binary(_) => "binary",
        }
    }

    pub fn as_gray(&self) -> Option<&GrayImage> {
        match self {
            Image::Gray(g) => Some(g),
            _ => None,
        }
    }
}

impl From<RgbImage> for Image {
    fn from(i: RgbImage) -> Self {
        Image::Rgb(i)
    }
}

impl From<GrayImage> for Image {
    fn from(i: GrayImage) -> Self {
        Image::Gray(i)
    }
}

impl From<BinaryImage> for Image {
    fn from(i: BinaryImage) -> Self {
        Image::Binary(i)
    }
}

/// 256-bin gray-level histogram with normalized probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    counts: [u64; 256],
    total: u64,
    p: [f64; 256],
}

impl Histogram {
    pub fn from_counts(counts: [u64; 256]) -> Self {
        let total: u64 = counts.iter().sum();
        let mut p = [0.0f64; 256];
        if total > 0 {
            for (pi, &c) in p.iter_mut().zip(counts.iter()) {
                *pi = c as f64 / total as f64;
            }
        }
        Histogram { counts, total, p }
    }

    pub fn counts(&self) -> &[u64; 256] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Normalized probability of gray level `i`, P(i) = counts[i] / total.
    pub fn p(&self, i: usize) -> f64 {
        self.p[i]
    }

    pub fn probabilities(&self) -> &[f64; 256] {
        &self.p
    }
}

/// Tally the gray-level histogram of an image.
pub fn histogram(image: &GrayImage) -> Histogram {
    let mut counts = [0u64; 256];
    for &v in image.data() {
        counts[v as usize] += 1;
    }
    Histogram::from_counts(counts)
}
