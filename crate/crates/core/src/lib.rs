//! Document-image binarization toolkit.
//!
//! The crate takes a scanned page through an optional preprocessing chain
//! (grayscale conversion, histogram equalization, morphology, Gaussian and
//! adaptive Wiener filtering) and then separates ink from paper with either
//! a global threshold (Otsu) or windowed local thresholds (Niblack,
//! Zhang-Tan, Sauvola). Local statistics are backed by summed-area tables so
//! the per-pixel cost is independent of the window size.
//!
//! Polarity is fixed throughout: in a [`image::BinaryImage`], `true` (and a
//! set bit in a PBM file) means foreground ink, `false` means background
//! paper.

pub mod evaluate;
pub mod global;
pub mod image;
pub mod local;
pub mod netpbm;
pub mod pipeline;
pub mod preprocess;
pub mod rng;

/// A binarization technique selectable in sweeps, benchmarks and pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Otsu,
    Niblack,
    ZhangTan,
    Sauvola,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Otsu,
        Method::Niblack,
        Method::ZhangTan,
        Method::Sauvola,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Otsu => "otsu",
            Method::Niblack => "niblack",
            Method::ZhangTan => "zhang_tan",
            Method::Sauvola => "sauvola",
        }
    }

    pub fn parse(name: &str) -> Option<Method> {
        match name {
            "otsu" => Some(Method::Otsu),
            "niblack" => Some(Method::Niblack),
            "zhang_tan" => Some(Method::ZhangTan),
            "sauvola" => Some(Method::Sauvola),
            _ => None,
        }
    }

    /// The local-thresholding variant, or `None` for the global method.
    pub fn local(self) -> Option<local::LocalMethod> {
        match self {
            Method::Otsu => None,
            Method::Niblack => Some(local::LocalMethod::Niblack),
            Method::ZhangTan => Some(local::LocalMethod::ZhangTan),
            Method::Sauvola => Some(local::LocalMethod::Sauvola),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
