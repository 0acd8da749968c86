//! Binary netpbm (P4/P5/P6) reading and writing.
//!
//! The writer emits one canonical byte layout per format so files round-trip
//! bit-exactly: magic, `\n`, `width height`, `\n`, a `255\n` maxval line for
//! P5/P6, then the raw payload. P4 rows are padded to a byte boundary with
//! zero bits, and a set bit means black ink (foreground), matching the
//! polarity used everywhere else in the crate.
//!
//! The reader is slightly more lenient than the writer: header tokens may be
//! separated by arbitrary whitespace and `#` comment lines. Maxval must be
//! 255 and nothing may follow the payload.

use crate::image::{BinaryImage, GrayImage, Image, RgbImage, MAX_DIMENSION};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetpbmError {
    #[error("unsupported magic number {0:?} (expected P4, P5 or P6)")]
    UnsupportedMagic(String),
    #[error("malformed header: {0}")]
    MalformedHeader(&'static str),
    #[error("unsupported maxval {0} (only 255 is supported)")]
    UnsupportedMaxval(u32),
    #[error("zero image dimension in header")]
    ZeroDimension,
    #[error("image dimension {0} exceeds the maximum of {MAX_DIMENSION}")]
    DimensionTooLarge(u64),
    #[error("truncated payload: expected {expected} bytes, found {got}")]
    TruncatedPayload { expected: usize, got: usize },
    #[error("{0} unexpected trailing bytes after payload")]
    TrailingData(usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Parser { bytes, pos: 0 }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    /// Skip whitespace and `#` comment lines between header tokens.
    fn skip_separators(&mut self) -> Result<(), NetpbmError> {
        let mut skipped = false;
        loop {
            match self.peek() {
                Some(b'#') => {
                    while let Some(c) = self.peek() {
                        self.pos += 1;
                        if c == b'\n' {
                            break;
                        }
                    }
                    skipped = true;
                }
                Some(c) if c.is_ascii_whitespace() => {
                    self.pos += 1;
                    skipped = true;
                }
                _ => break,
            }
        }
        if skipped {
            Ok(())
        } else {
            Err(NetpbmError::MalformedHeader(
                "expected whitespace between header fields",
            ))
        }
    }

    fn parse_number(&mut self) -> Result<u64, NetpbmError> {
        let start = self.pos;
        let mut value: u64 = 0;
        while let Some(c) = self.peek() {
            if !c.is_ascii_digit() {
                break;
            }
            value = value
                .saturating_mul(10)
                .saturating_add(u64::from(c - b'0'));
            self.pos += 1;
        }
        if self.pos == start {
            return Err(NetpbmError::MalformedHeader("expected a decimal number"));
        }
        Ok(value)
    }

    fn parse_dimension(&mut self) -> Result<u32, NetpbmError> {
        let v = self.parse_number()?;
        if v == 0 {
            return Err(NetpbmError::ZeroDimension);
        }
        if v > u64::from(MAX_DIMENSION) {
            return Err(NetpbmError::DimensionTooLarge(v));
        }
        Ok(v as u32)
    }

    /// The header ends with exactly one whitespace byte before the payload.
    fn expect_payload_separator(&mut self) -> Result<(), NetpbmError> {
        match self.peek() {
            Some(c) if c.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(NetpbmError::MalformedHeader(
                "expected a single whitespace byte before the payload",
            )),
        }
    }

    fn take_payload(&mut self, expected: usize) -> Result<&'a [u8], NetpbmError> {
        let available = self.bytes.len() - self.pos;
        if available < expected {
            return Err(NetpbmError::TruncatedPayload {
                expected,
                got: available,
            });
        }
        if available > expected {
            return Err(NetpbmError::TrailingData(available - expected));
        }
        let payload = &self.bytes[self.pos..self.pos + expected];
        self.pos += expected;
        Ok(payload)
    }
}

fn pbm_row_bytes(width: u32) -> usize {
    (width as usize).div_ceil(8)
}

/// Decode a binary netpbm file. The magic number selects the result type:
/// P4 yields a `BinaryImage` (bit 1 = black = foreground), P5 a `GrayImage`,
/// P6 an `RgbImage`.
pub fn read(bytes: &[u8]) -> Result<Image, NetpbmError> {
    if bytes.len() < 2 {
        return Err(NetpbmError::MalformedHeader("file shorter than a magic number"));
    }
    let magic = &bytes[0..2];
    if magic[0] != b'P' || !matches!(magic[1], b'4' | b'5' | b'6') {
        return Err(NetpbmError::UnsupportedMagic(
            String::from_utf8_lossy(magic).into_owned(),
        ));
    }

    let mut p = Parser::new(bytes);
    p.pos = 2;
    p.skip_separators()?;
    let width = p.parse_dimension()?;
    p.skip_separators()?;
    let height = p.parse_dimension()?;

    match magic[1] {
        b'4' => {
            p.expect_payload_separator()?;
            let row_bytes = pbm_row_bytes(width);
            let payload = p.take_payload(row_bytes * height as usize)?;
            let mut data = Vec::with_capacity(width as usize * height as usize);
            for y in 0..height as usize {
                let row = &payload[y * row_bytes..(y + 1) * row_bytes];
                for x in 0..width as usize {
                    let bit = (row[x / 8] >> (7 - x % 8)) & 1;
                    data.push(bit == 1);
                }
            }
            let img = BinaryImage::from_raw(width, height, data).expect("validated dimensions");
            Ok(Image::Binary(img))
        }
        b'5' => {
            p.skip_separators()?;
            let maxval = p.parse_number()?;
            if maxval != 255 {
                return Err(NetpbmError::UnsupportedMaxval(maxval.min(u64::from(u32::MAX)) as u32));
            }
            p.expect_payload_separator()?;
            let payload = p.take_payload(width as usize * height as usize)?;
            let img =
                GrayImage::from_raw(width, height, payload.to_vec()).expect("validated dimensions");
            Ok(Image::Gray(img))
        }
        b'6' => {
            p.skip_separators()?;
            let maxval = p.parse_number()?;
            if maxval != 255 {
                return Err(NetpbmError::UnsupportedMaxval(maxval.min(u64::from(u32::MAX)) as u32));
            }
            p.expect_payload_separator()?;
            let payload = p.take_payload(width as usize * height as usize * 3)?;
            let img =
                RgbImage::from_raw(width, height, payload.to_vec()).expect("validated dimensions");
            Ok(Image::Rgb(img))
        }
        _ => unreachable!(),
    }
}

/// Encode an image in the canonical byte layout described in the module docs.
pub fn write(image: &Image) -> Vec<u8> {
    match image {
        Image::Binary(img) => {
            let mut out = format!("P4\n{} {}\n", img.width(), img.height()).into_bytes();
            let row_bytes = pbm_row_bytes(img.width());
            for y in 0..img.height() {
                let mut row = vec![0u8; row_bytes];
                for x in 0..img.width() {
                    if img.get(x, y) {
                        row[x as usize / 8] |= 1 << (7 - x % 8);
                    }
                }
                out.extend_from_slice(&row);
            }
            out
        }
        Image::Gray(img) => {
            let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
            out.extend_from_slice(img.data());
            out
        }
        Image::Rgb(img) => {
            let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
            out.extend_from_slice(img.data());
            out
        }
    }
}

pub fn read_file(path: &Path) -> Result<Image, NetpbmError> {
    let bytes = std::fs::read(path)?;
    read(&bytes)
}

pub fn write_file(path: &Path, image: &Image) -> Result<(), NetpbmError> {
    std::fs::write(path, write(image))?;
    Ok(())
}
