//! Local PII masking over a screenshot's annotated text layer.
//!
//! Regions whose text matches an email, phone or 13-19 digit card pattern are
//! filled black and their text replaced by [`REDACTED_TEXT`]. Images without
//! a matching region are returned byte-for-byte, which makes the pass
//! idempotent: a redacted image has no matching region left.

use std::io::Cursor;
use std::sync::LazyLock;

use image::{ImageFormat, ImageReader, Rgba, RgbaImage};
use regex::Regex;
use thiserror::Error;

use crate::domain::TextRegion;

pub const REDACTED_TEXT: &str = "[REDACTED]";

#[derive(Debug, Error)]
pub enum RedactError {
    #[error("image cannot be decoded: {0}")]
    Undecodable(String),
    #[error("image cannot be encoded: {0}")]
    Encode(String),
}

static EMAIL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b[a-z0-9._%+-]+@[a-z0-9-]+(?:\.[a-z0-9-]+)*\.[a-z]{2,}\b").unwrap()
});
static PHONE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?:\+\d{1,3}[\s.-]?)?(?:\(\d{3}\)|\b\d{3})[\s.-]?\d{3}[\s.-]?\d{4}\b").unwrap()
});
static CARD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(?:\d[ -]?){12,18}\d\b").unwrap());

pub fn contains_pii(text: &str) -> bool {
    EMAIL.is_match(text) || PHONE.is_match(text) || CARD.is_match(text)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Redacted {
    pub bytes: Vec<u8>,
    pub regions: Vec<TextRegion>,
    /// Number of regions masked by this pass.
    pub masked: usize,
}

/// Masks PII regions of an encoded image. Output dimensions equal the input's.
pub fn redact(bytes: &[u8], regions: &[TextRegion]) -> Result<Redacted, RedactError> {
    let reader = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| RedactError::Undecodable(e.to_string()))?;
    let hits: Vec<usize> = regions
        .iter()
        .enumerate()
        .filter(|(_, r)| contains_pii(&r.text))
        .map(|(i, _)| i)
        .collect();
    if hits.is_empty() {
        reader
            .into_dimensions()
            .map_err(|e| RedactError::Undecodable(e.to_string()))?;
        return Ok(Redacted {
            bytes: bytes.to_vec(),
            regions: regions.to_vec(),
            masked: 0,
        });
    }

    let mut img: RgbaImage = reader
        .decode()
        .map_err(|e| RedactError::Undecodable(e.to_string()))?
        .into_rgba8();
    let mut out_regions = regions.to_vec();
    for &i in &hits {
        let r = &mut out_regions[i];
        fill_black(&mut img, r);
        r.text = REDACTED_TEXT.into();
        r.redacted = true;
    }
    let mut out = Vec::new();
    img.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
        .map_err(|e| RedactError::Encode(e.to_string()))?;
    Ok(Redacted {
        bytes: out,
        regions: out_regions,
        masked: hits.len(),
    })
}

fn fill_black(img: &mut RgbaImage, r: &TextRegion) {
    let x_end = r.x.saturating_add(r.width).min(img.width());
    let y_end = r.y.saturating_add(r.height).min(img.height());
    for y in r.y.min(y_end)..y_end {
        for x in r.x.min(x_end)..x_end {
            img.put_pixel(x, y, Rgba([0, 0, 0, 255]));
        }
    }
}

/// Encodes a solid-colour PNG; used for fixtures and tests.
pub fn blank_png(width: u32, height: u32, rgb: [u8; 3]) -> Vec<u8> {
    let img = RgbaImage::from_pixel(width, height, Rgba([rgb[0], rgb[1], rgb[2], 255]));
    let mut out = Vec::new();
    img.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
        .expect("in-memory PNG encoding");
    out
}
