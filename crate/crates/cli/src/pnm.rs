//! Minimal binary PNM (P5/P6) reader and writer.
//!
//! Only the binary variants are supported. Parse failures report the byte
//! offset at which the file stopped making sense.

use std::fs;
use std::path::Path;

use supercam_core::error::{Error, Result};

/// Decoded PNM raster: 1 channel (P5) or 3 (P6), samples in row-major
/// interleaved order, `maxval` as declared in the header.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PnmImage {
    pub width: u32,
    pub height: u32,
    pub maxval: u32,
    pub channels: usize,
    pub samples: Vec<u16>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, what: impl Into<String>) -> Error {
        Error::Parse { offset: self.pos as u64, what: what.into() }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    /// Skip whitespace and `#` comment lines between header tokens.
    fn skip_separators(&mut self) {
        loop {
            match self.peek() {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while let Some(b) = self.peek() {
                        self.pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => return,
            }
        }
    }

    fn token_u32(&mut self, name: &str) -> Result<u32> {
        self.skip_separators();
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err(format!("expected {name}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.err(format!("unparseable {name}")))
    }
}

pub fn parse_pnm(bytes: &[u8]) -> Result<PnmImage> {
    let mut cur = Cursor { bytes, pos: 0 };
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1usize,
        Some(b"P6") => 3usize,
        _ => return Err(Error::Parse { offset: 0, what: "expected binary PNM magic P5 or P6".into() }),
    };
    cur.pos = 2;
    let width = cur.token_u32("width")?;
    let height = cur.token_u32("height")?;
    let maxval = cur.token_u32("maxval")?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65_535 {
        return Err(cur.err(format!("bad dimensions {width}x{height} maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from raster data
    match cur.peek() {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(cur.err("expected single whitespace before raster data")),
    }
    let per_sample = if maxval > 255 { 2 } else { 1 };
    let count = width as usize * height as usize * channels;
    let need = count * per_sample;
    let avail = bytes.len() - cur.pos;
    if avail < need {
        return Err(Error::Parse {
            offset: bytes.len() as u64,
            what: format!("raster truncated: need {need} bytes, have {avail}"),
        });
    }
    let raster = &bytes[cur.pos..cur.pos + need];
    let samples = if per_sample == 1 {
        raster.iter().map(|&b| b as u16).collect()
    } else {
        // two-byte samples are big-endian per the PNM convention
        raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    };
    Ok(PnmImage { width, height, maxval, channels, samples })
}

pub fn read_pnm(path: &Path) -> Result<PnmImage> {
    parse_pnm(&fs::read(path)?)
}

fn header(kind: &str, width: u32, height: u32, maxval: u32) -> Vec<u8> {
    format!("{kind}\n{width} {height}\n{maxval}\n").into_bytes()
}

/// 16-bit grayscale PGM (big-endian samples); the label-map carrier.
pub fn write_pgm16(path: &Path, width: u32, height: u32, values: &[u16]) -> Result<()> {
    if values.len() != width as usize * height as usize {
        return Err(Error::DimensionMismatch(format!(
            "{} values for {width}x{height}",
            values.len()
        )));
    }
    let mut out = header("P5", width, height, 65_535);
    for v in values {
        out.extend_from_slice(&v.to_be_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

/// 8-bit grayscale PGM.
pub fn write_pgm8(path: &Path, width: u32, height: u32, values: &[u8]) -> Result<()> {
    if values.len() != width as usize * height as usize {
        return Err(Error::DimensionMismatch(format!(
            "{} values for {width}x{height}",
            values.len()
        )));
    }
    let mut out = header("P5", width, height, 255);
    out.extend_from_slice(values);
    fs::write(path, out)?;
    Ok(())
}

/// 8-bit interleaved RGB PPM.
pub fn write_ppm8(path: &Path, width: u32, height: u32, rgb: &[u8]) -> Result<()> {
    if rgb.len() != width as usize * height as usize * 3 {
        return Err(Error::DimensionMismatch(format!("{} bytes for {width}x{height} rgb", rgb.len())));
    }
    let mut out = header("P6", width, height, 255);
    out.extend_from_slice(rgb);
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_p6_with_comments() {
        let mut bytes = b"P6 # a comment\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[255u8; 12]);
        let img = parse_pnm(&bytes).unwrap();
        assert_eq!((img.width, img.height, img.channels, img.maxval), (2, 2, 3, 255));
        assert!(img.samples.iter().all(|&s| s == 255));
    }

    #[test]
    fn sixteen_bit_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.pgm");
        let values: Vec<u16> = (0..12).map(|v| v * 300).collect();
        write_pgm16(&path, 4, 3, &values).unwrap();
        let img = read_pnm(&path).unwrap();
        assert_eq!(img.maxval, 65_535);
        assert_eq!(img.samples, values);
    }

    #[test]
    fn truncation_reports_the_offset() {
        let mut bytes = b"P5 3 2 255 ".to_vec();
        bytes.extend_from_slice(&[7u8; 5]); // one byte short
        match parse_pnm(&bytes) {
            Err(Error::Parse { offset, what }) => {
                assert_eq!(offset, bytes.len() as u64);
                assert!(what.contains("truncated"), "{what}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_ascii_variants() {
        assert!(matches!(parse_pnm(b"P2 2 2 255 0 0 0 0"), Err(Error::Parse { offset: 0, .. })));
    }
}
