//! Binary NetPBM: P5 (graymap) and P6 (pixmap), maxval 255.

use std::path::Path;

use super::Image;
use crate::error::{Error, Result};

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&b) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if b == b'\n' || b == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    /// Returns the offset where the number starts and its value.
    fn number(&mut self, what: &str) -> Result<(usize, usize)> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        let mut value: usize = 0;
        while let Some(&b) = self.bytes.get(self.pos) {
            if !b.is_ascii_digit() {
                break;
            }
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add((b - b'0') as usize))
                .ok_or_else(|| Error::format(start, format!("{what} is too large")))?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(Error::format(start, format!("expected {what}")));
        }
        Ok((start, value))
    }
}

/// Decodes a binary P5/P6 file into an image with samples scaled to `[0, 1]`.
pub fn load_netpbm(bytes: &[u8]) -> Result<Image> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        Some(magic) => {
            return Err(Error::format(
                0,
                format!(
                    "unsupported magic {:?}, expected P5 or P6",
                    String::from_utf8_lossy(magic)
                ),
            ))
        }
        None => return Err(Error::format(0, "file too short for a NetPBM magic")),
    };
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let (_, width) = cur.number("width")?;
    let (_, height) = cur.number("height")?;
    let (maxval_pos, maxval) = cur.number("maxval")?;
    if maxval != 255 {
        return Err(Error::format(
            maxval_pos,
            format!("unsupported maxval {maxval}, only 255 is accepted"),
        ));
    }
    if width == 0 || height == 0 {
        return Err(Error::format(maxval_pos, "image dimensions must be nonzero"));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => {
            return Err(Error::format(
                cur.pos,
                "expected a single whitespace byte before the payload",
            ))
        }
    }
    let len = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::format(cur.pos, "image dimensions overflow"))?;
    let available = bytes.len() - cur.pos;
    if available < len {
        return Err(Error::format(
            bytes.len(),
            format!("truncated payload: expected {len} bytes, found {available}"),
        ));
    }
    let data = bytes[cur.pos..cur.pos + len]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    Ok(Image::from_raw(width, height, channels, data))
}

pub fn read_netpbm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    load_netpbm(&bytes)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn encode(magic: &str, img: &Image, channels: usize) -> Vec<u8> {
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    if img.channels() == channels {
        out.extend(img.data().iter().map(|&v| quantize(v)));
    } else if channels == 1 {
        out.extend(super::to_grayscale(img).data().iter().map(|&v| quantize(v)));
    } else {
        for &v in img.data() {
            out.extend([quantize(v); 3]);
        }
    }
    out
}

/// Encodes as P5; RGB input is converted to luma first.
pub fn encode_pgm(img: &Image) -> Vec<u8> {
    encode("P5", img, 1)
}

/// Encodes as P6; grayscale input is replicated into three channels.
pub fn encode_ppm(img: &Image) -> Vec<u8> {
    encode("P6", img, 3)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p5_scaling() {
        let img = load_netpbm(b"P5\n2 1\n255\n\x00\xff").unwrap();
        assert_eq!((img.width(), img.height(), img.channels()), (2, 1, 1));
        assert_eq!(img.data(), &[0.0, 1.0]);
    }

    #[test]
    fn p6_scaling() {
        let img = load_netpbm(b"P6 1 1 255\n\xff\x00\x00").unwrap();
        assert_eq!(img.channels(), 3);
        assert_eq!(img.data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn comments_in_header() {
        let img = load_netpbm(b"P5\n# made by hand\n1 # w\n1\n255\n\x80").unwrap();
        assert!((img.data()[0] - 128.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn unsupported_magic() {
        let err = load_netpbm(b"P7\nWIDTH 1\n").unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }), "{err}");
    }

    #[test]
    fn truncated_payload_names_offset() {
        let bytes = b"P6\n2 2\n255\n\x00\x00\x00";
        match load_netpbm(bytes).unwrap_err() {
            Error::Format { offset, message } => {
                assert_eq!(offset, bytes.len());
                assert!(message.contains("truncated"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unsupported_maxval() {
        match load_netpbm(b"P5\n1 1\n65535\n\x00\x00").unwrap_err() {
            Error::Format { offset, .. } => assert_eq!(offset, 7),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_fields() {
        assert!(load_netpbm(b"P5").is_err());
        assert!(load_netpbm(b"P5 3").is_err());
        assert!(load_netpbm(b"P5 3 x").is_err());
        assert!(load_netpbm(b"P5 0 1 255\n").is_err());
        assert!(load_netpbm(b"P5 99999999999999999999999 1 255\n").is_err());
        assert!(load_netpbm(b"P5 1 1 255").is_err());
    }

    #[test]
    fn encode_then_load() {
        let img = Image::new(2, 1, 3, vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]).unwrap();
        let back = load_netpbm(&encode_ppm(&img)).unwrap();
        for (a, b) in back.data().iter().zip(img.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        let gray = load_netpbm(&encode_pgm(&img)).unwrap();
        assert_eq!(gray.channels(), 1);
    }
}
