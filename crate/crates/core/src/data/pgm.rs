//! Binary PGM (`P5`) and PPM (`P6`) images.
//!
//! Grammar: the two-byte magic, then width, height and maxval as ASCII
//! decimals separated by whitespace (`#` starts a comment running to the end
//! of the line), then exactly one whitespace byte, then `width * height`
//! samples (`* 3` for P6) of one byte each. Only `maxval <= 255` is accepted;
//! samples are used as stored, without rescaling. P6 pixels are converted to
//! gray with integer luma `(299 R + 587 G + 114 B + 500) / 1000`.

use crate::{Error, Result};

use super::lbp::GrayImage;

pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("PNM: bad {what}")))
    }
}

pub fn parse_pnm(bytes: &[u8]) -> Result<GrayImage> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(Error::Format("PNM: expected P5 or P6 magic".into())),
    };
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("PNM: unsupported maxval {maxval}")));
    }
    if !bytes.get(h.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format("PNM: missing separator before raster".into()));
    }
    let raster = &bytes[h.pos + 1..];
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::Format("PNM: dimensions overflow".into()))?;
    if raster.len() != need {
        return Err(Error::Format(format!("PNM: raster has {} bytes, expected {need}", raster.len())));
    }
    let pixels = if channels == 1 {
        raster.to_vec()
    } else {
        raster.chunks_exact(3).map(|p| luma(p[0], p[1], p[2])).collect()
    };
    GrayImage::new(width, height, pixels)
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_comments() {
        let img = GrayImage::from_fn(5, 3, |x, y| (x * 10 + y) as u8).unwrap();
        assert_eq!(parse_pnm(&encode_pgm(&img)).unwrap(), img);
        let mut with_comment = b"P5 # made by hand\n5 3\n# another\n255\n".to_vec();
        with_comment.extend_from_slice(img.pixels());
        assert_eq!(parse_pnm(&with_comment).unwrap(), img);
    }

    #[test]
    fn color_is_converted_with_luma() {
        let mut raw = b"P6\n2 1\n255\n".to_vec();
        raw.extend_from_slice(&[255, 0, 0, 10, 20, 30]);
        let img = parse_pnm(&raw).unwrap();
        assert_eq!(img.pixels(), &[76, 18]);
        assert_eq!(luma(255, 255, 255), 255);
    }

    #[test]
    fn malformed() {
        assert!(parse_pnm(b"P2\n1 1\n255\n\x00").is_err());
        assert!(parse_pnm(b"P5\n2 2\n255\n\x00\x00\x00").is_err());
        assert!(parse_pnm(b"P5\n1 1\n65535\n\x00\x00").is_err());
        assert!(parse_pnm(b"P5\n1 1\n255").is_err());
    }
}
