//! 8-bit grayscale rasters: PGM (P2/P5) decoding and encoding, centered
//! cropping and bilinear resizing.

use std::path::Path;

use thiserror::Error;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "image must be at least 1x1, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::invalid(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0);
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        GrayImage {
            width,
            height,
            pixels,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PgmError {
    #[error("not a PGM file (magic {0:?})")]
    BadMagic(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("maxval {0} exceeds 255")]
    MaxvalTooLarge(u32),
    #[error("unexpected end of pixel data")]
    UnexpectedEof,
    #[error("sample {value} at index {index} exceeds maxval {maxval}")]
    SampleOutOfRange {
        index: usize,
        value: u32,
        maxval: u32,
    },
    #[error("invalid ASCII sample {0:?}")]
    InvalidSample(String),
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() || b == b'#' {
                break;
            }
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn header_number(&mut self, what: &str) -> Result<u32, PgmError> {
        let tok = self
            .token()
            .ok_or_else(|| PgmError::MalformedHeader(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| {
                PgmError::MalformedHeader(format!(
                    "{what} is not a number: {:?}",
                    String::from_utf8_lossy(tok)
                ))
            })
    }
}

/// Decodes a binary (P5) or ASCII (P2) PGM. Samples are returned as stored;
/// no rescaling is applied when `maxval < 255`.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.token().unwrap_or_default();
    let ascii = match magic {
        b"P2" => true,
        b"P5" => false,
        other => return Err(PgmError::BadMagic(String::from_utf8_lossy(other).into())),
    };
    let width = cur.header_number("width")? as usize;
    let height = cur.header_number("height")? as usize;
    let maxval = cur.header_number("maxval")?;
    if width == 0 || height == 0 {
        return Err(PgmError::MalformedHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    if maxval == 0 {
        return Err(PgmError::MalformedHeader("maxval is zero".into()));
    }
    if maxval > 255 {
        return Err(PgmError::MaxvalTooLarge(maxval));
    }
    let count = width * height;
    let mut pixels = Vec::with_capacity(count);
    if ascii {
        for index in 0..count {
            let tok = cur.token().ok_or(PgmError::UnexpectedEof)?;
            let value = std::str::from_utf8(tok)
                .ok()
                .and_then(|s| s.parse::<u32>().ok())
                .ok_or_else(|| PgmError::InvalidSample(String::from_utf8_lossy(tok).into()))?;
            if value > maxval {
                return Err(PgmError::SampleOutOfRange {
                    index,
                    value,
                    maxval,
                });
            }
            pixels.push(value as u8);
        }
    } else {
        // Exactly one whitespace byte separates maxval from the raster.
        match bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            Some(_) => {
                return Err(PgmError::MalformedHeader(
                    "expected whitespace after maxval".into(),
                ))
            }
            None => return Err(PgmError::UnexpectedEof),
        }
        let raster = &bytes[cur.pos..];
        if raster.len() < count {
            return Err(PgmError::UnexpectedEof);
        }
        for (index, &value) in raster[..count].iter().enumerate() {
            if u32::from(value) > maxval {
                return Err(PgmError::SampleOutOfRange {
                    index,
                    value: value.into(),
                    maxval,
                });
            }
        }
        pixels.extend_from_slice(&raster[..count]);
    }
    Ok(GrayImage {
        width,
        height,
        pixels,
    })
}

/// Binary P5 with maxval 255.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.pixels.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&img.pixels);
    out
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    std::fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

/// Centered `w`×`h` window; an odd margin leaves the extra pixel on the
/// right/bottom.
pub fn center_crop(img: &GrayImage, w: usize, h: usize) -> Result<GrayImage> {
    if w == 0 || h == 0 || w > img.width || h > img.height {
        return Err(Error::invalid(format!(
            "cannot crop {w}x{h} from a {}x{} image",
            img.width, img.height
        )));
    }
    let x0 = (img.width - w) / 2;
    let y0 = (img.height - h) / 2;
    let mut pixels = Vec::with_capacity(w * h);
    for y in y0..y0 + h {
        pixels.extend_from_slice(&img.pixels[y * img.width + x0..y * img.width + x0 + w]);
    }
    Ok(GrayImage {
        width: w,
        height: h,
        pixels,
    })
}

/// Bilinear resize with pixel-center alignment: source coordinate
/// `(dst + 0.5) * src/dst - 0.5`, clamped to the image, rounded half away
/// from zero.
pub fn resize_bilinear(img: &GrayImage, w: usize, h: usize) -> Result<GrayImage> {
    if w == 0 || h == 0 {
        return Err(Error::invalid(format!(
            "resize target must be at least 1x1, got {w}x{h}"
        )));
    }
    if w == img.width && h == img.height {
        return Ok(img.clone());
    }
    let sample_axis = |dst: usize, src_len: usize, dst_len: usize| {
        let scale = src_len as f64 / dst_len as f64;
        let s = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(src_len - 1);
        (i0, i1, s - i0 as f64)
    };
    let xs: Vec<_> = (0..w).map(|x| sample_axis(x, img.width, w)).collect();
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        let (y0, y1, fy) = sample_axis(y, img.height, h);
        for &(x0, x1, fx) in &xs {
            let p = |x: usize, y: usize| f64::from(img.pixels[y * img.width + x]);
            let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
            let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
            let v = top * (1.0 - fy) + bottom * fy;
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(GrayImage {
        width: w,
        height: h,
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, px: &[u8]) -> GrayImage {
        GrayImage::new(w, h, px.to_vec()).unwrap()
    }

    #[test]
    fn ascii_minimal() {
        let got = decode_pgm(b"P2 2 2 255\n0 128 255 64\n").unwrap();
        assert_eq!(got, img(2, 2, &[0, 128, 255, 64]));
    }

    #[test]
    fn binary_matches_ascii() {
        let mut p5 = b"P5\n2 2\n255\n".to_vec();
        p5.extend_from_slice(&[0, 128, 255, 64]);
        assert_eq!(
            decode_pgm(&p5).unwrap(),
            decode_pgm(b"P2 2 2 255 0 128 255 64").unwrap()
        );
    }

    #[test]
    fn header_comments() {
        let data = b"P2\n# made by hand\n2 # width\n1\n# max\n255\n7 9\n";
        assert_eq!(decode_pgm(data).unwrap(), img(2, 1, &[7, 9]));
        let mut p5 = b"P5 # c\n1 1 # c\n255\n".to_vec();
        p5.push(42);
        assert_eq!(decode_pgm(&p5).unwrap(), img(1, 1, &[42]));
    }

    #[test]
    fn truncated_binary() {
        let mut p5 = b"P5\n2 2\n255\n".to_vec();
        p5.extend_from_slice(&[1, 2, 3]);
        let err = decode_pgm(&p5).unwrap_err();
        assert_eq!(err, PgmError::UnexpectedEof);
        assert_eq!(err.to_string(), "unexpected end of pixel data");
        assert_eq!(
            decode_pgm(b"P2 2 2 255 1 2 3"),
            Err(PgmError::UnexpectedEof)
        );
    }

    #[test]
    fn distinct_errors() {
        assert!(matches!(
            decode_pgm(b"P6 1 1 255 0"),
            Err(PgmError::BadMagic(_))
        ));
        assert!(matches!(
            decode_pgm(b"P2 1 x 255 0"),
            Err(PgmError::MalformedHeader(_))
        ));
        assert!(matches!(
            decode_pgm(b"P2 1 1"),
            Err(PgmError::MalformedHeader(_))
        ));
        assert_eq!(
            decode_pgm(b"P2 1 1 65535 0"),
            Err(PgmError::MaxvalTooLarge(65535))
        );
        assert!(matches!(
            decode_pgm(b"P2 1 1 15 16"),
            Err(PgmError::SampleOutOfRange { .. })
        ));
    }

    #[test]
    fn encode_minimal() {
        let bytes = encode_pgm(&img(1, 1, &[0]));
        assert_eq!(bytes, b"P5\n1 1\n255\n\0");
    }

    #[test]
    fn crop_rules() {
        let src = GrayImage::from_fn(4, 4, |x, y| (y * 4 + x) as u8);
        assert_eq!(center_crop(&src, 4, 4).unwrap(), src);
        assert_eq!(center_crop(&src, 2, 2).unwrap().pixels(), &[5, 6, 9, 10]);
        assert_eq!(
            center_crop(&src, 3, 3).unwrap().pixels(),
            &[0, 1, 2, 4, 5, 6, 8, 9, 10]
        );
        assert!(center_crop(&src, 5, 2).is_err());
    }

    #[test]
    fn resize_examples() {
        let src = GrayImage::from_fn(5, 3, |x, y| (x * 40 + y * 7) as u8);
        assert_eq!(resize_bilinear(&src, 5, 3).unwrap(), src);

        let flat = GrayImage::from_fn(7, 5, |_, _| 93);
        let out = resize_bilinear(&flat, 13, 2).unwrap();
        assert!(out.pixels().iter().all(|&p| p == 93));

        // x = 0.25, 0.75 on [0, 255] → 63.75, 191.25; ends clamp.
        let ramp = img(2, 1, &[0, 255]);
        assert_eq!(
            resize_bilinear(&ramp, 4, 1).unwrap().pixels(),
            &[0, 64, 191, 255]
        );

        assert!(resize_bilinear(&ramp, 0, 1).is_err());
    }
}
