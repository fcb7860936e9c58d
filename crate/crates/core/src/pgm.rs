//! Bit-exact PGM (portable graymap) reading and writing, binary (P5) and
//! ASCII (P2) variants, maxval 255.

use crate::error::{Error, Result};
use std::io::Write;
use std::path::Path;

/// Single-channel 8-bit image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        GrayImage {
            width,
            height,
            pixels: vec![0; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Dim(format!(
                "{} pixels for {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    /// Mean and standard deviation of the pixel values.
    pub fn stats(&self) -> (f64, f64) {
        let n = self.pixels.len() as f64;
        let mean = self.pixels.iter().map(|&p| p as f64).sum::<f64>() / n;
        let var = self
            .pixels
            .iter()
            .map(|&p| (p as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        (mean, var.sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmFormat {
    /// P5, raw bytes.
    Binary,
    /// P2, ASCII decimal.
    Ascii,
}

/// Encode to an in-memory buffer. Output bytes are a pure function of the
/// image, so rewrites are bit-identical.
pub fn encode_pgm(image: &GrayImage, format: PgmFormat) -> Vec<u8> {
    let mut buf = Vec::new();
    match format {
        PgmFormat::Binary => {
            write!(buf, "P5\n{} {}\n255\n", image.width, image.height).unwrap();
            buf.extend_from_slice(&image.pixels);
        }
        PgmFormat::Ascii => {
            write!(buf, "P2\n{} {}\n255\n", image.width, image.height).unwrap();
            for row in image.pixels.chunks(image.width.max(1)) {
                let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
                writeln!(buf, "{}", line.join(" ")).unwrap();
            }
        }
    }
    buf
}

pub fn write_pgm(path: &Path, image: &GrayImage, format: PgmFormat) -> Result<()> {
    std::fs::write(path, encode_pgm(image, format))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Tokens { bytes, pos: 0 }
    }

    /// Skip whitespace and `#` comments; position lands on the next token.
    fn skip_separators(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn next_number(&mut self) -> Result<usize> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Parse("expected a number in PGM header".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse("malformed number in PGM".into()))
    }
}

/// Decode a PGM from memory. Accepts P5 and P2 with maxval <= 255.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 {
        return Err(Error::Parse("PGM too short".into()));
    }
    let magic = &bytes[..2];
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        _ => {
            return Err(Error::Parse(format!(
                "bad PGM magic {:?}",
                String::from_utf8_lossy(magic)
            )))
        }
    };
    let mut toks = Tokens::new(&bytes[2..]);
    let width = toks.next_number()?;
    let height = toks.next_number()?;
    let maxval = toks.next_number()?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Parse(format!("unsupported PGM maxval {maxval}")));
    }
    let count = width * height;
    let pixels = if binary {
        // Exactly one whitespace byte separates the header from the raster.
        let data_start = 2 + toks.pos + 1;
        if bytes.len() < data_start + count {
            return Err(Error::Parse("truncated P5 raster".into()));
        }
        bytes[data_start..data_start + count].to_vec()
    } else {
        let mut pixels = Vec::with_capacity(count);
        for _ in 0..count {
            let v = toks.next_number()?;
            if v > maxval {
                return Err(Error::Parse(format!("pixel {v} exceeds maxval {maxval}")));
            }
            pixels.push(v as u8);
        }
        pixels
    };
    GrayImage::from_pixels(width, height, pixels)
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    decode_pgm(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_image() -> GrayImage {
        let pixels: Vec<u8> = (0..12).map(|i| (i * 21 % 256) as u8).collect();
        GrayImage::from_pixels(4, 3, pixels).unwrap()
    }

    #[test]
    fn binary_round_trip_is_bit_identical() {
        let img = sample_image();
        let encoded = encode_pgm(&img, PgmFormat::Binary);
        let decoded = decode_pgm(&encoded).unwrap();
        assert_eq!(decoded, img);
        assert_eq!(encode_pgm(&decoded, PgmFormat::Binary), encoded);
    }

    #[test]
    fn ascii_round_trip_is_bit_identical() {
        let img = sample_image();
        let encoded = encode_pgm(&img, PgmFormat::Ascii);
        let decoded = decode_pgm(&encoded).unwrap();
        assert_eq!(decoded, img);
        assert_eq!(encode_pgm(&decoded, PgmFormat::Ascii), encoded);
    }

    #[test]
    fn comments_in_header_are_skipped() {
        let bytes = b"P2\n# a comment\n2 2\n255\n0 1\n2 3\n";
        let img = decode_pgm(bytes).unwrap();
        assert_eq!(img.pixels(), &[0, 1, 2, 3]);
    }

    #[test]
    fn bad_magic_rejected() {
        assert!(decode_pgm(b"P6\n1 1\n255\n\0").is_err());
    }

    #[test]
    fn truncated_raster_rejected() {
        assert!(decode_pgm(b"P5\n4 4\n255\n\0\0").is_err());
    }

    #[test]
    fn binary_raster_with_255_values_survives() {
        let img = GrayImage::from_pixels(2, 1, vec![0, 255]).unwrap();
        let decoded = decode_pgm(&encode_pgm(&img, PgmFormat::Binary)).unwrap();
        assert_eq!(decoded, img);
    }
}
