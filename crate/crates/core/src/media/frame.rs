use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Smallest accepted frame dimension.
pub const MIN_FRAME_SIDE: usize = 16;

/// 8-bit grayscale frame stored row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width < MIN_FRAME_SIDE || height < MIN_FRAME_SIDE {
            return Err(Error::InvalidFrame(format!(
                "{width}x{height} is below the {MIN_FRAME_SIDE}px minimum"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidFrame(format!(
                "expected {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Frame {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Frame::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Frame::new(width, height, pixels)
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

    /// Encodes the frame as binary PGM (`P5`, maxval 255).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut pos = 0usize;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            // skip whitespace and comments
            loop {
                match bytes.get(pos) {
                    Some(b) if b.is_ascii_whitespace() => pos += 1,
                    Some(b'#') => {
                        while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                            pos += 1;
                        }
                    }
                    Some(_) => break,
                    None => return Err("truncated header".into()),
                }
            }
            let start = pos;
            while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
                pos += 1;
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        if fields[0] != "P5" {
            return Err(format!("unsupported magic {:?}", fields[0]));
        }
        let parse = |s: &str, what: &str| s.parse::<usize>().map_err(|_| format!("bad {what} {s:?}"));
        let width = parse(&fields[1], "width")?;
        let height = parse(&fields[2], "height")?;
        let maxval = parse(&fields[3], "maxval")?;
        if maxval != 255 {
            return Err(format!("unsupported maxval {maxval}"));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let need = width * height;
        let data = bytes.get(pos..pos + need).ok_or("truncated raster")?;
        Frame::new(width, height, data.to_vec()).map_err(|e| e.to_string())
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&self.to_pgm()).map_err(|e| Error::io(path, e))
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Frame::from_pgm(&bytes).map_err(|d| Error::format("PGM", path, d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_tiny_and_mismatched() {
        assert!(Frame::new(8, 32, vec![0; 256]).is_err());
        assert!(Frame::new(16, 16, vec![0; 255]).is_err());
    }

    #[test]
    fn pgm_with_comment_header() {
        let mut bytes = b"P5\n# made by hand\n16 16\n255\n".to_vec();
        bytes.extend((0..256).map(|i| i as u8));
        let f = Frame::from_pgm(&bytes).unwrap();
        assert_eq!(f.get(15, 15), 255);
        assert_eq!(f.get(1, 0), 1);
    }

    #[test]
    fn pgm_rejects_other_formats() {
        assert!(Frame::from_pgm(b"P2\n16 16\n255\n").is_err());
        assert!(Frame::from_pgm(b"P5\n16 16\n65535\n").is_err());
        assert!(Frame::from_pgm(b"P5\n16 16\n255\n\x00\x01").is_err());
    }

    proptest! {
        #[test]
        fn pgm_round_trip_is_bit_exact(w in 16usize..40, h in 16usize..40, seed in any::<u64>()) {
            let mut s = seed;
            let f = Frame::from_fn(w, h, |_, _| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 56) as u8
            }).unwrap();
            let bytes = f.to_pgm();
            let back = Frame::from_pgm(&bytes).unwrap();
            prop_assert_eq!(&back, &f);
            prop_assert_eq!(back.to_pgm(), bytes);
        }
    }
}
