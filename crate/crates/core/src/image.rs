//! 8-bit RGB images and binary PPM (P6, maxval 255) I/O.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Interleaved RGB, row-major, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::shape(width * height * 3, data.len()));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn put_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Copies the `w × h` window at `(x, y)`; the window must be in bounds.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<RgbImage> {
        if x + w > self.width || y + h > self.height {
            return Err(Error::param(format!(
                "crop {w}x{h}+{x}+{y} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h * 3);
        for row in y..y + h {
            let start = 3 * (row * self.width + x);
            data.extend_from_slice(&self.data[start..start + 3 * w]);
        }
        Ok(RgbImage { width: w, height: h, data })
    }

    pub fn write_ppm<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.data)?;
        Ok(())
    }

    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() + 20);
        self.write_ppm(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn save_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_ppm(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_ppm<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let magic = next_token(&mut r)?;
        if magic != "P6" {
            return Err(Error::Format(format!("expected P6 magic, found {magic:?}")));
        }
        let width = parse_header_int(&mut r, "width")?;
        let height = parse_header_int(&mut r, "height")?;
        let maxval = parse_header_int(&mut r, "maxval")?;
        if maxval != 255 {
            return Err(Error::Format(format!("only maxval 255 is supported, got {maxval}")));
        }
        // `next_token` consumed exactly one whitespace byte after maxval.
        let mut data = vec![0u8; width * height * 3];
        r.read_exact(&mut data)
            .map_err(|_| Error::Format("truncated PPM pixel data".into()))?;
        Ok(Self { width, height, data })
    }

    pub fn load_ppm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        Self::read_ppm(file)
    }
}

fn parse_header_int<R: BufRead>(r: &mut R, what: &str) -> Result<usize> {
    let tok = next_token(r)?;
    tok.parse()
        .map_err(|_| Error::Format(format!("bad PPM {what}: {tok:?}")))
}

/// Reads one whitespace-delimited header token, skipping `#` comments, and
/// consumes the single delimiter byte that follows it.
fn next_token<R: BufRead>(r: &mut R) -> Result<String> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return if tok.is_empty() {
                Err(Error::Format("unexpected end of PPM header".into()))
            } else {
                Ok(tok)
            };
        }
        let c = byte[0];
        if c == b'#' && tok.is_empty() {
            let mut skip = Vec::new();
            r.read_until(b'\n', &mut skip)?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            return Ok(tok);
        }
        tok.push(c as char);
        if tok.len() > 32 {
            return Err(Error::Format("PPM header token too long".into()));
        }
    }
}
