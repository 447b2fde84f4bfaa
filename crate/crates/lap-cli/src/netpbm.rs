//! Netpbm image I/O: reads P2/P3 (ASCII) and P5/P6 (binary) at 8-bit depth,
//! writes binary P5 graymaps and P6 pixmaps.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use lap_core::tensor::{Shape, Tensor};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// 1 (gray) or 3 (rgb) interleaved bytes per pixel.
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn gray(width: usize, height: usize, data: Vec<u8>) -> Image {
        Image {
            width,
            height,
            channels: 1,
            data,
        }
    }

    pub fn rgb(width: usize, height: usize, data: Vec<u8>) -> Image {
        Image {
            width,
            height,
            channels: 3,
            data,
        }
    }

    /// Network input tensor: 3 channels in [0, 1], gray replicated.
    pub fn to_tensor(&self) -> Tensor {
        let mut t = Tensor::zeros(Shape::new(1, 3, self.height, self.width));
        for y in 0..self.height {
            for x in 0..self.width {
                let i = (y * self.width + x) * self.channels;
                for c in 0..3 {
                    let byte = if self.channels == 1 {
                        self.data[i]
                    } else {
                        self.data[i + c]
                    };
                    t.set(0, c, y, x, byte as f64 / 255.0);
                }
            }
        }
        t
    }
}

/// Clamps a unit-range value into a byte.
pub fn unit_to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

struct TokenReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> TokenReader<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            bail!("unexpected end of netpbm header");
        }
        Ok(std::str::from_utf8(&self.bytes[start..self.pos])?)
    }

    fn number(&mut self) -> Result<usize> {
        let t = self.token()?;
        t.parse().with_context(|| format!("bad netpbm number `{t}`"))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Image> {
    let mut r = TokenReader { bytes, pos: 0 };
    let magic = r.token()?;
    let (binary, channels) = match magic {
        "P2" => (false, 1),
        "P3" => (false, 3),
        "P5" => (true, 1),
        "P6" => (true, 3),
        other => bail!("unsupported netpbm magic `{other}` (P2/P3/P5/P6 only)"),
    };
    let width = r.number()?;
    let height = r.number()?;
    let maxval = r.number()?;
    if maxval == 0 || maxval > 255 {
        bail!("unsupported netpbm maxval {maxval} (8-bit only)");
    }
    let count = width * height * channels;
    let mut data = Vec::with_capacity(count);
    if binary {
        // exactly one whitespace byte after maxval
        r.pos += 1;
        if r.pos + count > bytes.len() {
            bail!("netpbm pixel data truncated");
        }
        data.extend_from_slice(&bytes[r.pos..r.pos + count]);
    } else {
        for _ in 0..count {
            let v = r.number()?;
            if v > maxval {
                bail!("sample {v} exceeds maxval {maxval}");
            }
            data.push(v as u8);
        }
    }
    if maxval != 255 {
        for v in data.iter_mut() {
            *v = ((*v as usize * 255) / maxval) as u8;
        }
    }
    Ok(Image {
        width,
        height,
        channels,
        data,
    })
}

pub fn encode(image: &Image) -> Result<Vec<u8>> {
    let magic = match image.channels {
        1 => "P5",
        3 => "P6",
        c => bail!("cannot encode {c}-channel image"),
    };
    if image.data.len() != image.width * image.height * image.channels {
        bail!("image buffer length does not match dimensions");
    }
    let mut out = format!("{magic}\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.data);
    Ok(out)
}

pub fn read(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode(&bytes).with_context(|| format!("parsing {}", path.display()))
}

pub fn write(path: &Path, image: &Image) -> Result<()> {
    fs::write(path, encode(image)?).with_context(|| format!("writing {}", path.display()))
}
