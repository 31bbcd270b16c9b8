//! Grayscale frame storage and resampling.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Result, SmttError};

/// A grayscale frame with intensities in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        GrayImage {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut img = GrayImage::new(width, height);
        for y in 0..height {
            for x in 0..width {
                img.data[y * width + x] = f(x, y);
            }
        }
        img
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(SmttError::Shape(format!(
                "raw buffer length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height {
            return Err(SmttError::Shape(format!(
                "byte buffer length {} does not match {}x{}",
                bytes.len(),
                width,
                height
            )));
        }
        Ok(GrayImage {
            width,
            height,
            data: bytes.iter().map(|&b| b as f64 / 255.0).collect(),
        })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Bilinear sample at continuous coordinates, clamped to the frame.
    /// Pixel centers sit at integer coordinates.
    pub fn bilinear(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bot = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bot * fy
    }

    /// Extract the axis-aligned region `[left, left+w) x [top, top+h)` and
    /// resample it to `ph x pw`, flattened row-major. Sample positions are
    /// clamped to the frame, so regions partially outside still yield values.
    pub fn extract_patch(
        &self,
        left: f64,
        top: f64,
        w: f64,
        h: f64,
        ph: usize,
        pw: usize,
    ) -> Vec<f64> {
        let mut out = Vec::with_capacity(ph * pw);
        for r in 0..ph {
            // map patch pixel centers to region coordinates
            let fy = top + (r as f64 + 0.5) * h / ph as f64 - 0.5;
            for c in 0..pw {
                let fx = left + (c as f64 + 0.5) * w / pw as f64 - 0.5;
                out.push(self.bilinear(fx, fy));
            }
        }
        out
    }

    /// Draw a 1-px box border (top-left corner convention) with the given
    /// intensity, clipped to the frame.
    pub fn draw_box(&mut self, x: f64, y: f64, w: f64, h: f64, v: f64) {
        let x0 = x.round().max(0.0) as isize;
        let y0 = y.round().max(0.0) as isize;
        let x1 = ((x + w).round() as isize - 1).min(self.width as isize - 1);
        let y1 = ((y + h).round() as isize - 1).min(self.height as isize - 1);
        if x1 < x0 || y1 < y0 {
            return;
        }
        let (x0, y0, x1, y1) = (x0 as usize, y0 as usize, x1 as usize, y1 as usize);
        if x0 >= self.width || y0 >= self.height {
            return;
        }
        for x in x0..=x1.min(self.width - 1) {
            self.set(x, y0, v);
            self.set(x, y1.min(self.height - 1), v);
        }
        for y in y0..=y1.min(self.height - 1) {
            self.set(x0, y, v);
            self.set(x1.min(self.width - 1), y, v);
        }
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    /// Write as binary PGM (P5, maxval 255).
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        write!(f, "P5\n{} {}\n255\n", self.width, self.height)?;
        f.write_all(&self.to_u8())?;
        Ok(())
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        let mut reader = BufReader::new(std::fs::File::open(path)?);
        let mut header = Vec::new();
        // magic, width, height, maxval; '#' comments allowed
        let mut tokens = Vec::new();
        while tokens.len() < 4 {
            let mut line = String::new();
            if reader.read_line(&mut line)? == 0 {
                return Err(SmttError::Parse(format!(
                    "{}: truncated PGM header",
                    path.display()
                )));
            }
            let body = line.split('#').next().unwrap_or("");
            tokens.extend(body.split_whitespace().map(String::from));
            header.push(line);
        }
        if tokens[0] != "P5" {
            return Err(SmttError::Parse(format!(
                "{}: expected P5 PGM, got {:?}",
                path.display(),
                tokens[0]
            )));
        }
        let parse = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| SmttError::Parse(format!("{}: bad PGM header token {s:?}", path.display())))
        };
        let width = parse(&tokens[1])?;
        let height = parse(&tokens[2])?;
        let maxval = parse(&tokens[3])?;
        if maxval != 255 {
            return Err(SmttError::Parse(format!(
                "{}: only maxval 255 supported, got {maxval}",
                path.display()
            )));
        }
        let mut bytes = vec![0u8; width * height];
        reader.read_exact(&mut bytes)?;
        GrayImage::from_u8(width, height, &bytes)
    }

    /// Read a frame from disk; PGM handled natively, PNG via the image crate.
    pub fn read(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("pgm") => Self::read_pgm(path),
            Some("png") => {
                let img = image::open(path)
                    .map_err(|e| SmttError::Parse(format!("{}: {e}", path.display())))?
                    .into_luma8();
                GrayImage::from_u8(
                    img.width() as usize,
                    img.height() as usize,
                    img.as_raw(),
                )
            }
            other => Err(SmttError::Parse(format!(
                "{}: unsupported frame extension {:?}",
                path.display(),
                other
            ))),
        }
    }
}
