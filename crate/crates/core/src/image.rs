//! Grayscale image container and file I/O.
//!
//! Pixels are stored row-major as `f64`; intensity range is whatever the
//! source provides (8-bit files load as 0..255). The pipeline standardizes
//! images before feature extraction, so no fixed range is assumed here.

use std::io::Write;
use std::path::Path;

use image::DynamicImage;

use crate::error::{Error, Result};

/// A single-channel image with finite `f64` intensities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    /// Wraps a row-major pixel buffer. Rejects empty dimensions, length
    /// mismatches, and non-finite intensities.
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::LengthMismatch {
                left: pixels.len(),
                right: width * height,
            });
        }
        if !pixels.iter().all(|p| p.is_finite()) {
            return Err(Error::InvalidParameter(
                "image contains non-finite intensities".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    /// Population variance (divides by the pixel count).
    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.pixels.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / self.pixels.len() as f64
    }

    /// Loads a grayscale image from PNG/PGM/JPEG/BMP. Color inputs are
    /// converted by averaging the three channels.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let decoded =
            image::open(path).map_err(|e| Error::from(e).with_path(path.to_path_buf()))?;
        Ok(Self::from_dynamic(&decoded))
    }

    fn from_dynamic(img: &DynamicImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        match img {
            DynamicImage::ImageLuma8(buf) => Self {
                width: w,
                height: h,
                pixels: buf.pixels().map(|p| p.0[0] as f64).collect(),
            },
            DynamicImage::ImageLuma16(buf) => Self {
                width: w,
                height: h,
                pixels: buf.pixels().map(|p| p.0[0] as f64).collect(),
            },
            _ => {
                let rgb = img.to_rgb16();
                Self {
                    width: w,
                    height: h,
                    pixels: rgb
                        .pixels()
                        .map(|p| (p.0[0] as f64 + p.0[1] as f64 + p.0[2] as f64) / 3.0)
                        .collect(),
                }
            }
        }
    }

    /// Writes an 8-bit PNG, clamping intensities to 0..255.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let buf = image::GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let v = self.get(x as usize, y as usize).round().clamp(0.0, 255.0);
            image::Luma([v as u8])
        });
        buf.save(path.as_ref())?;
        Ok(())
    }
}

/// Writes a real-valued channel as a 16-bit binary PGM, affinely rescaled so
/// the minimum maps to 0 and the maximum to 65535. A flat channel maps to 0.
pub fn write_pgm16(path: impl AsRef<Path>, data: &[f64], width: usize, height: usize) -> Result<()> {
    if data.len() != width * height {
        return Err(Error::LengthMismatch {
            left: data.len(),
            right: width * height,
        });
    }
    let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut out = Vec::with_capacity(32 + 2 * data.len());
    write!(&mut out, "P5\n{width} {height}\n65535\n")?;
    for &v in data {
        let scaled = if span > 0.0 {
            ((v - lo) / span * 65535.0).round() as u16
        } else {
            0
        };
        // PGM stores 16-bit samples most significant byte first.
        out.extend_from_slice(&scaled.to_be_bytes());
    }
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}

/// Writes a real-valued channel as CSV, one image row per line.
pub fn write_csv(path: impl AsRef<Path>, data: &[f64], width: usize, height: usize) -> Result<()> {
    if data.len() != width * height {
        return Err(Error::LengthMismatch {
            left: data.len(),
            right: width * height,
        });
    }
    let mut out = String::new();
    for y in 0..height {
        for x in 0..width {
            if x > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", data[y * width + x]));
        }
        out.push('\n');
    }
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_buffers() {
        assert!(GrayImage::new(0, 4, vec![]).is_err());
        assert!(GrayImage::new(2, 2, vec![1.0; 3]).is_err());
        assert!(GrayImage::new(2, 2, vec![1.0, 2.0, f64::NAN, 4.0]).is_err());
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let img = GrayImage::from_fn(8, 6, |x, y| ((x * 7 + y * 13) % 256) as f64);
        img.save_png(&path).unwrap();
        let back = GrayImage::load(&path).unwrap();
        assert_eq!(back.width(), 8);
        assert_eq!(back.height(), 6);
        assert_eq!(back.pixels(), img.pixels());
    }

    #[test]
    fn pgm16_header_and_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chan.pgm");
        write_pgm16(&path, &[-1.0, 0.0, 1.0, 3.0], 2, 2).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n2 2\n65535\n"));
        let data = &bytes[bytes.len() - 8..];
        assert_eq!(u16::from_be_bytes([data[0], data[1]]), 0);
        assert_eq!(u16::from_be_bytes([data[6], data[7]]), 65535);
    }
}
