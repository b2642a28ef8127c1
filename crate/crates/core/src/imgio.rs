//! Image ingestion: 8-bit grayscale rasters and the half-resolution copy
//! that doubles the effective support of every BSIF filter.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageError, ImageFormat};

use crate::error::{Error, Result};
use crate::fsutil;

/// Row-major 8-bit single-channel raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Validation(format!(
                "image has zero dimension ({width}x{height})"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Validation(format!(
                "pixel buffer holds {} values, expected {}x{}={}",
                data.len(),
                width,
                height,
                width * height
            )));
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
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
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Circular shift: pixel (x, y) moves to ((x+dx) mod w, (y+dy) mod h).
    pub fn shifted(&self, dx: usize, dy: usize) -> GrayImage {
        let (w, h) = (self.width, self.height);
        let mut data = vec![0u8; w * h];
        for y in 0..h {
            for x in 0..w {
                data[((y + dy) % h) * w + (x + dx) % w] = self.data[y * w + x];
            }
        }
        GrayImage {
            width: w,
            height: h,
            data,
        }
    }

    pub fn mirrored_horizontally(&self) -> GrayImage {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks_exact(self.width) {
            data.extend(row.iter().rev());
        }
        GrayImage {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

/// Integer luma, `round(0.299 R + 0.587 G + 0.114 B)` with halves rounded up.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    let weighted = 299 * r as u32 + 587 * g as u32 + 114 * b as u32;
    ((weighted + 500) / 1000).min(255) as u8
}

fn map_image_error(path: &Path, err: ImageError) -> Error {
    match err {
        ImageError::IoError(e) => Error::io(path, e),
        ImageError::Unsupported(e) => Error::Format(format!("{}: {e}", path.display())),
        // Decoders report short reads as decoding failures; a file that
        // announced its format but ran out of bytes is an I/O problem.
        ImageError::Decoding(e) => Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::UnexpectedEof, e.to_string()),
        ),
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

fn to_gray(img: DynamicImage) -> Result<GrayImage> {
    let (width, height) = (img.width() as usize, img.height() as usize);
    let data = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw(),
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) => {
            img.to_luma8().into_raw()
        }
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| luma(p[0], p[1], p[2]))
            .collect(),
    };
    GrayImage::new(width, height, data)
}

/// Load a PGM, PNG, BMP or TIFF file as 8-bit grayscale.
pub fn load_image(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = image::guess_format(&bytes)
        .or_else(|_| ImageFormat::from_path(path))
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    match format {
        ImageFormat::Pnm | ImageFormat::Png | ImageFormat::Bmp | ImageFormat::Tiff => {}
        other => {
            return Err(Error::Format(format!(
                "{}: unsupported raster format {other:?}",
                path.display()
            )))
        }
    }
    let img = image::load(Cursor::new(bytes), format).map_err(|e| map_image_error(path, e))?;
    to_gray(img)
}

/// Binary PGM (P5, maxval 255).
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.data.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&img.data);
    out
}

pub fn save_pgm(img: &GrayImage, path: &Path) -> Result<()> {
    fsutil::write_atomic(path, &encode_pgm(img))
}

/// 2x2 box mean, rounding halves up.
pub fn downsample_half(img: &GrayImage) -> Result<GrayImage> {
    if img.width % 2 != 0 || img.height % 2 != 0 {
        return Err(Error::Validation(format!(
            "cannot halve an image with odd dimension ({}x{})",
            img.width, img.height
        )));
    }
    let (w, h) = (img.width / 2, img.height / 2);
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        let top = &img.data[2 * y * img.width..(2 * y + 1) * img.width];
        let bottom = &img.data[(2 * y + 1) * img.width..(2 * y + 2) * img.width];
        for x in 0..w {
            let sum = top[2 * x] as u32
                + top[2 * x + 1] as u32
                + bottom[2 * x] as u32
                + bottom[2 * x + 1] as u32;
            data.push(((sum + 2) / 4) as u8);
        }
    }
    GrayImage::new(w, h, data)
}
