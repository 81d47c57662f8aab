//! Float RGB rasters, binary masks and the elementwise algebra on them.
//!
//! Samples are `f32` in `[0, 1]`, stored row-major and interleaved RGB.
//! Masks follow the keep-is-one convention: a pixel flagged KEEP survives
//! masking, a MASKED pixel is zeroed.

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ImageBuffer {
    /// Builds an image from interleaved RGB samples. Non-finite samples are
    /// rejected; finite ones are clamped into `[0, 1]`.
    pub fn from_vec(width: usize, height: usize, mut data: Vec<f32>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height * CHANNELS {
            return Err(Error::BadParams(format!(
                "expected {} samples for {width}x{height} RGB, got {}",
                width * height * CHANNELS,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadParams("non-finite sample".into()));
        }
        data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Result<Self> {
        check_dims(width, height)?;
        let data = rgb
            .iter()
            .map(|v| v.clamp(0.0, 1.0))
            .collect::<Vec<_>>()
            .repeat(width * height);
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f32; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::from_vec(width, height, data)
    }

    /// Gray image with the same value in every channel.
    pub fn from_gray(width: usize, height: usize, gray: &[f32]) -> Result<Self> {
        if gray.len() != width * height {
            return Err(Error::BadParams("gray sample count mismatch".into()));
        }
        Self::from_vec(width, height, gray.iter().flat_map(|&v| [v; 3]).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub(crate) fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let i = (y * self.width + x) * CHANNELS;
        &mut self.data[i..i + CHANNELS]
    }

    pub fn same_dims(&self, other: &ImageBuffer) -> Result<()> {
        ensure_dims(self.dims(), other.dims())
    }

    /// Mirror left-right.
    pub fn flip_horizontal(&self) -> ImageBuffer {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.pixel_mut(x, y)
                    .copy_from_slice(&self.pixel(self.width - 1 - x, y));
            }
        }
        out
    }

    /// Quantize to 8-bit interleaved RGB.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::from_vec(
            width,
            height,
            bytes.iter().map(|&b| b as f32 / 255.0).collect(),
        )
    }

    /// RGBA bytes with opaque alpha, the layout canvas `ImageData` expects.
    pub fn to_rgba8(&self) -> Vec<u8> {
        self.data
            .chunks_exact(CHANNELS)
            .flat_map(|p| [quantize(p[0]), quantize(p[1]), quantize(p[2]), 255])
            .collect()
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        encode_png(
            self.width,
            self.height,
            png::ColorType::Rgb,
            &self.to_rgb8(),
        )
    }

    /// Decodes an 8-bit RGB or grayscale PNG. Grayscale is promoted to RGB;
    /// an alpha channel, if present, is dropped.
    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let (w, h, color, buf) = decode_png(bytes)?;
        let rgb: Vec<u8> = match color {
            png::ColorType::Rgb => buf,
            png::ColorType::Rgba => buf
                .chunks_exact(4)
                .flat_map(|p| [p[0], p[1], p[2]])
                .collect(),
            png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g; 3]).collect(),
            png::ColorType::GrayscaleAlpha => {
                buf.chunks_exact(2).flat_map(|p| [p[0]; 3]).collect()
            }
            other => {
                return Err(Error::UnsupportedFormat(format!(
                    "color type {other:?}"
                )))
            }
        };
        Self::from_rgb8(w, h, &rgb)
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    ImageBuffer::decode_png(&bytes)
}

pub fn save_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, img.encode_png()?).map_err(|e| Error::io(path, e))
}

/// Per-pixel KEEP / MASKED raster. `true` is KEEP.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    keep: Vec<bool>,
}

impl BinaryMask {
    pub fn all_keep(width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            keep: vec![true; width * height],
        })
    }

    pub fn all_masked(width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            keep: vec![false; width * height],
        })
    }

    pub fn from_keep(width: usize, height: usize, keep: Vec<bool>) -> Result<Self> {
        check_dims(width, height)?;
        if keep.len() != width * height {
            return Err(Error::BadParams("mask length mismatch".into()));
        }
        Ok(Self {
            width,
            height,
            keep,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut keep: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        check_dims(width, height)?;
        let keep = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| keep(x, y))
            .collect();
        Ok(Self {
            width,
            height,
            keep,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn is_keep(&self, x: usize, y: usize) -> bool {
        self.keep[y * self.width + x]
    }

    pub fn is_masked(&self, x: usize, y: usize) -> bool {
        !self.is_keep(x, y)
    }

    pub fn keep_flags(&self) -> &[bool] {
        &self.keep
    }

    pub fn masked_count(&self) -> usize {
        self.keep.iter().filter(|k| !**k).count()
    }

    pub(crate) fn set_masked(&mut self, x: usize, y: usize) {
        self.keep[y * self.width + x] = false;
    }

    pub fn flip_horizontal(&self) -> BinaryMask {
        let w = self.width;
        BinaryMask::from_fn(w, self.height, |x, y| self.is_keep(w - 1 - x, y))
            .expect("dimensions already validated")
    }

    /// 8-bit grayscale bytes, 255 = KEEP, 0 = MASKED.
    pub fn to_gray8(&self) -> Vec<u8> {
        self.keep.iter().map(|&k| if k { 255 } else { 0 }).collect()
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        encode_png(
            self.width,
            self.height,
            png::ColorType::Grayscale,
            &self.to_gray8(),
        )
    }

    /// Decodes a mask PNG; sample ≥ 128 is KEEP. Color inputs are reduced
    /// to their first channel.
    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let (w, h, color, buf) = decode_png(bytes)?;
        let stride = color.samples();
        let keep = buf.chunks_exact(stride).map(|p| p[0] >= 128).collect();
        Self::from_keep(w, h, keep)
    }
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    BinaryMask::decode_png(&bytes)
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, mask.encode_png()?).map_err(|e| Error::io(path, e))
}

/// Single-channel float raster, used by the metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// `img ⊙ mask`: MASKED pixels become black.
pub fn apply_mask(img: &ImageBuffer, mask: &BinaryMask) -> Result<ImageBuffer> {
    ensure_dims(img.dims(), mask.dims())?;
    let mut out = img.clone();
    for (px, &keep) in out.data.chunks_exact_mut(CHANNELS).zip(&mask.keep) {
        if !keep {
            px.fill(0.0);
        }
    }
    Ok(out)
}

/// Bilinear resampling with half-pixel-centered sample positions and edge
/// clamping.
pub fn resize_bilinear(img: &ImageBuffer, new_w: usize, new_h: usize) -> Result<ImageBuffer> {
    check_dims(new_w, new_h)?;
    let (w, h) = img.dims();
    let sx = w as f64 / new_w as f64;
    let sy = h as f64 / new_h as f64;
    let mut data = Vec::with_capacity(new_w * new_h * CHANNELS);
    for y in 0..new_h {
        let (y0, y1, fy) = bilinear_axis(y, sy, h);
        for x in 0..new_w {
            let (x0, x1, fx) = bilinear_axis(x, sx, w);
            let (p00, p10) = (img.pixel(x0, y0), img.pixel(x1, y0));
            let (p01, p11) = (img.pixel(x0, y1), img.pixel(x1, y1));
            for c in 0..CHANNELS {
                let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
                let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
                data.push((top * (1.0 - fy) + bottom * fy) as f32);
            }
        }
    }
    ImageBuffer::from_vec(new_w, new_h, data)
}

/// Source taps and weight of output index `i` along one axis:
/// half-pixel-centered, clamped at the edges.
pub(crate) fn bilinear_axis(i: usize, scale: f64, len: usize) -> (usize, usize, f64) {
    let src = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
    let i0 = (src.floor() as usize).min(len - 1);
    let i1 = (i0 + 1).min(len - 1);
    let frac = if i1 == i0 { 0.0 } else { src - i0 as f64 };
    (i0, i1, frac)
}

/// Luma `0.299 R + 0.587 G + 0.114 B`.
pub fn to_grayscale(img: &ImageBuffer) -> GrayImage {
    let data = img
        .data
        .chunks_exact(CHANNELS)
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

pub(crate) fn ensure_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            left_w: a.0,
            left_h: a.1,
            right_w: b.0,
            right_h: b.1,
        });
    }
    Ok(())
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::BadParams(format!(
            "image dimensions must be positive, got {width}x{height}"
        )));
    }
    Ok(())
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn encode_png(w: usize, h: usize, color: png::ColorType, bytes: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::UnsupportedFormat(e.to_string()))?;
        writer
            .write_image_data(bytes)
            .map_err(|e| Error::UnsupportedFormat(e.to_string()))?;
    }
    Ok(out)
}

fn decode_png(bytes: &[u8]) -> Result<(usize, usize, png::ColorType, Vec<u8>)> {
    let bad = |e: png::DecodingError| Error::UnsupportedFormat(e.to_string());
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(bad)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::UnsupportedFormat("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(bad)?;
    buf.truncate(info.buffer_size());
    Ok((
        info.width as usize,
        info.height as usize,
        info.color_type,
        buf,
    ))
}
