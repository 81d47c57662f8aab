//! Perceptual distance.
//!
//! The built-in backend is a deterministic multi-scale structural distance:
//! a luma pyramid, per-window statistics (mean, standard deviation and a
//! soft-binned gradient-orientation histogram) over every 8×8 window, each
//! statistic vector normalized to near-unit length, squared L2 between
//! normalized vectors averaged over windows and then over levels.
//!
//! The external backend runs an ONNX model supplied by the user; see
//! [`PerceptualSpec::External`].

use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{resize_bilinear, to_grayscale, GrayImage, ImageBuffer};

const ORIENTATION_BINS: usize = 8;
/// Stabilizer of the vector normalization; keeps near-flat windows from
/// being blown up to unit length.
const NORM_EPS: f64 = 0.05;
const SIGMA_WEIGHT: f64 = 2.0;
const HIST_WEIGHT: f64 = 4.0;
const FEATURES: usize = 2 + ORIENTATION_BINS;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuiltinPerceptual {
    pub levels: usize,
    pub window: usize,
}

impl Default for BuiltinPerceptual {
    fn default() -> Self {
        Self {
            levels: 4,
            window: 8,
        }
    }
}

/// Configuration form of a perceptual backend.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerceptualSpec {
    Builtin {
        #[serde(default = "default_levels")]
        levels: usize,
        #[serde(default = "default_window")]
        window: usize,
    },
    /// ONNX model with two inputs, each `[1, 3, H, W]` float RGB scaled to
    /// `[-1, 1]`, and one output whose first element is the distance.
    External { model: PathBuf },
}

fn default_levels() -> usize {
    BuiltinPerceptual::default().levels
}

fn default_window() -> usize {
    BuiltinPerceptual::default().window
}

impl Default for PerceptualSpec {
    fn default() -> Self {
        PerceptualSpec::Builtin {
            levels: default_levels(),
            window: default_window(),
        }
    }
}

impl PerceptualSpec {
    pub fn load(&self) -> Result<PerceptualBackend> {
        match self {
            PerceptualSpec::Builtin { levels, window } => {
                if *levels == 0 || *window == 0 {
                    return Err(Error::BadParams(
                        "perceptual levels and window must be positive".into(),
                    ));
                }
                Ok(PerceptualBackend::Builtin(BuiltinPerceptual {
                    levels: *levels,
                    window: *window,
                }))
            }
            PerceptualSpec::External { model } => load_external(model),
        }
    }
}

#[cfg(feature = "onnx")]
fn load_external(model: &std::path::Path) -> Result<PerceptualBackend> {
    Ok(PerceptualBackend::External(Arc::new(
        super::onnx::OnnxPerceptual::load(model)?,
    )))
}

#[cfg(not(feature = "onnx"))]
fn load_external(model: &std::path::Path) -> Result<PerceptualBackend> {
    Err(Error::ModelLoad(format!(
        "{}: built without the `onnx` feature",
        model.display()
    )))
}

/// Trait for model-backed distances, so the metric layer does not depend on
/// a particular inference runtime.
pub trait ExternalDistance: Send + Sync + std::fmt::Debug {
    fn distance(&self, a: &ImageBuffer, b: &ImageBuffer) -> Result<f64>;
}

#[derive(Clone, Debug)]
pub enum PerceptualBackend {
    Builtin(BuiltinPerceptual),
    External(Arc<dyn ExternalDistance>),
}

impl Default for PerceptualBackend {
    fn default() -> Self {
        PerceptualBackend::Builtin(BuiltinPerceptual::default())
    }
}

/// Perceptual distance; zero for identical inputs and symmetric in both
/// modes.
pub fn perceptual(a: &ImageBuffer, b: &ImageBuffer, backend: &PerceptualBackend) -> Result<f64> {
    a.same_dims(b)?;
    if a == b {
        return Ok(0.0);
    }
    match backend {
        PerceptualBackend::Builtin(params) => Ok(builtin_distance(a, b, params)),
        PerceptualBackend::External(model) => {
            let forward = model.distance(a, b)?;
            let backward = model.distance(b, a)?;
            Ok(((forward + backward) / 2.0).max(0.0))
        }
    }
}

fn builtin_distance(a: &ImageBuffer, b: &ImageBuffer, params: &BuiltinPerceptual) -> f64 {
    let pa = pyramid(a, params.levels);
    let pb = pyramid(b, params.levels);
    let per_level: Vec<f64> = pa
        .iter()
        .zip(&pb)
        .map(|(la, lb)| {
            let fa = window_features(la, params.window);
            let fb = window_features(lb, params.window);
            let n = fa.len() / FEATURES;
            let sum: f64 = fa
                .chunks_exact(FEATURES)
                .zip(fb.chunks_exact(FEATURES))
                .map(|(u, v)| u.iter().zip(v).map(|(p, q)| (p - q) * (p - q)).sum::<f64>())
                .sum();
            sum / n as f64
        })
        .collect();
    per_level.iter().sum::<f64>() / per_level.len() as f64
}

fn pyramid(img: &ImageBuffer, levels: usize) -> Vec<GrayImage> {
    let mut out = vec![to_grayscale(img)];
    let mut current = img.clone();
    for _ in 1..levels {
        let (w, h) = current.dims();
        if w == 1 && h == 1 {
            break;
        }
        current = resize_bilinear(&current, w.div_ceil(2), h.div_ceil(2))
            .expect("non-zero target size");
        out.push(to_grayscale(&current));
    }
    out
}

/// Normalized statistic vectors for every window position that fits.
fn window_features(img: &GrayImage, window: usize) -> Vec<f64> {
    let (w, h) = (img.width, img.height);
    let (ww, wh) = (window.min(w), window.min(h));

    // per-pixel channels: value, value², soft orientation histogram
    let mut channels = vec![vec![0.0; w * h]; FEATURES];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let v = img.data[i];
            channels[0][i] = v;
            channels[1][i] = v * v;
            let gx = (img.get((x + 1).min(w - 1), y) - img.get(x.saturating_sub(1), y)) / 2.0;
            let gy = (img.get(x, (y + 1).min(h - 1)) - img.get(x, y.saturating_sub(1))) / 2.0;
            let mag = (gx * gx + gy * gy).sqrt();
            if mag > 0.0 {
                let theta = gy.atan2(gx).rem_euclid(PI);
                let pos = theta / PI * ORIENTATION_BINS as f64 - 0.5;
                let lo = pos.floor();
                let frac = pos - lo;
                let b0 = (lo as i64).rem_euclid(ORIENTATION_BINS as i64) as usize;
                let b1 = (b0 + 1) % ORIENTATION_BINS;
                channels[2 + b0][i] += mag * (1.0 - frac);
                channels[2 + b1][i] += mag * frac;
            }
        }
    }
    let tables: Vec<Vec<f64>> = channels.iter().map(|c| integral(c, w, h)).collect();
    let area = (ww * wh) as f64;
    let box_sum = |t: &[f64], x: usize, y: usize| {
        let s = w + 1;
        t[(y + wh) * s + x + ww] - t[y * s + x + ww] - t[(y + wh) * s + x] + t[y * s + x]
    };

    let mut out = Vec::with_capacity((w - ww + 1) * (h - wh + 1) * FEATURES);
    for y in 0..=h - wh {
        for x in 0..=w - ww {
            let mean = box_sum(&tables[0], x, y) / area;
            let var = (box_sum(&tables[1], x, y) / area - mean * mean).max(0.0);
            let mut v = [0.0; FEATURES];
            v[0] = mean;
            v[1] = SIGMA_WEIGHT * var.sqrt();
            for b in 0..ORIENTATION_BINS {
                v[2 + b] = HIST_WEIGHT * box_sum(&tables[2 + b], x, y) / area;
            }
            let norm = (v.iter().map(|c| c * c).sum::<f64>() + NORM_EPS * NORM_EPS).sqrt();
            out.extend(v.iter().map(|c| c / norm));
        }
    }
    out
}

fn integral(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let s = w + 1;
    let mut t = vec![0.0; s * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += src[y * w + x];
            t[(y + 1) * s + x + 1] = t[y * s + x + 1] + row;
        }
    }
    t
}
