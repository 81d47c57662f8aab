//! Synthetic bad inpaintings: donor-image blend and blurred-noise fill.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::image::{bilinear_axis, ensure_dims, BinaryMask, ImageBuffer, CHANNELS};
use crate::seed;

use super::{InpaintRequest, Inpainter};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DegradeNoiseParams {
    /// Standard deviation of the noise in sample units.
    pub sigma: f64,
    /// The noise is drawn on a grid this many times coarser, then
    /// bilinearly upsampled.
    pub down_factor: usize,
}

impl Default for DegradeNoiseParams {
    fn default() -> Self {
        Self {
            sigma: 0.5,
            down_factor: 16,
        }
    }
}

impl DegradeNoiseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) || self.down_factor == 0 {
            return Err(Error::BadParams(format!(
                "noise needs sigma ≥ 0 and down_factor ≥ 1, got {} and {}",
                self.sigma, self.down_factor
            )));
        }
        Ok(())
    }
}

/// `original ⊙ mask + donor ⊙ (1 − mask)`.
pub fn degrade_blend(
    original: &ImageBuffer,
    mask: &BinaryMask,
    donor: &ImageBuffer,
) -> Result<ImageBuffer> {
    ensure_dims(original.dims(), mask.dims())?;
    original.same_dims(donor)?;
    let mut data = original.data().to_vec();
    for (i, &keep) in mask.keep_flags().iter().enumerate() {
        if !keep {
            let px = i * CHANNELS;
            data[px..px + CHANNELS].copy_from_slice(&donor.data()[px..px + CHANNELS]);
        }
    }
    ImageBuffer::from_vec(original.width(), original.height(), data)
}

/// Blurred Gaussian noise field, interleaved RGB, `w·h·3` samples.
///
/// Independent standard normals are drawn on a `⌈w/f⌉ × ⌈h/f⌉` grid,
/// upsampled `f`-fold with bilinear interpolation and cropped to `w × h`.
/// Each sample is divided by the root of its squared interpolation weights,
/// so every pixel is marginally `N(0, σ²)`.
pub fn blurred_noise(w: usize, h: usize, params: &DegradeNoiseParams, seed: u64) -> Vec<f64> {
    let f = params.down_factor;
    let (lw, lh) = (w.div_ceil(f), h.div_ceil(f));
    let mut rng = seed::rng(seed);
    let coarse: Vec<f64> = (0..lw * lh * CHANNELS)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let scale = 1.0 / f as f64;
    let mut out = Vec::with_capacity(w * h * CHANNELS);
    for y in 0..h {
        let (y0, y1, fy) = bilinear_axis(y, scale, lh);
        for x in 0..w {
            let (x0, x1, fx) = bilinear_axis(x, scale, lw);
            let taps = [
                (y0 * lw + x0, (1.0 - fx) * (1.0 - fy)),
                (y0 * lw + x1, fx * (1.0 - fy)),
                (y1 * lw + x0, (1.0 - fx) * fy),
                (y1 * lw + x1, fx * fy),
            ];
            // taps may coincide at the border; merge before normalizing
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(4);
            for (idx, wt) in taps {
                match merged.iter_mut().find(|(i, _)| *i == idx) {
                    Some(slot) => slot.1 += wt,
                    None => merged.push((idx, wt)),
                }
            }
            let norm = merged.iter().map(|(_, wt)| wt * wt).sum::<f64>().sqrt();
            for c in 0..CHANNELS {
                let v: f64 = merged
                    .iter()
                    .map(|&(idx, wt)| wt * coarse[idx * CHANNELS + c])
                    .sum();
                out.push(params.sigma * v / norm);
            }
        }
    }
    out
}

/// `original ⊙ mask + (original + N′) ⊙ (1 − mask)`, clamped to `[0, 1]`.
pub fn degrade_noise(
    original: &ImageBuffer,
    mask: &BinaryMask,
    params: &DegradeNoiseParams,
    seed: u64,
) -> Result<ImageBuffer> {
    ensure_dims(original.dims(), mask.dims())?;
    params.validate()?;
    if params.sigma == 0.0 {
        return Ok(original.clone());
    }
    let (w, h) = original.dims();
    let noise = blurred_noise(w, h, params, seed);
    let mut data = original.data().to_vec();
    for (i, &keep) in mask.keep_flags().iter().enumerate() {
        if !keep {
            for c in 0..CHANNELS {
                let k = i * CHANNELS + c;
                data[k] = (data[k] as f64 + noise[k]).clamp(0.0, 1.0) as f32;
            }
        }
    }
    ImageBuffer::from_vec(w, h, data)
}

#[derive(Debug)]
pub(super) struct Blend {
    pub name: String,
}

impl Inpainter for Blend {
    fn name(&self) -> &str {
        &self.name
    }

    fn run(&self, req: &InpaintRequest<'_>) -> Result<ImageBuffer> {
        let donor = req
            .donor
            .ok_or_else(|| Error::Config(format!("{}: no donor image supplied", self.name)))?;
        degrade_blend(req.masked, req.mask, donor)
    }
}

#[derive(Debug)]
pub(super) struct Noise {
    pub name: String,
    pub params: DegradeNoiseParams,
}

impl Inpainter for Noise {
    fn name(&self) -> &str {
        &self.name
    }

    fn run(&self, req: &InpaintRequest<'_>) -> Result<ImageBuffer> {
        let original = req.original.ok_or(Error::MissingOriginal)?;
        degrade_noise(original, req.mask, &self.params, req.seed)
    }
}
