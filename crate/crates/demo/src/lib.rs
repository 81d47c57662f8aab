//! Browser demo: draw a first mask over a synthetic image, fill it with a
//! builtin inpainter, then re-inpaint the result under K patch masks and
//! show the consistency score.

use reinpaint_core::desk::desk_image;
use reinpaint_core::image::{apply_mask, BinaryMask, ImageBuffer};
use reinpaint_core::inpaint::{inpaint, BackendSpec, InpaintRequest};
use reinpaint_core::maskgen::{
    default_patch_size, mask_ratio, patch_mask, random_mask, PatchMaskParams, RandomMaskParams,
};
use reinpaint_core::metrics::{Scorer, SubMetric};
use reinpaint_core::pipeline::{Evaluator, RecordSeeds, SecondMask};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Hole pixels are shown in this color.
const HOLE_TINT: [u8; 3] = [255, 0, 160];

fn rgba(img: &ImageBuffer) -> Vec<u8> {
    img.to_rgba8()
}

fn overlay(img: &ImageBuffer, mask: &BinaryMask) -> Vec<u8> {
    let mut out = img.to_rgba8();
    for (px, &keep) in out.chunks_exact_mut(4).zip(mask.keep_flags()) {
        if !keep {
            for c in 0..3 {
                px[c] = ((px[c] as u16 + 3 * HOLE_TINT[c] as u16) / 4) as u8;
            }
        }
    }
    out
}

fn backend(name: &str) -> Result<BackendSpec, String> {
    serde_json::from_value(json!({ "kind": name.replace('-', "_") }))
        .map_err(|_| format!("unknown backend `{name}`"))
}

#[wasm_bindgen]
pub struct Demo {
    image: ImageBuffer,
    donor: ImageBuffer,
    mask: BinaryMask,
    method: String,
    first: Option<ImageBuffer>,
    second: Vec<(BinaryMask, ImageBuffer)>,
}

impl Demo {
    pub fn create(width: usize, height: usize, seed: u32) -> Result<Demo, String> {
        let image = desk_image(width, height, seed as u64).map_err(|e| e.to_string())?;
        let donor = desk_image(width, height, seed as u64 + 1).map_err(|e| e.to_string())?;
        Ok(Demo {
            mask: BinaryMask::all_keep(width, height).map_err(|e| e.to_string())?,
            image,
            donor,
            method: String::new(),
            first: None,
            second: Vec::new(),
        })
    }

    /// `kind` is `normal` (brush/box, ratio in `[lo, hi]`) or `patch`
    /// (probability `lo`). Returns the masked fraction.
    pub fn try_draw_mask(&mut self, kind: &str, seed: u32, lo: f64, hi: f64) -> Result<f64, String> {
        let (w, h) = self.image.dims();
        let mask = match kind {
            "normal" => random_mask(
                w,
                h,
                &RandomMaskParams::scaled_for(w, h).with_band(Some([lo, hi])),
                seed as u64,
            ),
            "patch" => patch_mask(
                w,
                h,
                &PatchMaskParams {
                    patch_size: default_patch_size(w, h),
                    mask_prob: lo,
                },
                seed as u64,
            ),
            other => return Err(format!("unknown mask kind `{other}`")),
        }
        .map_err(|e| e.to_string())?;
        self.mask = mask;
        self.first = None;
        self.second.clear();
        Ok(mask_ratio(&self.mask))
    }

    pub fn try_inpaint(&mut self, method: &str, seed: u32) -> Result<(), String> {
        let f1 = backend(method)?.build(0).map_err(|e| e.to_string())?;
        let masked = apply_mask(&self.image, &self.mask).map_err(|e| e.to_string())?;
        let req = InpaintRequest::new(&masked, &self.mask, seed as u64)
            .with_original(&self.image)
            .with_donor(&self.donor);
        self.first = Some(inpaint(f1.as_ref(), &req).map_err(|e| e.to_string())?);
        self.method = method.to_string();
        self.second.clear();
        Ok(())
    }

    /// Re-inpaints the current fill `k` times with diffusion and returns a
    /// JSON object with `d`, `distances` and `mask_ratios`.
    pub fn try_consistency(&mut self, k: usize, ratio: f64, metric: &str, seed: u32) -> Result<String, String> {
        let first = self.first.as_ref().ok_or("inpaint first")?;
        let metric: SubMetric = metric.parse().map_err(|e: reinpaint_core::Error| e.to_string())?;
        let f2 = BackendSpec::diffusion().build(0).map_err(|e| e.to_string())?;
        let mut ev = Evaluator::new(f2, Scorer::new(metric), k);
        ev.second_mask = SecondMask::Ratio(ratio);
        let seeds = RecordSeeds::derive(seed as u64, "demo", &self.method, k);
        let pairs: Vec<(u64, u64)> = seeds.patches.iter().copied().zip(seeds.second).collect();
        let c = ev
            .consistency_score(first, &self.mask, &pairs)
            .map_err(|e| e.to_string())?;
        let ratios: Vec<f64> = c.passes.iter().map(|p| mask_ratio(&p.mask)).collect();
        self.second = c.passes.into_iter().map(|p| (p.mask, p.inpainted)).collect();
        Ok(json!({
            "metric": metric.name(),
            "d": c.d,
            "distances": c.distances,
            "mask_ratios": ratios,
        })
        .to_string())
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(width: usize, height: usize, seed: u32) -> Result<Demo, JsError> {
        Demo::create(width, height, seed).map_err(|e| JsError::new(&e))
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn image_rgba(&self) -> Vec<u8> {
        overlay(&self.image, &self.mask)
    }

    pub fn draw_mask(&mut self, kind: &str, seed: u32, lo: f64, hi: f64) -> Result<f64, JsError> {
        self.try_draw_mask(kind, seed, lo, hi).map_err(|e| JsError::new(&e))
    }

    pub fn inpaint(&mut self, method: &str, seed: u32) -> Result<(), JsError> {
        self.try_inpaint(method, seed).map_err(|e| JsError::new(&e))
    }

    /// Empty until [`Demo::inpaint`] has run.
    pub fn first_rgba(&self) -> Vec<u8> {
        self.first.as_ref().map(rgba).unwrap_or_default()
    }

    pub fn consistency(&mut self, k: usize, ratio: f64, metric: &str, seed: u32) -> Result<String, JsError> {
        self.try_consistency(k, ratio, metric, seed)
            .map_err(|e| JsError::new(&e))
    }

    /// The `i`-th re-inpainting with its second mask tinted.
    pub fn second_rgba(&self, i: usize) -> Vec<u8> {
        self.second
            .get(i)
            .map(|(m, img)| overlay(img, m))
            .unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_round() {
        let mut demo = Demo::create(48, 40, 3).unwrap();
        let r = demo.try_draw_mask("normal", 1, 0.2, 0.4).unwrap();
        assert!((0.2..=0.4).contains(&r));
        assert!(demo.try_consistency(3, 0.4, "mse", 0).is_err());
        demo.try_inpaint("mean-fill", 0).unwrap();
        assert_eq!(demo.first_rgba().len(), 48 * 40 * 4);
        let out: serde_json::Value =
            serde_json::from_str(&demo.try_consistency(3, 0.4, "mse", 0).unwrap()).unwrap();
        assert_eq!(out["distances"].as_array().unwrap().len(), 3);
        assert!(out["d"].as_f64().unwrap() > 0.0);
        assert_eq!(demo.second_rgba(2).len(), 48 * 40 * 4);
        assert!(demo.second_rgba(3).is_empty());
    }

    #[test]
    fn oracle_fill_restores_the_image() {
        let mut demo = Demo::create(32, 32, 5).unwrap();
        demo.try_draw_mask("patch", 2, 0.3, 0.3).unwrap();
        demo.try_inpaint("oracle", 0).unwrap();
        assert_eq!(demo.first_rgba(), demo.image.to_rgba8());
        assert!(demo.try_inpaint("nope", 0).is_err());
        assert!(demo.try_draw_mask("star", 0, 0.1, 0.2).is_err());
    }
}
