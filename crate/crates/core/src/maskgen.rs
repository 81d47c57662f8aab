//! Mask generators: free-form brush/box masks for the first pass, grid patch
//! masks for re-inpainting, and the composition that keeps the second pass
//! off pixels the first pass already filled.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ensure_dims, BinaryMask};
use crate::seed::{self, SeedHasher};

/// Reference resolution the default brush/box ranges are tuned for.
pub const REFERENCE_SIDE: f64 = 512.0;
/// Patch size at the reference resolution.
pub const REFERENCE_PATCH: usize = 32;

/// [`REFERENCE_PATCH`] scaled to the smaller side of the image, at least 1.
pub fn default_patch_size(width: usize, height: usize) -> usize {
    ((REFERENCE_PATCH as f64 * width.min(height) as f64 / REFERENCE_SIDE).round() as usize).max(1)
}

/// Parameters of the brush-or-box mask generator. Pixel ranges are
/// inclusive `[lo, hi]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomMaskParams {
    /// Probability of drawing brush strokes instead of boxes.
    pub brush_prob: f64,
    pub submask_count: [u32; 2],
    pub brush_length: [f64; 2],
    pub brush_width: [f64; 2],
    /// Radians.
    pub brush_angle: [f64; 2],
    pub box_width: [usize; 2],
    pub box_height: [usize; 2],
    /// Accept only masks whose masked fraction lies in this band.
    pub ratio_band: Option<[f64; 2]>,
    pub max_attempts: u32,
}

impl Default for RandomMaskParams {
    fn default() -> Self {
        Self {
            brush_prob: 0.5,
            submask_count: [1, 6],
            brush_length: [80.0, 300.0],
            brush_width: [40.0, 160.0],
            brush_angle: [0.0, TAU],
            box_width: [80, 320],
            box_height: [80, 320],
            ratio_band: None,
            max_attempts: 1000,
        }
    }
}

impl RandomMaskParams {
    /// Defaults with pixel ranges scaled from the 512×512 reference to the
    /// smaller side of a `width`×`height` image.
    pub fn scaled_for(width: usize, height: usize) -> Self {
        Self::default().rescaled(width.min(height) as f64 / REFERENCE_SIDE)
    }

    pub fn rescaled(mut self, factor: f64) -> Self {
        let px = |v: f64| (v * factor).max(1.0);
        let ipx = |v: usize| ((v as f64 * factor).round() as usize).max(1);
        self.brush_length = self.brush_length.map(px);
        self.brush_width = self.brush_width.map(px);
        self.box_width = self.box_width.map(ipx);
        self.box_height = self.box_height.map(ipx);
        self
    }

    pub fn with_band(mut self, band: Option<[f64; 2]>) -> Self {
        self.ratio_band = band;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::BadParams(m));
        if !(0.0..=1.0).contains(&self.brush_prob) {
            return bad(format!("brush_prob {} outside [0, 1]", self.brush_prob));
        }
        if self.submask_count[0] > self.submask_count[1] {
            return bad("submask_count range is empty".into());
        }
        for (name, r) in [
            ("brush_length", self.brush_length),
            ("brush_width", self.brush_width),
        ] {
            if !(r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite()) {
                return bad(format!("{name} must be a positive non-empty range"));
            }
        }
        let a = self.brush_angle;
        if !(a[0] <= a[1] && a[0].is_finite() && a[1].is_finite()) {
            return bad("brush_angle range is empty".into());
        }
        for (name, r) in [("box_width", self.box_width), ("box_height", self.box_height)] {
            if r[0] == 0 || r[0] > r[1] {
                return bad(format!("{name} must be a positive non-empty range"));
            }
        }
        if let Some(band) = self.ratio_band {
            validate_band(band)?;
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be positive".into());
        }
        Ok(())
    }
}

pub fn validate_band(band: [f64; 2]) -> Result<()> {
    if !(0.0 <= band[0] && band[0] <= band[1] && band[1] <= 1.0) {
        return Err(Error::BadParams(format!(
            "ratio band [{}, {}] is not a sub-interval of [0, 1]",
            band[0], band[1]
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchMaskParams {
    pub patch_size: usize,
    /// Probability that each patch is masked.
    pub mask_prob: f64,
}

impl PatchMaskParams {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 {
            return Err(Error::BadParams("patch_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.mask_prob) {
            return Err(Error::BadParams(format!(
                "mask_prob {} outside [0, 1]",
                self.mask_prob
            )));
        }
        Ok(())
    }
}

/// Brush-or-box mask. When `params.ratio_band` is set, candidates are drawn
/// from derived sub-seeds until one lands in the band.
pub fn random_mask(
    width: usize,
    height: usize,
    params: &RandomMaskParams,
    seed: u64,
) -> Result<BinaryMask> {
    params.validate()?;
    let Some([lo, hi]) = params.ratio_band else {
        return draw_random_mask(width, height, params, seed);
    };
    if hi <= 0.0 {
        // the only mask with ratio 0 is the empty one
        return BinaryMask::all_keep(width, height);
    }
    for attempt in 0..params.max_attempts {
        let sub = if attempt == 0 {
            seed
        } else {
            SeedHasher::new(seed).str("attempt").u64(attempt as u64).finish()
        };
        let mask = draw_random_mask(width, height, params, sub)?;
        let r = mask_ratio(&mask);
        if r >= lo && r <= hi {
            return Ok(mask);
        }
    }
    Err(Error::RatioUnreachable {
        lo,
        hi,
        attempts: params.max_attempts,
    })
}

fn draw_random_mask(
    width: usize,
    height: usize,
    params: &RandomMaskParams,
    seed: u64,
) -> Result<BinaryMask> {
    let mut mask = BinaryMask::all_keep(width, height)?;
    let mut rng = seed::rng(seed);
    let brush = rng.random::<f64>() < params.brush_prob;
    let n = rng.random_range(params.submask_count[0]..=params.submask_count[1]);
    let (wf, hf) = (width as f64, height as f64);
    if brush {
        let mut x = rng.random::<f64>() * wf;
        let mut y = rng.random::<f64>() * hf;
        for _ in 0..n {
            let len = uniform(&mut rng, params.brush_length);
            let thick = uniform(&mut rng, params.brush_width);
            let angle = uniform(&mut rng, params.brush_angle);
            let x2 = (x + len * angle.cos()).clamp(0.0, wf - 1.0);
            let y2 = (y + len * angle.sin()).clamp(0.0, hf - 1.0);
            stroke(&mut mask, (x, y), (x2, y2), thick);
            (x, y) = (x2, y2);
        }
    } else {
        for _ in 0..n {
            let bw = rng
                .random_range(params.box_width[0]..=params.box_width[1])
                .min(width);
            let bh = rng
                .random_range(params.box_height[0]..=params.box_height[1])
                .min(height);
            let x0 = rng.random_range(0..=width - bw);
            let y0 = rng.random_range(0..=height - bh);
            for y in y0..y0 + bh {
                for x in x0..x0 + bw {
                    mask.set_masked(x, y);
                }
            }
        }
    }
    Ok(mask)
}

fn uniform(rng: &mut impl Rng, range: [f64; 2]) -> f64 {
    range[0] + (range[1] - range[0]) * rng.random::<f64>()
}

/// Masks every pixel whose center lies within `width / 2` of the segment.
fn stroke(mask: &mut BinaryMask, a: (f64, f64), b: (f64, f64), width: f64) {
    let r = width / 2.0;
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let x_lo = (a.0.min(b.0) - r).floor().max(0.0) as usize;
    let y_lo = (a.1.min(b.1) - r).floor().max(0.0) as usize;
    let x_hi = ((a.0.max(b.0) + r).ceil() as usize).min(mask.width() - 1);
    let y_hi = ((a.1.max(b.1) + r).ceil() as usize).min(mask.height() - 1);
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let t = if len2 > 0.0 {
                (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (cx, cy) = (a.0 + t * dx - px, a.1 + t * dy - py);
            if cx * cx + cy * cy <= r * r {
                mask.set_masked(x, y);
            }
        }
    }
}

/// Grid mask: each `S×S` cell (edge cells truncated) is masked independently
/// with probability `mask_prob`. Cell `i` in row-major order uses the `i`-th
/// draw of the counter stream keyed by `seed`.
pub fn patch_mask(
    width: usize,
    height: usize,
    params: &PatchMaskParams,
    seed: u64,
) -> Result<BinaryMask> {
    params.validate()?;
    let s = params.patch_size;
    let cols = width.div_ceil(s);
    let rows = height.div_ceil(s);
    let cell_masked: Vec<bool> = (0..(rows * cols) as u64)
        .map(|i| seed::stream_unit(seed, i) < params.mask_prob)
        .collect();
    BinaryMask::from_fn(width, height, |x, y| !cell_masked[(y / s) * cols + x / s])
}

/// Fraction of MASKED pixels.
pub fn mask_ratio(mask: &BinaryMask) -> f64 {
    mask.masked_count() as f64 / (mask.width() * mask.height()) as f64
}

/// Second-pass mask `1 − (1 − patch) ⊙ first`: MASKED exactly where the
/// patch mask is MASKED and the first mask is KEEP.
pub fn compose_second_mask(patch: &BinaryMask, first: &BinaryMask) -> Result<BinaryMask> {
    ensure_dims(patch.dims(), first.dims())?;
    let keep = patch
        .keep_flags()
        .iter()
        .zip(first.keep_flags())
        .map(|(&p, &f)| p || !f)
        .collect();
    BinaryMask::from_keep(patch.width(), patch.height(), keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn boxes_only() -> RandomMaskParams {
        RandomMaskParams {
            brush_prob: 0.0,
            submask_count: [1, 1],
            ..RandomMaskParams::default()
        }
    }

    #[test]
    fn zero_submasks_is_empty() {
        let params = RandomMaskParams {
            submask_count: [0, 0],
            ..RandomMaskParams::scaled_for(64, 64)
        };
        for seed in 0..20 {
            let m = random_mask(64, 64, &params, seed).unwrap();
            assert_eq!(m.masked_count(), 0);
        }
    }

    #[test]
    fn degenerate_box_is_exact_rectangle() {
        // full-width box of fixed height: only the row offset is random
        let params = RandomMaskParams {
            box_width: [40, 40],
            box_height: [7, 7],
            ..boxes_only()
        };
        for seed in 0..10 {
            let m = random_mask(40, 30, &params, seed).unwrap();
            let y0 = (0..30).find(|&y| m.is_masked(0, y)).unwrap();
            let oracle = BinaryMask::from_fn(40, 30, |_, y| !(y0..y0 + 7).contains(&y)).unwrap();
            assert_eq!(m, oracle);
        }
        let full = RandomMaskParams {
            box_width: [12, 12],
            box_height: [9, 9],
            ..boxes_only()
        };
        assert_eq!(
            random_mask(12, 9, &full, 5).unwrap(),
            BinaryMask::all_masked(12, 9).unwrap()
        );
    }

    #[test]
    fn random_mask_deterministic() {
        let params = RandomMaskParams::scaled_for(96, 80).with_band(Some([0.1, 0.5]));
        for seed in [0, 1, 99, u64::MAX] {
            assert_eq!(
                random_mask(96, 80, &params, seed).unwrap(),
                random_mask(96, 80, &params, seed).unwrap()
            );
        }
    }

    #[test]
    fn brush_strokes_are_drawn() {
        let params = RandomMaskParams {
            brush_prob: 1.0,
            ..RandomMaskParams::scaled_for(128, 128)
        };
        let covered: usize = (0..10)
            .map(|s| random_mask(128, 128, &params, s).unwrap().masked_count())
            .sum();
        assert!(covered > 0);
    }

    #[test]
    fn stroke_round_caps() {
        let mut m = BinaryMask::all_keep(11, 11).unwrap();
        stroke(&mut m, (5.5, 5.5), (5.5, 5.5), 4.0);
        // a disc of radius 2 around the center pixel: 13 pixel centers
        assert_eq!(m.masked_count(), 13);
        assert!(m.is_masked(5, 5) && m.is_masked(3, 5) && !m.is_masked(3, 3));
    }

    #[test]
    fn unreachable_band_errors() {
        let params = RandomMaskParams {
            box_width: [2, 2],
            box_height: [2, 2],
            max_attempts: 25,
            ..boxes_only()
        }
        .with_band(Some([0.9, 1.0]));
        assert!(matches!(
            random_mask(32, 32, &params, 0),
            Err(Error::RatioUnreachable { attempts: 25, .. })
        ));
    }

    #[test]
    fn zero_band_returns_empty_mask() {
        let params = RandomMaskParams::scaled_for(32, 32).with_band(Some([0.0, 0.0]));
        assert_eq!(random_mask(32, 32, &params, 3).unwrap().masked_count(), 0);
    }

    #[test]
    fn bad_params_rejected() {
        let p = RandomMaskParams {
            brush_prob: 1.5,
            ..Default::default()
        };
        assert!(matches!(random_mask(8, 8, &p, 0), Err(Error::BadParams(_))));
        let p = RandomMaskParams {
            submask_count: [3, 1],
            ..RandomMaskParams::default()
        };
        assert!(random_mask(8, 8, &p, 0).is_err());
        let p = RandomMaskParams::default().with_band(Some([0.5, 0.2]));
        assert!(random_mask(8, 8, &p, 0).is_err());
        let bad = PatchMaskParams {
            patch_size: 0,
            mask_prob: 0.5,
        };
        assert!(patch_mask(8, 8, &bad, 0).is_err());
        let bad = PatchMaskParams {
            patch_size: 4,
            mask_prob: -0.1,
        };
        assert!(patch_mask(8, 8, &bad, 0).is_err());
    }

    #[test]
    fn patch_mask_extremes() {
        let all = PatchMaskParams {
            patch_size: 5,
            mask_prob: 1.0,
        };
        assert_eq!(mask_ratio(&patch_mask(23, 17, &all, 4).unwrap()), 1.0);
        let none = PatchMaskParams {
            patch_size: 5,
            mask_prob: 0.0,
        };
        assert_eq!(mask_ratio(&patch_mask(23, 17, &none, 4).unwrap()), 0.0);
    }

    #[test]
    fn patch_mask_binomial_bound() {
        // 256 cells at P = 0.4: sd = sqrt(0.4 * 0.6 / 256) ≈ 0.0306, 5 sd ≈ 0.153
        let params = PatchMaskParams {
            patch_size: 32,
            mask_prob: 0.4,
        };
        for seed in 0..50 {
            let r = mask_ratio(&patch_mask(512, 512, &params, seed).unwrap());
            assert!((r - 0.4).abs() <= 0.153, "seed {seed}: {r}");
        }
    }

    #[test]
    fn ratio_counts() {
        assert_eq!(mask_ratio(&BinaryMask::all_keep(4, 4).unwrap()), 0.0);
        assert_eq!(mask_ratio(&BinaryMask::all_masked(4, 4).unwrap()), 1.0);
        let half = BinaryMask::from_fn(4, 4, |x, _| x < 2).unwrap();
        assert_eq!(mask_ratio(&half), 0.5);
    }

    #[test]
    fn compose_identities() {
        let first = BinaryMask::from_fn(6, 5, |x, y| (x + 2 * y) % 3 != 0).unwrap();
        let patch = BinaryMask::from_fn(6, 5, |x, _| x < 3).unwrap();
        let keep = BinaryMask::all_keep(6, 5).unwrap();
        let masked = BinaryMask::all_masked(6, 5).unwrap();
        assert_eq!(compose_second_mask(&keep, &first).unwrap(), keep);
        assert_eq!(compose_second_mask(&patch, &keep).unwrap(), patch);
        assert_eq!(compose_second_mask(&patch, &masked).unwrap(), keep);
        assert!(compose_second_mask(&patch, &BinaryMask::all_keep(5, 6).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn patch_mask_constant_per_cell(seed in any::<u64>(), w in 1usize..40, h in 1usize..40,
                                        s in 1usize..9, p in 0.0f64..=1.0) {
            let m = patch_mask(w, h, &PatchMaskParams { patch_size: s, mask_prob: p }, seed).unwrap();
            for y in 0..h {
                for x in 0..w {
                    prop_assert_eq!(m.is_keep(x, y), m.is_keep(x - x % s, y - y % s));
                }
            }
        }

        #[test]
        fn banded_mask_lands_in_band(seed in any::<u64>(), band_idx in 0usize..3) {
            let band = [[0.0, 0.2], [0.2, 0.4], [0.4, 0.6]][band_idx];
            let params = RandomMaskParams::scaled_for(64, 64).with_band(Some(band));
            let r = mask_ratio(&random_mask(64, 64, &params, seed).unwrap());
            prop_assert!(r >= band[0] && r <= band[1]);
        }

        #[test]
        fn compose_never_remasks_first(seed in any::<u64>(), w in 1usize..24, h in 1usize..24) {
            let first = patch_mask(w, h, &PatchMaskParams { patch_size: 1, mask_prob: 0.5 }, seed).unwrap();
            let patch = patch_mask(w, h, &PatchMaskParams { patch_size: 3, mask_prob: 0.5 }, !seed).unwrap();
            let second = compose_second_mask(&patch, &first).unwrap();
            for y in 0..h {
                for x in 0..w {
                    let expect_masked = patch.is_masked(x, y) && first.is_keep(x, y);
                    prop_assert_eq!(second.is_masked(x, y), expect_masked);
                    if first.is_masked(x, y) {
                        prop_assert!(second.is_keep(x, y));
                    }
                }
            }
        }
    }
}
