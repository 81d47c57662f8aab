//! Classical inpainters: oracle copy, mean fill, harmonic (Laplace)
//! diffusion, and diffusion with seeded jitter.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::image::{ensure_dims, BinaryMask, ImageBuffer, CHANNELS};

use super::degrade::{blurred_noise, DegradeNoiseParams};
use super::{InpaintRequest, Inpainter};

/// Fill value used when no KEEP pixel exists.
const DEGENERATE_FILL: f32 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffusionParams {
    /// Per connected hole. `None` means `10 · max(w, h)`.
    pub max_iters: Option<usize>,
    /// Stop once the largest update of a sweep falls below this.
    pub tol: f64,
}

impl Default for DiffusionParams {
    fn default() -> Self {
        Self {
            max_iters: None,
            tol: 1e-5,
        }
    }
}

impl DiffusionParams {
    pub fn validate(&self) -> Result<()> {
        if self.tol.is_nan() || self.tol <= 0.0 || self.max_iters == Some(0) {
            return Err(Error::BadParams(
                "diffusion needs tol > 0 and max_iters ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DiffusionOutput {
    pub image: ImageBuffer,
    /// No KEEP pixel existed; the image is a constant mid-gray fill.
    pub degenerate: bool,
    /// Largest sweep count over all holes.
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct FillOutput {
    pub image: ImageBuffer,
    pub degenerate: bool,
}

/// Per-channel mean of KEEP pixels written into every MASKED pixel.
pub fn builtin_mean_fill(masked: &ImageBuffer, mask: &BinaryMask) -> Result<FillOutput> {
    ensure_dims(masked.dims(), mask.dims())?;
    let Some(mean) = keep_mean(masked, mask) else {
        return Ok(FillOutput {
            image: degenerate_fill(masked),
            degenerate: true,
        });
    };
    let fill = mean.map(|v| v as f32);
    let mut data = masked.data().to_vec();
    for (px, &keep) in data.chunks_exact_mut(CHANNELS).zip(mask.keep_flags()) {
        if !keep {
            px.copy_from_slice(&fill);
        }
    }
    Ok(FillOutput {
        image: ImageBuffer::from_vec(masked.width(), masked.height(), data)?,
        degenerate: false,
    })
}

fn keep_mean(img: &ImageBuffer, mask: &BinaryMask) -> Option<[f64; 3]> {
    let mut sum = [0.0f64; 3];
    let mut n = 0usize;
    for (px, &keep) in img.data().chunks_exact(CHANNELS).zip(mask.keep_flags()) {
        if keep {
            for c in 0..CHANNELS {
                sum[c] += px[c] as f64;
            }
            n += 1;
        }
    }
    (n > 0).then(|| sum.map(|s| s / n as f64))
}

fn degenerate_fill(like: &ImageBuffer) -> ImageBuffer {
    ImageBuffer::filled(like.width(), like.height(), [DEGENERATE_FILL; 3])
        .expect("dimensions already valid")
}

/// Solves the discrete Laplace equation on the MASKED pixels with KEEP
/// pixels as Dirichlet data. Out-of-image neighbours are dropped from the
/// stencil (zero-flux border).
///
/// Each 4-connected hole is an independent system solved by red-black
/// successive over-relaxation with `ω = 2 / (1 + sin(π / (n + 1)))`, `n`
/// the larger side of the hole's bounding box; `ω = 1` would be plain
/// Gauss–Seidel. Results are clamped to the per-channel KEEP range.
pub fn builtin_diffusion(
    masked: &ImageBuffer,
    mask: &BinaryMask,
    params: &DiffusionParams,
) -> Result<DiffusionOutput> {
    ensure_dims(masked.dims(), mask.dims())?;
    params.validate()?;
    let (w, h) = masked.dims();
    let Some(init) = keep_mean(masked, mask) else {
        return Ok(DiffusionOutput {
            image: degenerate_fill(masked),
            degenerate: true,
            iterations: 0,
            converged: true,
        });
    };
    let (lo, hi) = keep_range(masked, mask);
    let max_iters = params.max_iters.unwrap_or(10 * w.max(h));

    let mut values: Vec<f64> = masked.data().iter().map(|&v| v as f64).collect();
    for (i, &keep) in mask.keep_flags().iter().enumerate() {
        if !keep {
            values[i * CHANNELS..(i + 1) * CHANNELS].copy_from_slice(&init);
        }
    }

    let mut iterations = 0;
    let mut converged = true;
    for hole in holes(mask) {
        let (iters, ok) = solve_hole(&mut values, &hole, w, h, params.tol, max_iters);
        iterations = iterations.max(iters);
        converged &= ok;
    }

    for (i, &keep) in mask.keep_flags().iter().enumerate() {
        if !keep {
            for c in 0..CHANNELS {
                let v = &mut values[i * CHANNELS + c];
                *v = v.clamp(lo[c], hi[c]);
            }
        }
    }
    let data = values.into_iter().map(|v| v as f32).collect();
    Ok(DiffusionOutput {
        image: ImageBuffer::from_vec(w, h, data)?,
        degenerate: false,
        iterations,
        converged,
    })
}

fn keep_range(img: &ImageBuffer, mask: &BinaryMask) -> ([f64; 3], [f64; 3]) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for (px, &keep) in img.data().chunks_exact(CHANNELS).zip(mask.keep_flags()) {
        if keep {
            for c in 0..CHANNELS {
                lo[c] = lo[c].min(px[c] as f64);
                hi[c] = hi[c].max(px[c] as f64);
            }
        }
    }
    (lo, hi)
}

struct Hole {
    /// Pixel indices split by checkerboard color.
    red: Vec<usize>,
    black: Vec<usize>,
    extent: usize,
}

/// 4-connected components of MASKED pixels, in scan order of their first
/// pixel.
fn holes(mask: &BinaryMask) -> Vec<Hole> {
    let (w, h) = mask.dims();
    let keep = mask.keep_flags();
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if keep[start] || seen[start] {
            continue;
        }
        let mut hole = Hole {
            red: Vec::new(),
            black: Vec::new(),
            extent: 0,
        };
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            (x0, y0, x1, y1) = (x0.min(x), y0.min(y), x1.max(x), y1.max(y));
            if (x + y) % 2 == 0 {
                hole.red.push(i);
            } else {
                hole.black.push(i);
            }
            for j in neighbours(i, w, h).into_iter().flatten() {
                if !keep[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        hole.red.sort_unstable();
        hole.black.sort_unstable();
        hole.extent = (x1 - x0 + 1).max(y1 - y0 + 1);
        out.push(hole);
    }
    out
}

fn neighbours(i: usize, w: usize, h: usize) -> [Option<usize>; 4] {
    let (x, y) = (i % w, i / w);
    [
        (x > 0).then(|| i - 1),
        (x + 1 < w).then(|| i + 1),
        (y > 0).then(|| i - w),
        (y + 1 < h).then(|| i + w),
    ]
}

fn solve_hole(
    values: &mut [f64],
    hole: &Hole,
    w: usize,
    h: usize,
    tol: f64,
    max_iters: usize,
) -> (usize, bool) {
    let omega = 2.0 / (1.0 + (PI / (hole.extent as f64 + 1.0)).sin());
    for iter in 1..=max_iters {
        let mut max_delta = 0.0f64;
        for set in [&hole.red, &hole.black] {
            for &i in set.iter() {
                let mut sum = [0.0f64; 3];
                let mut n = 0.0;
                for j in neighbours(i, w, h).into_iter().flatten() {
                    for c in 0..CHANNELS {
                        sum[c] += values[j * CHANNELS + c];
                    }
                    n += 1.0;
                }
                if n == 0.0 {
                    continue;
                }
                for c in 0..CHANNELS {
                    let v = &mut values[i * CHANNELS + c];
                    let delta = omega * (sum[c] / n - *v);
                    *v += delta;
                    max_delta = max_delta.max(delta.abs());
                }
            }
        }
        if max_delta < tol {
            return (iter, true);
        }
    }
    (max_iters, false)
}

#[derive(Debug)]
pub(super) struct Oracle {
    pub name: String,
}

impl Inpainter for Oracle {
    fn name(&self) -> &str {
        &self.name
    }

    fn run(&self, req: &InpaintRequest<'_>) -> Result<ImageBuffer> {
        req.original.cloned().ok_or(Error::MissingOriginal)
    }
}

#[derive(Debug)]
pub(super) struct MeanFill {
    pub name: String,
}

impl Inpainter for MeanFill {
    fn name(&self) -> &str {
        &self.name
    }

    fn run(&self, req: &InpaintRequest<'_>) -> Result<ImageBuffer> {
        let out = builtin_mean_fill(req.masked, req.mask)?;
        if out.degenerate {
            log::warn!("{}: no KEEP pixels, filled with mid-gray", self.name);
        }
        Ok(out.image)
    }
}

#[derive(Debug)]
pub(super) struct Diffusion {
    pub name: String,
    pub params: DiffusionParams,
}

impl Inpainter for Diffusion {
    fn name(&self) -> &str {
        &self.name
    }

    fn run(&self, req: &InpaintRequest<'_>) -> Result<ImageBuffer> {
        let out = builtin_diffusion(req.masked, req.mask, &self.params)?;
        if out.degenerate {
            log::warn!("{}: no KEEP pixels, filled with mid-gray", self.name);
        }
        Ok(out.image)
    }
}

#[derive(Debug)]
pub(super) struct Jitter {
    pub name: String,
    pub diffusion: DiffusionParams,
    pub noise: DegradeNoiseParams,
}

impl Inpainter for Jitter {
    fn name(&self) -> &str {
        &self.name
    }

    fn run(&self, req: &InpaintRequest<'_>) -> Result<ImageBuffer> {
        let base = builtin_diffusion(req.masked, req.mask, &self.diffusion)?.image;
        let (w, h) = base.dims();
        let noise = blurred_noise(w, h, &self.noise, req.seed);
        let mut data = base.into_data();
        for (i, &keep) in req.mask.keep_flags().iter().enumerate() {
            if !keep {
                for c in 0..CHANNELS {
                    let k = i * CHANNELS + c;
                    data[k] = (data[k] as f64 + noise[k]).clamp(0.0, 1.0) as f32;
                }
            }
        }
        ImageBuffer::from_vec(w, h, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::apply_mask;
    use crate::inpaint::{inpaint, BackendKind, BackendSpec};
    use proptest::prelude::*;

    fn ramp(w: usize, h: usize) -> ImageBuffer {
        ImageBuffer::from_fn(w, h, |x, _| {
            let v = 0.1 + 0.8 * x as f32 / (w - 1) as f32;
            [v, 1.0 - v, 0.5]
        })
        .unwrap()
    }

    fn centered_hole(w: usize, h: usize, size: usize) -> BinaryMask {
        let (x0, y0) = ((w - size) / 2, (h - size) / 2);
        BinaryMask::from_fn(w, h, |x, y| {
            !((x0..x0 + size).contains(&x) && (y0..y0 + size).contains(&y))
        })
        .unwrap()
    }

    #[allow(clippy::needless_range_loop)]
    /// Dense Gaussian elimination on the same discrete equations:
    /// deg(i)·u_i − Σ_{unknown j~i} u_j = Σ_{known j~i} x_j.
    fn dense_laplace(img: &ImageBuffer, mask: &BinaryMask) -> Vec<[f64; 3]> {
        let (w, h) = img.dims();
        let unknown: Vec<usize> = (0..w * h).filter(|&i| !mask.keep_flags()[i]).collect();
        let index = |i: usize| unknown.iter().position(|&u| u == i);
        let n = unknown.len();
        let mut result = vec![[0.0; 3]; n];
        for c in 0..3 {
            let mut a = vec![vec![0.0f64; n + 1]; n];
            for (row, &i) in unknown.iter().enumerate() {
                let (x, y) = ((i % w) as i64, (i / w) as i64);
                for (dx, dy) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = (ny as usize) * w + nx as usize;
                    a[row][row] += 1.0;
                    match index(j) {
                        Some(col) => a[row][col] -= 1.0,
                        None => a[row][n] += img.data()[j * 3 + c] as f64,
                    }
                }
            }
            for col in 0..n {
                let piv = (col..n)
                    .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
                    .unwrap();
                a.swap(col, piv);
                for row in 0..n {
                    if row != col {
                        let f = a[row][col] / a[col][col];
                        if f != 0.0 {
                            for k in col..=n {
                                a[row][k] -= f * a[col][k];
                            }
                        }
                    }
                }
            }
            for row in 0..n {
                result[row][c] = a[row][n] / a[row][row];
            }
        }
        result
    }

    #[test]
    fn ramp_hole_matches_dense_solve() {
        let img = ramp(16, 16);
        let mask = centered_hole(16, 16, 4);
        let masked = apply_mask(&img, &mask).unwrap();
        let out = builtin_diffusion(&masked, &mask, &DiffusionParams::default()).unwrap();
        assert!(out.converged && !out.degenerate);
        let dense = dense_laplace(&masked, &mask);
        let unknown: Vec<usize> = (0..256).filter(|&i| !mask.keep_flags()[i]).collect();
        for (k, &i) in unknown.iter().enumerate() {
            let got = out.image.pixel(i % 16, i / 16);
            for c in 0..3 {
                assert!((got[c] as f64 - dense[k][c]).abs() < 1e-3);
                // linear data is harmonic, so the ramp itself is recovered
                assert!((got[c] - img.pixel(i % 16, i / 16)[c]).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn irregular_hole_matches_dense_solve() {
        let img = ImageBuffer::from_fn(12, 10, |x, y| {
            [((x * 7 + y * 3) % 11) as f32 / 10.0, (y % 4) as f32 / 3.0, 0.2]
        })
        .unwrap();
        let mask = BinaryMask::from_fn(12, 10, |x, y| !(x > 2 && x < 9 && y > 1 && (x + y) % 5 != 0))
            .unwrap();
        let masked = apply_mask(&img, &mask).unwrap();
        let out = builtin_diffusion(&masked, &mask, &DiffusionParams::default()).unwrap();
        let dense = dense_laplace(&masked, &mask);
        let unknown: Vec<usize> = (0..120).filter(|&i| !mask.keep_flags()[i]).collect();
        for (k, &i) in unknown.iter().enumerate() {
            let got = out.image.pixel(i % 12, i / 12);
            for c in 0..3 {
                assert!((got[c] as f64 - dense[k][c]).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn constant_restored() {
        let img = ImageBuffer::filled(20, 14, [0.6, 0.2, 0.9]).unwrap();
        let mask = centered_hole(20, 14, 6);
        let masked = apply_mask(&img, &mask).unwrap();
        let out = builtin_diffusion(&masked, &mask, &DiffusionParams::default()).unwrap();
        for (a, b) in out.image.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-5);
        }
        let fill = builtin_mean_fill(&masked, &mask).unwrap();
        assert_eq!(fill.image, img);
    }

    #[test]
    fn all_masked_is_degenerate() {
        let img = ImageBuffer::filled(5, 5, [0.1; 3]).unwrap();
        let mask = BinaryMask::all_masked(5, 5).unwrap();
        let out = builtin_diffusion(&img, &mask, &DiffusionParams::default()).unwrap();
        assert!(out.degenerate);
        assert!(out.image.data().iter().all(|&v| v == 0.5));
        let fill = builtin_mean_fill(&img, &mask).unwrap();
        assert!(fill.degenerate);
        assert!(fill.image.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn mean_fill_half_black_half_white() {
        let img = ImageBuffer::from_fn(4, 4, |x, _| if x < 2 { [0.0; 3] } else { [1.0; 3] }).unwrap();
        let mask = BinaryMask::from_fn(4, 4, |_, y| y != 1).unwrap();
        let out = builtin_mean_fill(&apply_mask(&img, &mask).unwrap(), &mask).unwrap();
        for x in 0..4 {
            assert_eq!(out.image.pixel(x, 1), [0.5; 3]);
        }
    }

    #[test]
    fn mean_fill_matches_scalar_mean() {
        let img = ImageBuffer::from_fn(9, 7, |x, y| {
            [((x * 13 + y * 7) % 17) as f32 / 16.0, (x % 3) as f32 / 2.0, (y % 5) as f32 / 4.0]
        })
        .unwrap();
        let mask = centered_hole(9, 7, 3);
        let out = builtin_mean_fill(&apply_mask(&img, &mask).unwrap(), &mask).unwrap();
        let mut sum = [0.0f64; 3];
        let mut n = 0.0;
        for y in 0..7 {
            for x in 0..9 {
                if mask.is_keep(x, y) {
                    let p = img.pixel(x, y);
                    for c in 0..3 {
                        sum[c] += p[c] as f64;
                    }
                    n += 1.0;
                }
            }
        }
        let got = out.image.pixel(4, 3);
        for c in 0..3 {
            assert!((got[c] as f64 - sum[c] / n).abs() < 1e-6);
        }
    }

    #[test]
    fn gray_mean_fill_through_backend() {
        let img = ImageBuffer::filled(6, 6, [0.6; 3]).unwrap();
        let mask = centered_hole(6, 6, 2);
        let masked = apply_mask(&img, &mask).unwrap();
        let backend = BackendSpec::new(BackendKind::MeanFill).build(0).unwrap();
        let out = inpaint(backend.as_ref(), &InpaintRequest::new(&masked, &mask, 0)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn jitter_is_seeded() {
        let img = ramp(24, 24);
        let mask = centered_hole(24, 24, 10);
        let masked = apply_mask(&img, &mask).unwrap();
        let backend = BackendSpec::new(BackendKind::Jitter {
            amplitude: 0.05,
            down_factor: 4,
        })
        .build(0)
        .unwrap();
        let run = |seed| {
            inpaint(
                backend.as_ref(),
                &InpaintRequest::new(&masked, &mask, seed),
            )
            .unwrap()
        };
        assert_eq!(run(1), run(1));
        assert_ne!(run(1), run(2));
    }

    #[test]
    fn oracle_needs_original() {
        let img = ramp(8, 8);
        let mask = centered_hole(8, 8, 2);
        let masked = apply_mask(&img, &mask).unwrap();
        let backend = BackendSpec::new(BackendKind::Oracle).build(0).unwrap();
        let req = InpaintRequest::new(&masked, &mask, 0);
        assert!(matches!(
            inpaint(backend.as_ref(), &req),
            Err(Error::MissingOriginal)
        ));
        assert_eq!(
            inpaint(backend.as_ref(), &req.with_original(&img)).unwrap(),
            img
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn maximum_principle(seed in any::<u64>(), w in 3usize..20, h in 3usize..20) {
            let mut rng = crate::seed::rng(seed);
            use rand::Rng;
            let img = ImageBuffer::from_fn(w, h, |_, _| [rng.random(), rng.random(), rng.random()]).unwrap();
            let mask = crate::maskgen::patch_mask(
                w, h, &crate::maskgen::PatchMaskParams { patch_size: 2, mask_prob: 0.6 }, seed,
            ).unwrap();
            prop_assume!(mask.masked_count() < w * h);
            let masked = apply_mask(&img, &mask).unwrap();
            let out = builtin_diffusion(&masked, &mask, &DiffusionParams::default()).unwrap();
            let (lo, hi) = keep_range(&masked, &mask);
            for y in 0..h {
                for x in 0..w {
                    let p = out.image.pixel(x, y);
                    if mask.is_keep(x, y) {
                        prop_assert_eq!(p, img.pixel(x, y));
                    }
                    for c in 0..3 {
                        prop_assert!(p[c] as f64 >= lo[c] - 1e-7 && p[c] as f64 <= hi[c] + 1e-7);
                    }
                }
            }
        }

        #[test]
        fn diffusion_deterministic(seed in any::<u64>()) {
            let img = ramp(12, 9);
            let mask = crate::maskgen::patch_mask(
                12, 9, &crate::maskgen::PatchMaskParams { patch_size: 3, mask_prob: 0.5 }, seed,
            ).unwrap();
            let masked = apply_mask(&img, &mask).unwrap();
            let a = builtin_diffusion(&masked, &mask, &DiffusionParams::default()).unwrap();
            let b = builtin_diffusion(&masked, &mask, &DiffusionParams::default()).unwrap();
            prop_assert_eq!(a.image, b.image);
        }
    }
}
