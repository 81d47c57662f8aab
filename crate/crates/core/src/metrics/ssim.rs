use crate::error::{Error, Result};
use crate::image::{to_grayscale, GrayImage, ImageBuffer};

use super::DYNAMIC_RANGE;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

pub(crate) fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Mean SSIM of the luma planes, Gaussian 11×11 window (σ = 1.5), evaluated
/// at every position where the window fits inside the image.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.same_dims(b)?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::TooSmall {
            width: w,
            height: h,
            window: SSIM_WINDOW,
        });
    }
    let (ga, gb) = (to_grayscale(a), to_grayscale(b));
    let kernel = gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA);

    let product = |p: &GrayImage, q: &GrayImage| GrayImage {
        width: w,
        height: h,
        data: p.data.iter().zip(&q.data).map(|(x, y)| x * y).collect(),
    };
    let mu_a = filter_valid(&ga, &kernel);
    let mu_b = filter_valid(&gb, &kernel);
    let aa = filter_valid(&product(&ga, &ga), &kernel);
    let bb = filter_valid(&product(&gb, &gb), &kernel);
    let ab = filter_valid(&product(&ga, &gb), &kernel);

    let c1 = (K1 * DYNAMIC_RANGE).powi(2);
    let c2 = (K2 * DYNAMIC_RANGE).powi(2);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok(total / n as f64)
}

/// Separable correlation keeping only fully-covered positions.
fn filter_valid(img: &GrayImage, kernel: &[f64]) -> Vec<f64> {
    let k = kernel.len();
    let (w, h) = (img.width, img.height);
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let line = &img.data[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = kernel.iter().zip(&line[x..x + k]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = kernel
                .iter()
                .enumerate()
                .map(|(j, kv)| kv * rows[(y + j) * ow + x])
                .sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::tests::random_image;

    /// Direct 2-D window sums, independent of the separable path.
    fn naive_ssim(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
        let (ga, gb) = (to_grayscale(a), to_grayscale(b));
        let (w, h) = a.dims();
        let g1 = gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA);
        let c1 = 0.0001;
        let c2 = 0.0009;
        let mut total = 0.0;
        let mut count = 0;
        for y0 in 0..=h - SSIM_WINDOW {
            for x0 in 0..=w - SSIM_WINDOW {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for j in 0..SSIM_WINDOW {
                    for i in 0..SSIM_WINDOW {
                        let wt = g1[i] * g1[j];
                        let (p, q) = (ga.get(x0 + i, y0 + j), gb.get(x0 + i, y0 + j));
                        ma += wt * p;
                        mb += wt * q;
                        saa += wt * p * p;
                        sbb += wt * q * q;
                        sab += wt * p * q;
                    }
                }
                let va = saa - ma * ma;
                let vb = sbb - mb * mb;
                let cov = sab - ma * mb;
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn identical_is_one() {
        let a = random_image(24, 19, 1);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constants_closed_form() {
        let a = ImageBuffer::filled(16, 16, [0.5; 3]).unwrap();
        let b = ImageBuffer::filled(16, 16, [0.25; 3]).unwrap();
        let c1 = 1e-4;
        let closed = (2.0 * 0.5 * 0.25 + c1) / (0.25 + 0.0625 + c1);
        let s = ssim(&a, &b).unwrap();
        assert!((s - closed).abs() < 1e-9);
        assert!((s - 0.80007).abs() < 1e-4, "{s}");
    }

    #[test]
    fn matches_naive_windows() {
        for seed in 0..5 {
            let a = random_image(32, 27, seed);
            let b = random_image(32, 27, seed + 100);
            let fast = ssim(&a, &b).unwrap();
            let slow = naive_ssim(&a, &b);
            assert!((fast - slow).abs() < 1e-6, "{fast} vs {slow}");
            assert!((-1.0..=1.0).contains(&fast));
        }
    }

    #[test]
    fn too_small() {
        let a = random_image(10, 30, 0);
        assert!(matches!(ssim(&a, &a), Err(Error::TooSmall { .. })));
    }

    #[test]
    fn kernel_normalized() {
        let k = gaussian_kernel(11, 1.5);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(k[0], k[10]);
    }
}
