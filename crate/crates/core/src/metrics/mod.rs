//! Pairwise image distances used as the sub-metric inside the consistency
//! score.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

#[cfg(feature = "onnx")]
mod onnx;
mod perceptual;
mod ssim;

pub use perceptual::{perceptual, BuiltinPerceptual, PerceptualBackend, PerceptualSpec};
pub use ssim::{ssim, SSIM_SIGMA, SSIM_WINDOW};

/// Peak signal value of normalized samples.
pub const DYNAMIC_RANGE: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubMetric {
    Mse,
    Psnr,
    Ssim,
    Perceptual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    LowerIsBetter,
    HigherIsBetter,
}

impl Orientation {
    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Orientation::LowerIsBetter => a < b,
            Orientation::HigherIsBetter => a > b,
        }
    }
}

impl SubMetric {
    pub const ALL: [SubMetric; 4] = [
        SubMetric::Mse,
        SubMetric::Psnr,
        SubMetric::Ssim,
        SubMetric::Perceptual,
    ];

    pub fn orientation(self) -> Orientation {
        match self {
            SubMetric::Psnr | SubMetric::Ssim => Orientation::HigherIsBetter,
            SubMetric::Mse | SubMetric::Perceptual => Orientation::LowerIsBetter,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SubMetric::Mse => "mse",
            SubMetric::Psnr => "psnr",
            SubMetric::Ssim => "ssim",
            SubMetric::Perceptual => "perceptual",
        }
    }
}

impl fmt::Display for SubMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SubMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(SubMetric::Mse),
            "psnr" => Ok(SubMetric::Psnr),
            "ssim" => Ok(SubMetric::Ssim),
            "perceptual" | "lpips" => Ok(SubMetric::Perceptual),
            other => Err(Error::Config(format!("unknown sub-metric `{other}`"))),
        }
    }
}

/// Mean squared error over all samples.
pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.same_dims(b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// PSNR in dB; identical images give `f64::INFINITY`.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (DYNAMIC_RANGE * DYNAMIC_RANGE / mse).log10()
    }
}

/// Dispatches one sub-metric.
pub fn score(
    metric: SubMetric,
    a: &ImageBuffer,
    b: &ImageBuffer,
    backend: &PerceptualBackend,
) -> Result<f64> {
    match metric {
        SubMetric::Mse => mse(a, b),
        SubMetric::Psnr => psnr(a, b),
        SubMetric::Ssim => ssim(a, b),
        SubMetric::Perceptual => perceptual(a, b, backend),
    }
}

/// A sub-metric bundled with the perceptual backend it needs.
#[derive(Clone, Debug)]
pub struct Scorer {
    pub metric: SubMetric,
    pub perceptual: PerceptualBackend,
}

impl Scorer {
    pub fn new(metric: SubMetric) -> Self {
        Self {
            metric,
            perceptual: PerceptualBackend::default(),
        }
    }

    pub fn with_perceptual(metric: SubMetric, perceptual: PerceptualBackend) -> Self {
        Self { metric, perceptual }
    }

    pub fn orientation(&self) -> Orientation {
        self.metric.orientation()
    }

    pub fn score(&self, a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
        score(self.metric, a, b, &self.perceptual)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    pub(crate) fn random_image(w: usize, h: usize, seed: u64) -> ImageBuffer {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ImageBuffer::from_fn(w, h, |_, _| [rng.random(), rng.random(), rng.random()]).unwrap()
    }

    fn constant(v: f32) -> ImageBuffer {
        ImageBuffer::filled(16, 16, [v; 3]).unwrap()
    }

    #[test]
    fn mse_closed_forms() {
        let a = random_image(9, 7, 1);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert!((mse(&constant(0.5), &constant(0.25)).unwrap() - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn mse_matches_scalar_loop() {
        let a = random_image(13, 11, 2);
        let b = random_image(13, 11, 3);
        let mut acc = 0.0f64;
        for y in 0..11 {
            for x in 0..13 {
                let (p, q) = (a.pixel(x, y), b.pixel(x, y));
                for c in 0..3 {
                    acc += (p[c] as f64 - q[c] as f64).powi(2);
                }
            }
        }
        let oracle = acc / (13.0 * 11.0 * 3.0);
        assert!((mse(&a, &b).unwrap() - oracle).abs() < 1e-7);
        assert!((psnr(&a, &b).unwrap() - 10.0 * (1.0 / oracle).log10()).abs() < 1e-5);
    }

    #[test]
    fn psnr_closed_forms() {
        let a = random_image(4, 4, 5);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let p = psnr(&constant(0.5), &constant(0.25)).unwrap();
        assert!((p - 12.0412).abs() < 1e-4, "{p}");
    }

    #[test]
    fn psnr_decreases_with_mse() {
        let values: Vec<f64> = [1e-6, 1e-4, 1e-2, 0.5]
            .iter()
            .map(|&m| psnr_from_mse(m))
            .collect();
        assert!(values.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn mismatched_dims() {
        let a = random_image(4, 4, 0);
        let b = random_image(4, 5, 0);
        for m in SubMetric::ALL {
            assert!(matches!(
                score(m, &a, &b, &PerceptualBackend::default()),
                Err(Error::DimensionMismatch { .. })
            ));
        }
    }

    #[test]
    fn dispatch() {
        let x = random_image(16, 16, 8);
        let s = |m| Scorer::new(m);
        assert_eq!(s(SubMetric::Mse).score(&x, &x).unwrap(), 0.0);
        assert!((s(SubMetric::Ssim).score(&x, &x).unwrap() - 1.0).abs() < 1e-9);
        let p = s(SubMetric::Psnr)
            .score(&constant(0.5), &constant(0.25))
            .unwrap();
        assert!((p - 12.0412).abs() < 1e-4);
        assert_eq!(SubMetric::Psnr.orientation(), Orientation::HigherIsBetter);
        assert_eq!(
            SubMetric::Perceptual.orientation(),
            Orientation::LowerIsBetter
        );
        assert_eq!("LPIPS".parse::<SubMetric>().unwrap(), SubMetric::Perceptual);
    }

    #[test]
    fn flip_invariance() {
        let a = random_image(20, 18, 10);
        let b = random_image(20, 18, 11);
        let (fa, fb) = (a.flip_horizontal(), b.flip_horizontal());
        for m in SubMetric::ALL {
            let s = Scorer::new(m);
            let direct = s.score(&a, &b).unwrap();
            let flipped = s.score(&fa, &fb).unwrap();
            assert!((direct - flipped).abs() < 1e-9, "{m}: {direct} vs {flipped}");
        }
    }
}
