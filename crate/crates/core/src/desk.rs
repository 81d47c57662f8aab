//! Seeded synthetic images for tests, demos and smoke runs.
//!
//! Each image is a smooth color gradient with a few soft-edged discs and
//! rectangles on top and a faint periodic texture, which gives the
//! inpainters both flat regions and edges to deal with.

use std::f32::consts::TAU;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::image::{save_image, ImageBuffer};
use crate::seed::{self, SeedHasher};

enum Shape {
    Disc { cx: f32, cy: f32, r: f32 },
    Rect { x0: f32, y0: f32, x1: f32, y1: f32 },
}

impl Shape {
    /// Coverage in `[0, 1]` with a one-pixel soft edge.
    fn coverage(&self, x: f32, y: f32) -> f32 {
        let dist = match *self {
            Shape::Disc { cx, cy, r } => ((x - cx).powi(2) + (y - cy).powi(2)).sqrt() - r,
            Shape::Rect { x0, y0, x1, y1 } => (x0 - x).max(x - x1).max(y0 - y).max(y - y1),
        };
        (0.5 - dist).clamp(0.0, 1.0)
    }
}

pub fn desk_image(width: usize, height: usize, seed: u64) -> Result<ImageBuffer> {
    let mut rng = seed::rng(SeedHasher::new(seed).str("desk").finish());
    let (w, h) = (width as f32, height as f32);
    let base: [[f32; 3]; 2] = [rgb(&mut rng), rgb(&mut rng)];
    let angle = rng.random_range(0.0..TAU);
    let (dx, dy) = (angle.cos(), angle.sin());
    let wave_freq = rng.random_range(1.0..3.0) * TAU / w.max(h);
    let wave_phase = rng.random_range(0.0..TAU);
    let texture_freq = rng.random_range(0.6..1.2);
    let shapes: Vec<(Shape, [f32; 3])> = (0..rng.random_range(2..=5))
        .map(|_| {
            let side = w.min(h);
            let shape = if rng.random_bool(0.5) {
                Shape::Disc {
                    cx: rng.random_range(0.0..w),
                    cy: rng.random_range(0.0..h),
                    r: rng.random_range(0.08..0.25) * side,
                }
            } else {
                let (x0, y0) = (rng.random_range(0.0..w), rng.random_range(0.0..h));
                Shape::Rect {
                    x0,
                    y0,
                    x1: x0 + rng.random_range(0.1..0.4) * side,
                    y1: y0 + rng.random_range(0.1..0.4) * side,
                }
            };
            (shape, rgb(&mut rng))
        })
        .collect();
    ImageBuffer::from_fn(width, height, |x, y| {
        let (fx, fy) = (x as f32 + 0.5, y as f32 + 0.5);
        let t = (((fx - w / 2.0) * dx + (fy - h / 2.0) * dy) / w.max(h) + 0.5).clamp(0.0, 1.0);
        let wave = 0.08 * (wave_freq * (fx * dy - fy * dx) + wave_phase).sin();
        let texture = 0.03 * (texture_freq * fx).sin() * (texture_freq * 1.3 * fy).cos();
        let mut px = [0.0f32; 3];
        for c in 0..3 {
            px[c] = base[0][c] * (1.0 - t) + base[1][c] * t + wave + texture;
        }
        for (shape, color) in &shapes {
            let a = shape.coverage(fx, fy);
            if a > 0.0 {
                for c in 0..3 {
                    px[c] = px[c] * (1.0 - a) + (color[c] + texture) * a;
                }
            }
        }
        px.map(|v| v.clamp(0.0, 1.0))
    })
}

fn rgb(rng: &mut impl Rng) -> [f32; 3] {
    [
        rng.random_range(0.1..0.9),
        rng.random_range(0.1..0.9),
        rng.random_range(0.1..0.9),
    ]
}

/// Writes `count` images named `desk_000.png`, `desk_001.png`, ... into
/// `dir`, creating it if needed.
pub fn write_desk_corpus(
    dir: &Path,
    count: usize,
    width: usize,
    height: usize,
    seed: u64,
) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    (0..count)
        .map(|i| {
            let id = format!("desk_{i:03}");
            let img = desk_image(width, height, SeedHasher::new(seed).u64(i as u64).finish())?;
            save_image(&img, dir.join(format!("{id}.png")))?;
            Ok(id)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_varied() {
        let a = desk_image(64, 48, 1).unwrap();
        assert_eq!(a, desk_image(64, 48, 1).unwrap());
        assert_ne!(a, desk_image(64, 48, 2).unwrap());
        let spread = a.data().iter().fold((1.0f32, 0.0f32), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        assert!(spread.1 - spread.0 > 0.2, "{spread:?}");
    }

    #[test]
    fn corpus_files() {
        let dir = tempfile::tempdir().unwrap();
        let ids = write_desk_corpus(&dir.path().join("c"), 3, 16, 16, 9).unwrap();
        assert_eq!(ids, ["desk_000", "desk_001", "desk_002"]);
        assert!(dir.path().join("c/desk_002.png").is_file());
    }
}
