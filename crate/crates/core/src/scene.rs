//! Procedural test scenes and degradations.
//!
//! Used to stand in for natural images where no camera data is available:
//! smooth illumination, 1/f-like texture and a handful of soft-edged objects.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::stream::IntensityImage;

/// Bilinearly interpolated random lattice with `cells` cells along the shorter side.
fn value_noise(h: usize, w: usize, cells: usize, rng: &mut impl Rng) -> Vec<f64> {
    let step = (h.min(w) as f64 / cells as f64).max(1.0);
    let gh = (h as f64 / step).ceil() as usize + 2;
    let gw = (w as f64 / step).ceil() as usize + 2;
    let grid: Vec<f64> = (0..gh * gw)
        .map(|_| rng.random::<f64>() * 2.0 - 1.0)
        .collect();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        let gy = y as f64 / step;
        let (y0, fy) = (gy.floor() as usize, gy.fract());
        for x in 0..w {
            let gx = x as f64 / step;
            let (x0, fx) = (gx.floor() as usize, gx.fract());
            let at = |yy: usize, xx: usize| grid[yy * gw + xx];
            let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
            let bottom = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// A deterministic natural-looking grayscale scene with values in roughly `[0.1, 0.9]`.
pub fn natural_scene(h: usize, w: usize, seed: u64) -> Result<IntensityImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field = vec![0.0; h * w];

    let (gy, gx) = (rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
    for y in 0..h {
        for x in 0..w {
            field[y * w + x] =
                0.5 + gy * (y as f64 / h as f64 - 0.5) + gx * (x as f64 / w as f64 - 0.5);
        }
    }

    let mut amplitude = 0.12;
    for cells in [3, 6, 12, 24, 48] {
        for (f, n) in field.iter_mut().zip(value_noise(h, w, cells, &mut rng)) {
            *f += amplitude * n;
        }
        amplitude *= 0.55;
    }

    let objects = rng.random_range(4..9);
    for _ in 0..objects {
        let cy = rng.random_range(0.0..h as f64);
        let cx = rng.random_range(0.0..w as f64);
        let ry = rng.random_range(0.05..0.3) * h as f64;
        let rx = rng.random_range(0.05..0.3) * w as f64;
        let level = rng.random_range(0.1..0.9);
        let opacity = rng.random_range(0.5..0.9);
        let ellipse = rng.random_bool(0.5);
        for y in 0..h {
            for x in 0..w {
                let dy = (y as f64 - cy) / ry;
                let dx = (x as f64 - cx) / rx;
                let d = if ellipse {
                    (dy * dy + dx * dx).sqrt()
                } else {
                    dy.abs().max(dx.abs())
                };
                // about a one-pixel ramp at the boundary
                let edge = ((1.0 - d) * ry.min(rx) + 0.5).clamp(0.0, 1.0);
                let a = opacity * edge;
                let f = &mut field[y * w + x];
                *f = *f * (1.0 - a) + level * a;
            }
        }
    }

    IntensityImage::new_clamped(
        h,
        w,
        field
            .into_iter()
            .map(|v| 0.1 + 0.8 * v.clamp(0.0, 1.0))
            .collect(),
    )
}

/// Replaces each pixel with probability `p` by 0 or 1 (equally likely).
pub fn salt_and_pepper(img: &IntensityImage, p: f64, seed: u64) -> Result<IntensityImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = img
        .values()
        .iter()
        .map(|&v| {
            if rng.random::<f64>() < p {
                if rng.random_bool(0.5) {
                    1.0
                } else {
                    0.0
                }
            } else {
                v
            }
        })
        .collect();
    IntensityImage::new_clamped(img.h(), img.w(), values)
}
