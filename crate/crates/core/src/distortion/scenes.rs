//! Procedural clean source images.
//!
//! Scenes are a two-color gradient background overlaid with soft-edged discs
//! and rectangles plus a faint sinusoidal texture. Each scene is stretched to
//! span nearly the full byte range and tone-mapped so its mean lands near
//! mid-gray, giving a "well exposed" reference population.

use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use super::DistortionError;
use crate::imaging::{save_image, unit_to_byte, ImageU8};
use crate::seeding::stream;

/// Writes `count` scenes as `scene_00000.png`, ... into `dir`.
pub fn write_scenes(dir: &Path, seed: u64, count: usize, size: usize) -> Result<Vec<PathBuf>, DistortionError> {
    std::fs::create_dir_all(dir).map_err(|e| DistortionError::io(dir, e))?;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let path = dir.join(format!("scene_{i:05}.png"));
            save_image(&render_scene(seed, i, size), &path)?;
            Ok(path)
        })
        .collect()
}

/// Renders scene number `index` of the family selected by `seed`.
pub fn render_scene(seed: u64, index: usize, size: usize) -> ImageU8 {
    let mut rng = stream(seed, &format!("scene-{index}"));
    let n = size * size;
    let coord = |i: usize| i as f64 / (size.max(2) - 1) as f64;

    let c0: [f64; 3] = std::array::from_fn(|_| rng.random::<f64>());
    let c1: [f64; 3] = std::array::from_fn(|_| rng.random::<f64>());
    let angle = rng.random::<f64>() * std::f64::consts::TAU;
    let (ca, sa) = (angle.cos(), angle.sin());
    let proj: Vec<f64> = (0..n).map(|p| ca * coord(p % size) + sa * coord(p / size)).collect();
    let (pmin, pmax) = min_max(&proj);
    let mut img = vec![0.0f64; n * 3];
    for (p, &t) in proj.iter().enumerate() {
        let t = (t - pmin) / (pmax - pmin + 1e-9);
        for c in 0..3 {
            img[p * 3 + c] = c0[c] * (1.0 - t) + c1[c] * t;
        }
    }

    let edge = size as f64 / 1.5;
    let shapes = rng.random_range(3..7);
    for _ in 0..shapes {
        let color: [f64; 3] = std::array::from_fn(|_| rng.random::<f64>());
        let cx = rng.random::<f64>();
        let cy = rng.random::<f64>();
        let disc = rng.random::<f64>() < 0.5;
        let (a, b) = (rng.random_range(0.08..0.3), rng.random_range(0.08..0.3));
        for p in 0..n {
            let (x, y) = (coord(p % size), coord(p / size));
            let inside = if disc {
                a - ((x - cx).powi(2) + (y - cy).powi(2)).sqrt()
            } else {
                (a - (x - cx).abs()).min(b - (y - cy).abs())
            };
            let m = (inside * edge).clamp(0.0, 1.0);
            for c in 0..3 {
                let v = &mut img[p * 3 + c];
                *v = *v * (1.0 - m) + color[c] * m;
            }
        }
    }

    let fx = rng.random_range(2.0..8.0);
    let fy = rng.random_range(2.0..8.0);
    let phase = rng.random::<f64>() * std::f64::consts::TAU;
    let amp = rng.random_range(0.02..0.06);
    for p in 0..n {
        let (x, y) = (coord(p % size), coord(p / size));
        let w = amp * (std::f64::consts::TAU * (fx * x + fy * y) + phase).sin();
        for c in 0..3 {
            img[p * 3 + c] += w;
        }
    }

    let (lo, hi) = min_max(&img);
    let a = rng.random_range(0.03..0.08);
    let b = rng.random_range(0.92..0.97);
    for v in img.iter_mut() {
        *v = a + (*v - lo) / (hi - lo + 1e-9) * (b - a);
    }
    let mean = img.iter().sum::<f64>() / img.len() as f64;
    let target: f64 = rng.random_range(0.45..0.55);
    let g = target.ln() / mean.ln();
    let data = img.iter().map(|v| unit_to_byte(v.powf(g))).collect();
    ImageU8::new(size, size, 3, data).expect("scene geometry")
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    })
}
