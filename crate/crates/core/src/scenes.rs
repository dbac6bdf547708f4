//! Procedural test scenes used when no captured truth images are supplied.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::Image;

pub const SCENE_NAMES: [&str; 3] = ["checker", "wedge", "terrain"];

/// sRGB values of the 24 ColorChecker patches, row-major.
const CHECKER: [[u8; 3]; 24] = [
    [115, 82, 68],
    [194, 150, 130],
    [98, 122, 157],
    [87, 108, 67],
    [133, 128, 177],
    [103, 189, 170],
    [214, 126, 44],
    [80, 91, 166],
    [193, 90, 99],
    [94, 60, 108],
    [157, 188, 64],
    [224, 163, 46],
    [56, 61, 150],
    [70, 148, 73],
    [175, 54, 60],
    [231, 199, 31],
    [187, 86, 149],
    [8, 133, 161],
    [243, 243, 242],
    [200, 200, 200],
    [160, 160, 160],
    [122, 122, 121],
    [85, 85, 85],
    [52, 52, 52],
];

/// Renders a built-in scene at `size × size` RGB.
pub fn builtin(name: &str, size: usize) -> Result<Image> {
    if size == 0 {
        return Err(Error::InvalidImage("scene size must be positive".into()));
    }
    match name {
        "checker" => Ok(checker(size)),
        "wedge" => Ok(wedge(size)),
        "terrain" => Ok(terrain(size)),
        other => Err(Error::Config(format!(
            "unknown built-in scene '{other}' (expected one of {})",
            SCENE_NAMES.join(", ")
        ))),
    }
}

fn grain(seed: u64, len: usize, amplitude: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| amplitude * (rng.random::<f64>() - 0.5)).collect()
}

fn checker(size: usize) -> Image {
    let noise = grain(0xC0FFEE, size * size, 0.03);
    Image::from_fn(size, size, 3, |x, y, c| {
        let col = x * 6 / size;
        let row = y * 4 / size;
        // thin dark border between patches
        let fx = (x * 6) % size;
        let fy = (y * 4) % size;
        if fx < size / 40 || fy < size / 40 {
            return 0.08 + noise[y * size + x] * 0.5;
        }
        CHECKER[row * 6 + col][c] as f64 / 255.0 + noise[y * size + x]
    })
    .expect("valid scene")
}

fn wedge(size: usize) -> Image {
    let noise = grain(0x5EED, size * size, 0.02);
    Image::from_fn(size, size, 3, |x, y, c| {
        let t = x as f64 / (size - 1).max(1) as f64;
        let n = noise[y * size + x];
        if y < size / 2 {
            // eleven gray steps
            let step = ((t * 11.0).floor() / 10.0).min(1.0);
            0.05 + 0.9 * step + n
        } else {
            let v = (y - size / 2) as f64 / (size / 2).max(1) as f64;
            let hue = t * std::f64::consts::TAU + c as f64 * std::f64::consts::TAU / 3.0;
            0.5 + 0.35 * hue.cos() * (1.0 - 0.6 * v) + n
        }
    })
    .expect("valid scene")
}

/// Smooth value noise with a few octaves, tinted per channel.
fn terrain(size: usize) -> Image {
    const LATTICE: usize = 9;
    let mut rng = ChaCha8Rng::seed_from_u64(0x7E22A1);
    let octaves: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..LATTICE * LATTICE).map(|_| rng.random()).collect())
        .collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let sample = |grid: &[f64], u: f64, v: f64| {
        let (x0, y0) = (u.floor() as usize % LATTICE, v.floor() as usize % LATTICE);
        let (x1, y1) = ((x0 + 1) % LATTICE, (y0 + 1) % LATTICE);
        let (tx, ty) = (smooth(u.fract()), smooth(v.fract()));
        let top = grid[y0 * LATTICE + x0] * (1.0 - tx) + grid[y0 * LATTICE + x1] * tx;
        let bottom = grid[y1 * LATTICE + x0] * (1.0 - tx) + grid[y1 * LATTICE + x1] * tx;
        top * (1.0 - ty) + bottom * ty
    };
    let height: Vec<f64> = (0..size * size)
        .map(|i| {
            let (x, y) = ((i % size) as f64 / size as f64, (i / size) as f64 / size as f64);
            let mut h = 0.0;
            let mut amp = 0.5;
            for (o, grid) in octaves.iter().enumerate() {
                let f = 2.0 * (1 << o) as f64;
                h += amp * sample(grid, x * f, y * f);
                amp *= 0.5;
            }
            h / 0.9375
        })
        .collect();
    let tint = [[0.25, 0.45, 0.2], [0.55, 0.5, 0.3], [0.85, 0.82, 0.8]];
    Image::from_fn(size, size, 3, |x, y, c| {
        let h = height[y * size + x];
        // water, grass, rock ramps
        if h < 0.45 {
            0.1 + 0.4 * h + [0.0, 0.1, 0.35][c]
        } else if h < 0.65 {
            tint[0][c] + 0.6 * (h - 0.45)
        } else {
            tint[1][c] + (tint[2][c] - tint[1][c]) * (h - 0.65) / 0.35
        }
    })
    .expect("valid scene")
}
