//! Windowed perceptual color difference.
//!
//! Both images go to CIELAB. Over every 11×11 window (uniform weights, stride
//! 1, windows fully inside the image) the window means of `L*`, `a*`, `b*` are
//! compared through three terms in `(0, 1]`:
//!
//! - lightness `1 / (1 + K·ΔL²) · (2·σ₁σ₂ + c) / (σ₁² + σ₂² + c)`, the second
//!   factor comparing the windowed `L*` standard deviations (contrast)
//! - chroma `1 / (1 + K·ΔC²)` with `C = hypot(a, b)` of the window means
//! - hue `1 / (1 + K·ΔH²)` with `ΔH² = Δa² + Δb² − ΔC²`
//!
//! The score is `100 · (1 − mean(lightness · chroma · hue))`: 0 for identical
//! inputs, larger is worse. Grayscale images use the lightness term only.
//! Images smaller than the window use the whole extent along that axis.

use super::color::{luminance_to_lightness, srgb_to_lab, srgb_to_linear};
use crate::error::Result;
use crate::image::Image;

pub const WINDOW: usize = 11;
/// Sensitivity of every comparison term, in squared CIELAB units.
pub const TERM_SCALE: f64 = 0.002;
/// Stabilizer of the lightness-contrast factor, in squared `L*` units.
pub const CONTRAST_C: f64 = 0.1;

/// Summed-area table of one plane.
struct Integral {
    width: usize,
    sums: Vec<f64>,
}

impl Integral {
    fn new(plane: &[f64], width: usize, height: usize) -> Self {
        let w1 = width + 1;
        let mut sums = vec![0.0; w1 * (height + 1)];
        for y in 0..height {
            let mut row = 0.0;
            for x in 0..width {
                row += plane[y * width + x];
                sums[(y + 1) * w1 + x + 1] = sums[y * w1 + x + 1] + row;
            }
        }
        Self { width, sums }
    }

    fn window_mean(&self, x: usize, y: usize, ww: usize, wh: usize) -> f64 {
        let w1 = self.width + 1;
        let at = |x: usize, y: usize| self.sums[y * w1 + x];
        (at(x + ww, y + wh) - at(x, y + wh) - at(x + ww, y) + at(x, y)) / (ww * wh) as f64
    }
}

fn lab_planes(img: &Image) -> Vec<Vec<f64>> {
    if img.channels() == 1 {
        vec![img
            .samples()
            .iter()
            .map(|&v| luminance_to_lightness(srgb_to_linear(v)))
            .collect()]
    } else {
        let mut planes: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(img.pixel_count())).collect();
        for px in img.samples().chunks_exact(3) {
            let lab = srgb_to_lab([px[0], px[1], px[2]]);
            for (plane, v) in planes.iter_mut().zip(lab) {
                plane.push(v);
            }
        }
        planes
    }
}

fn term(delta_sq: f64) -> f64 {
    1.0 / (1.0 + TERM_SCALE * delta_sq)
}

pub fn perceptual_diff(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b, "perceptual difference")?;
    if a == b {
        return Ok(0.0);
    }
    let (w, h) = (a.width(), a.height());
    let (ww, wh) = (WINDOW.min(w), WINDOW.min(h));
    let (pa, pb) = (lab_planes(a), lab_planes(b));
    let ia: Vec<Integral> = pa.iter().map(|p| Integral::new(p, w, h)).collect();
    let ib: Vec<Integral> = pb.iter().map(|p| Integral::new(p, w, h)).collect();
    let squares = |p: &[f64]| p.iter().map(|v| v * v).collect::<Vec<_>>();
    let sq_a = Integral::new(&squares(&pa[0]), w, h);
    let sq_b = Integral::new(&squares(&pb[0]), w, h);
    let mut total = 0.0;
    let mut windows = 0usize;
    for y in 0..=(h - wh) {
        for x in 0..=(w - ww) {
            let (mut ma, mut mb) = ([0.0; 3], [0.0; 3]);
            for k in 0..ia.len() {
                ma[k] = ia[k].window_mean(x, y, ww, wh);
                mb[k] = ib[k].window_mean(x, y, ww, wh);
            }
            let var_a = (sq_a.window_mean(x, y, ww, wh) - ma[0] * ma[0]).max(0.0);
            let var_b = (sq_b.window_mean(x, y, ww, wh) - mb[0] * mb[0]).max(0.0);
            let contrast =
                (2.0 * (var_a * var_b).sqrt() + CONTRAST_C) / (var_a + var_b + CONTRAST_C);
            let lightness = term((ma[0] - mb[0]).powi(2)) * contrast;
            let product = if ia.len() == 3 {
                let (ca, cb) = (ma[1].hypot(ma[2]), mb[1].hypot(mb[2]));
                let dc2 = (ca - cb).powi(2);
                let dh2 = ((ma[1] - mb[1]).powi(2) + (ma[2] - mb[2]).powi(2) - dc2).max(0.0);
                lightness * term(dc2) * term(dh2)
            } else {
                lightness
            };
            total += product;
            windows += 1;
        }
    }
    Ok((100.0 * (1.0 - total / windows as f64)).max(0.0))
}
