//! Calibration quality metrics.

pub mod color;
mod perceptual;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{histogram, Image, ImageStack, HISTOGRAM_BINS};
use crate::io::{quantize, BitDepth};

pub use perceptual::{perceptual_diff, CONTRAST_C, TERM_SCALE, WINDOW};

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Psnr {
    pub db: f64,
    /// Set when the images are identical and `db` is the cap.
    pub identical: bool,
}

/// Mean over all samples of the squared difference.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b, "mse")?;
    let sum: f64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.samples().len() as f64)
}

/// PSNR for a given MSE and peak value, capped for identical images.
pub fn psnr_from_mse(mse: f64, peak: f64) -> Psnr {
    if mse == 0.0 {
        return Psnr {
            db: PSNR_CAP_DB,
            identical: true,
        };
    }
    Psnr {
        db: (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB),
        identical: false,
    }
}

/// `10·log10(1 / mse)` on normalized samples, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &Image, b: &Image) -> Result<Psnr> {
    Ok(psnr_from_mse(mse(a, b)?, 1.0))
}

/// PSNR computed on the 8-bit quantized images with peak 255.
pub fn psnr_8bit(a: &Image, b: &Image) -> Result<Psnr> {
    a.ensure_same_shape(b, "psnr")?;
    let sum: f64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| {
            let d = quantize(x, BitDepth::Eight) as f64 - quantize(y, BitDepth::Eight) as f64;
            d * d
        })
        .sum();
    Ok(psnr_from_mse(sum / a.samples().len() as f64, 255.0))
}

/// Cross-camera histogram disagreement: for every channel and bin the
/// population standard deviation of the counts across cameras, summed and
/// divided by the pixel count.
pub fn histogram_spread(stack: &ImageStack) -> f64 {
    let hists: Vec<_> = stack.images().iter().map(histogram).collect();
    let n = hists.len() as f64;
    let (_, _, channels) = stack.shape();
    let mut total = 0.0;
    for c in 0..channels {
        for k in 0..HISTOGRAM_BINS {
            let counts = hists.iter().map(|h| h.channel(c)[k] as f64);
            let mean = counts.clone().sum::<f64>() / n;
            let var = counts.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            total += var.sqrt();
        }
    }
    total / stack.images()[0].pixel_count() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraMetrics {
    pub psnr_db: f64,
    pub identical: bool,
    pub perceptual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_camera: Vec<CameraMetrics>,
    pub mean_psnr_db: f64,
    /// iCID-substitute perceptual score, averaged over cameras.
    pub mean_perceptual: f64,
    pub histogram_spread: f64,
}

/// Scores every camera of `stack` against `target`.
pub fn score_stack(stack: &ImageStack, target: &Image) -> Result<MetricReport> {
    use rayon::prelude::*;
    let per_camera = stack
        .images()
        .par_iter()
        .map(|img| {
            let p = psnr(img, target)?;
            Ok(CameraMetrics {
                psnr_db: p.db,
                identical: p.identical,
                perceptual: perceptual_diff(img, target)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_camera.len() as f64;
    Ok(MetricReport {
        mean_psnr_db: per_camera.iter().map(|m| m.psnr_db).sum::<f64>() / n,
        mean_perceptual: per_camera.iter().map(|m| m.perceptual).sum::<f64>() / n,
        histogram_spread: histogram_spread(stack),
        per_camera,
    })
}

/// Reports for the stack before and after calibration, both against `truth`.
pub fn report(
    before: &ImageStack,
    after: &ImageStack,
    truth: &Image,
) -> Result<(MetricReport, MetricReport)> {
    if before.shape() != after.shape() || before.len() != after.len() {
        return Err(Error::ShapeMismatch(format!(
            "before {} x {:?} vs after {} x {:?}",
            before.len(),
            before.shape(),
            after.len(),
            after.shape()
        )));
    }
    Ok((score_stack(before, truth)?, score_stack(after, truth)?))
}
