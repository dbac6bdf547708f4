//! Linear, polynomial and affine color regressions.

use nalgebra::DMatrix;

use super::lstsq::{self, Solution};
use super::{CalibrationModel, Diagnostics, FitOptions, Transform};
use crate::error::{Error, Result};
use crate::image::Image;

/// Channel variance (sum of squared deviations per pixel) at or below this is
/// treated as constant.
const DEGENERATE_VARIANCE: f64 = 1e-24;

pub const MAX_DEGREE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GainOffset {
    pub gain: f64,
    pub offset: f64,
}

/// Source and reference samples of one channel at the fitted pixels.
pub(crate) fn channel_pairs(
    source: &Image,
    reference: &Image,
    c: usize,
    opts: &FitOptions,
) -> (Vec<f64>, Vec<f64>) {
    let channels = source.channels();
    let stride = opts.stride.max(1);
    (0..source.pixel_count())
        .step_by(stride)
        .map(|p| {
            let i = p * channels + c;
            (source.samples()[i], reference.samples()[i])
        })
        .unzip()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Closed-form least squares for `r ≈ gain·s + offset`. The flag is set when
/// the source is constant and the fit fell back to unit gain.
pub(crate) fn linear_fit(s: &[f64], r: &[f64]) -> (GainOffset, bool) {
    let (ms, mr) = (mean(s), mean(r));
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (&a, &b) in s.iter().zip(r) {
        sxx += (a - ms) * (a - ms);
        sxy += (a - ms) * (b - mr);
    }
    if sxx / s.len() as f64 <= DEGENERATE_VARIANCE {
        return (
            GainOffset {
                gain: 1.0,
                offset: mr - ms,
            },
            true,
        );
    }
    let gain = sxy / sxx;
    (
        GainOffset {
            gain,
            offset: mr - gain * ms,
        },
        false,
    )
}

pub fn fit_linear(source: &Image, reference: &Image) -> Result<CalibrationModel> {
    fit_linear_with(source, reference, &FitOptions::default())
}

pub fn fit_linear_with(
    source: &Image,
    reference: &Image,
    opts: &FitOptions,
) -> Result<CalibrationModel> {
    source.ensure_same_shape(reference, "linear fit")?;
    let mut flags = Vec::new();
    let channels = (0..source.channels())
        .map(|c| {
            let (s, r) = channel_pairs(source, reference, c, opts);
            let (coef, degenerate) = linear_fit(&s, &r);
            if degenerate {
                flags.push(format!("channel {c}: constant source, offset-only fit"));
            }
            coef
        })
        .collect();
    Ok(CalibrationModel::finish(
        Transform::Linear { channels },
        Diagnostics::flagged(flags),
        source,
        reference,
    ))
}

/// Weighted polynomial least squares in ascending powers, reduced in degree
/// until the design has full rank. Returns coefficients padded to
/// `degree + 1` and the degree actually used.
pub(crate) fn polynomial_fit(
    x: &[f64],
    y: &[f64],
    weights: Option<&[f64]>,
    degree: usize,
) -> (Vec<f64>, usize) {
    let sqrt_w: Option<Vec<f64>> = weights.map(|w| w.iter().map(|v| v.sqrt()).collect());
    let target: Vec<f64> = match &sqrt_w {
        Some(w) => y.iter().zip(w).map(|(v, s)| v * s).collect(),
        None => y.to_vec(),
    };
    let target = lstsq::column(&target);
    for d in (1..=degree).rev() {
        let design = lstsq::vandermonde(x, d, sqrt_w.as_deref());
        if let Solution::Full(coef) = lstsq::qr_solve(&design, &target) {
            let mut out: Vec<f64> = coef.column(0).iter().copied().collect();
            out.resize(degree + 1, 0.0);
            return (out, d);
        }
    }
    // constant source: keep unit slope and match the (weighted) means
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        let w = weights.map_or(1.0, |w| w[i]);
        sw += w;
        sx += w * x[i];
        sy += w * y[i];
    }
    let mut out = vec![0.0; degree + 1];
    if sw > 0.0 {
        out[0] = (sy - sx) / sw;
    }
    if degree >= 1 {
        out[1] = 1.0;
    }
    (out, 0)
}

/// Horner evaluation of ascending-power coefficients.
pub fn polyval(coefficients: &[f64], x: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

pub(crate) fn check_degree(degree: usize) -> Result<()> {
    if !(1..=MAX_DEGREE).contains(&degree) {
        return Err(Error::InvalidModel(format!(
            "polynomial degree {degree} outside 1..={MAX_DEGREE}"
        )));
    }
    Ok(())
}

pub fn fit_polynomial(source: &Image, reference: &Image, degree: usize) -> Result<CalibrationModel> {
    fit_polynomial_with(source, reference, degree, &FitOptions::default())
}

pub fn fit_polynomial_with(
    source: &Image,
    reference: &Image,
    degree: usize,
    opts: &FitOptions,
) -> Result<CalibrationModel> {
    check_degree(degree)?;
    source.ensure_same_shape(reference, "polynomial fit")?;
    let mut flags = Vec::new();
    let coefficients = (0..source.channels())
        .map(|c| {
            let (s, r) = channel_pairs(source, reference, c, opts);
            let (coef, used) = polynomial_fit(&s, &r, None, degree);
            if used < degree {
                flags.push(format!("channel {c}: effective degree reduced to {used}"));
            }
            coef
        })
        .collect();
    Ok(CalibrationModel::finish(
        Transform::Polynomial {
            degree,
            coefficients,
        },
        Diagnostics::flagged(flags),
        source,
        reference,
    ))
}

/// Cross-channel affine color transform fitted over all (dense) pixel
/// correspondences. Row `k` of the matrix maps `[s_0, …, s_{C-1}, 1]` to
/// output channel `k`.
pub fn fit_affine_color(source: &Image, reference: &Image) -> Result<CalibrationModel> {
    fit_affine_color_with(source, reference, &FitOptions::default())
}

pub fn fit_affine_color_with(
    source: &Image,
    reference: &Image,
    opts: &FitOptions,
) -> Result<CalibrationModel> {
    source.ensure_same_shape(reference, "affine color fit")?;
    let c = source.channels();
    let stride = opts.stride.max(1);
    let pixels: Vec<usize> = (0..source.pixel_count()).step_by(stride).collect();
    let (src, refs) = (source.samples(), reference.samples());
    let design = DMatrix::from_fn(pixels.len(), c + 1, |i, j| {
        if j == c {
            1.0
        } else {
            src[pixels[i] * c + j]
        }
    });
    let targets = DMatrix::from_fn(pixels.len(), c, |i, k| refs[pixels[i] * c + k]);
    let mut flags = Vec::new();
    let coef = match lstsq::qr_solve(&design, &targets) {
        Solution::Full(coef) => coef,
        Solution::RankDeficient => {
            flags.push(format!("rank-deficient design, ridge {:e} applied", lstsq::RIDGE));
            lstsq::ridge_solve(&design, &targets)
        }
    };
    let matrix = (0..c)
        .map(|k| (0..=c).map(|j| coef[(j, k)]).collect())
        .collect();
    Ok(CalibrationModel::finish(
        Transform::AffineColor { matrix },
        Diagnostics::flagged(flags),
        source,
        reference,
    ))
}
