//! Per-camera color mapping models fitted from a source image to a reference.
//!
//! Five model families are available. Linear and polynomial regression act on
//! each channel's scalar intensity; the affine color transform mixes channels
//! and is fitted over dense per-pixel correspondences (inputs are registered);
//! CCMF derives a monotone intensity mapping from the joint histogram; CDF
//! histogram matching is included as a baseline.

mod ccmf;
mod histmatch;
mod lstsq;
mod regression;

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, ImageStack};

pub use ccmf::{
    centroids, correspondence, fit_ccmf, fit_ccmf_with, fit_channel, isotonic, BinCentroid,
    ChannelMapping, Correspondence,
};
pub use histmatch::{fit_histogram_match, BinnedCdf};
pub use regression::{
    fit_affine_color, fit_affine_color_with, fit_linear, fit_linear_with, fit_polynomial,
    fit_polynomial_with, polyval, GainOffset, MAX_DEGREE,
};

pub const DEFAULT_POLY_DEGREE: usize = 2;
pub const DEFAULT_CCMF_DEGREE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CalibratorKind {
    Linear,
    Polynomial { degree: usize },
    AffineColor,
    Ccmf { poly_degree: usize },
    HistogramMatch,
}

impl CalibratorKind {
    pub const DEFAULTS: [CalibratorKind; 5] = [
        CalibratorKind::Linear,
        CalibratorKind::Polynomial {
            degree: DEFAULT_POLY_DEGREE,
        },
        CalibratorKind::AffineColor,
        CalibratorKind::Ccmf {
            poly_degree: DEFAULT_CCMF_DEGREE,
        },
        CalibratorKind::HistogramMatch,
    ];

    pub fn name(&self) -> String {
        match self {
            CalibratorKind::Linear => "linear".into(),
            CalibratorKind::Polynomial { degree } => format!("polynomial-{degree}"),
            CalibratorKind::AffineColor => "affine-color".into(),
            CalibratorKind::Ccmf { poly_degree } => format!("ccmf-{poly_degree}"),
            CalibratorKind::HistogramMatch => "histogram-match".into(),
        }
    }
}

impl std::fmt::Display for CalibratorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

/// Parses `linear`, `polynomial[-N]`, `affine-color`, `ccmf[-N]`, `histogram-match`.
impl FromStr for CalibratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        let (base, degree) = match s.rsplit_once(['-', ':']) {
            Some((b, d)) if d.chars().all(|c| c.is_ascii_digit()) && !d.is_empty() => {
                (b.to_string(), Some(d.parse::<usize>().expect("digits")))
            }
            _ => (s.clone(), None),
        };
        let kind = match (base.as_str(), degree) {
            ("linear", None) => CalibratorKind::Linear,
            ("polynomial" | "poly", d) => CalibratorKind::Polynomial {
                degree: d.unwrap_or(DEFAULT_POLY_DEGREE),
            },
            ("affine-color" | "affine" | "siftcal", None) => CalibratorKind::AffineColor,
            ("ccmf", d) => CalibratorKind::Ccmf {
                poly_degree: d.unwrap_or(DEFAULT_CCMF_DEGREE),
            },
            ("histogram-match" | "histogram", None) => CalibratorKind::HistogramMatch,
            _ => return Err(Error::Config(format!("unknown calibrator '{s}'"))),
        };
        if let CalibratorKind::Polynomial { degree: d } | CalibratorKind::Ccmf { poly_degree: d } =
            kind
        {
            regression::check_degree(d)?;
        }
        Ok(kind)
    }
}

/// Fitting options shared by all calibrators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Fit on every `stride`-th pixel.
    pub stride: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { stride: 1 }
    }
}

/// Fitted coefficients or tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Transform {
    Linear {
        channels: Vec<GainOffset>,
    },
    /// Ascending-power coefficients per channel.
    Polynomial {
        degree: usize,
        coefficients: Vec<Vec<f64>>,
    },
    /// `C × (C + 1)` rows; the last column is the translation.
    AffineColor {
        matrix: Vec<Vec<f64>>,
    },
    Ccmf {
        poly_degree: usize,
        positions: Vec<Vec<f64>>,
        tables: Vec<Vec<f64>>,
        coefficients: Vec<Vec<f64>>,
    },
    HistogramMatch {
        source: Vec<BinnedCdf>,
        reference: Vec<BinnedCdf>,
    },
}

impl Transform {
    pub fn channels(&self) -> usize {
        match self {
            Transform::Linear { channels } => channels.len(),
            Transform::Polynomial { coefficients, .. } => coefficients.len(),
            Transform::AffineColor { matrix } => matrix.len(),
            Transform::Ccmf { coefficients, .. } => coefficients.len(),
            Transform::HistogramMatch { source, .. } => source.len(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Root-mean-square difference between the applied model and the reference.
    pub fit_residual: f64,
    #[serde(default)]
    pub flags: Vec<String>,
}

impl Diagnostics {
    pub(crate) fn flagged(flags: Vec<String>) -> Self {
        Self {
            fit_residual: 0.0,
            flags,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub transform: Transform,
    pub diagnostics: Diagnostics,
}

impl CalibrationModel {
    /// Computes the fit residual on the training pair and logs any flags.
    pub(crate) fn finish(
        transform: Transform,
        mut diagnostics: Diagnostics,
        source: &Image,
        reference: &Image,
    ) -> Self {
        let applied = evaluate(source, &transform);
        let n = applied.len().max(1) as f64;
        let sq: f64 = applied
            .iter()
            .zip(reference.samples())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        diagnostics.fit_residual = (sq / n).sqrt();
        for flag in &diagnostics.flags {
            log::debug!("calibration fit: {flag}");
        }
        Self {
            transform,
            diagnostics,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Serialize(e.to_string()))
    }
}

fn evaluate(img: &Image, transform: &Transform) -> Vec<f64> {
    let c = img.channels();
    let samples = img.samples();
    let clamp = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    match transform {
        Transform::Linear { channels } => samples
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let g = channels[i % c];
                clamp(g.gain * s + g.offset)
            })
            .collect(),
        Transform::Polynomial { coefficients, .. } | Transform::Ccmf { coefficients, .. } => samples
            .iter()
            .enumerate()
            .map(|(i, &s)| clamp(polyval(&coefficients[i % c], s)))
            .collect(),
        Transform::AffineColor { matrix } => samples
            .chunks_exact(c)
            .flat_map(|px| {
                matrix.iter().map(move |row| {
                    let v = row[..c].iter().zip(px).map(|(m, s)| m * s).sum::<f64>() + row[c];
                    clamp(v)
                })
            })
            .collect(),
        Transform::HistogramMatch { source, reference } => samples
            .iter()
            .enumerate()
            .map(|(i, &s)| clamp(histmatch::match_sample(&source[i % c], &reference[i % c], s)))
            .collect(),
    }
}

pub fn apply_model(img: &Image, model: &CalibrationModel) -> Result<Image> {
    if model.transform.channels() != img.channels() {
        return Err(Error::ShapeMismatch(format!(
            "model fitted for {} channels applied to {}-channel image",
            model.transform.channels(),
            img.channels()
        )));
    }
    Ok(img.with_samples(evaluate(img, &model.transform)))
}

pub fn fit(
    kind: &CalibratorKind,
    source: &Image,
    reference: &Image,
    opts: &FitOptions,
) -> Result<CalibrationModel> {
    match *kind {
        CalibratorKind::Linear => fit_linear_with(source, reference, opts),
        CalibratorKind::Polynomial { degree } => fit_polynomial_with(source, reference, degree, opts),
        CalibratorKind::AffineColor => fit_affine_color_with(source, reference, opts),
        CalibratorKind::Ccmf { poly_degree } => fit_ccmf_with(source, reference, poly_degree, opts),
        CalibratorKind::HistogramMatch => fit_histogram_match(source, reference),
    }
}

/// Calibrated outputs, one model per camera, and the shared reference.
#[derive(Debug, Clone)]
pub struct CalibratedStack {
    pub images: ImageStack,
    pub models: Vec<CalibrationModel>,
    pub reference: Image,
}

/// Fits every camera against `reference` and applies its model. Errors carry
/// the camera index.
pub fn calibrate_stack(
    stack: &ImageStack,
    reference: &Image,
    kind: &CalibratorKind,
    opts: &FitOptions,
) -> Result<CalibratedStack> {
    let (w, h, c) = stack.shape();
    if reference.shape() != (w, h, c) {
        return Err(Error::ShapeMismatch(format!(
            "reference {:?} vs stack {:?}",
            reference.shape(),
            (w, h, c)
        )));
    }
    let fitted = stack
        .images()
        .par_iter()
        .enumerate()
        .map(|(index, img)| {
            fit(kind, img, reference, opts)
                .and_then(|m| apply_model(img, &m).map(|out| (out, m)))
                .map_err(|e| Error::Camera {
                    index,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let (images, models): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();
    Ok(CalibratedStack {
        images: ImageStack::new(stack.scene_id(), images)?,
        models,
        reference: reference.clone(),
    })
}
