//! Consensus reference images.
//!
//! A consensus image merges the N registered camera images sample by sample
//! with a location estimator, so that calibration targets what the cameras
//! agree on instead of one arbitrary member of the array. Four estimators are
//! provided: mean, deviation-weighted mean, median and weighted median.
//!
//! Weights default to the per-camera absolute deviation from the cross-camera
//! mean, `w_n = 1 / (1 + scale * |x_n - mean|)`. The variant where every camera
//! gets the same weight `1 / (1 + scale * std)` is available through
//! [`WeightMode::PopulationStd`]; with it the weighted mean degenerates to the
//! plain mean.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, ImageStack};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConsensusMethod {
    Mean,
    WeightedMean,
    Median,
    WeightedMedian,
}

impl ConsensusMethod {
    pub const ALL: [ConsensusMethod; 4] = [
        ConsensusMethod::Mean,
        ConsensusMethod::WeightedMean,
        ConsensusMethod::Median,
        ConsensusMethod::WeightedMedian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConsensusMethod::Mean => "mean",
            ConsensusMethod::WeightedMean => "weighted-mean",
            ConsensusMethod::Median => "median",
            ConsensusMethod::WeightedMedian => "weighted-median",
        }
    }

    pub fn is_weighted(self) -> bool {
        matches!(self, ConsensusMethod::WeightedMean | ConsensusMethod::WeightedMedian)
    }
}

impl std::str::FromStr for ConsensusMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "mean" => Ok(ConsensusMethod::Mean),
            "weighted-mean" | "wmean" => Ok(ConsensusMethod::WeightedMean),
            "median" => Ok(ConsensusMethod::Median),
            "weighted-median" | "wmedian" => Ok(ConsensusMethod::WeightedMedian),
            other => Err(Error::Config(format!("unknown consensus method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// Per-camera absolute deviation from the cross-camera mean.
    #[default]
    Deviation,
    /// Population standard deviation across cameras, shared by every camera.
    PopulationStd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightConfig {
    pub mode: WeightMode,
    /// Multiplies the deviation before weighting; 255 reproduces weighting in
    /// the 8-bit value domain.
    pub scale: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            mode: WeightMode::Deviation,
            scale: 1.0,
        }
    }
}

/// Per-camera, per-sample weights in `(0, 1]`, laid out like the image samples.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    weights: Vec<Vec<f64>>,
}

impl WeightMap {
    /// Validates that every weight is finite and in `(0, 1]`.
    pub fn new(weights: Vec<Vec<f64>>) -> Result<Self> {
        for (n, w) in weights.iter().enumerate() {
            if let Some(i) = w.iter().position(|&v| !(v.is_finite() && v > 0.0 && v <= 1.0)) {
                return Err(Error::InvalidWeights(format!(
                    "camera {n}, sample {i}: {} not in (0, 1]",
                    w[i]
                )));
            }
        }
        Ok(Self { weights })
    }

    pub fn cameras(&self) -> usize {
        self.weights.len()
    }

    pub fn camera(&self, n: usize) -> &[f64] {
        &self.weights[n]
    }

    fn check_against(&self, stack: &ImageStack) -> Result<()> {
        let samples = stack.images()[0].samples().len();
        if self.weights.len() != stack.len() || self.weights.iter().any(|w| w.len() != samples) {
            return Err(Error::InvalidWeights(format!(
                "weight map shape does not match stack of {} x {samples}",
                stack.len()
            )));
        }
        Ok(())
    }
}

/// A consensus reference together with how it was built.
#[derive(Debug, Clone)]
pub struct ConsensusImage {
    pub image: Image,
    pub method: ConsensusMethod,
    pub weights: Option<WeightMap>,
}

/// Evaluates `f` on every sample column of the stack in parallel.
fn per_sample(stack: &ImageStack, f: impl Fn(usize, &[f64]) -> f64 + Sync) -> Image {
    let first = &stack.images()[0];
    let len = first.samples().len();
    let samples: Vec<f64> = (0..len)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(stack.len()),
            |column, i| {
                stack.column_into(i, column);
                f(i, column)
            },
        )
        .collect();
    first.with_samples(samples)
}

fn column_bounds(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn column_mean(values: &[f64]) -> f64 {
    let (lo, hi) = column_bounds(values);
    let first = values[0];
    let shift: f64 = values.iter().map(|v| v - first).sum::<f64>() / values.len() as f64;
    // Rounding can leave the hull of the data; the mean never does.
    (first + shift).clamp(lo, hi)
}

fn column_std(values: &[f64]) -> f64 {
    let mean = column_mean(values);
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    var.sqrt()
}

pub fn pixel_mean(stack: &ImageStack) -> Image {
    per_sample(stack, |_, col| column_mean(col))
}

/// Population standard deviation across cameras.
pub fn pixel_std(stack: &ImageStack) -> Image {
    per_sample(stack, |_, col| column_std(col))
}

pub fn deviation_weights(stack: &ImageStack) -> WeightMap {
    deviation_weights_with(stack, &WeightConfig::default())
}

pub fn deviation_weights_with(stack: &ImageStack, cfg: &WeightConfig) -> WeightMap {
    let n = stack.len();
    let len = stack.images()[0].samples().len();
    let per_sample: Vec<Vec<f64>> = (0..len)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(n),
            |column, i| {
                stack.column_into(i, column);
                match cfg.mode {
                    WeightMode::Deviation => {
                        let mean = column_mean(column);
                        column
                            .iter()
                            .map(|x| 1.0 / (1.0 + cfg.scale * (x - mean).abs()))
                            .collect()
                    }
                    WeightMode::PopulationStd => {
                        vec![1.0 / (1.0 + cfg.scale * column_std(column)); n]
                    }
                }
            },
        )
        .collect();
    let mut weights = vec![Vec::with_capacity(len); n];
    for col in per_sample {
        for (cam, w) in col.into_iter().enumerate() {
            weights[cam].push(w);
        }
    }
    WeightMap { weights }
}

pub fn pixel_weighted_mean(stack: &ImageStack, weights: &WeightMap) -> Result<Image> {
    weights.check_against(stack)?;
    Ok(per_sample(stack, |i, col| {
        let (lo, hi) = column_bounds(col);
        let (mut num, mut den) = (0.0, 0.0);
        for (n, &x) in col.iter().enumerate() {
            let w = weights.weights[n][i];
            num += w * x;
            den += w;
        }
        (num / den).clamp(lo, hi)
    }))
}

/// Median of a column; even lengths return the midpoint of the two middle values.
pub fn median(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

pub fn pixel_median(stack: &ImageStack) -> Image {
    per_sample(stack, |_, col| {
        let mut sorted = col.to_vec();
        median(&mut sorted)
    })
}

/// Exact minimizer of `sum_n w_n |x_n - v|` over the candidates `v ∈ {x_n}`.
///
/// Candidates are sorted by (value, weight) and the first value whose
/// cumulative weight reaches the weight above it is returned, so ties
/// resolve to the smaller value independent of input order.
pub fn weighted_median(values: &[f64], weights: &[f64]) -> f64 {
    debug_assert_eq!(values.len(), weights.len());
    let mut pairs: Vec<(f64, f64)> = values.iter().copied().zip(weights.iter().copied()).collect();
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    // weight strictly above each position, summed from the top so that
    // symmetric columns compare equal without rounding
    let mut above = vec![0.0; pairs.len()];
    for k in (1..pairs.len()).rev() {
        above[k - 1] = above[k] + pairs[k].1;
    }
    let mut below = 0.0;
    for (k, &(v, w)) in pairs.iter().enumerate() {
        below += w;
        if below >= above[k] {
            return v;
        }
    }
    pairs.last().map(|p| p.0).unwrap_or(f64::NAN)
}

pub fn pixel_weighted_median(stack: &ImageStack, weights: &WeightMap) -> Result<Image> {
    weights.check_against(stack)?;
    Ok(per_sample(stack, |i, col| {
        let w: Vec<f64> = (0..col.len()).map(|n| weights.weights[n][i]).collect();
        weighted_median(col, &w)
    }))
}

pub fn build_consensus(stack: &ImageStack, method: ConsensusMethod) -> Result<ConsensusImage> {
    build_consensus_with(stack, method, &WeightConfig::default())
}

pub fn build_consensus_with(
    stack: &ImageStack,
    method: ConsensusMethod,
    cfg: &WeightConfig,
) -> Result<ConsensusImage> {
    crate::image::validate_stack(stack)?;
    let (image, weights) = match method {
        ConsensusMethod::Mean => (pixel_mean(stack), None),
        ConsensusMethod::Median => (pixel_median(stack), None),
        ConsensusMethod::WeightedMean => {
            let w = deviation_weights_with(stack, cfg);
            (pixel_weighted_mean(stack, &w)?, Some(w))
        }
        ConsensusMethod::WeightedMedian => {
            let w = deviation_weights_with(stack, cfg);
            (pixel_weighted_median(stack, &w)?, Some(w))
        }
    };
    Ok(ConsensusImage {
        image,
        method,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray_stack(values: &[f64]) -> ImageStack {
        let images = values
            .iter()
            .map(|&v| Image::filled(1, 1, 1, v).unwrap())
            .collect();
        ImageStack::new("t", images).unwrap()
    }

    #[test]
    fn mean_of_two_constants() {
        let s = gray_stack(&[0.2, 0.6]);
        assert!((pixel_mean(&s).samples()[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn std_two_point() {
        let s = gray_stack(&[0.0, 1.0]);
        assert_eq!(pixel_std(&s).samples()[0], 0.5);
        let same = gray_stack(&[0.3, 0.3, 0.3]);
        assert_eq!(pixel_std(&same).samples()[0], 0.0);
    }

    #[test]
    fn deviation_weight_at_unit_distance() {
        let s = gray_stack(&[0.0, 1.0]);
        let w = deviation_weights_with(
            &s,
            &WeightConfig {
                mode: WeightMode::Deviation,
                scale: 2.0,
            },
        );
        // |x - mean| = 0.5, scaled by 2 -> d = 1 -> weight 0.5
        assert_eq!(w.camera(0)[0], 0.5);
        assert_eq!(w.camera(1)[0], 0.5);
        let same = gray_stack(&[0.4, 0.4]);
        assert!(deviation_weights(&same).camera(0).iter().all(|&w| w == 1.0));
    }

    #[test]
    fn population_std_weights_are_shared() {
        let s = gray_stack(&[0.0, 1.0, 0.5]);
        let w = deviation_weights_with(
            &s,
            &WeightConfig {
                mode: WeightMode::PopulationStd,
                scale: 1.0,
            },
        );
        assert_eq!(w.camera(0)[0], w.camera(2)[0]);
        let wm = pixel_weighted_mean(&s, &w).unwrap();
        assert!((wm.samples()[0] - pixel_mean(&s).samples()[0]).abs() < 1e-15);
    }

    #[test]
    fn weighted_mean_hand_ratio() {
        let s = gray_stack(&[0.0, 1.0]);
        let w = WeightMap::new(vec![vec![1.0], vec![0.25]]).unwrap();
        let out = pixel_weighted_mean(&s, &w).unwrap();
        assert!((out.samples()[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn weight_map_validation() {
        assert!(WeightMap::new(vec![vec![0.0]]).is_err());
        assert!(WeightMap::new(vec![vec![1.5]]).is_err());
        assert!(WeightMap::new(vec![vec![f64::NAN]]).is_err());
        let s = gray_stack(&[0.0, 1.0]);
        let wrong = WeightMap::new(vec![vec![1.0]]).unwrap();
        assert!(pixel_weighted_mean(&s, &wrong).is_err());
        assert!(pixel_weighted_median(&s, &wrong).is_err());
    }

    #[test]
    fn median_odd_and_even() {
        assert_eq!(pixel_median(&gray_stack(&[0.1, 0.9, 0.2])).samples()[0], 0.2);
        let even = pixel_median(&gray_stack(&[0.1, 0.2, 0.8, 0.9])).samples()[0];
        assert!((even - 0.5).abs() < 1e-15);
    }

    #[test]
    fn median_rejects_single_outlier() {
        let mut images = vec![Image::filled(3, 3, 3, 0.37).unwrap(); 8];
        images.insert(4, Image::filled(3, 3, 3, 1.0).unwrap());
        let s = ImageStack::new("o", images).unwrap();
        assert!(pixel_median(&s).samples().iter().all(|&v| v == 0.37));
    }

    #[test]
    fn weighted_median_examples() {
        assert_eq!(weighted_median(&[0.0, 0.5, 1.0], &[0.6, 0.2, 0.2]), 0.0);
        assert_eq!(weighted_median(&[0.9, 0.1, 0.5], &[1.0, 1.0, 1.0]), 0.5);
        // exact half: tie resolves toward the smaller value
        assert_eq!(weighted_median(&[0.2, 0.8], &[0.5, 0.5]), 0.2);
        // mirrored weights tie exactly even where a running half-total rounds
        let (a, b) = (0.1, 0.7);
        assert_eq!(weighted_median(&[0.0, 0.25, 0.75, 1.0], &[a, b, b, a]), 0.25);
    }

    #[test]
    fn build_consensus_records_method_and_weights() {
        let s = gray_stack(&[0.1, 0.2, 0.9]);
        for m in ConsensusMethod::ALL {
            let c = build_consensus(&s, m).unwrap();
            assert_eq!(c.method, m);
            assert_eq!(c.weights.is_some(), m.is_weighted());
        }
    }

    #[test]
    fn parse_methods() {
        assert_eq!("weighted_median".parse::<ConsensusMethod>().unwrap(), ConsensusMethod::WeightedMedian);
        assert!("mode".parse::<ConsensusMethod>().is_err());
    }
}
