//! Seeded synthetic camera inconsistencies.
//!
//! A [`DistortionRecipe`] is an ordered list of per-channel or global
//! corruptions plus the seed of its noise generator. Recipes are plain data and
//! serialize to TOML, so an experiment can be replayed exactly. Noise comes
//! from ChaCha8 seeded with the recipe seed; per-camera seeds are derived from
//! a master seed by selecting ChaCha stream `index` and taking its first word.

use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, ImageStack};

/// Rec. 601 luma weights used by the saturation step.
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistortionStep {
    AdditiveGaussianNoise { sigma: f64 },
    ChannelGain { channel: usize, factor: f64 },
    ValueShift { channel: usize, offset: f64 },
    /// Scales chroma around Rec. 601 luma; a no-op on grayscale images.
    Saturation { factor: f64 },
    Brightness { offset: f64 },
    ExposureGamma { gamma: f64 },
    /// Maps `[0, 1]` linearly onto `[low, high]`.
    DynamicRangeCompress { low: f64, high: f64 },
}

impl DistortionStep {
    pub fn validate(&self, channels: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidStep(msg));
        let finite = |v: f64| v.is_finite();
        match *self {
            DistortionStep::AdditiveGaussianNoise { sigma } if !(finite(sigma) && sigma >= 0.0) => {
                bad(format!("noise sigma {sigma} must be >= 0"))
            }
            DistortionStep::ChannelGain { factor, .. } if !(finite(factor) && factor > 0.0) => {
                bad(format!("gain factor {factor} must be > 0"))
            }
            DistortionStep::Saturation { factor } if !(finite(factor) && factor > 0.0) => {
                bad(format!("saturation factor {factor} must be > 0"))
            }
            DistortionStep::ExposureGamma { gamma } if !(finite(gamma) && gamma > 0.0) => {
                bad(format!("gamma {gamma} must be > 0"))
            }
            DistortionStep::ValueShift { offset, .. } | DistortionStep::Brightness { offset }
                if !finite(offset) =>
            {
                bad(format!("offset {offset} must be finite"))
            }
            DistortionStep::DynamicRangeCompress { low, high }
                if !(finite(low) && finite(high) && 0.0 <= low && low < high && high <= 1.0) =>
            {
                bad(format!("range [{low}, {high}] must satisfy 0 <= low < high <= 1"))
            }
            DistortionStep::ChannelGain { channel, .. } | DistortionStep::ValueShift { channel, .. }
                if channel >= channels =>
            {
                bad(format!("channel {channel} out of range for {channels}-channel image"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionRecipe {
    pub seed: u64,
    #[serde(default)]
    pub steps: Vec<DistortionStep>,
}

impl DistortionRecipe {
    pub fn identity(seed: u64) -> Self {
        Self {
            seed,
            steps: Vec::new(),
        }
    }
}

/// Applies the steps in order, clamping to `[0, 1]` after each one.
pub fn apply_recipe(img: &Image, recipe: &DistortionRecipe) -> Result<Image> {
    for step in &recipe.steps {
        step.validate(img.channels())?;
    }
    let mut out = img.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);
    let channels = img.channels();
    for step in &recipe.steps {
        let samples = out.samples_mut();
        match *step {
            DistortionStep::AdditiveGaussianNoise { sigma } => {
                if sigma > 0.0 {
                    let normal = Normal::new(0.0, sigma).expect("validated sigma");
                    for s in samples.iter_mut() {
                        *s += normal.sample(&mut rng);
                    }
                }
            }
            DistortionStep::ChannelGain { channel, factor } => {
                for s in samples.iter_mut().skip(channel).step_by(channels) {
                    *s *= factor;
                }
            }
            DistortionStep::ValueShift { channel, offset } => {
                for s in samples.iter_mut().skip(channel).step_by(channels) {
                    *s += offset;
                }
            }
            DistortionStep::Saturation { factor } => {
                if channels == 3 {
                    for px in samples.chunks_exact_mut(3) {
                        let luma: f64 = px.iter().zip(LUMA).map(|(v, w)| v * w).sum();
                        for v in px.iter_mut() {
                            *v = luma + factor * (*v - luma);
                        }
                    }
                } else {
                    log::debug!("saturation step skipped on {channels}-channel image");
                }
            }
            DistortionStep::Brightness { offset } => {
                for s in samples.iter_mut() {
                    *s += offset;
                }
            }
            DistortionStep::ExposureGamma { gamma } => {
                for s in samples.iter_mut() {
                    *s = s.powf(gamma);
                }
            }
            DistortionStep::DynamicRangeCompress { low, high } => {
                for s in samples.iter_mut() {
                    *s = low + *s * (high - low);
                }
            }
        }
        out.clamp();
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Severity {
    Mild,
    #[default]
    PaperLike,
    Harsh,
}

impl FromStr for Severity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "mild" => Ok(Severity::Mild),
            "paper-like" | "paperlike" => Ok(Severity::PaperLike),
            "harsh" => Ok(Severity::Harsh),
            other => Err(Error::Config(format!("unknown severity '{other}'"))),
        }
    }
}

/// Parameter ranges a severity draws from. Pairs marked "excursion" are the
/// `(min, max)` distance from the identity value; the direction is drawn
/// with equal odds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeverityRanges {
    /// Excursion of the channel gain from 1.
    pub gain: (f64, f64),
    /// Excursion of the channel shift from 0.
    pub shift: (f64, f64),
    pub noise_sigma: (f64, f64),
    /// Excursion of the saturation factor from 1.
    pub saturation: (f64, f64),
    /// Excursion of the brightness offset from 0.
    pub brightness: (f64, f64),
    /// Excursion of `ln(gamma)` from 0.
    pub log_gamma: (f64, f64),
    /// Range of the compressed black level.
    pub range_low: (f64, f64),
    /// Range of the compressed white level.
    pub range_high: (f64, f64),
    pub max_steps: usize,
}

impl Severity {
    pub fn ranges(self) -> SeverityRanges {
        match self {
            Severity::Mild => SeverityRanges {
                gain: (0.02, 0.1),
                shift: (0.01, 0.03),
                noise_sigma: (0.002, 0.01),
                saturation: (0.03, 0.1),
                brightness: (0.01, 0.03),
                log_gamma: (0.03, 0.1),
                range_low: (0.0, 0.05),
                range_high: (0.95, 1.0),
                max_steps: 4,
            },
            Severity::PaperLike => SeverityRanges {
                gain: (0.1, 0.3),
                shift: (0.03, 0.1),
                noise_sigma: (0.01, 0.03),
                saturation: (0.15, 0.4),
                brightness: (0.03, 0.1),
                log_gamma: (0.15, 0.35),
                range_low: (0.03, 0.15),
                range_high: (0.85, 0.97),
                max_steps: 4,
            },
            Severity::Harsh => SeverityRanges {
                gain: (0.25, 0.6),
                shift: (0.08, 0.2),
                noise_sigma: (0.03, 0.06),
                saturation: (0.4, 0.8),
                brightness: (0.08, 0.2),
                log_gamma: (0.35, 0.7),
                range_low: (0.1, 0.3),
                range_high: (0.7, 0.9),
                max_steps: 4,
            },
        }
    }
}

/// Random RGB recipe: 1 to 4 steps with severity-dependent parameters.
pub fn random_recipe(seed: u64, severity: Severity) -> DistortionRecipe {
    random_recipe_for(seed, severity, 3)
}

/// Random recipe for an image with `channels` channels. Channel-specific steps
/// only target existing channels.
pub fn random_recipe_for(seed: u64, severity: Severity, channels: usize) -> DistortionRecipe {
    let r = severity.ranges();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(1..=r.max_steps);
    let mut steps = Vec::with_capacity(count);
    let uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| rng.random_range(lo..=hi);
    let excursion = |rng: &mut ChaCha8Rng, range: (f64, f64)| {
        let m = uniform(rng, range);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    };
    for _ in 0..count {
        let step = match rng.random_range(0..7u8) {
            0 => DistortionStep::AdditiveGaussianNoise {
                sigma: uniform(&mut rng, r.noise_sigma),
            },
            1 => DistortionStep::ChannelGain {
                channel: rng.random_range(0..channels),
                factor: 1.0 + excursion(&mut rng, r.gain),
            },
            2 => DistortionStep::ValueShift {
                channel: rng.random_range(0..channels),
                offset: excursion(&mut rng, r.shift),
            },
            3 => DistortionStep::Saturation {
                factor: 1.0 + excursion(&mut rng, r.saturation),
            },
            4 => DistortionStep::Brightness {
                offset: excursion(&mut rng, r.brightness),
            },
            5 => DistortionStep::ExposureGamma {
                gamma: excursion(&mut rng, r.log_gamma).exp(),
            },
            _ => DistortionStep::DynamicRangeCompress {
                low: uniform(&mut rng, r.range_low),
                high: uniform(&mut rng, r.range_high),
            },
        };
        steps.push(step);
    }
    DistortionRecipe {
        seed: rng.next_u64(),
        steps,
    }
}

/// Seed of stream `index` under `master`: the first output of ChaCha8 seeded
/// with `master` on stream `index`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

/// A distorted stack together with the clean original and the recipes used.
#[derive(Debug, Clone)]
pub struct SyntheticStack {
    pub stack: ImageStack,
    pub truth: Image,
    pub recipes: Vec<DistortionRecipe>,
}

pub fn synthesize_stack(
    truth: &Image,
    n: usize,
    master_seed: u64,
    severity: Severity,
) -> Result<SyntheticStack> {
    if n < 2 {
        return Err(Error::StackTooSmall(n));
    }
    let recipes = (0..n)
        .map(|i| random_recipe_for(derive_seed(master_seed, i as u64), severity, truth.channels()))
        .collect();
    synthesize_with_recipes(truth, recipes)
}

/// Applies the given recipes, one per camera.
pub fn synthesize_with_recipes(
    truth: &Image,
    recipes: Vec<DistortionRecipe>,
) -> Result<SyntheticStack> {
    use rayon::prelude::*;
    let images = recipes
        .par_iter()
        .map(|r| apply_recipe(truth, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticStack {
        stack: ImageStack::new("synthetic", images)?,
        truth: truth.clone(),
        recipes,
    })
}

#[derive(Serialize, Deserialize)]
struct RecipeFile {
    recipes: Vec<DistortionRecipe>,
}

/// Serializes recipes as TOML (`[[recipes]]` tables with `[[recipes.steps]]`).
pub fn recipes_to_toml(recipes: &[DistortionRecipe]) -> Result<String> {
    toml::to_string_pretty(&RecipeFile {
        recipes: recipes.to_vec(),
    })
    .map_err(|e| Error::Serialize(e.to_string()))
}

pub fn recipes_from_toml(text: &str) -> Result<Vec<DistortionRecipe>> {
    toml::from_str::<RecipeFile>(text)
        .map(|f| f.recipes)
        .map_err(|e| Error::Serialize(e.to_string()))
}
