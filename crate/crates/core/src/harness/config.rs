use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::calibrators::{CalibratorKind, FitOptions};
use crate::consensus::{ConsensusMethod, WeightConfig};
use crate::distortion::Severity;
use crate::error::{Error, Result};
use crate::io::BitDepth;

/// Reference an experiment cell calibrates toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReferenceKind {
    Consensus(ConsensusMethod),
    /// A stack member chosen by the seeded generator.
    Random,
}

impl ReferenceKind {
    pub const ALL: [ReferenceKind; 5] = [
        ReferenceKind::Consensus(ConsensusMethod::Mean),
        ReferenceKind::Consensus(ConsensusMethod::WeightedMean),
        ReferenceKind::Consensus(ConsensusMethod::Median),
        ReferenceKind::Consensus(ConsensusMethod::WeightedMedian),
        ReferenceKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReferenceKind::Consensus(m) => m.name(),
            ReferenceKind::Random => "random",
        }
    }
}

impl fmt::Display for ReferenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReferenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" | "random-reference" => Ok(ReferenceKind::Random),
            other => other.parse().map(ReferenceKind::Consensus),
        }
    }
}

fn parse_list<T: FromStr<Err = Error>>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// Parses a comma separated list of reference names.
pub fn parse_references(s: &str) -> Result<Vec<ReferenceKind>> {
    parse_list(s)
}

/// Parses a comma separated list of calibrator names.
pub fn parse_calibrators(s: &str) -> Result<Vec<CalibratorKind>> {
    parse_list(s)
}

/// Serde for lists of names that round-trip through `Display`/`FromStr`.
mod names {
    use super::*;

    pub fn serialize<T: fmt::Display, S: Serializer>(v: &[T], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| x.to_string()))
    }

    pub fn deserialize<'de, T, D>(d: D) -> std::result::Result<Vec<T>, D::Error>
    where
        T: FromStr<Err = Error>,
        D: Deserializer<'de>,
    {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| s.parse().map_err(serde::de::Error::custom))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Evaluation {
    /// Score against the clean original (synthetic input only).
    #[default]
    Truth,
    /// Hold one stack member out per repetition and score against it.
    LeaveOneOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InputConfig {
    Synthetic {
        /// `builtin:<name>` or a path to a PNG/PPM truth image.
        scenes: Vec<String>,
        /// Edge length of built-in scenes.
        #[serde(default = "default_scene_size")]
        scene_size: usize,
        #[serde(default = "default_cameras")]
        cameras: usize,
        #[serde(default)]
        severity: Severity,
        master_seed: u64,
        #[serde(default = "default_repetitions")]
        repetitions: usize,
    },
    /// Directories holding one registered stack each.
    Captured {
        stacks: Vec<PathBuf>,
        #[serde(default)]
        master_seed: u64,
        #[serde(default = "default_repetitions")]
        repetitions: usize,
    },
}

fn default_scene_size() -> usize {
    128
}

fn default_cameras() -> usize {
    9
}

fn default_repetitions() -> usize {
    1
}

fn default_bit_depth() -> u8 {
    8
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("camcal-out")
}

fn default_references() -> Vec<ReferenceKind> {
    ReferenceKind::ALL.to_vec()
}

fn default_calibrators() -> Vec<CalibratorKind> {
    CalibratorKind::DEFAULTS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub input: InputConfig,
    #[serde(default = "default_references", with = "names")]
    pub references: Vec<ReferenceKind>,
    #[serde(default = "default_calibrators", with = "names")]
    pub calibrators: Vec<CalibratorKind>,
    #[serde(default)]
    pub evaluation: Evaluation,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub emit_images: bool,
    #[serde(default)]
    pub emit_histograms: bool,
    /// 8 or 16.
    #[serde(default = "default_bit_depth")]
    pub bit_depth: u8,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub weights: WeightConfig,
    #[serde(default)]
    pub fit: FitOptions,
}

/// Commented starting point for `run --config`.
pub const CONFIG_TEMPLATE: &str = r#"# Directory for results.csv, summary.csv and optional images/histograms.
output_dir = "camcal-out"
# Any of: mean, weighted-mean, median, weighted-median, random
references = ["mean", "weighted-mean", "median", "weighted-median", "random"]
# Any of: linear, polynomial-N, affine-color, ccmf-N, histogram-match
calibrators = ["linear", "polynomial-2", "affine-color", "ccmf-3", "histogram-match"]
# truth | leave-one-out
evaluation = "truth"
# Write calibrated images (PNG) and per-cell histogram CSVs.
emit_images = false
emit_histograms = false
# 8 or 16, for written images.
bit_depth = 8
# Worker threads, 0 = all cores.
workers = 0

[input]
# synthetic | captured
mode = "synthetic"
# builtin:checker, builtin:wedge, builtin:terrain, or image paths
scenes = ["builtin:checker", "builtin:wedge", "builtin:terrain"]
scene_size = 128
cameras = 9
# mild | paper-like | harsh
severity = "paper-like"
master_seed = 42
repetitions = 20

[weights]
# deviation: 1 / (1 + scale * |x - mean|); population-std: 1 / (1 + scale * std)
mode = "deviation"
scale = 1.0

[fit]
# Fit on every stride-th pixel.
stride = 1
"#;

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn depth(&self) -> Result<BitDepth> {
        BitDepth::from_bits(self.bit_depth)
    }

    pub fn repetitions(&self) -> usize {
        match &self.input {
            InputConfig::Synthetic { repetitions, .. } | InputConfig::Captured { repetitions, .. } => {
                *repetitions
            }
        }
    }

    pub fn master_seed(&self) -> u64 {
        match &self.input {
            InputConfig::Synthetic { master_seed, .. } | InputConfig::Captured { master_seed, .. } => {
                *master_seed
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.references.is_empty() {
            return bad("at least one reference must be selected");
        }
        if self.calibrators.is_empty() {
            return bad("at least one calibrator must be selected");
        }
        if self.repetitions() == 0 {
            return bad("repetitions must be at least 1");
        }
        if self.depth().is_err() {
            return bad("bit_depth must be 8 or 16");
        }
        if !(self.weights.scale.is_finite() && self.weights.scale >= 0.0) {
            return bad("weights.scale must be finite and non-negative");
        }
        if self.fit.stride == 0 {
            return bad("fit.stride must be at least 1");
        }
        match &self.input {
            InputConfig::Synthetic {
                scenes,
                scene_size,
                cameras,
                ..
            } => {
                if scenes.is_empty() {
                    return bad("input.scenes is empty");
                }
                if *scene_size == 0 {
                    return bad("input.scene_size must be positive");
                }
                let min = if self.evaluation == Evaluation::LeaveOneOut { 3 } else { 2 };
                if *cameras < min {
                    return Err(Error::Config(format!(
                        "input.cameras must be at least {min} for this evaluation"
                    )));
                }
            }
            InputConfig::Captured { stacks, .. } => {
                if stacks.is_empty() {
                    return bad("input.stacks is empty");
                }
                if self.evaluation == Evaluation::Truth {
                    return bad("captured input has no truth; use evaluation = \"leave-one-out\"");
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_parses_with_documented_defaults() {
        let cfg = ExperimentConfig::from_toml(CONFIG_TEMPLATE).unwrap();
        assert_eq!(cfg.references, ReferenceKind::ALL);
        assert_eq!(cfg.calibrators, CalibratorKind::DEFAULTS);
        assert_eq!(cfg.repetitions(), 20);
        assert_eq!(cfg.master_seed(), 42);

        let minimal = ExperimentConfig::from_toml(
            "[input]\nmode = \"synthetic\"\nscenes = [\"builtin:wedge\"]\nmaster_seed = 1\n",
        )
        .unwrap();
        let InputConfig::Synthetic { scene_size, cameras, severity, .. } = minimal.input.clone() else {
            panic!()
        };
        assert_eq!((scene_size, cameras, severity), (128, 9, Severity::PaperLike));
        assert_eq!(minimal.references, cfg.references);
        assert_eq!(minimal.calibrators, cfg.calibrators);
        assert_eq!(minimal.evaluation, cfg.evaluation);
        assert_eq!(minimal.weights, cfg.weights);
        assert_eq!(minimal.fit, cfg.fit);
        assert_eq!(minimal.output_dir, cfg.output_dir);
        assert_eq!(minimal.bit_depth, cfg.bit_depth);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::from_toml(CONFIG_TEMPLATE).unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn invalid_configs() {
        let base = ExperimentConfig::from_toml(CONFIG_TEMPLATE).unwrap();
        let check = |f: &dyn Fn(&mut ExperimentConfig)| {
            let mut c = base.clone();
            f(&mut c);
            assert!(matches!(c.validate(), Err(Error::Config(_))));
        };
        check(&|c| c.references.clear());
        check(&|c| c.calibrators.clear());
        check(&|c| c.bit_depth = 12);
        check(&|c| c.fit.stride = 0);
        check(&|c| {
            if let InputConfig::Synthetic { repetitions, .. } = &mut c.input {
                *repetitions = 0
            }
        });
        check(&|c| {
            c.input = InputConfig::Captured {
                stacks: vec!["x".into()],
                master_seed: 0,
                repetitions: 1,
            }
        });
        assert!(ExperimentConfig::from_toml("[input]\nmode = \"synthetic\"\nscenes = []\n").is_err());
        assert!(ExperimentConfig::from_toml(&format!("{CONFIG_TEMPLATE}\nbogus = 1\n")).is_err());
        assert!(ExperimentConfig::from_toml(
            &CONFIG_TEMPLATE.replace("\"ccmf-3\"", "\"ccmf-9\"")
        )
        .is_err());
    }

    #[test]
    fn reference_names() {
        for r in ReferenceKind::ALL {
            assert_eq!(r.name().parse::<ReferenceKind>().unwrap(), r);
        }
        assert_eq!(
            parse_references("median, random").unwrap(),
            vec![ReferenceKind::Consensus(ConsensusMethod::Median), ReferenceKind::Random]
        );
        assert!(parse_references("medoid").is_err());
    }
}
