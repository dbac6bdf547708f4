//! Color calibration of registered multi-camera stacks toward a per-pixel
//! consensus image.
//!
//! ```
//! use camcal::{build_consensus, calibrate_stack, scenes, synthesize_stack};
//! use camcal::{CalibratorKind, ConsensusMethod, FitOptions, Severity};
//!
//! let truth = scenes::builtin("checker", 48).unwrap();
//! let synthetic = synthesize_stack(&truth, 5, 42, Severity::PaperLike).unwrap();
//! let reference = build_consensus(&synthetic.stack, ConsensusMethod::Median).unwrap();
//! let out = calibrate_stack(
//!     &synthetic.stack,
//!     &reference.image,
//!     &CalibratorKind::Linear,
//!     &FitOptions::default(),
//! )
//! .unwrap();
//! assert_eq!(out.images.len(), 5);
//! ```

pub mod calibrators;
pub mod consensus;
pub mod distortion;
pub mod error;
pub mod harness;
pub mod image;
pub mod io;
pub mod metrics;
pub mod scenes;

pub use calibrators::{
    apply_model, calibrate_stack, fit, CalibratedStack, CalibrationModel, CalibratorKind,
    FitOptions, Transform,
};
pub use consensus::{
    build_consensus, build_consensus_with, ConsensusImage, ConsensusMethod, WeightConfig,
    WeightMap, WeightMode,
};
pub use distortion::{
    apply_recipe, synthesize_stack, DistortionRecipe, DistortionStep, Severity, SyntheticStack,
};
pub use error::{Error, Result};
pub use harness::{run_and_write, run_experiment, ExperimentConfig, ResultTable};
pub use image::{histogram, Histogram, Image, ImageStack};
pub use io::{load_image, save_image, BitDepth};
pub use metrics::{histogram_spread, perceptual_diff, psnr, MetricReport, Psnr};
