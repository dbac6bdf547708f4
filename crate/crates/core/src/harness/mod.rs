//! Experiment grid: synthesize or load stacks, calibrate toward every selected
//! reference with every selected calibrator, score, and write the results.

mod config;
mod output;

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::calibrators::{calibrate_stack, CalibratedStack, CalibratorKind};
use crate::consensus::build_consensus_with;
use crate::distortion::{derive_seed, recipes_to_toml, synthesize_stack, DistortionRecipe};
use crate::error::{Error, Result};
use crate::image::{Image, ImageStack};
use crate::io::{load_dir, load_image, save_image, LoadOptions};
use crate::metrics::{score_stack, MetricReport};
use crate::scenes;

pub use config::{
    parse_calibrators, parse_references, Evaluation, ExperimentConfig, InputConfig, ReferenceKind,
    CONFIG_TEMPLATE,
};
pub use output::{
    emit_csv, emit_histograms, emit_summary, parse_csv, summarize, SummaryRow, CSV_HEADER,
};

/// Scores of one successful cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellScores {
    pub psnr_before: f64,
    pub psnr_after: f64,
    pub perceptual_before: f64,
    pub perceptual_after: f64,
    pub hist_spread_before: f64,
    pub hist_spread_after: f64,
    pub delta_psnr: f64,
    pub delta_perceptual: f64,
}

impl CellScores {
    pub fn new(before: &MetricReport, after: &MetricReport) -> Self {
        Self {
            psnr_before: before.mean_psnr_db,
            psnr_after: after.mean_psnr_db,
            perceptual_before: before.mean_perceptual,
            perceptual_after: after.mean_perceptual,
            hist_spread_before: before.histogram_spread,
            hist_spread_after: after.histogram_spread,
            delta_psnr: after.mean_psnr_db - before.mean_psnr_db,
            delta_perceptual: after.mean_perceptual - before.mean_perceptual,
        }
    }

    pub fn values(&self) -> [f64; 8] {
        [
            self.psnr_before,
            self.psnr_after,
            self.perceptual_before,
            self.perceptual_after,
            self.hist_spread_before,
            self.hist_spread_after,
            self.delta_psnr,
            self.delta_perceptual,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scene: String,
    pub repetition: usize,
    pub calibrator: String,
    pub reference: String,
    /// Scores, or the error that made the cell fail.
    pub outcome: std::result::Result<CellScores, String>,
}

impl ResultRow {
    pub fn scores(&self) -> Option<&CellScores> {
        self.outcome.as_ref().ok()
    }
}

/// Rows ordered by (scene, repetition, reference, calibrator) as configured.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.outcome.is_err()).count()
    }

    pub fn find(&self, scene: &str, repetition: usize, calibrator: &str, reference: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| {
            r.scene == scene
                && r.repetition == repetition
                && r.calibrator == calibrator
                && r.reference == reference
        })
    }
}

/// One scene's input before repetitions are drawn.
enum SceneSource {
    Truth(Image),
    Captured(ImageStack),
}

struct Scene {
    name: String,
    source: SceneSource,
}

fn scene_name(spec: &str) -> String {
    match spec.strip_prefix("builtin:") {
        Some(name) => name.to_string(),
        None => Path::new(spec)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| spec.to_string()),
    }
}

fn load_scenes(cfg: &ExperimentConfig) -> Result<Vec<Scene>> {
    let opts = LoadOptions { strip_alpha: true };
    let scenes: Vec<Scene> = match &cfg.input {
        InputConfig::Synthetic {
            scenes, scene_size, ..
        } => scenes
            .iter()
            .map(|spec| {
                let truth = match spec.strip_prefix("builtin:") {
                    Some(name) => scenes::builtin(name, *scene_size)?,
                    None => load_image(spec)?,
                };
                Ok(Scene {
                    name: scene_name(spec),
                    source: SceneSource::Truth(truth),
                })
            })
            .collect::<Result<_>>()?,
        InputConfig::Captured { stacks, .. } => stacks
            .iter()
            .map(|dir| {
                let images = load_dir(dir, opts)?.into_iter().map(|(_, img)| img).collect();
                let name = scene_name(&dir.to_string_lossy());
                Ok(Scene {
                    source: SceneSource::Captured(ImageStack::new(name.clone(), images)?),
                    name,
                })
            })
            .collect::<Result<_>>()?,
    };
    for (i, a) in scenes.iter().enumerate() {
        if scenes[..i].iter().any(|b| b.name == a.name) {
            return Err(Error::Config(format!("duplicate scene name '{}'", a.name)));
        }
    }
    Ok(scenes)
}

/// Stack to calibrate, the image it is scored against, and the recipes used.
struct Prepared {
    stack: ImageStack,
    target: Image,
    recipes: Vec<DistortionRecipe>,
    /// Camera index of the random reference within `stack`.
    random_index: usize,
}

fn prepare(cfg: &ExperimentConfig, scene: &Scene, scene_index: usize, rep: usize) -> Result<Prepared> {
    let rep_seed = derive_seed(derive_seed(cfg.master_seed(), scene_index as u64), rep as u64);
    let (stack, truth, recipes) = match (&scene.source, &cfg.input) {
        (SceneSource::Truth(truth), InputConfig::Synthetic { cameras, severity, .. }) => {
            let s = synthesize_stack(truth, *cameras, rep_seed, *severity)?;
            (s.stack, Some(s.truth), s.recipes)
        }
        (SceneSource::Captured(stack), _) => (stack.clone(), None, Vec::new()),
        (SceneSource::Truth(_), _) => unreachable!("truth scenes come from synthetic input"),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(rep_seed, u64::MAX));
    let (stack, target) = match cfg.evaluation {
        Evaluation::Truth => (stack, truth.expect("validated: truth evaluation needs synthetic input")),
        Evaluation::LeaveOneOut => {
            let held = rng.random_range(0..stack.len());
            let mut images = stack.into_images();
            let target = images.remove(held);
            (ImageStack::new(scene.name.clone(), images)?, target)
        }
    };
    let random_index = rng.random_range(0..stack.len());
    let stack = ImageStack::new(scene.name.clone(), stack.into_images())?;
    Ok(Prepared {
        stack,
        target,
        recipes,
        random_index,
    })
}

fn reference_image(cfg: &ExperimentConfig, p: &Prepared, kind: ReferenceKind) -> Result<Image> {
    match kind {
        ReferenceKind::Consensus(method) => {
            Ok(build_consensus_with(&p.stack, method, &cfg.weights)?.image)
        }
        ReferenceKind::Random => Ok(p.stack.images()[p.random_index].clone()),
    }
}

/// Builds a reference outside the grid; `Random` picks the camera with a
/// generator seeded by `seed`.
pub fn build_reference(
    stack: &ImageStack,
    kind: ReferenceKind,
    weights: &crate::consensus::WeightConfig,
    seed: u64,
) -> Result<Image> {
    match kind {
        ReferenceKind::Consensus(method) => Ok(build_consensus_with(stack, method, weights)?.image),
        ReferenceKind::Random => {
            let index = ChaCha8Rng::seed_from_u64(seed).random_range(0..stack.len());
            log::info!("random reference: camera {index}");
            Ok(stack.images()[index].clone())
        }
    }
}

fn cell_dir(out: &Path, scene: &str, rep: usize) -> PathBuf {
    out.join(scene).join(format!("rep{rep:03}"))
}

fn write_stack(stack: &ImageStack, dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    for (i, img) in stack.images().iter().enumerate() {
        save_image(img, dir.join(format!("cam{i:02}.png")), cfg.depth()?)?;
    }
    Ok(())
}

fn failed(scene: &str, rep: usize, calibrator: &str, reference: &str, err: &Error) -> ResultRow {
    log::warn!("{scene} rep {rep} {reference}/{calibrator} failed: {err}");
    ResultRow {
        scene: scene.to_string(),
        repetition: rep,
        calibrator: calibrator.to_string(),
        reference: reference.to_string(),
        outcome: Err(err.to_string()),
    }
}

/// Runs one (scene, repetition) cell for every reference and calibrator.
fn run_cell(
    cfg: &ExperimentConfig,
    scene: &Scene,
    scene_index: usize,
    rep: usize,
    out: Option<&Path>,
) -> Result<Vec<ResultRow>> {
    let p = prepare(cfg, scene, scene_index, rep)?;
    let before = score_stack(&p.stack, &p.target)?;
    let dir = out.map(|o| cell_dir(&o.join("cells"), &scene.name, rep));
    if let Some(dir) = &dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        if !p.recipes.is_empty() {
            let path = dir.join("recipes.toml");
            std::fs::write(&path, recipes_to_toml(&p.recipes)?)
                .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        }
        if cfg.emit_images {
            write_stack(&p.stack, &dir.join("input"), cfg)?;
        }
    }
    let mut rows = Vec::with_capacity(cfg.references.len() * cfg.calibrators.len());
    for &reference in &cfg.references {
        let ref_name = reference.name();
        let ref_img = match reference_image(cfg, &p, reference) {
            Ok(img) => img,
            Err(e) => {
                for kind in &cfg.calibrators {
                    rows.push(failed(&scene.name, rep, &kind.name(), ref_name, &e));
                }
                continue;
            }
        };
        let ref_dir = dir.as_ref().map(|d| d.join(ref_name));
        if let Some(d) = &ref_dir {
            if cfg.emit_images || cfg.emit_histograms {
                std::fs::create_dir_all(d).map_err(|e| Error::io(format!("creating {}", d.display()), e))?;
            }
            if cfg.emit_images {
                save_image(&ref_img, d.join("reference.png"), cfg.depth()?)?;
            }
            if cfg.emit_histograms {
                emit_histograms(&p.stack, &ref_img, d.join("histogram_before.csv"))?;
            }
        }
        for kind in &cfg.calibrators {
            let name = kind.name();
            match calibrate_and_score(&p, &ref_img, kind, cfg, &before) {
                Ok((calibrated, scores)) => {
                    if let Some(d) = &ref_dir {
                        if cfg.emit_images {
                            write_stack(&calibrated.images, &d.join(&name), cfg)?;
                        }
                        if cfg.emit_histograms {
                            emit_histograms(
                                &calibrated.images,
                                &ref_img,
                                d.join(format!("histogram_{name}.csv")),
                            )?;
                        }
                    }
                    rows.push(ResultRow {
                        scene: scene.name.clone(),
                        repetition: rep,
                        calibrator: name,
                        reference: ref_name.to_string(),
                        outcome: Ok(scores),
                    });
                }
                Err(e) => rows.push(failed(&scene.name, rep, &name, ref_name, &e)),
            }
        }
    }
    Ok(rows)
}

fn calibrate_and_score(
    p: &Prepared,
    reference: &Image,
    kind: &CalibratorKind,
    cfg: &ExperimentConfig,
    before: &MetricReport,
) -> Result<(CalibratedStack, CellScores)> {
    let calibrated = calibrate_stack(&p.stack, reference, kind, &cfg.fit)?;
    let after = score_stack(&calibrated.images, &p.target)?;
    if after.per_camera.iter().any(|m| !m.psnr_db.is_finite() || !m.perceptual.is_finite()) {
        return Err(Error::InvalidModel("non-finite score".into()));
    }
    Ok((calibrated, CellScores::new(before, &after)))
}

fn run(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ResultTable> {
    cfg.validate()?;
    let scenes = load_scenes(cfg)?;
    let jobs: Vec<(usize, usize)> = (0..scenes.len())
        .flat_map(|s| (0..cfg.repetitions()).map(move |r| (s, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let cells: Vec<Vec<ResultRow>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(s, r)| {
                let scene = &scenes[s];
                run_cell(cfg, scene, s, r, out).or_else(|e| match e {
                    // I/O problems are fatal; everything else fails the cell
                    Error::Io { .. } | Error::Write { .. } => Err(e),
                    e => Ok(cfg
                        .references
                        .iter()
                        .flat_map(|rk| {
                            cfg.calibrators
                                .iter()
                                .map(|k| failed(&scene.name, r, &k.name(), rk.name(), &e))
                                .collect::<Vec<_>>()
                        })
                        .collect()),
                })
            })
            .collect::<Result<_>>()
    })?;
    Ok(ResultTable {
        rows: cells.into_iter().flatten().collect(),
    })
}

/// Runs the configured grid in memory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    run(cfg, None)
}

/// Runs the grid and writes `results.csv`, `summary.csv`, the resolved
/// config, per-cell recipes, and the optional images and histograms under
/// `cfg.output_dir`.
pub fn run_and_write(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    let table = run(cfg, Some(out))?;
    let path = out.join("config.toml");
    std::fs::write(&path, cfg.to_toml()?).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    emit_csv(&table, out.join("results.csv"))?;
    emit_summary(&summarize(&table), out.join("summary.csv"))?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::ConsensusMethod;
    use crate::distortion::Severity;

    fn config(evaluation: Evaluation, reps: usize) -> ExperimentConfig {
        ExperimentConfig {
            input: InputConfig::Synthetic {
                scenes: vec!["builtin:checker".into(), "builtin:wedge".into()],
                scene_size: 24,
                cameras: 4,
                severity: Severity::PaperLike,
                master_seed: 7,
                repetitions: reps,
            },
            references: ReferenceKind::ALL.to_vec(),
            calibrators: CalibratorKind::DEFAULTS.to_vec(),
            evaluation,
            output_dir: PathBuf::from("unused"),
            emit_images: false,
            emit_histograms: false,
            bit_depth: 8,
            workers: 2,
            weights: Default::default(),
            fit: Default::default(),
        }
    }

    #[test]
    fn grid_is_complete_and_ordered() {
        let cfg = config(Evaluation::Truth, 2);
        let table = run_experiment(&cfg).unwrap();
        assert_eq!(table.rows.len(), 2 * 2 * 5 * 5);
        assert_eq!(table.failures(), 0);
        let keys: Vec<_> = table
            .rows
            .iter()
            .map(|r| (r.scene.clone(), r.repetition, r.reference.clone(), r.calibrator.clone()))
            .collect();
        assert_eq!(keys[0], ("checker".into(), 0, "mean".into(), "linear".into()));
        assert_eq!(keys[5].2, "weighted-mean");
        assert_eq!(keys[25].1, 1);
        assert_eq!(keys[50].0, "wedge");
        for row in &table.rows {
            let s = row.scores().unwrap();
            assert_eq!(s.delta_psnr, s.psnr_after - s.psnr_before);
            assert_eq!(s.delta_perceptual, s.perceptual_after - s.perceptual_before);
        }
    }

    #[test]
    fn identity_distortions_give_zero_deltas() {
        // one camera per stack would be too small; identical cameras instead
        let truth = scenes::builtin("terrain", 20).unwrap();
        let stack = ImageStack::new("id", vec![truth.clone(); 4]).unwrap();
        let scene = Scene {
            name: "id".into(),
            source: SceneSource::Captured(stack),
        };
        let mut cfg = config(Evaluation::LeaveOneOut, 1);
        cfg.input = InputConfig::Captured {
            stacks: vec!["id".into()],
            master_seed: 3,
            repetitions: 1,
        };
        let rows = run_cell(&cfg, &scene, 0, 0, None).unwrap();
        assert_eq!(rows.len(), 25);
        for row in rows {
            let s = row.scores().unwrap();
            assert!(s.delta_psnr.abs() < 1e-9, "{row:?}");
            assert!(s.delta_perceptual.abs() < 1e-6, "{row:?}");
            assert_eq!(s.hist_spread_after, 0.0);
        }
    }

    #[test]
    fn deterministic_across_worker_counts() {
        let mut cfg = config(Evaluation::LeaveOneOut, 2);
        let a = run_experiment(&cfg).unwrap();
        cfg.workers = 1;
        assert_eq!(a, run_experiment(&cfg).unwrap());
    }

    #[test]
    fn leave_one_out_never_references_held_out_image() {
        let cfg = config(Evaluation::LeaveOneOut, 1);
        let scene = Scene {
            name: "checker".into(),
            source: SceneSource::Truth(scenes::builtin("checker", 16).unwrap()),
        };
        for rep in 0..20 {
            let p = prepare(&cfg, &scene, 0, rep).unwrap();
            assert_eq!(p.stack.len(), 3);
            let random = reference_image(&cfg, &p, ReferenceKind::Random).unwrap();
            assert_ne!(random, p.target);
        }
    }

    #[test]
    fn unknown_scene_is_fatal() {
        let mut cfg = config(Evaluation::Truth, 1);
        cfg.input = InputConfig::Synthetic {
            scenes: vec!["builtin:nope".into()],
            scene_size: 8,
            cameras: 3,
            severity: Severity::Mild,
            master_seed: 0,
            repetitions: 1,
        };
        assert!(run_experiment(&cfg).is_err());
        cfg.input = InputConfig::Synthetic {
            scenes: vec!["/nonexistent/truth.png".into()],
            scene_size: 8,
            cameras: 3,
            severity: Severity::Mild,
            master_seed: 0,
            repetitions: 1,
        };
        let err = run_experiment(&cfg).unwrap_err().to_string();
        assert!(err.contains("/nonexistent/truth.png"), "{err}");
    }

    #[test]
    fn median_reference_helps_linear_on_average() {
        let cfg = config(Evaluation::Truth, 3);
        let table = run_experiment(&cfg).unwrap();
        let mean_delta = |reference: &str| {
            let v: Vec<f64> = table
                .rows
                .iter()
                .filter(|r| r.calibrator == "linear" && r.reference == reference)
                .map(|r| r.scores().unwrap().delta_psnr)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean_delta(ConsensusMethod::Median.name()) > 0.0);
    }
}
