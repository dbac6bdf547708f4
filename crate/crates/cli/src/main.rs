use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use camcal::calibrators::{calibrate_stack, FitOptions};
use camcal::consensus::WeightConfig;
use camcal::distortion::{derive_seed, recipes_to_toml, synthesize_stack, Severity};
use camcal::harness::{
    build_reference, emit_histograms, parse_calibrators, parse_references, run_and_write, ExperimentConfig,
    InputConfig, ReferenceKind, CONFIG_TEMPLATE,
};
use camcal::io::{load_dir, load_image, save_image, BitDepth, LoadOptions};
use camcal::metrics::{report, score_stack};
use camcal::{scenes, Image, ImageStack};

#[derive(Parser)]
#[command(name = "camcal", version, about = "Consensus-image color calibration for camera arrays")]
struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write distorted camera stacks for truth images.
    Synthesize(SynthesizeArgs),
    /// Calibrate a registered stack toward a consensus or random reference.
    Calibrate(CalibrateArgs),
    /// Score a stack against a truth image.
    Evaluate(EvaluateArgs),
    /// Run the full experiment grid.
    Run(RunArgs),
    /// Write per-camera and reference histograms of a stack.
    Histograms(HistogramArgs),
}

#[derive(Args)]
struct SynthesizeArgs {
    /// Truth images: paths or builtin:checker, builtin:wedge, builtin:terrain.
    #[arg(long = "truth", required = true, num_args = 1..)]
    truth: Vec<String>,
    #[arg(long, default_value_t = 9)]
    cameras: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "paper-like")]
    severity: Severity,
    /// Stacks per truth image.
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
    /// Edge length of built-in scenes.
    #[arg(long, default_value_t = 128)]
    scene_size: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    bit_depth: u8,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Directory of registered camera images.
    #[arg(long)]
    input: PathBuf,
    /// References, comma separated: mean, weighted-mean, median, weighted-median, random.
    #[arg(long, default_value = "median")]
    consensus: String,
    /// Calibrators, comma separated: linear, polynomial-N, affine-color, ccmf-N, histogram-match.
    #[arg(long, default_value = "linear")]
    calibrator: String,
    /// Seed for the random reference draw.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    bit_depth: u8,
    #[arg(long, default_value_t = 1)]
    stride: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Directory of images to score.
    #[arg(long)]
    input: PathBuf,
    /// Clean image to score against.
    #[arg(long)]
    truth: PathBuf,
    /// Uncalibrated stack, to report before/after.
    #[arg(long)]
    before: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML). Defaults to the built-in template.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the commented default config and exit.
    #[arg(long)]
    print_config: bool,
    /// Overrides `input.master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    severity: Option<Severity>,
    #[arg(long)]
    consensus: Option<String>,
    #[arg(long)]
    calibrator: Option<String>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    emit_images: bool,
    #[arg(long)]
    emit_histograms: bool,
    #[arg(long)]
    bit_depth: Option<u8>,
}

#[derive(Args)]
struct HistogramArgs {
    #[arg(long)]
    input: PathBuf,
    /// Reference column: a consensus method or random.
    #[arg(long, default_value = "median")]
    consensus: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

/// Finished with some failed cells.
struct Partial(usize);

fn load_stack(dir: &Path) -> Result<(Vec<String>, ImageStack)> {
    let loaded = load_dir(dir, LoadOptions { strip_alpha: true })
        .with_context(|| format!("loading stack {}", dir.display()))?;
    if loaded.len() < 2 {
        bail!("{} holds {} images, need at least 2", dir.display(), loaded.len());
    }
    let (names, images): (Vec<_>, Vec<_>) = loaded.into_iter().unzip();
    let scene = dir.file_name().map_or("stack".into(), |n| n.to_string_lossy().into_owned());
    Ok((names, ImageStack::new(scene, images)?))
}

fn truth_image(spec: &str, size: usize) -> Result<(String, Image)> {
    match spec.strip_prefix("builtin:") {
        Some(name) => Ok((name.to_string(), scenes::builtin(name, size)?)),
        None => {
            let name = Path::new(spec)
                .file_stem()
                .map_or("truth".into(), |s| s.to_string_lossy().into_owned());
            Ok((name, load_image(spec).with_context(|| format!("loading {spec}"))?))
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn synthesize(a: SynthesizeArgs) -> Result<Option<Partial>> {
    let depth = BitDepth::from_bits(a.bit_depth)?;
    if a.repetitions == 0 {
        bail!("--repetitions must be at least 1");
    }
    for (s, spec) in a.truth.iter().enumerate() {
        let (name, truth) = truth_image(spec, a.scene_size)?;
        for rep in 0..a.repetitions {
            let seed = derive_seed(derive_seed(a.seed, s as u64), rep as u64);
            let synthetic = synthesize_stack(&truth, a.cameras, seed, a.severity)?;
            let dir = if a.repetitions == 1 {
                a.out.join(&name)
            } else {
                a.out.join(&name).join(format!("rep{rep:03}"))
            };
            let cams = dir.join("cameras");
            create_dir(&cams)?;
            for (i, img) in synthetic.stack.images().iter().enumerate() {
                save_image(img, cams.join(format!("cam{i:02}.png")), depth)?;
            }
            save_image(&truth, dir.join("truth.png"), depth)?;
            let recipes = dir.join("recipes.toml");
            std::fs::write(&recipes, recipes_to_toml(&synthetic.recipes)?)
                .with_context(|| format!("writing {}", recipes.display()))?;
            log::info!("wrote {}", dir.display());
        }
    }
    Ok(None)
}

fn calibrate(a: CalibrateArgs) -> Result<Option<Partial>> {
    let depth = BitDepth::from_bits(a.bit_depth)?;
    let references = parse_references(&a.consensus)?;
    let calibrators = parse_calibrators(&a.calibrator)?;
    if references.is_empty() || calibrators.is_empty() {
        bail!("--consensus and --calibrator need at least one entry");
    }
    let (names, stack) = load_stack(&a.input)?;
    let nested = references.len() > 1 || calibrators.len() > 1;
    let mut failures = 0;
    for &reference in &references {
        let ref_img = build_reference(&stack, reference, &WeightConfig::default(), a.seed)?;
        for kind in &calibrators {
            let dir = if nested {
                a.out.join(reference.name()).join(kind.name())
            } else {
                a.out.clone()
            };
            match calibrate_stack(&stack, &ref_img, kind, &FitOptions { stride: a.stride }) {
                Ok(out) => {
                    let cams = dir.join("cameras");
                    create_dir(&cams)?;
                    save_image(&ref_img, dir.join("reference.png"), depth)?;
                    for (name, img) in names.iter().zip(out.images.images()) {
                        let file = Path::new(name).with_extension("png");
                        save_image(img, cams.join(file), depth)?;
                    }
                    let models: Vec<_> = names.iter().zip(&out.models).collect();
                    let path = dir.join("models.json");
                    std::fs::write(&path, serde_json::to_string_pretty(&models)?)
                        .with_context(|| format!("writing {}", path.display()))?;
                }
                Err(e) => {
                    log::error!("{reference}/{kind}: {e}");
                    failures += 1;
                }
            }
        }
    }
    if failures == references.len() * calibrators.len() {
        bail!("every calibration failed");
    }
    Ok((failures > 0).then_some(Partial(failures)))
}

fn evaluate(a: EvaluateArgs) -> Result<Option<Partial>> {
    let (_, after) = load_stack(&a.input)?;
    let truth = load_image(&a.truth).with_context(|| format!("loading {}", a.truth.display()))?;
    let json = match &a.before {
        Some(dir) => {
            let (_, before) = load_stack(dir)?;
            let (b, f) = report(&before, &after, &truth)?;
            serde_json::json!({
                "before": b,
                "after": f,
                "delta_psnr": f.mean_psnr_db - b.mean_psnr_db,
                "delta_perceptual": f.mean_perceptual - b.mean_perceptual,
            })
        }
        None => serde_json::to_value(score_stack(&after, &truth)?)?,
    };
    println!("{}", serde_json::to_string_pretty(&json)?);
    Ok(None)
}

fn run(a: RunArgs) -> Result<Option<Partial>> {
    if a.print_config {
        print!("{CONFIG_TEMPLATE}");
        return Ok(None);
    }
    let mut cfg = match &a.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::from_toml(CONFIG_TEMPLATE)?,
    };
    if let Some(out) = a.out {
        cfg.output_dir = out;
    }
    if let Some(list) = &a.consensus {
        cfg.references = parse_references(list)?;
    }
    if let Some(list) = &a.calibrator {
        cfg.calibrators = parse_calibrators(list)?;
    }
    cfg.emit_images |= a.emit_images;
    cfg.emit_histograms |= a.emit_histograms;
    if let Some(bits) = a.bit_depth {
        cfg.bit_depth = bits;
    }
    match &mut cfg.input {
        InputConfig::Synthetic {
            master_seed,
            repetitions,
            severity,
            ..
        } => {
            if let Some(s) = a.seed {
                *master_seed = s;
            }
            if let Some(r) = a.repetitions {
                *repetitions = r;
            }
            if let Some(s) = a.severity {
                *severity = s;
            }
        }
        InputConfig::Captured {
            master_seed,
            repetitions,
            ..
        } => {
            if let Some(s) = a.seed {
                *master_seed = s;
            }
            if let Some(r) = a.repetitions {
                *repetitions = r;
            }
            if a.severity.is_some() {
                bail!("--severity only applies to synthetic input");
            }
        }
    }
    cfg.validate()?;
    let table = run_and_write(&cfg)?;
    let failures = table.failures();
    eprintln!(
        "{} cells, {failures} failed; results in {}",
        table.rows.len(),
        cfg.output_dir.join("results.csv").display()
    );
    Ok((failures > 0).then_some(Partial(failures)))
}

fn histograms(a: HistogramArgs) -> Result<Option<Partial>> {
    let kind: ReferenceKind = a.consensus.parse()?;
    let (_, stack) = load_stack(&a.input)?;
    let reference = build_reference(&stack, kind, &WeightConfig::default(), a.seed)?;
    emit_histograms(&stack, &reference, &a.out)?;
    Ok(None)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Synthesize(a) => synthesize(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Run(a) => run(a),
        Command::Histograms(a) => histograms(a),
    };
    match result {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(Partial(n))) => {
            eprintln!("warning: {n} failed cell(s)");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
