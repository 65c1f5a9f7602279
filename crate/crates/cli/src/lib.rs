//! The `pinet` command line: data generation, training, refinement,
//! evaluation, gradient checking and ablation runs.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error, 3 I/O
//! error, 4 non-finite training loss, 5 joint-count mismatch, 6 prediction
//! and ground-truth count mismatch, 7 gradient check failure.

pub mod ablate;
pub mod config;
pub mod error;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use pinet_core::nn::GradCheckConfig;
use pinet_core::pinet::gradsuite::{run_suite, SuiteConfig};
use pinet_core::pinet::train_with;
use pinet_core::skeleton::{read_scenes, read_scenes_dir, write_scenes, SceneFile};
use pinet_core::synth::{make_dataset, write_dataset};
use pinet_core::{Checkpoint, MetricComparison, MetricReport, Person, Pose, Scene};
use rayon::prelude::*;

pub use config::RunConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "pinet", version, about = "Interaction-aware multi-person pose refinement")]
pub struct Cli {
    /// TOML run configuration; missing sections take their defaults.
    #[arg(long, global = true, env = "PINET_CONFIG")]
    pub config: Option<PathBuf>,
    /// Overrides both the generator and the training seed.
    #[arg(long, global = true, env = "PINET_SEED")]
    pub seed: Option<u64>,
    /// Output file or directory of the command.
    #[arg(long, global = true, env = "PINET_OUT")]
    pub out: Option<PathBuf>,
    /// Worker threads for refine and ablate (default 1).
    #[arg(long, global = true, env = "PINET_THREADS")]
    pub threads: Option<usize>,
    /// Config override `section.field=value` (TOML value syntax); repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic train/test dataset.
    Gen,
    /// Train a model on a dataset directory, scene directory or scene file.
    Train { data: PathBuf },
    /// Refine every person of every scene in a scene file.
    Refine { checkpoint: PathBuf, scenes: PathBuf },
    /// Score predictions against ground truth.
    Eval {
        /// Scene file with the predicted poses.
        pred: PathBuf,
        /// Scene file with ground truth: its `gt` field if present (its
        /// persons are then scored as the unrefined inputs), else its poses.
        gt: PathBuf,
    },
    /// Finite-difference check of every differentiable component.
    Gradcheck {
        /// Distort analytic gradients to exercise the failure path.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Train and evaluate the order × attention × direction × depth matrix.
    Ablate { data: PathBuf },
}

pub fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(seed) = cli.seed {
        cfg.apply_seed(seed);
    }
    cfg.validate()?;
    let threads = cli.threads.unwrap_or(1);
    if threads == 0 {
        return Err(CliError::Config("--threads must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Other(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Gen => cmd_gen(&cfg, &out_or(&cli.out, "data")),
        Command::Train { data } => cmd_train(&cfg, &data, &out_or(&cli.out, "checkpoint.pinet")),
        Command::Refine { checkpoint, scenes } => cmd_refine(&cfg, &checkpoint, &scenes, &out_or(&cli.out, "refined.json")),
        Command::Eval { pred, gt } => {
            let out = cli.out.clone().unwrap_or_else(|| pred.with_extension("metrics.json"));
            cmd_eval(&cfg, &pred, &gt, &out)
        }
        Command::Gradcheck { inject_fault } => cmd_gradcheck(&cfg, inject_fault),
        Command::Ablate { data } => ablate::cmd_ablate(&cfg, &data, &out_or(&cli.out, "ablation")),
    })
}

fn out_or(out: &Option<PathBuf>, default: &str) -> PathBuf {
    out.clone().unwrap_or_else(|| PathBuf::from(default))
}

/// `file.ext` → `file.ext.<suffix>`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn create_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| io_err(p, e)),
        _ => Ok(()),
    }
}

pub fn cmd_gen(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let (train, test) = make_dataset(&cfg.gen, &cfg.noise)?;
    let manifest = write_dataset(out, &cfg.gen, &cfg.noise, &train, &test)?;
    cfg.archive(&out.join("resolved_config.toml"))?;
    println!(
        "wrote {} train and {} test scenes to {}",
        manifest.train_files.len(),
        manifest.test_files.len(),
        out.display()
    );
    Ok(())
}

/// Scenes of a generated dataset (its `train` split), of a directory of
/// scene files, or of a single scene file.
pub fn load_training_scenes(data: &Path) -> CliResult<SceneFile> {
    let train = data.join("train");
    let file = if train.is_dir() {
        read_scenes_dir(&train)?
    } else if data.is_dir() {
        read_scenes_dir(data)?
    } else {
        read_scenes(data)?
    };
    Ok(file)
}

pub fn cmd_train(cfg: &RunConfig, data: &Path, out: &Path) -> CliResult<()> {
    let file = load_training_scenes(data)?;
    if file.num_joints != cfg.model.num_joints {
        return Err(CliError::JointMismatch(format!(
            "{}: scenes have {} joints, model expects {}",
            data.display(),
            file.num_joints,
            cfg.model.num_joints
        )));
    }
    create_parent(out)?;
    let log_path = sidecar(out, "log.jsonl");
    let mut log = String::new();
    let epochs = cfg.train.epochs;
    let start = Instant::now();
    let (ckpt, _) = train_with(&file.scenes, &cfg.model, &cfg.train, |r| {
        log.push_str(&serde_json::to_string(r).expect("record serializes"));
        log.push('\n');
        let _ = fs::write(&log_path, &log);
        println!(
            "epoch {:>3}/{} loss {:.6} lr {:.3e} {:.2}s",
            r.epoch + 1,
            epochs,
            r.mean_loss,
            r.lr,
            r.wall_secs
        );
    })?;
    fs::write(&log_path, &log).map_err(|e| io_err(&log_path, e))?;
    ckpt.save(out)?;
    cfg.archive(&sidecar(out, "config.toml"))?;
    println!(
        "trained on {} scenes in {:.1}s, {} updates; checkpoint {}",
        file.scenes.len(),
        start.elapsed().as_secs_f64(),
        ckpt.step,
        out.display()
    );
    Ok(())
}

/// The scenes with every person's pose replaced by its refinement; ids and
/// ground truth are kept.
pub fn refine_scenes(ckpt: &Checkpoint, scenes: &[Scene]) -> CliResult<Vec<Scene>> {
    let refined: Vec<Vec<Pose>> = scenes
        .par_iter()
        .map(|s| ckpt.model.refine_scene(s, &ckpt.stats))
        .collect::<pinet_core::Result<_>>()?;
    scenes
        .iter()
        .zip(refined)
        .map(|(s, poses)| {
            let persons = s
                .persons()
                .iter()
                .zip(poses)
                .map(|(p, pose)| Person { id: p.id, pose })
                .collect();
            Ok(Scene::new(persons, s.gt().map(<[Pose]>::to_vec))?)
        })
        .collect()
}

pub fn cmd_refine(cfg: &RunConfig, checkpoint: &Path, scenes: &Path, out: &Path) -> CliResult<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let file = read_scenes(scenes)?;
    let j = ckpt.model.config().num_joints;
    if file.num_joints != j {
        return Err(CliError::JointMismatch(format!(
            "{}: scenes have {} joints, checkpoint expects {j}",
            scenes.display(),
            file.num_joints
        )));
    }
    let refined = refine_scenes(&ckpt, &file.scenes)?;
    create_parent(out)?;
    write_scenes(out, &SceneFile::new(j, refined)?)?;
    let mut resolved = cfg.clone();
    resolved.model = ckpt.model.config().clone();
    resolved.archive(&sidecar(out, "config.toml"))?;
    println!("refined {} scenes into {}", file.scenes.len(), out.display());
    Ok(())
}

/// Metrics of `pred` against `gt`; also of the unrefined inputs when `gt`
/// carries ground truth separate from its poses.
pub fn evaluate_files(pred: &SceneFile, gt: &SceneFile) -> CliResult<(MetricReport, Option<MetricComparison>)> {
    if pred.scenes.len() != gt.scenes.len() {
        return Err(CliError::CountMismatch(format!(
            "{} predicted scenes, {} ground-truth scenes",
            pred.scenes.len(),
            gt.scenes.len()
        )));
    }
    if pred.num_joints != gt.num_joints {
        return Err(CliError::JointMismatch(format!(
            "predictions have {} joints, ground truth {}",
            pred.num_joints, gt.num_joints
        )));
    }
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    let mut inputs = Vec::new();
    let has_gt = gt.scenes.iter().all(|s| s.gt().is_some());
    for (k, (p, g)) in pred.scenes.iter().zip(&gt.scenes).enumerate() {
        if p.len() != g.len() {
            return Err(CliError::CountMismatch(format!(
                "scene {k}: {} predicted persons, {} ground-truth persons",
                p.len(),
                g.len()
            )));
        }
        preds.extend(p.poses().cloned());
        match g.gt() {
            Some(t) if has_gt => {
                truths.extend_from_slice(t);
                inputs.extend(g.poses().cloned());
            }
            _ => truths.extend(g.poses().cloned()),
        }
    }
    if preds.is_empty() {
        return Err(CliError::CountMismatch("no poses to evaluate".into()));
    }
    let report = MetricReport::compute(&preds, &truths)?;
    let comparison = if has_gt {
        Some(MetricComparison::new(MetricReport::compute(&inputs, &truths)?, report.clone()))
    } else {
        None
    };
    Ok((report, comparison))
}

pub fn cmd_eval(cfg: &RunConfig, pred: &Path, gt: &Path, out: &Path) -> CliResult<()> {
    let (report, comparison) = evaluate_files(&read_scenes(pred)?, &read_scenes(gt)?)?;
    create_parent(out)?;
    fs::write(out, report.to_json()).map_err(|e| io_err(out, e))?;
    match &comparison {
        Some(c) => {
            let path = sidecar(out, "comparison.json");
            fs::write(&path, c.to_json()).map_err(|e| io_err(&path, e))?;
            print!("{}", c.to_table());
        }
        None => print!("{}", report.to_table("pred")),
    }
    cfg.archive(&sidecar(out, "config.toml"))?;
    Ok(())
}

pub fn suite_config(cfg: &RunConfig, inject_fault: bool) -> SuiteConfig {
    let g = &cfg.gradcheck;
    SuiteConfig {
        model: cfg.model.clone(),
        seeds: g.seeds.clone(),
        check: GradCheckConfig {
            eps: g.eps,
            samples: g.samples,
            perturb_analytic: if inject_fault { 1e-3 } else { 0.0 },
            ..GradCheckConfig::default()
        },
        threshold: g.threshold,
        persons: g.persons,
    }
}

pub fn cmd_gradcheck(cfg: &RunConfig, inject_fault: bool) -> CliResult<()> {
    let start = Instant::now();
    let report = run_suite(&suite_config(cfg, inject_fault))?;
    println!("{:<18} {:>12}", "component", "max rel err");
    for (component, err) in report.per_component() {
        let mark = if err < report.threshold { "ok" } else { "FAIL" };
        println!("{component:<18} {err:>12.3e} {mark}");
    }
    println!("seeds {:?}, {:.1}s", cfg.gradcheck.seeds, start.elapsed().as_secs_f64());
    if report.passed() {
        return Ok(());
    }
    let worst = report.worst().expect("failed suite has results");
    let at = match &worst.report.worst {
        Some(c) => format!(
            " at {}[{}] (analytic {:.6e}, numeric {:.6e})",
            c.param, c.index, c.analytic, c.numeric
        ),
        None => String::new(),
    };
    Err(CliError::GradCheck(format!(
        "gradient check failed: {} (seed {}) relative error {:.3e}{at}",
        worst.component, worst.seed, worst.report.max_rel_err
    )))
}
