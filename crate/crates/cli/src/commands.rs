//! The six subcommands. Every artifact-producing command resolves its
//! full configuration up front (flags, then config file, then defaults),
//! runs, and writes a manifest next to its primary output.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use metaenc::autoenc::{
    analytic_line_model, normalize_ae, reconstruction_mse, train_ae, AeArchId, AeRecord,
    TrainConfig, TrainStats,
};
use metaenc::classes::{arc_grid, circle_grid, line_grid, radius_grid, ClassSpec};
use metaenc::corpus::{
    build_corpus, derive_seed, split, BuildConfig, Corpus, Provenance, SplitMode,
};
use metaenc::mae::{
    exec_loss, load_mae, save_mae, train_mae_restarts, ExecLossConfig, FeatureTransform,
    LossBalance, MaeArch, MaeTrainConfig,
};
use metaenc::nngraph::{gradient_suite, NetModel};
use metaenc::report::{emit_points_figure, eval_mae};

use crate::manifest::Manifest;
use crate::Ctx;

const GRID_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Line,
    Circle,
    Arc,
}

/// A saved class grid, the unit gen-classes emits and build-corpus
/// consumes.
#[derive(Debug, Serialize, Deserialize)]
struct ClassGridDoc {
    schema_version: u32,
    classes: Vec<ClassSpec>,
}

impl ClassGridDoc {
    fn save(classes: &[ClassSpec], path: &Path) -> anyhow::Result<()> {
        let doc = ClassGridDoc {
            schema_version: GRID_SCHEMA_VERSION,
            classes: classes.to_vec(),
        };
        fs::write(path, serde_json::to_vec_pretty(&doc)?)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }

    fn load(path: &Path) -> anyhow::Result<Vec<ClassSpec>> {
        let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        let doc: ClassGridDoc = serde_json::from_slice(&bytes)
            .with_context(|| format!("{} is not a class grid", path.display()))?;
        if doc.schema_version != GRID_SCHEMA_VERSION {
            bail!(
                "{}: class grid schema {} unsupported",
                path.display(),
                doc.schema_version
            );
        }
        for c in &doc.classes {
            c.validate()?;
        }
        if doc.classes.is_empty() {
            bail!("{}: class grid is empty", path.display());
        }
        Ok(doc.classes)
    }
}

fn sha256_value(value: &impl Serialize) -> anyhow::Result<String> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(value)?)))
}

/// Integer-degree line grid covering [-80, 80) with `classes` evenly
/// spaced angles: step = 160/classes, centered within each step. 16 →
/// {-75, -65, ..., 75}; 160 → every integer degree.
fn centered_line_grid(classes: usize) -> anyhow::Result<Vec<ClassSpec>> {
    if classes == 0 || 160 % classes != 0 {
        bail!("--classes must divide the 160 integer degrees in [-80, 80), got {classes}");
    }
    let step = (160 / classes) as i32;
    let start = -80 + step / 2;
    Ok(line_grid(start, step, classes)?)
}

// --- gen-classes -----------------------------------------------------------

#[derive(Args, Debug)]
pub struct GenClassesArgs {
    /// Class family to enumerate.
    #[arg(long, value_enum)]
    family: Family,
    /// First line angle in degrees (lines only).
    #[arg(long, allow_negative_numbers = true)]
    start_deg: Option<i32>,
    /// Angle step in degrees (lines only).
    #[arg(long)]
    step_deg: Option<i32>,
    /// Number of classes in the grid.
    #[arg(long)]
    count: Option<usize>,
    /// Smallest radius (circles and arcs).
    #[arg(long)]
    r_lo: Option<f64>,
    /// Largest radius (circles and arcs).
    #[arg(long)]
    r_hi: Option<f64>,
    /// Arc start angle in radians.
    #[arg(long, allow_negative_numbers = true)]
    angle_lo: Option<f64>,
    /// Arc end angle in radians.
    #[arg(long, allow_negative_numbers = true)]
    angle_hi: Option<f64>,
    #[arg(long, default_value = "classes.json")]
    out: PathBuf,
}

#[derive(Serialize)]
struct GenClassesConfig {
    family: String,
    classes: Vec<ClassSpec>,
}

pub fn gen_classes(ctx: &Ctx, args: GenClassesArgs) -> anyhow::Result<u8> {
    let classes = match args.family {
        Family::Line => {
            let start = ctx.resolve(args.start_deg, "start-deg", -75)?;
            let step = ctx.resolve(args.step_deg, "step-deg", 10)?;
            let count = ctx.resolve(args.count, "count", 16)?;
            line_grid(start, step, count)?
        }
        Family::Circle | Family::Arc => {
            let r_lo = ctx.resolve(args.r_lo, "r-lo", 1.0)?;
            let r_hi = ctx.resolve(args.r_hi, "r-hi", 10.0)?;
            let count = ctx.resolve(args.count, "count", 10)?;
            let radii = radius_grid(r_lo, r_hi, count);
            if args.family == Family::Circle {
                circle_grid(&radii)?
            } else {
                let lo = ctx.resolve(args.angle_lo, "angle-lo", PI / 6.0)?;
                let hi = ctx.resolve(args.angle_hi, "angle-hi", PI / 3.0)?;
                arc_grid(&radii, lo, hi)?
            }
        }
    };
    ClassGridDoc::save(&classes, &args.out)?;

    let mut manifest = Manifest::new(
        "gen-classes",
        GenClassesConfig {
            family: format!("{:?}", args.family).to_lowercase(),
            classes: classes.clone(),
        },
    )?;
    manifest.add_output(&args.out)?;
    let mpath = manifest.write_next_to(&args.out)?;
    println!(
        "wrote {} classes to {} (manifest {})",
        classes.len(),
        args.out.display(),
        mpath.display()
    );
    Ok(0)
}

// --- train-ae --------------------------------------------------------------

#[derive(Args, Debug)]
pub struct TrainAeArgs {
    /// Class spec as JSON, e.g. '{"family":"line","theta_deg":30}' or
    /// '{"family":"arc","r":2.0,"angle_lo":0.5236,"angle_hi":1.0472}'.
    #[arg(long = "class", value_name = "JSON")]
    class_spec: String,
    /// Training points sampled from the class (a disjoint sample of the
    /// same size measures the test RMSE).
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    /// Keep arc records as trained instead of canonicalizing their
    /// hidden-neuron order.
    #[arg(long)]
    no_normalize: bool,
    #[arg(long, default_value = "ae.json")]
    out: PathBuf,
}

#[derive(Serialize)]
struct TrainAeConfig {
    class: ClassSpec,
    arch: AeArchId,
    points: usize,
    train: TrainConfig,
    normalize: bool,
    seed: u64,
}

pub fn train_ae_cmd(ctx: &Ctx, args: TrainAeArgs) -> anyhow::Result<u8> {
    let class: ClassSpec = serde_json::from_str(&args.class_spec)
        .with_context(|| format!("--class {:?}", args.class_spec))?;
    class.validate()?;
    let arch = match class {
        ClassSpec::Line { .. } => AeArchId::Line212,
        ClassSpec::Circle { .. } | ClassSpec::Arc { .. } => AeArchId::Arc28122,
    };
    let defaults = TrainConfig::default_for(arch);
    let train = TrainConfig {
        epochs: ctx.resolve(args.epochs, "epochs", defaults.epochs)?,
        batch_size: ctx.resolve(args.batch_size, "batch-size", defaults.batch_size)?,
        lr: ctx.resolve(args.lr, "lr", defaults.lr)?,
        lr_decay: ctx.resolve(args.lr_decay, "lr-decay", defaults.lr_decay)?,
    };
    let points = ctx.resolve(
        args.points,
        "points",
        BuildConfig::default_for(arch).points_per_ae,
    )?;
    let normalize = arch == AeArchId::Arc28122 && !args.no_normalize;
    let config = TrainAeConfig {
        class,
        arch,
        points,
        train,
        normalize,
        seed: ctx.seed,
    };

    let started = Instant::now();
    let mut rec = train_ae(arch, class, points, &train, ctx.seed)?;
    if normalize {
        rec = normalize_ae(&rec)?;
    }
    println!(
        "trained {} in {:.1}s: train rmse {:.6}, test rmse {:.6}",
        class.label(),
        started.elapsed().as_secs_f64(),
        rec.train_stats.final_train_rmse,
        rec.train_stats.final_test_rmse,
    );

    // a one-record corpus, so every other subcommand can consume it
    let corpus = Corpus::new(
        arch,
        vec![rec],
        Provenance {
            family: vec![class],
            root_seed: ctx.seed,
            config_digest: sha256_value(&config)?,
        },
    )?;
    corpus.save(&args.out)?;

    let mut manifest = Manifest::new("train-ae", config)?;
    manifest.add_output(&args.out)?;
    let mpath = manifest.write_next_to(&args.out)?;
    println!(
        "saved {} (manifest {})",
        args.out.display(),
        mpath.display()
    );
    Ok(0)
}

// --- build-corpus ----------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Small grids that finish in seconds to minutes.
    Desk,
    /// Full-scale grids (160 line classes × 10 AEs).
    Full,
}

#[derive(Args, Debug)]
pub struct BuildCorpusArgs {
    /// Class family to build over (generated grid).
    #[arg(long, value_enum, required_unless_present = "classes_file")]
    family: Option<Family>,
    /// Use an explicit grid from gen-classes instead of --family.
    #[arg(long, value_name = "FILE", conflicts_with = "family")]
    classes_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    /// Grid size; for lines this must divide 160 (desk 16, full 160).
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    aes_per_class: Option<usize>,
    /// Training points per AE.
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    /// Inclusion threshold on test RMSE (relative to r for circles/arcs).
    #[arg(long)]
    rmse_tol: Option<f64>,
    /// Retrains per AE before it is dropped.
    #[arg(long)]
    max_retries: Option<usize>,
    /// Radius range for generated circle/arc grids.
    #[arg(long)]
    r_lo: Option<f64>,
    #[arg(long)]
    r_hi: Option<f64>,
    /// Angular extent for generated arc grids (radians).
    #[arg(long, allow_negative_numbers = true)]
    angle_lo: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    angle_hi: Option<f64>,
    #[arg(long, default_value = "corpus.json")]
    out: PathBuf,
}

#[derive(Serialize)]
struct BuildCorpusConfig {
    arch: AeArchId,
    classes: Vec<ClassSpec>,
    build: BuildConfig,
    seed: u64,
}

pub fn build_corpus_cmd(ctx: &Ctx, args: BuildCorpusArgs) -> anyhow::Result<u8> {
    let classes = match (&args.classes_file, args.family) {
        (Some(path), _) => ClassGridDoc::load(path)?,
        (None, Some(Family::Line)) => {
            let n = ctx.resolve(
                args.classes,
                "classes",
                match args.preset {
                    Preset::Desk => 16,
                    Preset::Full => 160,
                },
            )?;
            centered_line_grid(n)?
        }
        (None, Some(family)) => {
            let n = ctx.resolve(args.classes, "classes", 10)?;
            let r_lo = ctx.resolve(args.r_lo, "r-lo", 1.0)?;
            let r_hi = ctx.resolve(args.r_hi, "r-hi", 10.0)?;
            let radii = radius_grid(r_lo, r_hi, n);
            if family == Family::Circle {
                circle_grid(&radii)?
            } else {
                let lo = ctx.resolve(args.angle_lo, "angle-lo", PI / 6.0)?;
                let hi = ctx.resolve(args.angle_hi, "angle-hi", PI / 3.0)?;
                arc_grid(&radii, lo, hi)?
            }
        }
        (None, None) => unreachable!("clap requires --family or --classes-file"),
    };
    let arch = if matches!(classes[0], ClassSpec::Line { .. }) {
        AeArchId::Line212
    } else {
        AeArchId::Arc28122
    };

    let defaults = BuildConfig::default_for(arch);
    let aes_per_class = ctx.resolve(
        args.aes_per_class,
        "aes-per-class",
        match args.preset {
            Preset::Desk => defaults.aes_per_class,
            Preset::Full => 10,
        },
    )?;
    let build = BuildConfig {
        aes_per_class,
        points_per_ae: ctx.resolve(args.points, "points", defaults.points_per_ae)?,
        train: TrainConfig {
            epochs: ctx.resolve(args.epochs, "epochs", defaults.train.epochs)?,
            batch_size: ctx.resolve(args.batch_size, "batch-size", defaults.train.batch_size)?,
            lr: ctx.resolve(args.lr, "lr", defaults.train.lr)?,
            lr_decay: ctx.resolve(args.lr_decay, "lr-decay", defaults.train.lr_decay)?,
        },
        rmse_tolerance: ctx.resolve(args.rmse_tol, "rmse-tol", defaults.rmse_tolerance)?,
        max_retries: ctx.resolve(args.max_retries, "max-retries", defaults.max_retries)?,
    };
    let config = BuildCorpusConfig {
        arch,
        classes: classes.clone(),
        build: build.clone(),
        seed: ctx.seed,
    };

    let mut manifest = Manifest::new("build-corpus", &config)?;
    if let Some(path) = &args.classes_file {
        manifest.add_input(path)?;
    }

    let started = Instant::now();
    let corpus = build_corpus(arch, &classes, &build, ctx.seed, ctx.parallel)?;
    corpus.save(&args.out)?;
    println!(
        "built {} records over {} classes in {:.1}s",
        corpus.len(),
        classes.len(),
        started.elapsed().as_secs_f64()
    );

    manifest.add_output(&args.out)?;
    let mpath = manifest.write_next_to(&args.out)?;
    println!(
        "saved {} (manifest {})",
        args.out.display(),
        mpath.display()
    );
    Ok(0)
}

// --- train-mae -------------------------------------------------------------

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MaeArchFlag {
    Line818,
    Arc9,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum BalanceFlag {
    Uniform,
    RelativeRadius,
}

#[derive(Args, Debug)]
pub struct TrainMaeArgs {
    /// Corpus of trained AEs to model.
    #[arg(long, required_unless_present = "replay")]
    corpus: Option<PathBuf>,
    /// MAE architecture; inferred from the corpus when omitted.
    #[arg(long, value_enum)]
    arch: Option<MaeArchFlag>,
    /// Holdout as mode:fraction, e.g. by_class:0.25 or by_record:0.25.
    #[arg(long)]
    split: Option<String>,
    /// Seed of the holdout shuffle (defaults to the root seed).
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    /// Per-record loss weighting inside training batches.
    #[arg(long, value_enum)]
    balance: Option<BalanceFlag>,
    /// Weight of the optional feature-space MSE term (0 = pure
    /// execution loss).
    #[arg(long)]
    param_loss_weight: Option<f64>,
    /// Independent trainings; the lowest final train loss wins.
    #[arg(long)]
    restarts: Option<usize>,
    /// Also save the split sides as <DIR>/train.json and <DIR>/test.json.
    #[arg(long, value_name = "DIR")]
    save_split: Option<PathBuf>,
    /// Re-run a previous training from its manifest; the manifest's
    /// configuration and seeds win over flags, and the result is checked
    /// against the recorded output hash.
    #[arg(
        long,
        value_name = "MANIFEST",
        conflicts_with_all = [
            "corpus", "arch", "split", "split_seed", "epochs", "batch_size",
            "lr", "lr_decay", "balance", "param_loss_weight", "restarts",
        ]
    )]
    replay: Option<PathBuf>,
    #[arg(long, default_value = "mae.json")]
    out: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct TrainMaeConfig {
    arch: MaeArch,
    corpus: String,
    split_mode: SplitMode,
    test_fraction: f64,
    split_seed: u64,
    exec: ExecLossConfig,
    train: MaeTrainConfig,
    restarts: usize,
    seed: u64,
}

fn parse_split(s: &str) -> anyhow::Result<(SplitMode, f64)> {
    let (mode, frac) = s
        .split_once(':')
        .ok_or_else(|| anyhow!("--split must look like by_class:0.25, got {s:?}"))?;
    let mode = match mode {
        "by_class" => SplitMode::ByClass,
        "by_record" => SplitMode::ByRecord,
        other => bail!("unknown split mode {other:?} (expected by_class or by_record)"),
    };
    let frac: f64 = frac
        .parse()
        .with_context(|| format!("split fraction {frac:?}"))?;
    Ok((mode, frac))
}

pub fn train_mae_cmd(ctx: &Ctx, args: TrainMaeArgs) -> anyhow::Result<u8> {
    let (config, recorded_output) = match &args.replay {
        Some(mpath) => {
            let manifest = Manifest::load(mpath)?;
            if manifest.command != "train-mae" {
                bail!(
                    "{} records a {:?} run, not train-mae",
                    mpath.display(),
                    manifest.command
                );
            }
            manifest.verify_inputs()?;
            let config: TrainMaeConfig = manifest.config_as()?;
            let recorded = manifest
                .outputs
                .first()
                .map(|f| f.sha256.clone())
                .ok_or_else(|| anyhow!("{} records no outputs", mpath.display()))?;
            (config, Some(recorded))
        }
        None => {
            let corpus_path = args.corpus.as_ref().expect("clap requires --corpus");
            let peek = Corpus::load(corpus_path)?;
            let arch = match (args.arch, peek.arch) {
                (Some(MaeArchFlag::Line818), _) => MaeArch::line818(),
                (Some(MaeArchFlag::Arc9), _) => MaeArch::Arc9,
                (None, AeArchId::Line212) => MaeArch::line818(),
                (None, AeArchId::Arc28122) => MaeArch::Arc9,
            };
            let default_split = match arch {
                MaeArch::Line818 { .. } => "by_class:0.25",
                MaeArch::Arc9 => "by_record:0.25",
            };
            let split_str = ctx.resolve(args.split.clone(), "split", default_split.to_string())?;
            let (split_mode, test_fraction) = parse_split(&split_str)?;
            let d = MaeTrainConfig::default_for(arch);
            let train = MaeTrainConfig {
                epochs: ctx.resolve(args.epochs, "epochs", d.epochs)?,
                batch_size: ctx.resolve(args.batch_size, "batch-size", d.batch_size)?,
                lr: ctx.resolve(args.lr, "lr", d.lr)?,
                lr_decay: ctx.resolve(args.lr_decay, "lr-decay", d.lr_decay)?,
                param_loss_weight: ctx.resolve(
                    args.param_loss_weight,
                    "param-loss-weight",
                    d.param_loss_weight,
                )?,
                balance: match args.balance {
                    Some(BalanceFlag::Uniform) => LossBalance::Uniform,
                    Some(BalanceFlag::RelativeRadius) => LossBalance::RelativeRadius,
                    None => d.balance,
                },
            };
            let restarts = ctx.resolve(
                args.restarts,
                "restarts",
                match arch {
                    MaeArch::Line818 { .. } => 6,
                    MaeArch::Arc9 => 8,
                },
            )?;
            let config = TrainMaeConfig {
                arch,
                corpus: corpus_path.display().to_string(),
                split_mode,
                test_fraction,
                split_seed: ctx.resolve(args.split_seed, "split-seed", ctx.seed)?,
                exec: ExecLossConfig::default_for(arch.ae_arch()),
                train,
                restarts,
                seed: ctx.seed,
            };
            (config, None)
        }
    };

    let corpus_path = PathBuf::from(&config.corpus);
    let corpus = Corpus::load(&corpus_path)?;
    let mut manifest = Manifest::new("train-mae", &config)?;
    manifest.add_input(&corpus_path)?;

    let (train_side, test_side) = split(
        &corpus,
        config.test_fraction,
        config.split_mode,
        config.split_seed,
    )?;
    println!(
        "split {} records into {} train / {} test ({:?})",
        corpus.len(),
        train_side.len(),
        test_side.len(),
        config.split_mode
    );

    let started = Instant::now();
    let mae = train_mae_restarts(
        &train_side,
        &test_side,
        config.arch,
        &config.exec,
        &config.train,
        config.seed,
        config.restarts,
        ctx.parallel,
    )?;
    let initial = mae.stats.initial_test_loss;
    let fin = mae.stats.final_test_loss;
    let reduction = if initial > 0.0 {
        100.0 * (initial - fin) / initial
    } else {
        0.0
    };
    println!(
        "trained in {:.1}s over {} restarts: test exec-loss {initial:.6} -> {fin:.6} ({reduction:.1}% lower)",
        started.elapsed().as_secs_f64(),
        config.restarts,
    );

    save_mae(&mae, &args.out)?;
    manifest.add_output(&args.out)?;
    if let Some(dir) = &args.save_split {
        fs::create_dir_all(dir)?;
        let (tp, sp) = (dir.join("train.json"), dir.join("test.json"));
        train_side.save(&tp)?;
        test_side.save(&sp)?;
        manifest.add_output(&tp)?;
        manifest.add_output(&sp)?;
    }
    let mpath = manifest.write_next_to(&args.out)?;
    println!(
        "saved {} (manifest {})",
        args.out.display(),
        mpath.display()
    );

    if let Some(recorded) = recorded_output {
        let now = manifest.outputs[0].sha256.clone();
        if now == recorded {
            println!("replay: output matches the recorded hash {}", &now[..12]);
        } else {
            eprintln!(
                "replay: output hash {} differs from recorded {}",
                &now[..12],
                &recorded[..12]
            );
            return Ok(1);
        }
    }
    Ok(0)
}

// --- eval ------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Trained MAE file.
    #[arg(long)]
    mae: PathBuf,
    /// Corpus to evaluate over (typically a held-out test split).
    #[arg(long)]
    corpus: PathBuf,
    /// Per-record figure sets to emit (0 = none).
    #[arg(long)]
    figures: Option<usize>,
    /// Points per figure.
    #[arg(long)]
    figure_points: Option<usize>,
    #[arg(long, default_value = "eval")]
    out_dir: PathBuf,
}

#[derive(Serialize)]
struct EvalConfig {
    mae: String,
    corpus: String,
    exec: ExecLossConfig,
    figures: usize,
    figure_points: usize,
    seed: u64,
}

pub fn eval_cmd(ctx: &Ctx, args: EvalArgs) -> anyhow::Result<u8> {
    let mae = load_mae(&args.mae)?;
    let corpus = Corpus::load(&args.corpus)?;
    let exec = ExecLossConfig::default_for(corpus.arch);
    let figures = ctx.resolve(args.figures, "figures", 8)?.min(corpus.len());
    let figure_points = ctx.resolve(args.figure_points, "figure-points", 200)?;
    let config = EvalConfig {
        mae: args.mae.display().to_string(),
        corpus: args.corpus.display().to_string(),
        exec,
        figures,
        figure_points,
        seed: ctx.seed,
    };
    let mut manifest = Manifest::new("eval", &config)?;
    manifest.add_input(&args.mae)?;
    manifest.add_input(&args.corpus)?;

    let report = eval_mae(&mae, &corpus, &exec, ctx.parallel)?;
    println!(
        "exec rmse over {} records: mean {:.6}, median {:.6}, max {:.6}",
        report.rows.len(),
        report.mean,
        report.median,
        report.max
    );
    for (label, rmse) in &report.per_class {
        println!("  {label}: mean {rmse:.6}");
    }

    fs::create_dir_all(&args.out_dir)?;
    let report_path = args.out_dir.join("report.json");
    fs::write(&report_path, serde_json::to_vec_pretty(&report)?)?;
    manifest.add_output(&report_path)?;

    for (i, rec) in corpus.records.iter().take(figures).enumerate() {
        let model = metaenc::mae::reconstruct(&mae, rec)?;
        let dir = args
            .out_dir
            .join("figures")
            .join(format!("{i:03}_{}", rec.class_spec.label()));
        let written = emit_points_figure(
            rec,
            &model,
            figure_points,
            derive_seed(ctx.seed, &[i as u64]),
            &dir,
        )?;
        for path in &written {
            manifest.add_output(path)?;
        }
    }
    if figures > 0 {
        println!(
            "wrote {} figure sets under {}",
            figures,
            args.out_dir.join("figures").display()
        );
    }

    let mpath = manifest.write_next_to(&report_path)?;
    println!(
        "saved {} (manifest {})",
        report_path.display(),
        mpath.display()
    );
    Ok(0)
}

// --- selftest ---------------------------------------------------------------

#[derive(Args, Debug)]
pub struct SelftestArgs {
    /// Random nets in the gradient sweep.
    #[arg(long, default_value_t = 120)]
    grad_cases: usize,
}

fn analytic_line_record(theta_deg: i32, seed: u64) -> anyhow::Result<AeRecord> {
    let class = ClassSpec::line(theta_deg)?;
    Ok(AeRecord::new(
        AeArchId::Line212,
        analytic_line_model(class.slope().unwrap()),
        class,
        TrainStats {
            final_train_rmse: 0.0,
            final_test_rmse: 0.0,
            epochs: 0,
            seed,
        },
    )?)
}

pub fn selftest(ctx: &Ctx, args: SelftestArgs) -> anyhow::Result<u8> {
    let mut all_ok = true;
    let mut check = |name: &str, outcome: anyhow::Result<bool>| match outcome {
        Ok(true) => println!("selftest: {name} ... ok"),
        Ok(false) => {
            println!("selftest: {name} ... FAILED");
            all_ok = false;
        }
        Err(e) => {
            println!("selftest: {name} ... ERROR: {e:#}");
            all_ok = false;
        }
    };

    check("gradient sweep vs finite differences", {
        gradient_suite(args.grad_cases, ctx.seed)
            .map_err(Into::into)
            .map(|report| {
                log::info!(
                    "gradient sweep: {} nets, {} params, max rel err {:.3e}",
                    report.cases,
                    report.params_checked,
                    report.max_rel_err
                );
                report.passed()
            })
    });

    check(
        "execution-loss oracle (slopes 1 vs 2)",
        (|| {
            let rec = analytic_line_record(45, 0)?;
            let out = analytic_line_model(2.0);
            let cfg = ExecLossConfig::default_for(AeArchId::Line212);
            let (loss, _) = exec_loss(&rec, &out, &cfg)?;
            Ok((loss - 55.54445).abs() < 1e-9)
        })(),
    );

    check(
        "analytic line AE reconstructs exactly",
        (|| {
            let class = ClassSpec::line(30)?;
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
            let pts = class.sample_points(1000, &mut rng);
            let model = analytic_line_model(class.slope().unwrap());
            Ok(reconstruction_mse(&model, &pts)? < 1e-12)
        })(),
    );

    check(
        "analytic encode/decode closes on every family",
        (|| {
            let specs = [
                ClassSpec::line(30)?,
                ClassSpec::circle(3.0)?,
                ClassSpec::arc(2.0, PI / 6.0, PI / 3.0)?,
            ];
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
            for spec in specs {
                for p in spec.sample_points(1000, &mut rng) {
                    let q = spec.analytic_decode(spec.analytic_encode(p)?);
                    if p.distance(q) > 1e-9 {
                        return Ok(false);
                    }
                }
            }
            Ok(true)
        })(),
    );

    check(
        "arc normalization is idempotent and behavior-preserving",
        (|| {
            let class = ClassSpec::arc(2.0, PI / 6.0, PI / 3.0)?;
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
            let model = NetModel::init(AeArchId::Arc28122.net_spec(), &mut rng);
            let rec = AeRecord::new(
                AeArchId::Arc28122,
                model,
                class,
                TrainStats {
                    final_train_rmse: 0.0,
                    final_test_rmse: 0.0,
                    epochs: 0,
                    seed: ctx.seed,
                },
            )?;
            let norm = normalize_ae(&rec)?;
            metaenc::mae::featurize(&norm, FeatureTransform::ArcIdentity)?;
            let twice = normalize_ae(&norm)?;
            if twice.model.params() != norm.model.params() {
                return Ok(false);
            }
            for p in class.sample_points(100, &mut rng) {
                let a = rec.model.forward(&[p.x, p.y])?;
                let b = norm.model.forward(&[p.x, p.y])?;
                if (a[0] - b[0]).abs() > 1e-12 || (a[1] - b[1]).abs() > 1e-12 {
                    return Ok(false);
                }
            }
            Ok(true)
        })(),
    );

    check(
        "corpus persistence round-trips bit-exactly",
        (|| {
            let dir = std::env::temp_dir().join(format!("metaenc-selftest-{}", std::process::id()));
            fs::create_dir_all(&dir)?;
            let records = vec![analytic_line_record(30, 0)?, analytic_line_record(60, 1)?];
            let family = records.iter().map(|r| r.class_spec).collect();
            let corpus = Corpus::new(
                AeArchId::Line212,
                records,
                Provenance {
                    family,
                    root_seed: ctx.seed,
                    config_digest: String::new(),
                },
            )?;
            let (p1, p2) = (dir.join("a.json"), dir.join("b.json"));
            corpus.save(&p1)?;
            let loaded = Corpus::load(&p1)?;
            loaded.save(&p2)?;
            let ok = loaded == corpus && fs::read(&p1)? == fs::read(&p2)?;
            let _ = fs::remove_dir_all(&dir);
            Ok(ok)
        })(),
    );

    if all_ok {
        println!("selftest: all checks passed");
        Ok(0)
    } else {
        println!("selftest: FAILED");
        Ok(1)
    }
}
