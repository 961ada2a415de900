//! `metaenc` — build class grids and AE corpora, train and evaluate
//! meta-autoencoders, and self-check the numeric core.
//!
//! Every artifact-producing run writes `<artifact>.manifest.json` with
//! the fully resolved configuration, seeds, and SHA-256 hashes of all
//! inputs and outputs; repeating a run from the same manifest (see
//! `train-mae --replay`) yields byte-identical artifacts.
//!
//! Exit codes: 0 success, 1 failed selftest/replay check, 2 bad
//! configuration or malformed files, 3 training did not converge,
//! 4 I/O failure.

mod commands;
mod manifest;

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use metaenc::Error;

#[derive(Parser)]
#[command(
    name = "metaenc",
    version,
    about = "Per-class autoencoders and meta-autoencoders over their parameters",
    propagate_version = true
)]
struct Cli {
    /// Root RNG seed (falls back to the config file, then $METAENC_SEED,
    /// then 42).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 runs fully sequentially. Defaults to all cores.
    /// Results are bit-identical either way.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// `key = value` file supplying defaults for long flags (explicit
    /// flags win).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a class-grid file for build-corpus.
    GenClasses(commands::GenClassesArgs),
    /// Train one class autoencoder and save it as a one-record corpus.
    TrainAe(commands::TrainAeArgs),
    /// Train an AE per class across a grid and collect the corpus.
    BuildCorpus(commands::BuildCorpusArgs),
    /// Train a meta-autoencoder over a corpus with the execution loss.
    TrainMae(commands::TrainMaeArgs),
    /// Score a trained MAE over a corpus; write a report and figures.
    Eval(commands::EvalArgs),
    /// Run the built-in numeric checks.
    Selftest(commands::SelftestArgs),
}

/// Key/value defaults loaded from `--config`. Keys are the long flag
/// names without the leading dashes (`epochs = 500`, `rmse-tol = 0.1`);
/// `#` starts a comment.
#[derive(Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!(
                    "{}:{}: expected `key = value`, got {raw:?}",
                    path.display(),
                    lineno + 1
                );
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> anyhow::Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("config key {key} = {raw:?}: {e}")),
        }
    }
}

/// Resolved run-wide settings shared by every subcommand.
pub struct Ctx {
    pub seed: u64,
    pub parallel: bool,
    pub file: ConfigFile,
}

impl Ctx {
    /// Flag wins, then the config file, then the built-in default.
    pub fn resolve<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> anyhow::Result<T>
    where
        T::Err: Display,
    {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.file.get(key)?.unwrap_or(default)),
        }
    }
}

fn resolve_seed(flag: Option<u64>, file: &ConfigFile) -> anyhow::Result<u64> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    if let Some(seed) = file.get("seed")? {
        return Ok(seed);
    }
    match std::env::var("METAENC_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|e| anyhow!("METAENC_SEED = {v:?}: {e}")),
        Err(_) => Ok(42),
    }
}

/// Applies `--jobs`: 1 disables parallelism, N > 1 sizes the rayon pool,
/// unset keeps rayon's default (all cores). Returns whether the parallel
/// paths should run.
fn setup_threads(jobs: Option<usize>) -> anyhow::Result<bool> {
    match jobs {
        Some(0) => bail!("--jobs must be at least 1"),
        Some(1) => Ok(false),
        Some(_n) if !metaenc::par::parallel_available() => {
            log::warn!("built without the parallel feature; running sequentially");
            Ok(false)
        }
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("rayon pool")?;
            Ok(true)
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => unreachable!("parallel_available() is false without the feature"),
        None => Ok(metaenc::par::parallel_available()),
    }
}

/// 2 for configuration/format problems, 3 for convergence failures,
/// 4 for I/O.
fn classify(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<Error>() {
        return match e {
            Error::Io(_) => 4,
            Error::TrainingDiverged { .. }
            | Error::TooManyFailures { .. }
            | Error::NonFinite { .. } => 3,
            _ => 2,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 4;
    }
    2
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let jobs = match cli.jobs {
        Some(n) => Some(n),
        None => file.get("jobs")?,
    };
    let ctx = Ctx {
        seed: resolve_seed(cli.seed, &file)?,
        parallel: setup_threads(jobs)?,
        file,
    };
    match cli.command {
        Command::GenClasses(args) => commands::gen_classes(&ctx, args),
        Command::TrainAe(args) => commands::train_ae_cmd(&ctx, args),
        Command::BuildCorpus(args) => commands::build_corpus_cmd(&ctx, args),
        Command::TrainMae(args) => commands::train_mae_cmd(&ctx, args),
        Command::Eval(args) => commands::eval_cmd(&ctx, args),
        Command::Selftest(args) => commands::selftest(&ctx, args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}
