//! Building, splitting, and persisting corpora of trained class AEs.
//!
//! A corpus is the MAE's dataset: many AeRecords sharing one
//! architecture, each trained on a different class member (or a
//! different sample of the same member). Persistence is a single
//! self-describing JSON document; parameter values are stored as
//! 17-significant-digit decimal strings so a save/load round trip is
//! bit-exact, and the file carries a SHA-256 checksum over its own
//! canonical serialization.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autoenc::{normalize_ae, train_ae, AeArchId, AeRecord, TrainConfig, TrainStats};
use crate::classes::ClassSpec;
use crate::error::{Error, Result};
use crate::nngraph::NetModel;
use crate::par;

pub const SCHEMA_VERSION: u32 = 1;

/// Canonical parameter ordering, recorded in every corpus file so the
/// flat vectors stay interpretable independent of this code base.
pub const FLATTEN_ORDER: &str =
    "per layer: trainable weights row-major (output neuron major), then trainable biases";

/// How a corpus came to be: the class grid, the root seed, and a digest
/// of the build configuration. Per-record seeds live on the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub family: Vec<ClassSpec>,
    pub root_seed: u64,
    pub config_digest: String,
}

/// A homogeneous collection of trained AEs plus its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub arch: AeArchId,
    pub records: Vec<AeRecord>,
    pub provenance: Provenance,
}

/// Controls one corpus build. `rmse_tolerance` is the inclusion
/// threshold on test RMSE — absolute for lines, scaled by the radius for
/// circles and arcs. AEs that miss it are retrained with a fresh seed up
/// to `max_retries` times, then dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub aes_per_class: usize,
    pub points_per_ae: usize,
    pub train: TrainConfig,
    pub rmse_tolerance: f64,
    pub max_retries: usize,
}

impl BuildConfig {
    pub fn default_for(arch: AeArchId) -> Self {
        let points_per_ae = match arch {
            AeArchId::Line212 => 1000,
            AeArchId::Arc28122 => 200,
        };
        BuildConfig {
            aes_per_class: 2,
            points_per_ae,
            train: TrainConfig::default_for(arch),
            rmse_tolerance: 0.05,
            max_retries: 3,
        }
    }

    fn rmse_budget(&self, class_spec: &ClassSpec) -> f64 {
        match class_spec.radius() {
            Some(r) => self.rmse_tolerance * r,
            None => self.rmse_tolerance,
        }
    }

    pub fn digest(&self) -> String {
        sha256_json(self).expect("config serializes")
    }
}

impl Corpus {
    /// Validates homogeneity and (class, seed) uniqueness.
    pub fn new(arch: AeArchId, records: Vec<AeRecord>, provenance: Provenance) -> Result<Self> {
        for rec in &records {
            if rec.arch != arch {
                return Err(Error::contract(format!(
                    "corpus is {arch:?} but a record is {:?}",
                    rec.arch
                )));
            }
        }
        let mut keys: Vec<(String, u64)> = records
            .iter()
            .map(|r| (r.class_spec.label(), r.train_stats.seed))
            .collect();
        keys.sort();
        if keys.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::contract("duplicate (class, seed) pair in corpus"));
        }
        Ok(Corpus {
            arch,
            records,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct classes in first-appearance order.
    pub fn classes(&self) -> Vec<ClassSpec> {
        let mut seen = Vec::new();
        for rec in &self.records {
            if !seen.contains(&rec.class_spec) {
                seen.push(rec.class_spec);
            }
        }
        seen
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut doc = CorpusDoc::from_corpus(self);
        doc.checksum = doc.digest()?;
        fs::write(path, serde_json::to_vec_pretty(&doc)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Corpus> {
        let bytes = fs::read(path)?;
        let doc: CorpusDoc = serde_json::from_slice(&bytes)?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: doc.schema_version,
                supported: SCHEMA_VERSION,
            });
        }
        if doc.digest()? != doc.checksum {
            return Err(Error::ChecksumMismatch);
        }
        doc.into_corpus()
    }
}

/// SplitMix64; spreads consecutive task indices into independent seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-task seed from the root seed and task coordinates;
/// independent of evaluation order, so parallel builds are bit-identical
/// to sequential ones.
pub fn derive_seed(root: u64, stream: &[u64]) -> u64 {
    let mut s = splitmix64(root);
    for &x in stream {
        s = splitmix64(s ^ x.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    }
    s
}

/// Trains `cfg.aes_per_class` AEs for every class in `classes`, each on
/// its own point sample, retrying non-convergers with fresh derived
/// seeds. Arc records are normalized before inclusion. Fails if more
/// than half of the attempted records never converge.
pub fn build_corpus(
    arch: AeArchId,
    classes: &[ClassSpec],
    cfg: &BuildConfig,
    root_seed: u64,
    parallel: bool,
) -> Result<Corpus> {
    if classes.is_empty() || cfg.aes_per_class == 0 {
        return Err(Error::contract(
            "corpus needs classes and aes_per_class > 0",
        ));
    }
    for c in classes {
        c.validate()?;
        if !arch.accepts(c) {
            return Err(Error::contract(format!(
                "{arch:?} cannot encode class {}",
                c.label()
            )));
        }
    }
    let tasks: Vec<(usize, usize)> = (0..classes.len())
        .flat_map(|c| (0..cfg.aes_per_class).map(move |a| (c, a)))
        .collect();

    let results = par::map_indexed(
        &tasks,
        parallel,
        |_, &(class_idx, ae_idx)| -> Result<Option<AeRecord>> {
            let class_spec = classes[class_idx];
            let budget = cfg.rmse_budget(&class_spec);
            let mut last_rmse = f64::INFINITY;
            for retry in 0..=cfg.max_retries as u64 {
                let seed = derive_seed(root_seed, &[class_idx as u64, ae_idx as u64, retry]);
                let rec = train_ae(arch, class_spec, cfg.points_per_ae, &cfg.train, seed)?;
                if rec.train_stats.final_test_rmse <= budget {
                    let rec = if arch == AeArchId::Arc28122 {
                        normalize_ae(&rec)?
                    } else {
                        rec
                    };
                    if retry > 0 {
                        log::info!("{}: converged on retry {retry}", class_spec.label());
                    }
                    return Ok(Some(rec));
                }
                last_rmse = rec.train_stats.final_test_rmse;
            }
            log::warn!(
            "{}: no convergence after {} attempts (last test rmse {last_rmse:.4} > {budget:.4}); dropped",
            class_spec.label(),
            cfg.max_retries + 1
        );
            Ok(None)
        },
    );

    let mut records = Vec::with_capacity(tasks.len());
    let mut failed = 0usize;
    for res in results {
        match res? {
            Some(rec) => records.push(rec),
            None => failed += 1,
        }
    }
    if failed * 2 > tasks.len() {
        return Err(Error::TooManyFailures {
            failed,
            total: tasks.len(),
        });
    }
    if failed > 0 {
        log::warn!("corpus build dropped {failed}/{} records", tasks.len());
    }
    Corpus::new(
        arch,
        records,
        Provenance {
            family: classes.to_vec(),
            root_seed,
            config_digest: cfg.digest(),
        },
    )
}

/// Split granularity: individual records, or whole classes (every AE of
/// a held-out class goes to the test side).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    ByRecord,
    ByClass,
}

/// Deterministic train/test split. The test side receives
/// round(test_fraction · n) records (ByRecord) or classes (ByClass);
/// both sides must end up nonempty.
pub fn split(
    corpus: &Corpus,
    test_fraction: f64,
    mode: SplitMode,
    seed: u64,
) -> Result<(Corpus, Corpus)> {
    if !(0.0..1.0).contains(&test_fraction) || test_fraction <= 0.0 {
        return Err(Error::contract("test_fraction must be in (0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let test_mask: Vec<bool> = match mode {
        SplitMode::ByRecord => {
            let n = corpus.len();
            let k = (test_fraction * n as f64).round() as usize;
            check_sides(k, n)?;
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let mut mask = vec![false; n];
            for &i in &idx[..k] {
                mask[i] = true;
            }
            mask
        }
        SplitMode::ByClass => {
            let classes = corpus.classes();
            let n = classes.len();
            let k = (test_fraction * n as f64).round() as usize;
            check_sides(k, n)?;
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let held_out: Vec<ClassSpec> = idx[..k].iter().map(|&i| classes[i]).collect();
            corpus
                .records
                .iter()
                .map(|r| held_out.contains(&r.class_spec))
                .collect()
        }
    };
    let pick = |want: bool| -> Vec<AeRecord> {
        corpus
            .records
            .iter()
            .zip(&test_mask)
            .filter(|(_, &m)| m == want)
            .map(|(r, _)| r.clone())
            .collect()
    };
    let train = Corpus::new(corpus.arch, pick(false), corpus.provenance.clone())?;
    let test = Corpus::new(corpus.arch, pick(true), corpus.provenance.clone())?;
    if train.is_empty() {
        return Err(Error::EmptySplit { side: "train" });
    }
    if test.is_empty() {
        return Err(Error::EmptySplit { side: "test" });
    }
    Ok((train, test))
}

fn check_sides(k: usize, n: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::EmptySplit { side: "test" });
    }
    if k >= n {
        return Err(Error::EmptySplit { side: "train" });
    }
    Ok(())
}

// --- on-disk representation ---------------------------------------------

/// Hex SHA-256 over a value's canonical (compact) JSON serialization.
pub(crate) fn sha256_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(value)?)))
}

/// Formats parameters as decimal strings with 17 significant digits —
/// enough to reproduce any f64 bit-exactly on parse.
pub(crate) fn params_to_strings(params: &[f64]) -> Vec<String> {
    params.iter().map(|p| format!("{p:.16e}")).collect()
}

pub(crate) fn params_from_strings(strings: &[String]) -> Result<Vec<f64>> {
    strings
        .iter()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Malformed(format!("unparseable parameter {s:?}")))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RecordDoc {
    class_spec: ClassSpec,
    seed: u64,
    epochs: usize,
    final_train_rmse: f64,
    final_test_rmse: f64,
    /// Decimal strings with 17 significant digits: exact f64 round trip.
    params: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CorpusDoc {
    schema_version: u32,
    arch: AeArchId,
    flatten_order: String,
    provenance: Provenance,
    records: Vec<RecordDoc>,
    checksum: String,
}

impl CorpusDoc {
    fn from_corpus(corpus: &Corpus) -> Self {
        let records = corpus
            .records
            .iter()
            .map(|r| RecordDoc {
                class_spec: r.class_spec,
                seed: r.train_stats.seed,
                epochs: r.train_stats.epochs,
                final_train_rmse: r.train_stats.final_train_rmse,
                final_test_rmse: r.train_stats.final_test_rmse,
                params: params_to_strings(r.model.params()),
            })
            .collect();
        CorpusDoc {
            schema_version: SCHEMA_VERSION,
            arch: corpus.arch,
            flatten_order: FLATTEN_ORDER.to_string(),
            provenance: corpus.provenance.clone(),
            records,
            checksum: String::new(),
        }
    }

    /// SHA-256 over the document serialized with an empty checksum field.
    fn digest(&self) -> Result<String> {
        let mut clean = self.clone();
        clean.checksum = String::new();
        sha256_json(&clean)
    }

    fn into_corpus(self) -> Result<Corpus> {
        let spec = self.arch.net_spec();
        let mut records = Vec::with_capacity(self.records.len());
        for (i, doc) in self.records.into_iter().enumerate() {
            let params = params_from_strings(&doc.params)
                .map_err(|e| Error::Malformed(format!("record {i}: {e}")))?;
            let model = NetModel::new(spec.clone(), params)?;
            records.push(AeRecord::new(
                self.arch,
                model,
                doc.class_spec,
                TrainStats {
                    final_train_rmse: doc.final_train_rmse,
                    final_test_rmse: doc.final_test_rmse,
                    epochs: doc.epochs,
                    seed: doc.seed,
                },
            )?);
        }
        Corpus::new(self.arch, records, self.provenance)
    }
}
