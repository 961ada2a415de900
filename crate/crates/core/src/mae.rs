//! Autoencoders over autoencoders.
//!
//! An MAE consumes the flattened parameters of one class AE (optionally
//! augmented by engineered features), funnels them through a scalar
//! bottleneck, and emits a parameter vector that is poured back into a
//! skeleton of the same class-AE architecture. Training does not compare
//! parameter vectors: the loss *runs* the emitted AE on probe points of
//! the input AE's class and penalizes output disagreement with the input
//! AE. Gradients flow through the emitted AE's forward pass into the
//! MAE; the input AE is data.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autoenc::{AeArchId, AeRecord, LineAeParams};
use crate::classes::{ClassSpec, Point2};
use crate::corpus::{params_from_strings, params_to_strings, sha256_json, Corpus};
use crate::error::{Error, Result};
use crate::nngraph::{
    adam_step, ActivationKind, AdamParams, AdamState, NetModel, NetSpec, NetSpecBuilder,
};
use crate::par;

/// How an AeRecord's parameters become an MAE input vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureTransform {
    /// Line212 params reordered to [w1, w2, w3, w4, b1, b2, b3] plus the
    /// engineered slope estimate w4/w3 as slot 8.
    LineRatio,
    /// The 35 trainable params of a normalized Arc28122 record, as-is.
    ArcIdentity,
}

impl FeatureTransform {
    pub fn width(self) -> usize {
        match self {
            FeatureTransform::LineRatio => 8,
            FeatureTransform::ArcIdentity => 35,
        }
    }
}

/// MAE architectures. Input and output widths match the corresponding
/// feature transform; both bottlenecks are a single neuron.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaeArch {
    /// 8-1-8. The map the line MAE must learn is affine, so the hidden
    /// activation defaults to identity (tanh/relu variants are accepted
    /// for experiments).
    Line818 { hidden: ActivationKind },
    /// 35-20-10-4-1-4-10-20-35 with ReLU on the hidden layers and
    /// identity on the bottleneck and output.
    Arc9,
}

impl MaeArch {
    pub fn line818() -> Self {
        MaeArch::Line818 {
            hidden: ActivationKind::Identity,
        }
    }

    pub fn net_spec(self) -> NetSpec {
        match self {
            MaeArch::Line818 { hidden } => NetSpecBuilder::new(8)
                .dense(1, hidden)
                .dense(8, ActivationKind::Identity)
                .build()
                .expect("line MAE spec is well-formed"),
            MaeArch::Arc9 => NetSpecBuilder::new(35)
                .dense(20, ActivationKind::Relu)
                .dense(10, ActivationKind::Relu)
                .dense(4, ActivationKind::Relu)
                .dense(1, ActivationKind::Identity)
                .dense(4, ActivationKind::Relu)
                .dense(10, ActivationKind::Relu)
                .dense(20, ActivationKind::Relu)
                .dense(35, ActivationKind::Identity)
                .build()
                .expect("arc MAE spec is well-formed"),
        }
    }

    pub fn feature_transform(self) -> FeatureTransform {
        match self {
            MaeArch::Line818 { .. } => FeatureTransform::LineRatio,
            MaeArch::Arc9 => FeatureTransform::ArcIdentity,
        }
    }

    pub fn ae_arch(self) -> AeArchId {
        match self {
            MaeArch::Line818 { .. } => AeArchId::Line212,
            MaeArch::Arc9 => AeArchId::Arc28122,
        }
    }

    /// Index of the layer whose (scalar) output is the bottleneck code.
    fn bottleneck_layer(self) -> usize {
        match self {
            MaeArch::Line818 { .. } => 0,
            MaeArch::Arc9 => 3,
        }
    }
}

/// Turns a trained record into the MAE's input vector.
pub fn featurize(rec: &AeRecord, transform: FeatureTransform) -> Result<Vec<f64>> {
    match transform {
        FeatureTransform::LineRatio => {
            if rec.arch != AeArchId::Line212 {
                return Err(Error::contract(format!(
                    "LineRatio features need a Line212 record, got {:?}",
                    rec.arch
                )));
            }
            let p = LineAeParams::from_model(&rec.model)?;
            if p.w3.abs() <= 1e-6 {
                return Err(Error::contract(format!(
                    "degenerate decoder: |w3| = {:.3e} leaves the slope ratio w4/w3 undefined",
                    p.w3.abs()
                )));
            }
            Ok(vec![p.w1, p.w2, p.w3, p.w4, p.b1, p.b2, p.b3, p.w4 / p.w3])
        }
        FeatureTransform::ArcIdentity => {
            if rec.arch != AeArchId::Arc28122 {
                return Err(Error::contract(format!(
                    "ArcIdentity features need an Arc28122 record, got {:?}",
                    rec.arch
                )));
            }
            let spec = rec.model.spec();
            let params = rec.model.params();
            let product = |j: usize| {
                params[spec.weight_param_index(0, j, 0).unwrap()]
                    * params[spec.weight_param_index(0, j, 1).unwrap()]
            };
            if (0..7).any(|j| product(j) > product(j + 1)) {
                return Err(Error::contract(
                    "arc record is not normalized; sort its hidden neurons first",
                ));
            }
            Ok(params.to_vec())
        }
    }
}

/// Inverse of [`featurize`] onto a model skeleton: LineRatio drops the
/// engineered slot and rebuilds a Line212; ArcIdentity pours the 35
/// values into the arc skeleton (frozen slots keep their fixed values by
/// construction).
pub fn defeaturize(values: &[f64], transform: FeatureTransform) -> Result<NetModel> {
    if values.len() != transform.width() {
        return Err(Error::contract(format!(
            "{transform:?} wants {} values, got {}",
            transform.width(),
            values.len()
        )));
    }
    let arch = match transform {
        FeatureTransform::LineRatio => AeArchId::Line212,
        FeatureTransform::ArcIdentity => AeArchId::Arc28122,
    };
    let params = match transform {
        FeatureTransform::LineRatio => {
            let [w1, w2, w3, w4, b1, b2, b3, _ratio] = values else {
                unreachable!("width checked above")
            };
            vec![*w1, *w2, *b1, *w3, *w4, *b2, *b3]
        }
        FeatureTransform::ArcIdentity => values.to_vec(),
    };
    NetModel::new(arch.net_spec(), params)
}

/// Pulls a gradient with respect to the skeleton's canonical parameters
/// back to the feature slots (the engineered ratio slot, being dropped
/// by [`defeaturize`], receives gradient 0).
fn defeaturize_grad(grad_params: &[f64], transform: FeatureTransform) -> Vec<f64> {
    match transform {
        FeatureTransform::LineRatio => {
            let g = grad_params;
            // canonical [w1, w2, b1, w3, w4, b2, b3] → feature order
            vec![g[0], g[1], g[3], g[4], g[2], g[5], g[6], 0.0]
        }
        FeatureTransform::ArcIdentity => grad_params.to_vec(),
    }
}

/// Where the execution-driven loss samples the class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbeSpec {
    /// The four line probes at x = ±10 and ±3.33 on y = a·x.
    FixedLine,
    /// `count` points at angles evenly spaced over the arc (inclusive of
    /// both ends; count 1 takes the midpoint). Circles space evenly over
    /// [-π, π).
    EvenArc { count: usize },
    /// `count` points drawn uniformly from the arc with a fixed seed.
    SampledArc { count: usize, seed: u64 },
}

/// Probe configuration of the execution-driven loss: squared Euclidean
/// output distance, averaged over the probes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecLossConfig {
    pub probes: ProbeSpec,
}

impl ExecLossConfig {
    pub fn default_for(arch: AeArchId) -> Self {
        let probes = match arch {
            AeArchId::Line212 => ProbeSpec::FixedLine,
            AeArchId::Arc28122 => ProbeSpec::EvenArc { count: 8 },
        };
        ExecLossConfig { probes }
    }

    /// Materializes the probe points for one class.
    pub fn probe_points(&self, class_spec: &ClassSpec) -> Result<Vec<Point2>> {
        match (self.probes, class_spec) {
            (ProbeSpec::FixedLine, ClassSpec::Line { .. }) => {
                let a = class_spec.slope().unwrap();
                Ok([-10.0, -3.33, 3.33, 10.0]
                    .iter()
                    .map(|&x| Point2::new(x, a * x))
                    .collect())
            }
            (ProbeSpec::EvenArc { count }, spec) => {
                let (r, lo, hi, closed) = match *spec {
                    ClassSpec::Arc {
                        r,
                        angle_lo,
                        angle_hi,
                    } => (r, angle_lo, angle_hi, false),
                    ClassSpec::Circle { r } => (r, -PI, PI, true),
                    ClassSpec::Line { .. } => {
                        return Err(Error::contract("arc probes need a circle or arc class"))
                    }
                };
                if count == 0 {
                    return Err(Error::contract("probe count must be positive"));
                }
                let angles: Vec<f64> = if count == 1 {
                    vec![(lo + hi) / 2.0]
                } else if closed {
                    // full circle: exclude the duplicate seam at +π
                    (0..count)
                        .map(|k| lo + (hi - lo) * k as f64 / count as f64)
                        .collect()
                } else {
                    (0..count)
                        .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
                        .collect()
                };
                Ok(angles
                    .iter()
                    .map(|&t| Point2::new(r * t.cos(), r * t.sin()))
                    .collect())
            }
            (ProbeSpec::SampledArc { count, seed }, spec) => {
                if count == 0 {
                    return Err(Error::contract("probe count must be positive"));
                }
                if matches!(spec, ClassSpec::Line { .. }) {
                    return Err(Error::contract("arc probes need a circle or arc class"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Ok(spec.sample_points(count, &mut rng))
            }
            (ProbeSpec::FixedLine, _) => Err(Error::contract("line probes need a line class")),
        }
    }
}

/// Execution-driven loss of a candidate AE against a trained record:
/// mean over the class's probe points z of ‖candidate(z) − record(z)‖².
/// Also returns its gradient with respect to the candidate's trainable
/// parameters; the record's outputs are constants.
pub fn exec_loss(
    input_rec: &AeRecord,
    output_model: &NetModel,
    cfg: &ExecLossConfig,
) -> Result<(f64, Vec<f64>)> {
    if output_model.spec() != input_rec.model.spec() {
        return Err(Error::contract(
            "execution loss needs input and output AEs of the same architecture",
        ));
    }
    let probes = cfg.probe_points(&input_rec.class_spec)?;
    let scale = 1.0 / probes.len() as f64;
    let mut loss = 0.0;
    let mut grads = vec![0.0; output_model.params().len()];
    for p in &probes {
        let input = [p.x, p.y];
        let target = input_rec.model.forward(&input)?;
        let tape = output_model.forward_with_tape(&input)?;
        let out = tape.output();
        let (dx, dy) = (out[0] - target[0], out[1] - target[1]);
        loss += scale * (dx * dx + dy * dy);
        let upstream = [2.0 * scale * dx, 2.0 * scale * dy];
        let g = output_model.grad_loss(&tape, &upstream)?;
        for (acc, gk) in grads.iter_mut().zip(&g) {
            *acc += gk;
        }
    }
    Ok((loss, grads))
}

/// How records are weighted inside a training batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossBalance {
    /// Every record counts the same.
    Uniform,
    /// Scale each record's contribution by 1/r². Raw squared distances
    /// grow like r², which lets the largest circles dominate; this makes
    /// *relative* output error count equally at every radius. Records
    /// without a radius keep weight 1.
    RelativeRadius,
}

/// Hyperparameters for MAE training. `lr_decay` is the total decay
/// reached at the last epoch (as in AE training). `param_loss_weight`
/// optionally mixes in a feature-space MSE term; it defaults to 0
/// (behavior is what counts, not parameter equality).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaeTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub param_loss_weight: f64,
    pub balance: LossBalance,
}

impl MaeTrainConfig {
    pub fn default_for(arch: MaeArch) -> Self {
        match arch {
            MaeArch::Line818 { .. } => MaeTrainConfig {
                epochs: 2000,
                batch_size: 4,
                lr: 1e-2,
                lr_decay: 1e-2,
                param_loss_weight: 0.0,
                balance: LossBalance::Uniform,
            },
            MaeArch::Arc9 => MaeTrainConfig {
                epochs: 2000,
                batch_size: 4,
                lr: 1e-2,
                lr_decay: 1e-2,
                param_loss_weight: 0.0,
                balance: LossBalance::RelativeRadius,
            },
        }
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 || self.lr_decay == 1.0 {
            return self.lr;
        }
        let frac = epoch as f64 / (self.epochs - 1) as f64;
        self.lr * self.lr_decay.powf(frac)
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::contract("epochs and batch_size must be positive"));
        }
        if !(self.lr > 0.0) || !(self.lr_decay > 0.0) || self.lr_decay > 1.0 {
            return Err(Error::contract("need lr > 0 and 0 < lr_decay <= 1"));
        }
        if !(self.param_loss_weight >= 0.0) {
            return Err(Error::contract("param_loss_weight must be >= 0"));
        }
        Ok(())
    }
}

/// Loss trajectory and endpoint summary of one MAE training run, one
/// curve entry per epoch. `train_curve` tracks the training objective
/// (weighted when a [`LossBalance`] other than uniform is active); the
/// test curve, `initial_test_loss`, and both final losses are plain mean
/// execution losses. `initial_test_loss` is measured before the first
/// update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaeTrainStats {
    pub epochs: usize,
    pub seed: u64,
    pub initial_test_loss: f64,
    pub final_train_loss: f64,
    pub final_test_loss: f64,
    pub train_curve: Vec<f64>,
    pub test_curve: Vec<f64>,
}

/// A trained MAE.
#[derive(Debug, Clone, PartialEq)]
pub struct MaeModel {
    pub arch: MaeArch,
    pub net: NetModel,
    pub stats: MaeTrainStats,
}

/// One record's contribution to the batch loss and the MAE-parameter
/// gradient: featurize → MAE forward → defeaturize → execution loss →
/// backprop through the emitted AE, then through the MAE.
fn mae_record_loss_grad(
    net: &NetModel,
    rec: &AeRecord,
    features: &[f64],
    transform: FeatureTransform,
    exec_cfg: &ExecLossConfig,
    param_loss_weight: f64,
) -> Result<(f64, Vec<f64>)> {
    let tape = net.forward_with_tape(features)?;
    let emitted = tape.output().to_vec();
    let output_model = defeaturize(&emitted, transform)?;
    let (mut loss, grad_output_params) = exec_loss(rec, &output_model, exec_cfg)?;
    let mut upstream = defeaturize_grad(&grad_output_params, transform);
    if param_loss_weight > 0.0 {
        // optional auxiliary pull toward the input's own feature vector
        let w = param_loss_weight / emitted.len() as f64;
        for (k, (&e, &f)) in emitted.iter().zip(features).enumerate() {
            loss += w * (e - f) * (e - f);
            upstream[k] += 2.0 * w * (e - f);
        }
    }
    let grads = net.grad_loss(&tape, &upstream)?;
    Ok((loss, grads))
}

/// Mean execution loss of the MAE's reconstructions over a corpus.
pub fn mae_corpus_loss(
    net: &NetModel,
    corpus: &Corpus,
    transform: FeatureTransform,
    exec_cfg: &ExecLossConfig,
    features: &[Vec<f64>],
    parallel: bool,
) -> Result<f64> {
    let losses = par::map_indexed(&corpus.records, parallel, |i, rec| -> Result<f64> {
        let emitted = net.forward(&features[i])?;
        let output_model = defeaturize(&emitted, transform)?;
        let (loss, _) = exec_loss(rec, &output_model, exec_cfg)?;
        Ok(loss)
    });
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / corpus.len() as f64)
}

/// Trains an MAE over a corpus with the execution-driven loss.
///
/// Per batch member the loss and MAE gradient are computed independently
/// (in parallel when enabled); contributions are then summed in input
/// order, so results are bit-identical for any thread count. Identical
/// arguments give a bit-identical model.
pub fn train_mae(
    train: &Corpus,
    test: &Corpus,
    arch: MaeArch,
    exec_cfg: &ExecLossConfig,
    cfg: &MaeTrainConfig,
    seed: u64,
    parallel: bool,
) -> Result<MaeModel> {
    cfg.validate()?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::contract("train and test corpora must be nonempty"));
    }
    for corpus in [train, test] {
        if corpus.arch != arch.ae_arch() {
            return Err(Error::contract(format!(
                "{arch:?} expects {:?} records, corpus holds {:?}",
                arch.ae_arch(),
                corpus.arch
            )));
        }
    }
    let transform = arch.feature_transform();
    let featurize_all = |c: &Corpus| -> Result<Vec<Vec<f64>>> {
        c.records.iter().map(|r| featurize(r, transform)).collect()
    };
    let train_features = featurize_all(train)?;
    let test_features = featurize_all(test)?;
    let weights: Vec<f64> = train
        .records
        .iter()
        .map(|r| match (cfg.balance, r.class_spec.radius()) {
            (LossBalance::RelativeRadius, Some(r)) => 1.0 / (r * r),
            _ => 1.0,
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = NetModel::init(arch.net_spec(), &mut rng);
    let mut state = AdamState::new(net.params().len());
    let mut order: Vec<usize> = (0..train.len()).collect();

    let initial_test_loss =
        mae_corpus_loss(&net, test, transform, exec_cfg, &test_features, parallel)?;
    let mut train_curve = Vec::with_capacity(cfg.epochs);
    let mut test_curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let hp = AdamParams {
            lr: cfg.lr_at(epoch),
            ..AdamParams::default()
        };
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let contributions = par::map_indexed(batch, parallel, |_, &i| {
                mae_record_loss_grad(
                    &net,
                    &train.records[i],
                    &train_features[i],
                    transform,
                    exec_cfg,
                    cfg.param_loss_weight,
                )
            });
            let mut grads = vec![0.0; net.params().len()];
            let inv = 1.0 / batch.len() as f64;
            for (contribution, &i) in contributions.into_iter().zip(batch) {
                let (loss, g) = contribution.map_err(|e| diverged(e, epoch))?;
                epoch_loss += weights[i] * loss;
                for (acc, gk) in grads.iter_mut().zip(&g) {
                    *acc += weights[i] * gk * inv;
                }
            }
            adam_step(&mut net, &grads, &mut state, &hp).map_err(|e| diverged(e, epoch))?;
        }
        train_curve.push(epoch_loss / train.len() as f64);
        let test_loss = mae_corpus_loss(&net, test, transform, exec_cfg, &test_features, parallel)
            .map_err(|e| diverged(e, epoch))?;
        test_curve.push(test_loss);
    }

    let final_train_loss =
        mae_corpus_loss(&net, train, transform, exec_cfg, &train_features, parallel)?;
    let final_test_loss = *test_curve.last().expect("at least one epoch");
    log::info!(
        "mae training: test loss {initial_test_loss:.4} -> {final_test_loss:.4} over {} epochs",
        cfg.epochs
    );
    Ok(MaeModel {
        arch,
        net,
        stats: MaeTrainStats {
            epochs: cfg.epochs,
            seed,
            initial_test_loss,
            final_train_loss,
            final_test_loss,
            train_curve,
            test_curve,
        },
    })
}

fn diverged(e: Error, epoch: usize) -> Error {
    match e {
        Error::NonFinite { .. } => Error::TrainingDiverged { epoch },
        other => other,
    }
}

/// Multi-start wrapper around [`train_mae`]: the execution-driven loss
/// surface has genuine local minima (a run that stalls does so with a
/// visibly bad *train* loss), so train `restarts` MAEs from seeds derived
/// off `root_seed` and keep the one with the lowest final train loss.
/// Restarts that diverge are discarded; at least one must survive.
pub fn train_mae_restarts(
    train: &Corpus,
    test: &Corpus,
    arch: MaeArch,
    exec_cfg: &ExecLossConfig,
    cfg: &MaeTrainConfig,
    root_seed: u64,
    restarts: usize,
    parallel: bool,
) -> Result<MaeModel> {
    if restarts == 0 {
        return Err(Error::contract("need at least one restart"));
    }
    let mut best: Option<MaeModel> = None;
    let mut failures = 0usize;
    for k in 0..restarts {
        let seed = crate::corpus::derive_seed(root_seed, &[k as u64]);
        match train_mae(train, test, arch, exec_cfg, cfg, seed, parallel) {
            Ok(mae) => {
                log::info!(
                    "restart {k}: train loss {:.6}, test loss {:.6}",
                    mae.stats.final_train_loss,
                    mae.stats.final_test_loss
                );
                if best
                    .as_ref()
                    .is_none_or(|b| mae.stats.final_train_loss < b.stats.final_train_loss)
                {
                    best = Some(mae);
                }
            }
            Err(Error::TrainingDiverged { epoch }) => {
                log::warn!("restart {k} diverged at epoch {epoch}");
                failures += 1;
            }
            Err(other) => return Err(other),
        }
    }
    best.ok_or(Error::TooManyFailures {
        failed: failures,
        total: restarts,
    })
}

/// The MAE's scalar code for a record: the bottleneck activation.
pub fn encode_ae(mae: &MaeModel, rec: &AeRecord) -> Result<f64> {
    let features = featurize(rec, mae.arch.feature_transform())?;
    let code = mae
        .net
        .forward_layers(&features, 0, mae.arch.bottleneck_layer() + 1)?;
    Ok(code[0])
}

/// Runs the decoder half from a bottleneck value and rebuilds the AE.
pub fn decode_code(mae: &MaeModel, code: f64) -> Result<NetModel> {
    let n = mae.net.spec().num_layers();
    let emitted = mae
        .net
        .forward_layers(&[code], mae.arch.bottleneck_layer() + 1, n)?;
    defeaturize(&emitted, mae.arch.feature_transform())
}

/// Full reconstruction: the AE the MAE emits for a record. Identical
/// (bit-exact) to `decode_code(mae, encode_ae(mae, rec))`.
pub fn reconstruct(mae: &MaeModel, rec: &AeRecord) -> Result<NetModel> {
    let features = featurize(rec, mae.arch.feature_transform())?;
    let emitted = mae.net.forward(&features)?;
    defeaturize(&emitted, mae.arch.feature_transform())
}

// --- persistence ----------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MaeDoc {
    schema_version: u32,
    arch: MaeArch,
    flatten_order: String,
    params: Vec<String>,
    stats: MaeTrainStats,
    checksum: String,
}

impl MaeDoc {
    fn digest(&self) -> Result<String> {
        let mut clean = self.clone();
        clean.checksum = String::new();
        sha256_json(&clean)
    }
}

/// Saves an MAE as a checksummed JSON document (same conventions as
/// corpus files: decimal-string parameters, schema version, SHA-256).
pub fn save_mae(mae: &MaeModel, path: &Path) -> Result<()> {
    let mut doc = MaeDoc {
        schema_version: crate::corpus::SCHEMA_VERSION,
        arch: mae.arch,
        flatten_order: crate::corpus::FLATTEN_ORDER.to_string(),
        params: params_to_strings(mae.net.params()),
        stats: mae.stats.clone(),
        checksum: String::new(),
    };
    doc.checksum = doc.digest()?;
    fs::write(path, serde_json::to_vec_pretty(&doc)?)?;
    Ok(())
}

pub fn load_mae(path: &Path) -> Result<MaeModel> {
    let doc: MaeDoc = serde_json::from_slice(&fs::read(path)?)?;
    if doc.schema_version != crate::corpus::SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found: doc.schema_version,
            supported: crate::corpus::SCHEMA_VERSION,
        });
    }
    if doc.digest()? != doc.checksum {
        return Err(Error::ChecksumMismatch);
    }
    let net = NetModel::new(doc.arch.net_spec(), params_from_strings(&doc.params)?)?;
    Ok(MaeModel {
        arch: doc.arch,
        net,
        stats: doc.stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoenc::{analytic_line_model, make_arc_spec, normalize_ae, TrainStats};
    use crate::corpus::Provenance;

    fn line_record(theta_deg: i32, seed: u64) -> AeRecord {
        let class = ClassSpec::line(theta_deg).unwrap();
        AeRecord::new(
            AeArchId::Line212,
            analytic_line_model(class.slope().unwrap()),
            class,
            TrainStats {
                final_train_rmse: 0.0,
                final_test_rmse: 0.0,
                epochs: 0,
                seed,
            },
        )
        .unwrap()
    }

    fn line_corpus(theta_degs: &[i32]) -> Corpus {
        let records: Vec<AeRecord> = theta_degs
            .iter()
            .enumerate()
            .map(|(i, &t)| line_record(t, i as u64))
            .collect();
        let family = records.iter().map(|r| r.class_spec).collect();
        Corpus::new(
            AeArchId::Line212,
            records,
            Provenance {
                family,
                root_seed: 0,
                config_digest: String::new(),
            },
        )
        .unwrap()
    }

    #[test]
    fn exec_loss_closed_form_for_slopes_one_and_two() {
        // input slope 1 (45°), output slope 2: the difference at probe x
        // is x·(2−1) in y only, so the loss is the mean of x² over
        // {±10, ±3.33} = (100 + 11.0889 + 11.0889 + 100) / 4
        let rec = line_record(45, 0);
        let out = analytic_line_model(2.0);
        let cfg = ExecLossConfig::default_for(AeArchId::Line212);
        let (loss, _) = exec_loss(&rec, &out, &cfg).unwrap();
        assert!((loss - 55.54445).abs() < 1e-9, "loss {loss}");
    }

    #[test]
    fn exec_loss_of_a_model_against_itself_is_zero() {
        let rec = line_record(-30, 0);
        let cfg = ExecLossConfig::default_for(AeArchId::Line212);
        let (loss, grads) = exec_loss(&rec, &rec.model, &cfg).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn line_probes_are_the_four_fixed_points() {
        let class = ClassSpec::line(45).unwrap();
        let cfg = ExecLossConfig::default_for(AeArchId::Line212);
        let probes = cfg.probe_points(&class).unwrap();
        let a = class.slope().unwrap();
        let want: Vec<Point2> = [-10.0, -3.33, 3.33, 10.0]
            .iter()
            .map(|&x| Point2::new(x, a * x))
            .collect();
        assert_eq!(probes, want);
    }

    #[test]
    fn arc_probes_span_the_angle_range() {
        let class = ClassSpec::arc(2.0, PI / 6.0, PI / 3.0).unwrap();
        let cfg = ExecLossConfig::default_for(AeArchId::Arc28122);
        let probes = cfg.probe_points(&class).unwrap();
        assert_eq!(probes.len(), 8);
        let angles: Vec<f64> = probes.iter().map(|p| p.y.atan2(p.x)).collect();
        assert!((angles[0] - PI / 6.0).abs() < 1e-12);
        assert!((angles[7] - PI / 3.0).abs() < 1e-12);
        assert!(angles.windows(2).all(|w| w[0] < w[1]));
        // sampled probes are deterministic per seed
        let s = ExecLossConfig {
            probes: ProbeSpec::SampledArc { count: 5, seed: 3 },
        };
        assert_eq!(
            s.probe_points(&class).unwrap(),
            s.probe_points(&class).unwrap()
        );
    }

    #[test]
    fn featurize_puts_the_slope_ratio_in_slot_eight() {
        let rec = line_record(45, 0); // params w=(1,0,1,a), b=0 → ratio a
        let a = rec.class_spec.slope().unwrap();
        let f = featurize(&rec, FeatureTransform::LineRatio).unwrap();
        assert_eq!(f, vec![1.0, 0.0, 1.0, a, 0.0, 0.0, 0.0, a]);
        // horizontal line: w4 = 0 → ratio 0
        let rec0 = line_record(0, 0);
        let f0 = featurize(&rec0, FeatureTransform::LineRatio).unwrap();
        assert_eq!(f0[7], 0.0);
    }

    #[test]
    fn degenerate_decoders_are_rejected() {
        let mut rec = line_record(45, 0);
        let mut params = rec.model.params().to_vec();
        params[3] = 1e-9; // w3
        rec.model.set_params(params).unwrap();
        assert!(featurize(&rec, FeatureTransform::LineRatio).is_err());
    }

    #[test]
    fn defeaturize_round_trips_and_ignores_the_ratio_slot() {
        let rec = line_record(-20, 0);
        let f = featurize(&rec, FeatureTransform::LineRatio).unwrap();
        let model = defeaturize(&f, FeatureTransform::LineRatio).unwrap();
        assert_eq!(model.params(), rec.model.params());
        let mut f2 = f.clone();
        f2[7] = 123.456; // ratio slot is advisory only
        let model2 = defeaturize(&f2, FeatureTransform::LineRatio).unwrap();
        assert_eq!(model2.params(), rec.model.params());
        // zero vector → all-zero skeleton
        let z = defeaturize(&vec![0.0; 8], FeatureTransform::LineRatio).unwrap();
        assert!(z.params().iter().all(|&p| p == 0.0));
        assert!(defeaturize(&vec![0.0; 7], FeatureTransform::LineRatio).is_err());
    }

    fn normalized_arc_record(seed: u64) -> AeRecord {
        let class = ClassSpec::arc(2.0, PI / 6.0, PI / 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = NetModel::init(make_arc_spec(), &mut rng);
        let rec = AeRecord::new(
            AeArchId::Arc28122,
            model,
            class,
            TrainStats {
                final_train_rmse: 0.0,
                final_test_rmse: 0.0,
                epochs: 0,
                seed,
            },
        )
        .unwrap();
        normalize_ae(&rec).unwrap()
    }

    #[test]
    fn arc_features_round_trip_and_require_normalization() {
        let rec = normalized_arc_record(8);
        let f = featurize(&rec, FeatureTransform::ArcIdentity).unwrap();
        assert_eq!(f.len(), 35);
        let model = defeaturize(&f, FeatureTransform::ArcIdentity).unwrap();
        assert_eq!(model.params(), rec.model.params());
        // frozen stem stays at 1 whatever the inputs
        assert_eq!(model.spec().weight_value(model.params(), 2, 0, 0), 1.0);

        // un-normalized record: reverse the neuron order of a normalized one
        let spec = rec.model.spec().clone();
        let params = rec.model.params();
        let mut rev = params.to_vec();
        for new_j in 0..8 {
            let old_j = 7 - new_j;
            for i in 0..2 {
                rev[spec.weight_param_index(0, new_j, i).unwrap()] =
                    params[spec.weight_param_index(0, old_j, i).unwrap()];
            }
            rev[spec.bias_param_index(0, new_j).unwrap()] =
                params[spec.bias_param_index(0, old_j).unwrap()];
            rev[spec.weight_param_index(1, 0, new_j).unwrap()] =
                params[spec.weight_param_index(1, 0, old_j).unwrap()];
        }
        let unnorm = AeRecord {
            model: NetModel::new(spec, rev).unwrap(),
            ..rec.clone()
        };
        assert!(featurize(&unnorm, FeatureTransform::ArcIdentity).is_err());
    }

    fn numeric_exec_grad(rec: &AeRecord, model: &NetModel, cfg: &ExecLossConfig) -> Vec<f64> {
        let h = 1e-5;
        (0..model.params().len())
            .map(|k| {
                let bump = |delta: f64| {
                    let mut m = model.clone();
                    let mut p = m.params().to_vec();
                    p[k] += delta;
                    m.set_params(p).unwrap();
                    exec_loss(rec, &m, cfg).unwrap().0
                };
                (bump(h) - bump(-h)) / (2.0 * h)
            })
            .collect()
    }

    fn assert_rel_close(analytic: &[f64], numeric: &[f64], rel_tol: f64) {
        for (k, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
            if a.abs() < 1e-6 && n.abs() < 1e-6 {
                assert!((a - n).abs() < 1e-7, "param {k}: {a} vs {n}");
            } else {
                let rel = (a - n).abs() / a.abs().max(n.abs());
                assert!(rel < rel_tol, "param {k}: {a} vs {n} (rel {rel})");
            }
        }
    }

    #[test]
    fn exec_loss_gradient_matches_finite_differences() {
        let cfg = ExecLossConfig::default_for(AeArchId::Line212);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for seed in 0..10 {
            let rec = line_record(-70 + 14 * seed, seed as u64);
            let out = NetModel::init(rec.model.spec().clone(), &mut rng);
            let (_, analytic) = exec_loss(&rec, &out, &cfg).unwrap();
            let numeric = numeric_exec_grad(&rec, &out, &cfg);
            assert_rel_close(&analytic, &numeric, 1e-4);
        }
        let cfg = ExecLossConfig::default_for(AeArchId::Arc28122);
        for seed in 0..5 {
            let rec = normalized_arc_record(seed);
            let out = NetModel::init(make_arc_spec(), &mut rng);
            let (_, analytic) = exec_loss(&rec, &out, &cfg).unwrap();
            let numeric = numeric_exec_grad(&rec, &out, &cfg);
            assert_rel_close(&analytic, &numeric, 1e-4);
        }
    }

    #[test]
    fn nested_mae_gradient_matches_finite_differences() {
        // tanh hidden makes the composition genuinely nonlinear
        let arch = MaeArch::Line818 {
            hidden: ActivationKind::Tanh,
        };
        let transform = arch.feature_transform();
        let exec_cfg = ExecLossConfig::default_for(AeArchId::Line212);
        let corpus = line_corpus(&[-40, 25]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = NetModel::init(arch.net_spec(), &mut rng);

        let full_loss = |net: &NetModel| -> f64 {
            corpus
                .records
                .iter()
                .map(|rec| {
                    let f = featurize(rec, transform).unwrap();
                    let emitted = net.forward(&f).unwrap();
                    let m = defeaturize(&emitted, transform).unwrap();
                    exec_loss(rec, &m, &exec_cfg).unwrap().0
                })
                .sum::<f64>()
                / corpus.len() as f64
        };

        let mut analytic = vec![0.0; net.params().len()];
        for rec in &corpus.records {
            let f = featurize(rec, transform).unwrap();
            let (_, g) = mae_record_loss_grad(&net, rec, &f, transform, &exec_cfg, 0.0).unwrap();
            for (acc, gk) in analytic.iter_mut().zip(&g) {
                *acc += gk / corpus.len() as f64;
            }
        }

        let h = 1e-5;
        let numeric: Vec<f64> = (0..net.params().len())
            .map(|k| {
                let bump = |delta: f64| {
                    let mut m = net.clone();
                    let mut p = m.params().to_vec();
                    p[k] += delta;
                    m.set_params(p).unwrap();
                    full_loss(&m)
                };
                (bump(h) - bump(-h)) / (2.0 * h)
            })
            .collect();
        assert_rel_close(&analytic, &numeric, 1e-3);
    }

    #[test]
    fn full_batch_descent_is_monotone_at_small_lr() {
        let corpus = line_corpus(&[10, -35]);
        let arch = MaeArch::line818();
        let exec_cfg = ExecLossConfig::default_for(AeArchId::Line212);
        let cfg = MaeTrainConfig {
            epochs: 10,
            batch_size: 2,
            lr: 1e-4,
            lr_decay: 1.0,
            param_loss_weight: 0.0,
            balance: LossBalance::Uniform,
        };
        let mae = train_mae(&corpus, &corpus, arch, &exec_cfg, &cfg, 3, false).unwrap();
        let curve = &mae.stats.train_curve;
        for w in curve.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn training_is_deterministic_and_thread_count_free() {
        let corpus = line_corpus(&[-60, -20, 20, 60]);
        let arch = MaeArch::line818();
        let exec_cfg = ExecLossConfig::default_for(AeArchId::Line212);
        let cfg = MaeTrainConfig {
            epochs: 15,
            batch_size: 2,
            lr: 1e-2,
            lr_decay: 1.0,
            param_loss_weight: 0.0,
            balance: LossBalance::Uniform,
        };
        let a = train_mae(&corpus, &corpus, arch, &exec_cfg, &cfg, 9, false).unwrap();
        let b = train_mae(&corpus, &corpus, arch, &exec_cfg, &cfg, 9, false).unwrap();
        let c = train_mae(&corpus, &corpus, arch, &exec_cfg, &cfg, 9, true).unwrap();
        assert_eq!(a.net.params(), b.net.params());
        assert_eq!(a.net.params(), c.net.params());
        assert_eq!(a.stats, c.stats);
    }

    #[test]
    fn mae_learns_analytic_line_corpus() {
        // compact end-to-end check on analytic AEs; the full pipeline
        // over trained AEs lives in the integration suite. The loss
        // surface has local minima, so train with restarts and keep the
        // best train loss.
        let thetas: Vec<i32> = (-75..=75).step_by(15).collect(); // 11 lines
        let corpus = line_corpus(&thetas);
        let (train, test) =
            crate::corpus::split(&corpus, 0.25, crate::corpus::SplitMode::ByClass, 17).unwrap();
        let arch = MaeArch::line818();
        let exec_cfg = ExecLossConfig::default_for(AeArchId::Line212);
        let cfg = MaeTrainConfig::default_for(arch);
        let mae = train_mae_restarts(&train, &test, arch, &exec_cfg, &cfg, 1, 4, true).unwrap();
        let rmse = mae.stats.final_test_loss.sqrt();
        assert!(rmse <= 0.2, "held-out exec rmse {rmse}");
    }

    #[test]
    fn encode_decode_composition_is_bit_exact() {
        let corpus = line_corpus(&[-50, 0, 50]);
        let arch = MaeArch::line818();
        let exec_cfg = ExecLossConfig::default_for(AeArchId::Line212);
        let cfg = MaeTrainConfig {
            epochs: 5,
            batch_size: 4,
            lr: 1e-3,
            lr_decay: 1.0,
            param_loss_weight: 0.0,
            balance: LossBalance::Uniform,
        };
        let mae = train_mae(&corpus, &corpus, arch, &exec_cfg, &cfg, 2, false).unwrap();
        for rec in &corpus.records {
            let code = encode_ae(&mae, rec).unwrap();
            let via_split = decode_code(&mae, code).unwrap();
            let direct = reconstruct(&mae, rec).unwrap();
            assert_eq!(via_split.params(), direct.params());
        }
    }

    #[test]
    fn mae_files_round_trip_with_checksums() {
        let corpus = line_corpus(&[-15, 15]);
        let arch = MaeArch::line818();
        let exec_cfg = ExecLossConfig::default_for(AeArchId::Line212);
        let cfg = MaeTrainConfig {
            epochs: 3,
            batch_size: 2,
            lr: 1e-3,
            lr_decay: 1.0,
            param_loss_weight: 0.0,
            balance: LossBalance::Uniform,
        };
        let mae = train_mae(&corpus, &corpus, arch, &exec_cfg, &cfg, 4, false).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mae.json");
        save_mae(&mae, &path).unwrap();
        let loaded = load_mae(&path).unwrap();
        assert_eq!(mae.net.params(), loaded.net.params());
        assert_eq!(mae.stats, loaded.stats);
        assert_eq!(mae.arch, loaded.arch);

        let mut bytes = fs::read(&path).unwrap();
        let at = bytes.iter().position(|&b| b.is_ascii_digit()).unwrap();
        bytes[at] = if bytes[at] == b'9' { b'8' } else { b'9' };
        fs::write(&path, &bytes).unwrap();
        assert!(load_mae(&path).is_err());
    }
}
