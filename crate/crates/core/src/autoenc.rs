//! Class-level autoencoders: the 2-1-2 line architecture, the 2-8-1-2-2
//! arc architecture with its frozen decoder heuristics, the trainer, and
//! the neuron-sort normalization that canonicalizes arc AEs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classes::{ClassSpec, Point2};
use crate::error::{Error, Result};
use crate::nngraph::{
    adam_step, ActivationKind, AdamParams, AdamState, NetModel, NetSpec, NetSpecBuilder, Slot,
};

/// The two class-AE architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AeArchId {
    /// 2-1-2, all identity activations, everything trainable (7 params).
    Line212,
    /// 2-8-1-2-2 with tanh encoder, cos/sin stem, diagonal output scaling
    /// (35 trainable params).
    Arc28122,
}

impl AeArchId {
    pub fn net_spec(self) -> NetSpec {
        match self {
            AeArchId::Line212 => make_line_spec(),
            AeArchId::Arc28122 => make_arc_spec(),
        }
    }

    pub fn param_count(self) -> usize {
        match self {
            AeArchId::Line212 => 7,
            AeArchId::Arc28122 => 35,
        }
    }

    /// Which class families this architecture is meant to reconstruct.
    pub fn accepts(self, class_spec: &ClassSpec) -> bool {
        matches!(
            (self, class_spec),
            (AeArchId::Line212, ClassSpec::Line { .. })
                | (AeArchId::Arc28122, ClassSpec::Circle { .. })
                | (AeArchId::Arc28122, ClassSpec::Arc { .. })
        )
    }
}

/// 2-1-2 fully connected, all identity activations. Canonical parameter
/// order: [w1, w2, b1, w3, w4, b2, b3] — the code neuron computes
/// c = x·w1 + y·w2 + b1 and the outputs are (c·w3 + b2, c·w4 + b3).
pub fn make_line_spec() -> NetSpec {
    NetSpecBuilder::new(2)
        .dense(1, ActivationKind::Identity)
        .dense(2, ActivationKind::Identity)
        .build()
        .expect("line AE spec is well-formed")
}

/// 2-8-1-2-2 arc autoencoder.
///
/// Layers 2 and 3 are dense with tanh; the scalar layer-3 code is an
/// angle estimate (its trainable post-activation bias lets it leave
/// tanh's (-1,1) range). Layer 4 applies cos and sin to that code with
/// both incoming weights frozen at 1 and biases frozen at 0; layer 5
/// scales each coordinate by one trainable weight (bias frozen at 0), so
/// a perfect code t with both scales at r yields (r·cos t, r·sin t).
/// Trainable parameters: 16+8 (layer 2) + 8+1 (layer 3) + 2 (layer 5
/// diagonal) = 35.
pub fn make_arc_spec() -> NetSpec {
    NetSpecBuilder::new(2)
        .dense(8, ActivationKind::Tanh)
        .dense(1, ActivationKind::Tanh)
        .custom(
            vec![ActivationKind::Cos, ActivationKind::Sin],
            vec![Slot::Fixed(1.0), Slot::Fixed(1.0)],
            vec![Slot::Fixed(0.0), Slot::Fixed(0.0)],
        )
        .custom(
            vec![ActivationKind::Identity; 2],
            vec![Slot::Trainable, Slot::Absent, Slot::Absent, Slot::Trainable],
            vec![Slot::Fixed(0.0), Slot::Fixed(0.0)],
        )
        .build()
        .expect("arc AE spec is well-formed")
}

/// The closed-form line AE for slope `a`: w1=1, w2=0, w3=1, w4=a, all
/// biases 0. Reconstructs every point of y = a·x exactly.
pub fn analytic_line_model(slope: f64) -> NetModel {
    NetModel::new(make_line_spec(), vec![1.0, 0.0, 0.0, 1.0, slope, 0.0, 0.0])
        .expect("analytic line params are finite")
}

/// Named view of a Line212 parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineAeParams {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

impl LineAeParams {
    pub fn from_model(model: &NetModel) -> Result<Self> {
        let p = model.params();
        if p.len() != 7 {
            return Err(Error::contract(format!(
                "expected a 7-parameter line AE, got {} params",
                p.len()
            )));
        }
        Ok(LineAeParams {
            w1: p[0],
            w2: p[1],
            b1: p[2],
            w3: p[3],
            w4: p[4],
            b2: p[5],
            b3: p[6],
        })
    }
}

/// Outcome statistics of one AE training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub final_train_rmse: f64,
    pub final_test_rmse: f64,
    pub epochs: usize,
    pub seed: u64,
}

/// A trained class AE: architecture, model, the class it was trained on,
/// and how the run went.
#[derive(Debug, Clone, PartialEq)]
pub struct AeRecord {
    pub arch: AeArchId,
    pub model: NetModel,
    pub class_spec: ClassSpec,
    pub train_stats: TrainStats,
}

impl AeRecord {
    pub fn new(
        arch: AeArchId,
        model: NetModel,
        class_spec: ClassSpec,
        train_stats: TrainStats,
    ) -> Result<Self> {
        if model.params().len() != arch.param_count() {
            return Err(Error::contract(format!(
                "{arch:?} wants {} params, model has {}",
                arch.param_count(),
                model.params().len()
            )));
        }
        class_spec.validate()?;
        if !arch.accepts(&class_spec) {
            return Err(Error::contract(format!(
                "{arch:?} cannot encode class {}",
                class_spec.label()
            )));
        }
        if !(train_stats.final_train_rmse >= 0.0) || !(train_stats.final_test_rmse >= 0.0) {
            return Err(Error::contract("rmse stats must be finite and nonnegative"));
        }
        Ok(AeRecord {
            arch,
            model,
            class_spec,
            train_stats,
        })
    }
}

/// Hyperparameters for one AE training run. `lr_decay` is the total
/// multiplicative decay applied across the run (the last epoch trains at
/// `adam.lr * lr_decay`); 1.0 means a constant rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
}

impl TrainConfig {
    pub fn default_for(arch: AeArchId) -> Self {
        match arch {
            AeArchId::Line212 => TrainConfig {
                epochs: 300,
                batch_size: 32,
                lr: 1e-2,
                lr_decay: 1e-2,
            },
            AeArchId::Arc28122 => TrainConfig {
                epochs: 2500,
                batch_size: 32,
                lr: 1e-2,
                lr_decay: 1e-2,
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
        Ok(())
    }
}

/// Mean squared reconstruction error ‖z − model(z)‖² over `points`.
pub fn reconstruction_mse(model: &NetModel, points: &[Point2]) -> Result<f64> {
    assert!(!points.is_empty());
    let mut total = 0.0;
    for p in points {
        let out = model.forward(&[p.x, p.y])?;
        total += (out[0] - p.x).powi(2) + (out[1] - p.y).powi(2);
    }
    Ok(total / points.len() as f64)
}

/// Root of [`reconstruction_mse`]: RMS distance between inputs and
/// reconstructions.
pub fn reconstruction_rmse(model: &NetModel, points: &[Point2]) -> Result<f64> {
    reconstruction_mse(model, points).map(f64::sqrt)
}

/// Trains one autoencoder on `n_points` fresh samples of `class_spec`
/// with seeded minibatch Adam; the test RMSE comes from a second,
/// disjoint sample. Identical arguments give a bit-identical record.
pub fn train_ae(
    arch: AeArchId,
    class_spec: ClassSpec,
    n_points: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<AeRecord> {
    class_spec.validate()?;
    cfg.validate()?;
    if !arch.accepts(&class_spec) {
        return Err(Error::contract(format!(
            "{arch:?} cannot encode class {}",
            class_spec.label()
        )));
    }
    if n_points == 0 {
        return Err(Error::contract("need at least one training point"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train_pts = class_spec.sample_points(n_points, &mut rng);
    let test_pts = class_spec.sample_points(n_points, &mut rng);
    let mut model = NetModel::init(arch.net_spec(), &mut rng);
    let mut state = AdamState::new(model.params().len());
    let mut order: Vec<usize> = (0..n_points).collect();
    let mut grads = vec![0.0; model.params().len()];

    for epoch in 0..cfg.epochs {
        let hp = AdamParams {
            lr: cfg.lr_at(epoch),
            ..AdamParams::default()
        };
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let scale = 2.0 / batch.len() as f64;
            for &i in batch {
                let p = train_pts[i];
                let step = (|| -> Result<()> {
                    let tape = model.forward_with_tape(&[p.x, p.y])?;
                    let out = tape.output();
                    let upstream = [scale * (out[0] - p.x), scale * (out[1] - p.y)];
                    let g = model.grad_loss(&tape, &upstream)?;
                    for (acc, gk) in grads.iter_mut().zip(&g) {
                        *acc += gk;
                    }
                    Ok(())
                })();
                step.map_err(|e| diverged(e, epoch))?;
            }
            adam_step(&mut model, &grads, &mut state, &hp).map_err(|e| diverged(e, epoch))?;
        }
    }

    let final_train_rmse = reconstruction_rmse(&model, &train_pts)?;
    let final_test_rmse = reconstruction_rmse(&model, &test_pts)?;
    if let (ClassSpec::Line { .. }, Ok(p)) = (&class_spec, LineAeParams::from_model(&model)) {
        if p.w3.abs() > 1e-6 {
            let a = class_spec.slope().unwrap();
            log::debug!(
                "{}: slope from w4/w3 = {:.4} vs true {:.4} (|Δ| = {:.2e})",
                class_spec.label(),
                p.w4 / p.w3,
                a,
                (p.w4 / p.w3 - a).abs()
            );
        }
    }
    AeRecord::new(
        arch,
        model,
        class_spec,
        TrainStats {
            final_train_rmse,
            final_test_rmse,
            epochs: cfg.epochs,
            seed,
        },
    )
}

fn diverged(e: Error, epoch: usize) -> Error {
    match e {
        Error::NonFinite { .. } => Error::TrainingDiverged { epoch },
        other => other,
    }
}

/// Canonicalizes an Arc28122 record by sorting the 8 hidden neurons of
/// layer 2 in ascending order of the product of their two incoming
/// weights (ties: first incoming weight, then bias). Each neuron's
/// incoming weights, bias, and outgoing weight move together, so the
/// permuted network computes exactly the same function; behaviorally
/// identical AEs that differ only by hidden-neuron order map to the same
/// parameter vector.
pub fn normalize_ae(rec: &AeRecord) -> Result<AeRecord> {
    if rec.arch != AeArchId::Arc28122 {
        return Err(Error::contract(format!(
            "normalization is defined for Arc28122 records, got {:?}",
            rec.arch
        )));
    }
    let spec = rec.model.spec();
    let params = rec.model.params();
    let w_in = |j: usize, i: usize| params[spec.weight_param_index(0, j, i).unwrap()];
    let b_in = |j: usize| params[spec.bias_param_index(0, j).unwrap()];

    let mut perm: Vec<usize> = (0..8).collect();
    perm.sort_by(|&a, &b| {
        let key = |j: usize| (w_in(j, 0) * w_in(j, 1), w_in(j, 0), b_in(j));
        let (pa, wa, ba) = key(a);
        let (pb, wb, bb) = key(b);
        pa.total_cmp(&pb)
            .then(wa.total_cmp(&wb))
            .then(ba.total_cmp(&bb))
    });

    let mut out = params.to_vec();
    for (new_j, &old_j) in perm.iter().enumerate() {
        for i in 0..2 {
            out[spec.weight_param_index(0, new_j, i).unwrap()] = w_in(old_j, i);
        }
        out[spec.bias_param_index(0, new_j).unwrap()] = b_in(old_j);
        // the outgoing edge into the layer-3 code neuron rides along
        out[spec.weight_param_index(1, 0, new_j).unwrap()] =
            params[spec.weight_param_index(1, 0, old_j).unwrap()];
    }
    let model = NetModel::new(spec.clone(), out)?;
    Ok(AeRecord {
        model,
        ..rec.clone()
    })
}
