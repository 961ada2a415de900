//! A concrete network: a [`NetSpec`] plus one flat parameter vector.

use rand::Rng;

use super::NetSpec;
use crate::error::{Error, Result};

/// Spec plus parameter values, in the spec's canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetModel {
    spec: NetSpec,
    params: Vec<f64>,
}

/// Everything `forward_with_tape` records for a later backward pass:
/// the input, and per layer the pre-activation sums and outputs.
#[derive(Debug, Clone)]
pub struct GradTape {
    input: Vec<f64>,
    zs: Vec<Vec<f64>>,
    outs: Vec<Vec<f64>>,
}

impl GradTape {
    pub fn output(&self) -> &[f64] {
        self.outs.last().expect("tape has at least one layer")
    }

    /// Pre-activation sums of one layer (0 = first hidden layer).
    pub fn pre_activations(&self, layer: usize) -> &[f64] {
        &self.zs[layer]
    }
}

impl NetModel {
    /// Wraps a parameter vector; its length must match the spec and all
    /// values must be finite.
    pub fn new(spec: NetSpec, params: Vec<f64>) -> Result<Self> {
        if params.len() != spec.param_count() {
            return Err(Error::contract(format!(
                "parameter vector has {} entries, spec wants {}",
                params.len(),
                spec.param_count()
            )));
        }
        if !params.iter().all(|p| p.is_finite()) {
            return Err(Error::non_finite("parameter vector"));
        }
        Ok(NetModel { spec, params })
    }

    /// Fresh model with parameters drawn i.i.d. from U[-0.5, 0.5).
    pub fn init<R: Rng + ?Sized>(spec: NetSpec, rng: &mut R) -> Self {
        let params = (0..spec.param_count())
            .map(|_| rng.random_range(-0.5..0.5))
            .collect();
        NetModel { spec, params }
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Replaces the parameter vector, re-checking length and finiteness.
    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.spec.param_count() {
            return Err(Error::contract(format!(
                "parameter vector has {} entries, spec wants {}",
                params.len(),
                self.spec.param_count()
            )));
        }
        if !params.iter().all(|p| p.is_finite()) {
            return Err(Error::non_finite("parameter vector"));
        }
        self.params = params;
        Ok(())
    }

    /// In-place update used by optimizers; skips the finiteness rescan
    /// because the optimizer validates its own arithmetic.
    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward_layers(input, 0, self.spec.num_layers())
    }

    /// Runs layers `from..to` only, taking `input` as the activations
    /// entering layer `from`. Splitting a forward pass at any boundary
    /// and chaining the halves is bit-identical to one full pass, since
    /// both walk layers with the same per-layer evaluation.
    pub fn forward_layers(&self, input: &[f64], from: usize, to: usize) -> Result<Vec<f64>> {
        let n = self.spec.num_layers();
        if from >= to || to > n {
            return Err(Error::contract(format!(
                "layer range {from}..{to} invalid for a {n}-layer network"
            )));
        }
        let (in_dim, _) = self.spec.layer_dims(from);
        if input.len() != in_dim {
            return Err(Error::contract(format!(
                "input has {} entries, layer {from} wants {in_dim}",
                input.len()
            )));
        }
        let mut a = input.to_vec();
        let mut z = Vec::new();
        let mut out = Vec::new();
        for layer in from..to {
            self.spec
                .eval_layer(layer, &self.params, &a, &mut z, &mut out);
            if !out.iter().all(|v| v.is_finite()) {
                return Err(Error::non_finite(format!("output of layer {layer}")));
            }
            std::mem::swap(&mut a, &mut out);
        }
        Ok(a)
    }

    /// Forward pass that records the intermediate values needed by
    /// [`NetModel::grad_loss`].
    pub fn forward_with_tape(&self, input: &[f64]) -> Result<GradTape> {
        self.check_input(input)?;
        let n = self.spec.num_layers();
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut outs: Vec<Vec<f64>> = Vec::with_capacity(n);
        for layer in 0..n {
            let a: &[f64] = if layer == 0 { input } else { &outs[layer - 1] };
            let mut z = Vec::new();
            let mut out = Vec::new();
            self.spec
                .eval_layer(layer, &self.params, a, &mut z, &mut out);
            if !out.iter().all(|v| v.is_finite()) {
                return Err(Error::non_finite(format!("output of layer {layer}")));
            }
            zs.push(z);
            outs.push(out);
        }
        Ok(GradTape {
            input: input.to_vec(),
            zs,
            outs,
        })
    }

    /// Gradient of `upstream . output` with respect to the trainable
    /// parameters, where `upstream` is dL/d(output) of some scalar loss.
    ///
    /// The tape must come from `forward_with_tape` on this model with the
    /// current parameters; dimensions are checked, staleness cannot be.
    pub fn grad_loss(&self, tape: &GradTape, upstream: &[f64]) -> Result<Vec<f64>> {
        let n = self.spec.num_layers();
        if tape.input.len() != self.spec.input_dim() || tape.zs.len() != n {
            return Err(Error::contract("tape does not match this network's shape"));
        }
        for layer in 0..n {
            let (_, out_dim) = self.spec.layer_dims(layer);
            if tape.zs[layer].len() != out_dim || tape.outs[layer].len() != out_dim {
                return Err(Error::contract("tape does not match this network's shape"));
            }
        }
        if upstream.len() != self.spec.output_dim() {
            return Err(Error::contract(format!(
                "upstream gradient has {} entries, output has {}",
                upstream.len(),
                self.spec.output_dim()
            )));
        }
        let mut grads = vec![0.0; self.spec.param_count()];
        let mut d_out = upstream.to_vec();
        for layer in (0..n).rev() {
            let prev = if layer == 0 {
                &tape.input[..]
            } else {
                &tape.outs[layer - 1][..]
            };
            let mut d_prev = vec![0.0; prev.len()];
            self.spec.backprop_layer(
                layer,
                &self.params,
                prev,
                &tape.zs[layer],
                &d_out,
                &mut grads,
                &mut d_prev,
            );
            d_out = d_prev;
        }
        if !grads.iter().all(|g| g.is_finite()) {
            return Err(Error::non_finite("parameter gradient"));
        }
        Ok(grads)
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.spec.input_dim() {
            return Err(Error::contract(format!(
                "input has {} entries, network wants {}",
                input.len(),
                self.spec.input_dim()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nngraph::{ActivationKind, NetSpecBuilder, Slot};

    fn line_212() -> NetSpec {
        NetSpecBuilder::new(2)
            .dense(1, ActivationKind::Identity)
            .dense(2, ActivationKind::Identity)
            .build()
            .unwrap()
    }

    #[test]
    fn identity_net_is_an_affine_map() {
        // params: w1 w2 b1 | w3 w4 b2 b3
        let model = NetModel::new(line_212(), vec![2.0, -1.0, 0.5, 3.0, -2.0, 0.25, 1.0]).unwrap();
        let out = model.forward(&[4.0, 1.0]).unwrap();
        let h = 2.0 * 4.0 - 1.0 * 1.0 + 0.5;
        assert_eq!(out, vec![3.0 * h + 0.25, -2.0 * h + 1.0]);
    }

    #[test]
    fn bias_is_applied_after_the_activation() {
        // tanh saturates inside (-1, 1); a post-activation bias must be
        // able to push the output beyond that range.
        let spec = NetSpecBuilder::new(1)
            .dense(1, ActivationKind::Tanh)
            .build()
            .unwrap();
        let model = NetModel::new(spec, vec![100.0, 5.0]).unwrap();
        let out = model.forward(&[1.0]).unwrap();
        assert!((out[0] - (100.0f64).tanh() - 5.0).abs() < 1e-15);
        assert!(out[0] > 1.0);
    }

    #[test]
    fn frozen_slots_are_untouched_by_construction() {
        // cos/sin pair on a frozen stem: out = (r1*cos(t), r2*sin(t))
        let spec = NetSpecBuilder::new(1)
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
            .unwrap();
        let model = NetModel::new(spec, vec![3.0, 3.0]).unwrap();
        let t = 0.7f64;
        let out = model.forward(&[t]).unwrap();
        assert!((out[0] - 3.0 * t.cos()).abs() < 1e-15);
        assert!((out[1] - 3.0 * t.sin()).abs() < 1e-15);
    }

    /// Straight-line re-implementation of the 2-8-1-2-2 arc decoder
    /// shape, written without shared code so the engine has something
    /// independent to agree with.
    fn arc_forward_by_hand(params: &[f64], input: [f64; 2]) -> [f64; 2] {
        let (w1, rest) = params.split_at(16);
        let (b1, rest) = rest.split_at(8);
        let (w2, rest) = rest.split_at(8);
        let (b2, diag) = rest.split_at(1);
        let mut h = [0.0f64; 8];
        for j in 0..8 {
            let z = w1[j * 2] * input[0] + w1[j * 2 + 1] * input[1];
            h[j] = z.tanh() + b1[j];
        }
        let mut t = 0.0;
        for j in 0..8 {
            t += w2[j] * h[j];
        }
        let t = t.tanh() + b2[0];
        [diag[0] * t.cos(), diag[1] * t.sin()]
    }

    #[test]
    fn forward_matches_independent_arc_oracle() {
        let spec = NetSpecBuilder::new(2)
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
            .unwrap();
        assert_eq!(spec.param_count(), 35);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let model = NetModel::init(spec.clone(), &mut rng);
            let x = rng.random_range(-5.0..5.0);
            let y = rng.random_range(-5.0..5.0);
            let got = model.forward(&[x, y]).unwrap();
            let want = arc_forward_by_hand(model.params(), [x, y]);
            assert!(
                (got[0] - want[0]).abs() < 1e-12,
                "{} vs {}",
                got[0],
                want[0]
            );
            assert!(
                (got[1] - want[1]).abs() < 1e-12,
                "{} vs {}",
                got[1],
                want[1]
            );
        }
    }

    fn numeric_grad(model: &NetModel, input: &[f64], upstream: &[f64]) -> Vec<f64> {
        let h = 1e-5;
        let mut out = Vec::with_capacity(model.params().len());
        for k in 0..model.params().len() {
            let mut plus = model.clone();
            let mut p = plus.params().to_vec();
            p[k] += h;
            plus.set_params(p).unwrap();
            let mut minus = model.clone();
            let mut p = minus.params().to_vec();
            p[k] -= h;
            minus.set_params(p).unwrap();
            let fp: f64 = plus
                .forward(input)
                .unwrap()
                .iter()
                .zip(upstream)
                .map(|(o, u)| o * u)
                .sum();
            let fm: f64 = minus
                .forward(input)
                .unwrap()
                .iter()
                .zip(upstream)
                .map(|(o, u)| o * u)
                .sum();
            out.push((fp - fm) / (2.0 * h));
        }
        out
    }

    fn assert_grads_close(analytic: &[f64], numeric: &[f64]) {
        for (k, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
            if a.abs() < 1e-6 && n.abs() < 1e-6 {
                assert!((a - n).abs() < 1e-7, "param {k}: {a} vs {n}");
            } else {
                let rel = (a - n).abs() / a.abs().max(n.abs());
                assert!(rel < 1e-4, "param {k}: {a} vs {n} (rel {rel})");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences_on_mixed_activations() {
        let spec = NetSpecBuilder::new(2)
            .dense(4, ActivationKind::Tanh)
            .dense(3, ActivationKind::Relu)
            .dense(2, ActivationKind::Identity)
            .build()
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        while checked < 20 {
            let model = NetModel::init(spec.clone(), &mut rng);
            let input = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let tape = model.forward_with_tape(&input).unwrap();
            // relu is not differentiable at 0; central differences lie
            // near the kink, so only check configurations clear of it
            if tape.pre_activations(1).iter().any(|z| z.abs() < 1e-4) {
                continue;
            }
            let upstream = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let analytic = model.grad_loss(&tape, &upstream).unwrap();
            let numeric = numeric_grad(&model, &input, &upstream);
            assert_grads_close(&analytic, &numeric);
            checked += 1;
        }
    }

    #[test]
    fn gradients_match_finite_differences_on_frozen_arc_decoder() {
        let spec = NetSpecBuilder::new(1)
            .dense(4, ActivationKind::Tanh)
            .custom(
                vec![ActivationKind::Cos, ActivationKind::Sin],
                vec![
                    Slot::Trainable,
                    Slot::Fixed(0.5),
                    Slot::Absent,
                    Slot::Trainable,
                    Slot::Trainable,
                    Slot::Absent,
                    Slot::Fixed(-1.0),
                    Slot::Trainable,
                ],
                vec![Slot::Fixed(0.0), Slot::Trainable],
            )
            .build()
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let model = NetModel::init(spec.clone(), &mut rng);
            let input = [rng.random_range(-2.0..2.0)];
            let upstream = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let tape = model.forward_with_tape(&input).unwrap();
            let analytic = model.grad_loss(&tape, &upstream).unwrap();
            let numeric = numeric_grad(&model, &input, &upstream);
            assert_grads_close(&analytic, &numeric);
        }
    }

    #[test]
    fn dimension_mismatches_are_reported() {
        let model = NetModel::new(line_212(), vec![0.0; 7]).unwrap();
        assert!(model.forward(&[1.0]).is_err());
        let tape = model.forward_with_tape(&[1.0, 2.0]).unwrap();
        assert!(model.grad_loss(&tape, &[1.0]).is_err());
        assert!(NetModel::new(line_212(), vec![0.0; 6]).is_err());
        assert!(NetModel::new(line_212(), vec![f64::NAN; 7]).is_err());
    }

    #[test]
    fn split_forward_equals_full_forward_bitwise() {
        let spec = NetSpecBuilder::new(2)
            .dense(4, ActivationKind::Tanh)
            .dense(1, ActivationKind::Identity)
            .dense(4, ActivationKind::Relu)
            .dense(2, ActivationKind::Identity)
            .build()
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let model = NetModel::init(spec.clone(), &mut rng);
            let input = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let full = model.forward(&input).unwrap();
            for cut in 1..4 {
                let mid = model.forward_layers(&input, 0, cut).unwrap();
                let composed = model.forward_layers(&mid, cut, 4).unwrap();
                assert_eq!(full, composed, "cut at {cut}");
            }
        }
        let model = NetModel::init(spec, &mut rng);
        assert!(model.forward_layers(&[0.0, 0.0], 2, 1).is_err());
        assert!(model.forward_layers(&[0.0, 0.0], 0, 9).is_err());
    }

    #[test]
    fn overflow_names_the_layer() {
        let spec = NetSpecBuilder::new(1)
            .dense(1, ActivationKind::Identity)
            .dense(1, ActivationKind::Identity)
            .build()
            .unwrap();
        let model = NetModel::new(spec, vec![f64::MAX, 0.0, f64::MAX, 0.0]).unwrap();
        let err = model.forward(&[f64::MAX]).unwrap_err();
        assert!(err.to_string().contains("layer 0"), "got: {err}");
    }
}
