//! Architecture descriptions for tiny dense feed-forward networks.
//!
//! A [`NetSpec`] fixes layer sizes, per-neuron activations, which edges
//! exist, and which weights/biases are frozen at a constant value. Only
//! the unfrozen, present entries are trainable; they live in a flat
//! parameter vector whose canonical order is:
//!
//! layer by layer, weights row-major (output neuron major, then input
//! neuron), then biases — skipping absent and frozen slots.
//!
//! Neuron outputs follow the convention `out_j = f_j(sum_i w_ji * a_i) + b_j`:
//! the bias is added *after* the activation. A frozen-at-zero bias
//! therefore leaves `f_j` untouched, and a trainable bias can shift an
//! activation's bounded range.

use serde::{Deserialize, Serialize};

use super::ActivationKind;
use crate::error::{Error, Result};

/// One weight or bias position in a layer, as supplied to the builder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slot {
    /// Edge does not exist (weights only). Contributes nothing.
    Absent,
    /// Present but frozen at a constant value; never trained.
    Fixed(f64),
    /// Present and trainable; occupies one position in the parameter vector.
    Trainable,
}

/// `Slot` resolved against the canonical parameter order.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Resolved {
    Absent,
    Fixed(f64),
    Param(u32),
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    in_dim: usize,
    out_dim: usize,
    activations: Vec<ActivationKind>,
    /// Row-major `(out_dim, in_dim)`.
    weights: Vec<Resolved>,
    biases: Vec<Resolved>,
}

/// Architecture of a dense feed-forward network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetSpec {
    layers: Vec<Layer>,
    param_count: usize,
}

impl NetSpec {
    /// Number of trainable parameters (present, unfrozen weights plus
    /// unfrozen biases) in canonical order.
    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    /// Layer widths including the input layer: `[n0, n1, ..., nL]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].in_dim];
        sizes.extend(self.layers.iter().map(|l| l.out_dim));
        sizes
    }

    pub fn activation(&self, layer: usize, neuron: usize) -> ActivationKind {
        self.layers[layer].activations[neuron]
    }

    /// Position of weight `(out, input)` of `layer` in the parameter
    /// vector, or `None` if the edge is absent or frozen.
    pub fn weight_param_index(&self, layer: usize, out: usize, input: usize) -> Option<usize> {
        let l = &self.layers[layer];
        match l.weights[out * l.in_dim + input] {
            Resolved::Param(i) => Some(i as usize),
            _ => None,
        }
    }

    /// Position of the bias of neuron `out` of `layer` in the parameter
    /// vector, or `None` if the bias is frozen.
    pub fn bias_param_index(&self, layer: usize, out: usize) -> Option<usize> {
        match self.layers[layer].biases[out] {
            Resolved::Param(i) => Some(i as usize),
            _ => None,
        }
    }

    /// Effective weight value for edge `(out, input)` of `layer` given a
    /// parameter vector. Absent edges read as 0.
    pub fn weight_value(&self, params: &[f64], layer: usize, out: usize, input: usize) -> f64 {
        let l = &self.layers[layer];
        match l.weights[out * l.in_dim + input] {
            Resolved::Absent => 0.0,
            Resolved::Fixed(v) => v,
            Resolved::Param(i) => params[i as usize],
        }
    }

    /// Effective bias value for neuron `out` of `layer`.
    pub fn bias_value(&self, params: &[f64], layer: usize, out: usize) -> f64 {
        match self.layers[layer].biases[out] {
            Resolved::Fixed(v) => v,
            Resolved::Param(i) => params[i as usize],
            Resolved::Absent => unreachable!("biases are never absent"),
        }
    }

    pub(crate) fn layer_dims(&self, layer: usize) -> (usize, usize) {
        let l = &self.layers[layer];
        (l.in_dim, l.out_dim)
    }

    /// Evaluates one layer: `out_j = f_j(sum_i w_ji * a_i) + b_j`.
    /// Writes pre-activation sums into `z` and outputs into `out`.
    pub(crate) fn eval_layer(
        &self,
        layer: usize,
        params: &[f64],
        input: &[f64],
        z: &mut Vec<f64>,
        out: &mut Vec<f64>,
    ) {
        let l = &self.layers[layer];
        debug_assert_eq!(input.len(), l.in_dim);
        z.clear();
        out.clear();
        for j in 0..l.out_dim {
            let row = j * l.in_dim;
            let mut sum = 0.0;
            for (i, &a) in input.iter().enumerate() {
                let w = match l.weights[row + i] {
                    Resolved::Absent => continue,
                    Resolved::Fixed(v) => v,
                    Resolved::Param(p) => params[p as usize],
                };
                sum += w * a;
            }
            let b = match l.biases[j] {
                Resolved::Fixed(v) => v,
                Resolved::Param(p) => params[p as usize],
                Resolved::Absent => unreachable!(),
            };
            z.push(sum);
            out.push(l.activations[j].apply(sum) + b);
        }
    }

    /// Backpropagates through one layer.
    ///
    /// `d_out` is dL/d(out of this layer); `prev` is the layer's input
    /// activations; `z` its recorded pre-activation sums. Parameter
    /// gradients are accumulated into `grads`; dL/d(input) into `d_prev`
    /// (which must be zeroed by the caller).
    pub(crate) fn backprop_layer(
        &self,
        layer: usize,
        params: &[f64],
        prev: &[f64],
        z: &[f64],
        d_out: &[f64],
        grads: &mut [f64],
        d_prev: &mut [f64],
    ) {
        let l = &self.layers[layer];
        debug_assert_eq!(prev.len(), l.in_dim);
        debug_assert_eq!(z.len(), l.out_dim);
        debug_assert_eq!(d_out.len(), l.out_dim);
        for j in 0..l.out_dim {
            // bias is outside the activation: d(out_j)/d(b_j) = 1
            if let Resolved::Param(p) = l.biases[j] {
                grads[p as usize] += d_out[j];
            }
            let dz = d_out[j] * l.activations[j].derivative(z[j]);
            if dz == 0.0 {
                continue;
            }
            let row = j * l.in_dim;
            for i in 0..l.in_dim {
                match l.weights[row + i] {
                    Resolved::Absent => {}
                    Resolved::Fixed(v) => d_prev[i] += dz * v,
                    Resolved::Param(p) => {
                        grads[p as usize] += dz * prev[i];
                        d_prev[i] += dz * params[p as usize];
                    }
                }
            }
        }
    }
}

/// Incremental [`NetSpec`] constructor. Layers are appended from the
/// input side; dimensions chain automatically.
#[derive(Debug)]
pub struct NetSpecBuilder {
    input_dim: usize,
    layers: Vec<(Vec<ActivationKind>, Vec<Slot>, Vec<Slot>)>,
}

impl NetSpecBuilder {
    pub fn new(input_dim: usize) -> Self {
        NetSpecBuilder {
            input_dim,
            layers: Vec::new(),
        }
    }

    fn prev_dim(&self) -> usize {
        self.layers
            .last()
            .map(|(acts, _, _)| acts.len())
            .unwrap_or(self.input_dim)
    }

    /// Fully connected layer, one activation for all neurons, everything
    /// trainable.
    pub fn dense(mut self, out_dim: usize, activation: ActivationKind) -> Self {
        let in_dim = self.prev_dim();
        self.layers.push((
            vec![activation; out_dim],
            vec![Slot::Trainable; in_dim * out_dim],
            vec![Slot::Trainable; out_dim],
        ));
        self
    }

    /// Layer with per-neuron activations and explicit weight/bias slots.
    /// `weights` is row-major `(out_dim, in_dim)` against the previous
    /// layer's width.
    pub fn custom(
        mut self,
        activations: Vec<ActivationKind>,
        weights: Vec<Slot>,
        biases: Vec<Slot>,
    ) -> Self {
        self.layers.push((activations, weights, biases));
        self
    }

    pub fn build(self) -> Result<NetSpec> {
        if self.input_dim == 0 {
            return Err(Error::contract("input dimension must be > 0"));
        }
        if self.layers.is_empty() {
            return Err(Error::contract("a network needs at least one layer"));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut next_param: u32 = 0;
        let mut in_dim = self.input_dim;
        for (idx, (activations, weights, biases)) in self.layers.into_iter().enumerate() {
            let out_dim = activations.len();
            if out_dim == 0 {
                return Err(Error::contract(format!("layer {idx} has no neurons")));
            }
            if weights.len() != in_dim * out_dim {
                return Err(Error::contract(format!(
                    "layer {idx}: expected {} weight slots ({out_dim}x{in_dim}), got {}",
                    in_dim * out_dim,
                    weights.len()
                )));
            }
            if biases.len() != out_dim {
                return Err(Error::contract(format!(
                    "layer {idx}: expected {out_dim} bias slots, got {}",
                    biases.len()
                )));
            }
            let resolve_weight = |slot: &Slot, next: &mut u32| -> Result<Resolved> {
                Ok(match *slot {
                    Slot::Absent => Resolved::Absent,
                    Slot::Fixed(v) if v.is_finite() => Resolved::Fixed(v),
                    Slot::Fixed(_) => {
                        return Err(Error::contract("fixed slot value must be finite"))
                    }
                    Slot::Trainable => {
                        let p = Resolved::Param(*next);
                        *next += 1;
                        p
                    }
                })
            };
            let mut rweights = Vec::with_capacity(weights.len());
            for s in &weights {
                rweights.push(resolve_weight(s, &mut next_param)?);
            }
            let mut rbiases = Vec::with_capacity(biases.len());
            for s in &biases {
                if matches!(s, Slot::Absent) {
                    return Err(Error::contract(format!(
                        "layer {idx}: biases cannot be absent; freeze them at 0 instead"
                    )));
                }
                rbiases.push(resolve_weight(s, &mut next_param)?);
            }
            layers.push(Layer {
                in_dim,
                out_dim,
                activations,
                weights: rweights,
                biases: rbiases,
            });
            in_dim = out_dim;
        }
        Ok(NetSpec {
            layers,
            param_count: next_param as usize,
        })
    }
}

/// Identifies a network architecture in persisted files. The variants a
/// file may reference are defined by the modules that own them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchTag {
    Line212,
    Arc28122,
    Line818,
    Arc9,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_param_count_matches_closed_form() {
        // fully connected, nothing frozen: sum of n_i*n_{i+1} + n_{i+1}
        let spec = NetSpecBuilder::new(3)
            .dense(5, ActivationKind::Tanh)
            .dense(2, ActivationKind::Identity)
            .build()
            .unwrap();
        assert_eq!(spec.param_count(), 3 * 5 + 5 + 5 * 2 + 2);
        assert_eq!(spec.layer_sizes(), vec![3, 5, 2]);
    }

    #[test]
    fn frozen_and_absent_slots_do_not_count() {
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
        assert_eq!(spec.param_count(), 2);
        assert_eq!(spec.weight_param_index(1, 0, 0), Some(0));
        assert_eq!(spec.weight_param_index(1, 1, 1), Some(1));
        assert_eq!(spec.weight_param_index(1, 0, 1), None);
        assert_eq!(spec.weight_param_index(0, 0, 0), None);
        assert_eq!(spec.weight_value(&[3.0, 4.0], 0, 1, 0), 1.0);
        assert_eq!(spec.weight_value(&[3.0, 4.0], 1, 1, 0), 0.0);
        assert_eq!(spec.weight_value(&[3.0, 4.0], 1, 1, 1), 4.0);
    }

    #[test]
    fn canonical_order_is_weights_then_biases_per_layer() {
        let spec = NetSpecBuilder::new(2)
            .dense(1, ActivationKind::Identity)
            .dense(2, ActivationKind::Identity)
            .build()
            .unwrap();
        // layer 0: w(0,0), w(0,1), b(0); layer 1: w(0,0), w(1,0), b(0), b(1)
        assert_eq!(spec.weight_param_index(0, 0, 0), Some(0));
        assert_eq!(spec.weight_param_index(0, 0, 1), Some(1));
        assert_eq!(spec.bias_param_index(0, 0), Some(2));
        assert_eq!(spec.weight_param_index(1, 0, 0), Some(3));
        assert_eq!(spec.weight_param_index(1, 1, 0), Some(4));
        assert_eq!(spec.bias_param_index(1, 0), Some(5));
        assert_eq!(spec.bias_param_index(1, 1), Some(6));
        assert_eq!(spec.param_count(), 7);
    }

    #[test]
    fn absent_bias_is_rejected() {
        let err = NetSpecBuilder::new(1)
            .custom(
                vec![ActivationKind::Identity],
                vec![Slot::Trainable],
                vec![Slot::Absent],
            )
            .build();
        assert!(err.is_err());
    }
}
