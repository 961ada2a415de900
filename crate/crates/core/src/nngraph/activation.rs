//! Scalar activation functions and their derivatives.

use serde::{Deserialize, Serialize};

/// Per-neuron activation function.
///
/// All variants are total on finite inputs. `Relu` uses 0 as its
/// derivative at the kink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Identity,
    Tanh,
    Relu,
    Sin,
    Cos,
}

impl ActivationKind {
    /// f(z)
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            ActivationKind::Identity => z,
            ActivationKind::Tanh => z.tanh(),
            ActivationKind::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            ActivationKind::Sin => z.sin(),
            ActivationKind::Cos => z.cos(),
        }
    }

    /// f'(z)
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            ActivationKind::Identity => 1.0,
            ActivationKind::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            ActivationKind::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Sin => z.cos(),
            ActivationKind::Cos => -z.sin(),
        }
    }

    pub const ALL: [ActivationKind; 5] = [
        ActivationKind::Identity,
        ActivationKind::Tanh,
        ActivationKind::Relu,
        ActivationKind::Sin,
        ActivationKind::Cos,
    ];
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_at_zero() {
        assert_eq!(ActivationKind::Identity.apply(0.0), 0.0);
        assert_eq!(ActivationKind::Tanh.apply(0.0), 0.0);
        assert_eq!(ActivationKind::Relu.apply(0.0), 0.0);
        assert_eq!(ActivationKind::Sin.apply(0.0), 0.0);
        assert_eq!(ActivationKind::Cos.apply(0.0), 1.0);
    }

    #[test]
    fn relu_kink_derivative_is_zero() {
        assert_eq!(ActivationKind::Relu.derivative(0.0), 0.0);
        assert_eq!(ActivationKind::Relu.derivative(-1.0), 0.0);
        assert_eq!(ActivationKind::Relu.derivative(1.0), 1.0);
    }

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-6;
        for kind in ActivationKind::ALL {
            for i in 0..50 {
                let z = -2.4 + 0.1 * i as f64 + 0.0137; // avoid the relu kink
                let numeric = (kind.apply(z + h) - kind.apply(z - h)) / (2.0 * h);
                let analytic = kind.derivative(z);
                assert!(
                    (numeric - analytic).abs() < 1e-6,
                    "{kind:?} at z={z}: analytic={analytic} numeric={numeric}"
                );
            }
        }
    }
}
