//! Hidden-layer activation functions and their derivatives.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActivationKind {
    Relu,
    LeakyRelu,
    Mish,
}

impl std::fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ActivationKind::Relu => "relu",
            ActivationKind::LeakyRelu => "leaky_relu",
            ActivationKind::Mish => "mish",
        })
    }
}

/// Numerically stable `ln(1 + e^s)`.
pub fn softplus(s: f64) -> f64 {
    s.max(0.0) + (-s.abs()).exp().ln_1p()
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `mish(s) = s * tanh(ln(1 + e^s))`.
pub fn mish(s: f64) -> f64 {
    s * softplus(s).tanh()
}

/// Analytic mish derivative: `tanh(sp) + s * sech^2(sp) * sigmoid(s)`.
pub fn mish_derivative(s: f64) -> f64 {
    let t = softplus(s).tanh();
    t + s * (1.0 - t * t) * sigmoid(s)
}

/// Applies the activation. ReLU and LeakyReLU take their subgradient at
/// exactly 0 as 0 and `alpha` respectively.
pub fn activation(kind: ActivationKind, alpha: f64, s: f64) -> f64 {
    match kind {
        ActivationKind::Relu => s.max(0.0),
        ActivationKind::LeakyRelu => {
            if s >= 0.0 {
                s
            } else {
                alpha * s
            }
        }
        ActivationKind::Mish => mish(s),
    }
}

pub fn activation_derivative(kind: ActivationKind, alpha: f64, s: f64) -> f64 {
    match kind {
        ActivationKind::Relu => {
            if s > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        ActivationKind::LeakyRelu => {
            if s > 0.0 {
                1.0
            } else {
                alpha
            }
        }
        ActivationKind::Mish => mish_derivative(s),
    }
}
