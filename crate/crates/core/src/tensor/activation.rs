use serde::{Deserialize, Serialize};

use super::Matrix;

/// Elementwise nonlinearity.
///
/// `Identity` only appears on the output layer, whose affine output feeds
/// the softmax directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    Identity,
}

/// Logistic function, evaluated so that `exp` only ever sees a non-positive
/// argument. The result is kept strictly inside (0, 1) even where the exact
/// value would round to 0 or 1.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

impl Activation {
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Identity => x,
        }
    }

    pub fn apply(self, m: &Matrix) -> Matrix {
        m.map(|v| self.eval(v))
    }

    /// Whether [`Activation::derivative`] expects the pre-activation value
    /// (relu) rather than the activation output (sigmoid, tanh).
    #[inline]
    pub fn grad_uses_pre(self) -> bool {
        matches!(self, Activation::Relu | Activation::Identity)
    }

    /// Derivative at a cached forward value: the output for sigmoid/tanh,
    /// the input for relu. relu'(0) is taken as 0.
    #[inline]
    pub fn derivative(self, cached: f64) -> f64 {
        match self {
            Activation::Sigmoid => cached * (1.0 - cached),
            Activation::Tanh => 1.0 - cached * cached,
            Activation::Relu => {
                if cached > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn grad(self, cached: &Matrix) -> Matrix {
        cached.map(|v| self.derivative(v))
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }
}
