//! Parameter initialization.
//!
//! Weights are drawn from a variance-preserving scheme; `b_H` starts at zero
//! and every transform-gate bias `b_T` starts at the (negative) gate bias, so
//! a fresh highway body mostly carries its input through.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Body, BodyKind, HighwayLayer, Network, PlainLayer};
use crate::tensor::{Activation, Matrix, RngState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// U(−b, b) with b = √(6 / (fan_in + fan_out)).
    NormalizedUniform,
    /// N(0, 2 / fan_in).
    ScaledGaussian,
}

impl WeightScheme {
    /// Conventional pairing: uniform for saturating units, Gaussian for relu.
    pub fn default_for(activation: Activation) -> Self {
        match activation {
            Activation::Relu => WeightScheme::ScaledGaussian,
            _ => WeightScheme::NormalizedUniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    /// `None` picks [`WeightScheme::default_for`] the body activation.
    #[serde(default)]
    pub weight_scheme: Option<WeightScheme>,
    pub gate_bias: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub input_dim: usize,
    pub width: usize,
    pub classes: usize,
    /// Weight layers including the first and the output layer; the body has
    /// `depth - 2` layers.
    pub depth: usize,
    pub body: BodyKind,
    pub activation: Activation,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::Param(format!("depth must be at least 2, got {}", self.depth)));
        }
        if self.width == 0 || self.input_dim == 0 || self.classes == 0 {
            return Err(Error::Param("layer dimensions must be positive".into()));
        }
        if self.activation == Activation::Identity {
            return Err(Error::Param("hidden activation must be nonlinear".into()));
        }
        Ok(())
    }
}

pub fn init_weights(rows: usize, cols: usize, scheme: WeightScheme, rng: &mut RngState) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::Param(format!("cannot initialize a {rows}x{cols} weight matrix")));
    }
    let (fan_in, fan_out) = (rows as f64, cols as f64);
    match scheme {
        WeightScheme::NormalizedUniform => {
            let bound = (6.0 / (fan_in + fan_out)).sqrt();
            rng.uniform(-bound, bound, rows, cols)
        }
        WeightScheme::ScaledGaussian => rng.normal(0.0, (2.0 / fan_in).sqrt(), rows, cols),
    }
}

/// Builds a network with freshly drawn weights. Draw order: first layer,
/// body layers front to back (W_H before W_T), output layer.
pub fn init_network(arch: &Architecture, spec: &InitSpec) -> Result<Network> {
    arch.validate()?;
    if !spec.gate_bias.is_finite() {
        return Err(Error::Param(format!("gate bias {} is not finite", spec.gate_bias)));
    }
    if arch.body == BodyKind::Highway && spec.gate_bias >= 0.0 {
        log::warn!(
            "transform gate bias {} is not negative; the body will not start in carry mode",
            spec.gate_bias
        );
    }
    let scheme = spec.weight_scheme.unwrap_or(WeightScheme::default_for(arch.activation));
    let mut rng = RngState::new(spec.seed);
    let w = arch.width;

    let first = PlainLayer::new(
        init_weights(arch.input_dim, w, scheme, &mut rng)?,
        Matrix::zeros(1, w),
        arch.activation,
    )?;
    let n_body = arch.depth - 2;
    let body = match arch.body {
        BodyKind::Plain => Body::Plain(
            (0..n_body)
                .map(|_| PlainLayer::new(init_weights(w, w, scheme, &mut rng)?, Matrix::zeros(1, w), arch.activation))
                .collect::<Result<_>>()?,
        ),
        BodyKind::Highway => Body::Highway(
            (0..n_body)
                .map(|_| {
                    let w_h = init_weights(w, w, scheme, &mut rng)?;
                    let w_t = init_weights(w, w, scheme, &mut rng)?;
                    HighwayLayer::new(
                        w_h,
                        Matrix::zeros(1, w),
                        w_t,
                        Matrix::filled(1, w, spec.gate_bias),
                        arch.activation,
                    )
                })
                .collect::<Result<_>>()?,
        ),
    };
    let output = PlainLayer::new(
        init_weights(w, arch.classes, scheme, &mut rng)?,
        Matrix::zeros(1, arch.classes),
        Activation::Identity,
    )?;
    Network::new(first, body, output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::sigmoid;

    fn arch(depth: usize, width: usize, body: BodyKind) -> Architecture {
        Architecture {
            input_dim: 12,
            width,
            classes: 4,
            depth,
            body,
            activation: Activation::Tanh,
        }
    }

    #[test]
    fn uniform_bound() {
        let bound = (6.0f64 / 100.0).sqrt();
        assert!((bound - 0.244_948_974_278_317_8).abs() < 1e-15);
        let m = init_weights(50, 50, WeightScheme::NormalizedUniform, &mut RngState::new(4)).unwrap();
        assert!(m.as_slice().iter().all(|v| v.abs() <= bound));
        assert!(m.max_abs() > 0.9 * bound);
    }

    #[test]
    fn same_seed_same_weights() {
        for scheme in [WeightScheme::NormalizedUniform, WeightScheme::ScaledGaussian] {
            let a = init_weights(7, 3, scheme, &mut RngState::new(9)).unwrap();
            let b = init_weights(7, 3, scheme, &mut RngState::new(9)).unwrap();
            assert!(a.bitwise_eq(&b));
        }
    }

    #[test]
    fn gaussian_variance() {
        let m = init_weights(50, 2000, WeightScheme::ScaledGaussian, &mut RngState::new(1)).unwrap();
        let n = m.len() as f64;
        let mean = m.as_slice().iter().sum::<f64>() / n;
        let var = m.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var - 0.04).abs() < 0.05 * 0.04, "variance {var}");
    }

    #[test]
    fn zero_dimension_rejected() {
        let err = init_weights(0, 3, WeightScheme::NormalizedUniform, &mut RngState::new(1));
        assert!(matches!(err, Err(Error::Param(_))));
    }

    #[test]
    fn gate_bias_fills_every_entry() {
        let spec = InitSpec {
            weight_scheme: None,
            gate_bias: -3.0,
            seed: 5,
        };
        let net = init_network(&arch(6, 5, BodyKind::Highway), &spec).unwrap();
        let Body::Highway(layers) = &net.body else { panic!() };
        assert_eq!(layers.len(), 4);
        for l in layers {
            assert!(l.b_t.as_slice().iter().all(|&b| b == -3.0));
            assert!(l.b_h.as_slice().iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn seeded_networks_identical() {
        let spec = InitSpec {
            weight_scheme: Some(WeightScheme::ScaledGaussian),
            gate_bias: -2.0,
            seed: 77,
        };
        let a = init_network(&arch(5, 6, BodyKind::Highway), &spec).unwrap();
        let b = init_network(&arch(5, 6, BodyKind::Highway), &spec).unwrap();
        for (x, y) in a.params().iter().zip(b.params()) {
            assert!(x.bitwise_eq(y));
        }
    }

    #[test]
    fn fresh_gate_activity_tracks_bias() {
        // Monte-Carlo: the gate pre-activation is x·W_T + b with zero-mean
        // W_T, so the mean gate over random inputs and fresh weights sits
        // near σ(b), within a curvature term that is small at this scale.
        let spec = InitSpec {
            weight_scheme: Some(WeightScheme::NormalizedUniform),
            gate_bias: -3.0,
            seed: 3,
        };
        let d = 20;
        let net = init_network(&arch(12, d, BodyKind::Highway), &spec).unwrap();
        let Body::Highway(layers) = &net.body else { panic!() };
        let x = RngState::new(8).uniform(-0.2, 0.2, 400, d).unwrap();
        let mut values = Vec::new();
        for l in layers {
            values.extend_from_slice(l.transform_gate(&x).unwrap().as_slice());
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        // Blocks are correlated within a layer; use layers × blocks as the
        // effective count for the standard error.
        let se = sd / ((layers.len() * d) as f64).sqrt();
        assert!((mean - sigmoid(-3.0)).abs() < 3.0 * se, "mean {mean}, target {}, se {se}", sigmoid(-3.0));
    }

    #[test]
    fn depth_two_has_empty_body() {
        let spec = InitSpec {
            weight_scheme: None,
            gate_bias: -1.0,
            seed: 0,
        };
        let net = init_network(&arch(2, 3, BodyKind::Highway), &spec).unwrap();
        assert!(net.body.is_empty());
        assert!(init_network(&arch(1, 3, BodyKind::Plain), &spec).is_err());
    }
}
