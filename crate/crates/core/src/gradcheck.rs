//! Central finite-difference check of whole-network gradients.
//!
//! The numerical side only ever calls the forward pass; it shares no code
//! with the analytic backward pass it is checked against.

use serde::Serialize;

use crate::error::Result;
use crate::init::{init_network, Architecture, InitSpec};
use crate::nn::{Body, BodyCache, BodyKind, ForwardTrace, Network};
use crate::tensor::{Activation, Matrix, RngState};

/// Gradients smaller than this are compared in absolute terms: the relative
/// error is measured against `max(|analytic|, |numeric|, ERR_FLOOR)`.
/// Central differences of an O(1) loss carry roughly 1e-11 of round-off at
/// h = 1e-5, which would swamp the relative error of near-zero gradients.
pub const ERR_FLOOR: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ERR_FLOOR)
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Parameter (or `"input"`) holding the worst entry.
    pub worst: String,
    pub checked: usize,
    /// Coordinates skipped because a perturbation moved a relu
    /// pre-activation across zero, where the loss is not differentiable.
    pub skipped_kinks: usize,
}

/// Sign pattern of every relu pre-activation in a trace.
fn relu_mask(net: &Network, trace: &ForwardTrace) -> Vec<bool> {
    let mut mask = Vec::new();
    let mut push = |act: Activation, pre: &Matrix| {
        if act == Activation::Relu {
            mask.extend(pre.as_slice().iter().map(|&v| v > 0.0));
        }
    };
    push(net.first.activation, &trace.first.pre);
    for (i, c) in trace.body.iter().enumerate() {
        match (c, &net.body) {
            (BodyCache::Plain(p), Body::Plain(layers)) => push(layers[i].activation, &p.pre),
            (BodyCache::Highway(h), Body::Highway(layers)) => push(layers[i].activation, &h.h_pre),
            _ => {}
        }
    }
    mask
}

struct Probe<'a> {
    x: &'a Matrix,
    labels: &'a [usize],
    h: f64,
    base_mask: Vec<bool>,
    report: GradCheckReport,
}

impl Probe<'_> {
    /// Central difference of the loss; `None` if either side crosses a kink.
    fn central(&self, net_plus: &Network, x_plus: &Matrix, net_minus: &Network, x_minus: &Matrix) -> Result<Option<f64>> {
        let plus = net_plus.forward(x_plus, self.labels)?;
        let minus = net_minus.forward(x_minus, self.labels)?;
        if relu_mask(net_plus, &plus) != self.base_mask || relu_mask(net_minus, &minus) != self.base_mask {
            return Ok(None);
        }
        Ok(Some((plus.loss - minus.loss) / (2.0 * self.h)))
    }

    fn record(&mut self, name: &str, analytic: f64, numeric: Option<f64>) {
        match numeric {
            None => self.report.skipped_kinks += 1,
            Some(n) => {
                self.report.checked += 1;
                let e = relative_error(analytic, n);
                if e > self.report.max_rel_err || self.report.checked == 1 {
                    self.report.max_rel_err = e;
                    self.report.worst = name.to_string();
                }
            }
        }
    }
}

/// Compares every parameter gradient and the input gradient from
/// [`Network::backward`] with central differences of step `h`.
pub fn check_network(net: &Network, x: &Matrix, labels: &[usize], h: f64) -> Result<GradCheckReport> {
    let trace = net.forward(x, labels)?;
    let grads = net.backward(&trace, labels)?;
    let mut probe = Probe {
        x,
        labels,
        h,
        base_mask: relu_mask(net, &trace),
        report: GradCheckReport {
            max_rel_err: 0.0,
            worst: String::new(),
            checked: 0,
            skipped_kinks: 0,
        },
    };

    let names = net.param_names();
    let analytic: Vec<Matrix> = grads.tensors().into_iter().cloned().collect();
    for (p, name) in names.iter().enumerate() {
        for i in 0..analytic[p].len() {
            let mut plus = net.clone();
            plus.params_mut()[p].as_mut_slice()[i] += h;
            let mut minus = net.clone();
            minus.params_mut()[p].as_mut_slice()[i] -= h;
            let numeric = probe.central(&plus, probe.x, &minus, probe.x)?;
            probe.record(name, analytic[p].as_slice()[i], numeric);
        }
    }

    let dx = grads.input_grad.expect("backward computes the input gradient");
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp.as_mut_slice()[i] += h;
        let mut xm = x.clone();
        xm.as_mut_slice()[i] -= h;
        let numeric = probe.central(net, &xp, net, &xm)?;
        probe.record("input", dx.as_slice()[i], numeric);
    }
    Ok(probe.report)
}

/// A randomly initialized network with random inputs and labels, for
/// gradient checking. Gate biases are drawn from [−3, 1] so gates sit away
/// from saturation and every path carries signal.
pub fn random_problem(
    depth: usize,
    width: usize,
    body: BodyKind,
    activation: Activation,
    seed: u64,
) -> Result<(Network, Matrix, Vec<usize>)> {
    let mut rng = RngState::new(seed);
    let input_dim = 2 + rng.index(5);
    let classes = 2 + rng.index(3);
    let batch = 2 + rng.index(3);
    let arch = Architecture {
        input_dim,
        width,
        classes,
        depth,
        body,
        activation,
    };
    let spec = InitSpec {
        weight_scheme: None,
        gate_bias: rng.uniform_scalar(-3.0, 1.0)?,
        seed: rng.next_u64(),
    };
    let mut net = init_network(&arch, &spec)?;
    // Non-zero biases exercise the bias gradients away from the init point.
    for p in net.params_mut() {
        if p.rows() == 1 {
            let noise = rng.uniform(-0.5, 0.5, 1, p.cols())?;
            p.add_assign(&noise)?;
        }
    }
    let x = rng.uniform(-1.0, 1.0, batch, input_dim)?;
    let labels = (0..batch).map(|_| rng.index(classes)).collect();
    Ok((net, x, labels))
}
