use serde::{Deserialize, Serialize};

use super::layer::{GateMode, HighwayCache, HighwayGrads, HighwayLayer, PlainCache, PlainGrads, PlainLayer};
use super::loss::{correct_count, nll_sum, softmax, xent_grad};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyKind {
    Plain,
    Highway,
}

impl BodyKind {
    pub fn name(self) -> &'static str {
        match self {
            BodyKind::Plain => "plain",
            BodyKind::Highway => "highway",
        }
    }
}

/// The hidden layers between the first (dimension-changing) layer and the
/// output layer. Always homogeneous in kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Plain(Vec<PlainLayer>),
    Highway(Vec<HighwayLayer>),
}

impl Body {
    pub fn len(&self) -> usize {
        match self {
            Body::Plain(v) => v.len(),
            Body::Highway(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> BodyKind {
        match self {
            Body::Plain(_) => BodyKind::Plain,
            Body::Highway(_) => BodyKind::Highway,
        }
    }
}

/// Plain input layer → body → linear output layer → softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub first: PlainLayer,
    pub body: Body,
    pub output: PlainLayer,
}

#[derive(Debug, Clone)]
pub enum BodyCache {
    Plain(PlainCache),
    Highway(HighwayCache),
    /// Gates forced shut: the layer copied its input.
    Lesioned(Matrix),
}

impl BodyCache {
    pub fn input(&self) -> &Matrix {
        match self {
            BodyCache::Plain(c) => &c.input,
            BodyCache::Highway(c) => &c.input,
            BodyCache::Lesioned(m) => m,
        }
    }

    pub fn output(&self) -> &Matrix {
        match self {
            BodyCache::Plain(c) => &c.output,
            BodyCache::Highway(c) => &c.output,
            BodyCache::Lesioned(m) => m,
        }
    }

    pub fn gate(&self) -> Option<&Matrix> {
        match self {
            BodyCache::Highway(c) => Some(&c.gate),
            _ => None,
        }
    }
}

/// Everything the backward pass and the analysis reports need from a
/// forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub first: PlainCache,
    pub body: Vec<BodyCache>,
    pub output: PlainCache,
    pub probs: Matrix,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BodyGrads {
    Plain(PlainGrads),
    Highway(HighwayGrads),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub first: PlainGrads,
    pub body: Vec<BodyGrads>,
    pub output: PlainGrads,
    /// Gradient with respect to the input of each body layer.
    pub body_input_grads: Vec<Matrix>,
    /// Gradient with respect to the network input, when requested.
    pub input_grad: Option<Matrix>,
}

impl Gradients {
    /// Parameter gradients in [`Network::params`] order.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = vec![&self.first.weight, &self.first.bias];
        for g in &self.body {
            match g {
                BodyGrads::Plain(p) => out.extend([&p.weight, &p.bias]),
                BodyGrads::Highway(h) => out.extend([&h.w_h, &h.b_h, &h.w_t, &h.b_t]),
            }
        }
        out.extend([&self.output.weight, &self.output.bias]);
        out
    }
}

impl Network {
    pub fn new(first: PlainLayer, body: Body, output: PlainLayer) -> Result<Self> {
        let width = first.out_dim();
        let chain_err = |what: &str| Error::Param(format!("inconsistent layer chain: {what}"));
        match &body {
            Body::Plain(layers) => {
                for (i, l) in layers.iter().enumerate() {
                    if l.in_dim() != width || l.out_dim() != width {
                        return Err(chain_err(&format!("plain body layer {i}")));
                    }
                }
            }
            Body::Highway(layers) => {
                for (i, l) in layers.iter().enumerate() {
                    if l.width() != width {
                        return Err(chain_err(&format!("highway body layer {i}")));
                    }
                }
            }
        }
        if output.in_dim() != width {
            return Err(chain_err("output layer"));
        }
        Ok(Network { first, body, output })
    }

    pub fn input_dim(&self) -> usize {
        self.first.in_dim()
    }

    pub fn width(&self) -> usize {
        self.first.out_dim()
    }

    pub fn classes(&self) -> usize {
        self.output.out_dim()
    }

    /// Total number of weight layers, counting the first and output layers.
    pub fn depth(&self) -> usize {
        self.body.len() + 2
    }

    pub fn body_kind(&self) -> BodyKind {
        self.body.kind()
    }

    /// Per-layer parameter counts: first, each body layer, output.
    pub fn param_counts(&self) -> Vec<usize> {
        let mut counts = vec![self.first.param_count()];
        match &self.body {
            Body::Plain(v) => counts.extend(v.iter().map(PlainLayer::param_count)),
            Body::Highway(v) => counts.extend(v.iter().map(HighwayLayer::param_count)),
        }
        counts.push(self.output.param_count());
        counts
    }

    pub fn param_count(&self) -> usize {
        self.param_counts().iter().sum()
    }

    pub fn params(&self) -> Vec<&Matrix> {
        let mut out = vec![&self.first.weight, &self.first.bias];
        match &self.body {
            Body::Plain(v) => v.iter().for_each(|l| out.extend([&l.weight, &l.bias])),
            Body::Highway(v) => v.iter().for_each(|l| out.extend([&l.w_h, &l.b_h, &l.w_t, &l.b_t])),
        }
        out.extend([&self.output.weight, &self.output.bias]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.first.weight, &mut self.first.bias];
        match &mut self.body {
            Body::Plain(v) => v.iter_mut().for_each(|l| out.extend([&mut l.weight, &mut l.bias])),
            Body::Highway(v) => v
                .iter_mut()
                .for_each(|l| out.extend([&mut l.w_h, &mut l.b_h, &mut l.w_t, &mut l.b_t])),
        }
        out.extend([&mut self.output.weight, &mut self.output.bias]);
        out
    }

    /// Human-readable name of each tensor in [`Network::params`] order.
    pub fn param_names(&self) -> Vec<String> {
        let mut out = vec!["first.weight".to_string(), "first.bias".to_string()];
        for i in 0..self.body.len() {
            let fields: &[&str] = match self.body {
                Body::Plain(_) => &["weight", "bias"],
                Body::Highway(_) => &["w_h", "b_h", "w_t", "b_t"],
            };
            out.extend(fields.iter().map(|f| format!("body[{i}].{f}")));
        }
        out.push("output.weight".into());
        out.push("output.bias".into());
        out
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape {
                op: "network input",
                left: x.shape(),
                right: self.first.weight.shape(),
            });
        }
        Ok(())
    }

    fn check_lesion(&self, layer: usize) -> Result<()> {
        match &self.body {
            Body::Plain(_) => Err(Error::Usage("only highway layers can be lesioned".into())),
            Body::Highway(v) if layer >= v.len() => Err(Error::Usage(format!(
                "lesion index {layer} out of range for a body of {} layers",
                v.len()
            ))),
            Body::Highway(_) => Ok(()),
        }
    }

    /// Full forward pass with every intermediate retained.
    pub fn forward(&self, x: &Matrix, labels: &[usize]) -> Result<ForwardTrace> {
        self.forward_traced(x, labels, None)
    }

    /// As [`Network::forward`], with body layer `lesion` copying its input.
    pub fn forward_lesioned(&self, x: &Matrix, labels: &[usize], lesion: usize) -> Result<ForwardTrace> {
        self.check_lesion(lesion)?;
        self.forward_traced(x, labels, Some(lesion))
    }

    fn forward_traced(&self, x: &Matrix, labels: &[usize], lesion: Option<usize>) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let (mut act, first) = self.first.forward(x)?;
        let mut body = Vec::with_capacity(self.body.len());
        match &self.body {
            Body::Plain(layers) => {
                for l in layers {
                    let (y, c) = l.forward(&act)?;
                    body.push(BodyCache::Plain(c));
                    act = y;
                }
            }
            Body::Highway(layers) => {
                for (i, l) in layers.iter().enumerate() {
                    if lesion == Some(i) {
                        body.push(BodyCache::Lesioned(act.clone()));
                        continue;
                    }
                    let (y, c) = l.forward_with(&act, GateMode::Learned)?;
                    body.push(BodyCache::Highway(c));
                    act = y;
                }
            }
        }
        let (logits, output) = self.output.forward(&act)?;
        let (loss, accuracy) = batch_metrics(&logits, labels)?;
        Ok(ForwardTrace {
            first,
            body,
            output,
            probs: softmax(&logits),
            loss,
            accuracy,
        })
    }

    /// Output-layer logits without retaining intermediates.
    pub fn logits(&self, x: &Matrix, lesion: Option<usize>) -> Result<Matrix> {
        self.check_input(x)?;
        if let Some(l) = lesion {
            self.check_lesion(l)?;
        }
        let mut act = self.first.infer(x)?;
        match &self.body {
            Body::Plain(layers) => {
                for l in layers {
                    act = l.infer(&act)?;
                }
            }
            Body::Highway(layers) => {
                for (i, l) in layers.iter().enumerate() {
                    if lesion != Some(i) {
                        act = l.infer(&act)?;
                    }
                }
            }
        }
        self.output.infer(&act)
    }

    /// Mean loss and accuracy with the gates of body layer `lesion` forced
    /// to zero.
    pub fn lesioned_forward(&self, x: &Matrix, labels: &[usize], lesion: usize) -> Result<(f64, f64)> {
        self.check_lesion(lesion)?;
        let logits = self.logits(x, Some(lesion))?;
        batch_metrics(&logits, labels)
    }

    /// Gradients of the mean batch loss for every parameter, plus the input
    /// gradient.
    pub fn backward(&self, trace: &ForwardTrace, labels: &[usize]) -> Result<Gradients> {
        self.backward_inner(trace, labels, true)
    }

    /// As [`Network::backward`] but skips the gradient with respect to the
    /// network input.
    pub fn param_gradients(&self, trace: &ForwardTrace, labels: &[usize]) -> Result<Gradients> {
        self.backward_inner(trace, labels, false)
    }

    fn check_trace(&self, trace: &ForwardTrace) -> Result<()> {
        let stale = |what: &str| Error::Usage(format!("trace does not match network: {what}"));
        if trace.body.len() != self.body.len() {
            return Err(stale("body depth"));
        }
        if trace.first.input.cols() != self.input_dim()
            || trace.first.output.cols() != self.width()
            || trace.output.output.cols() != self.classes()
        {
            return Err(stale("layer widths"));
        }
        for c in &trace.body {
            let ok = matches!(
                (c, &self.body),
                (BodyCache::Plain(_), Body::Plain(_))
                    | (BodyCache::Highway(_), Body::Highway(_))
                    | (BodyCache::Lesioned(_), Body::Highway(_))
            );
            if !ok || c.output().cols() != self.width() {
                return Err(stale("body layer kind"));
            }
        }
        Ok(())
    }

    fn backward_inner(&self, trace: &ForwardTrace, labels: &[usize], want_input_grad: bool) -> Result<Gradients> {
        self.check_trace(trace)?;
        if labels.len() != trace.probs.rows() {
            return Err(Error::Shape {
                op: "backward labels",
                left: trace.probs.shape(),
                right: (labels.len(), 1),
            });
        }
        let dlogits = xent_grad(&trace.probs, labels)?;
        let (output, dx) = self.output.backward_inner(&trace.output, &dlogits, true)?;
        let mut dy = dx.expect("requested");

        let n = self.body.len();
        let mut body = Vec::with_capacity(n);
        let mut body_input_grads = Vec::with_capacity(n);
        for i in (0..n).rev() {
            let (dx, grads) = match (&self.body, &trace.body[i]) {
                (Body::Plain(layers), BodyCache::Plain(c)) => {
                    let (dx, g) = layers[i].backward(c, &dy)?;
                    (dx, BodyGrads::Plain(g))
                }
                (Body::Highway(layers), BodyCache::Highway(c)) => {
                    let (dx, g) = layers[i].backward(c, &dy)?;
                    (dx, BodyGrads::Highway(g))
                }
                (Body::Highway(layers), BodyCache::Lesioned(_)) => {
                    let d = layers[i].width();
                    let zero = HighwayGrads {
                        w_h: Matrix::zeros(d, d),
                        b_h: Matrix::zeros(1, d),
                        w_t: Matrix::zeros(d, d),
                        b_t: Matrix::zeros(1, d),
                    };
                    (dy.clone(), BodyGrads::Highway(zero))
                }
                _ => unreachable!("checked by check_trace"),
            };
            body.push(grads);
            body_input_grads.push(dx.clone());
            dy = dx;
        }
        body.reverse();
        body_input_grads.reverse();

        let (first, input_grad) = self.first.backward_inner(&trace.first, &dy, want_input_grad)?;
        Ok(Gradients {
            first,
            body,
            output,
            body_input_grads,
            input_grad,
        })
    }
}

/// Mean cross-entropy and accuracy for a batch of logits.
pub(crate) fn batch_metrics(logits: &Matrix, labels: &[usize]) -> Result<(f64, f64)> {
    let (sum, correct) = batch_sums(logits, labels)?;
    let n = labels.len() as f64;
    Ok((sum / n, correct as f64 / n))
}

/// Summed cross-entropy and number of correct predictions.
pub(crate) fn batch_sums(logits: &Matrix, labels: &[usize]) -> Result<(f64, usize)> {
    if labels.len() != logits.rows() {
        return Err(Error::Shape {
            op: "labels",
            left: logits.shape(),
            right: (labels.len(), 1),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= logits.cols()) {
        return Err(Error::Param(format!("label {bad} out of range for {} classes", logits.cols())));
    }
    Ok((nll_sum(logits, labels), correct_count(logits, labels)))
}
