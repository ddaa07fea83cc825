use crate::error::{Error, Result};
use crate::tensor::{Activation, Matrix};

/// Affine map followed by an elementwise activation: `y = act(x·W + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlainLayer {
    pub weight: Matrix,
    pub bias: Matrix,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct PlainCache {
    pub input: Matrix,
    pub pre: Matrix,
    pub output: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlainGrads {
    pub weight: Matrix,
    pub bias: Matrix,
}

fn check_bias(weight: &Matrix, bias: &Matrix, name: &'static str) -> Result<()> {
    if bias.rows() != 1 || bias.cols() != weight.cols() {
        return Err(Error::Shape {
            op: name,
            left: weight.shape(),
            right: bias.shape(),
        });
    }
    Ok(())
}

/// Backprop through `act(x·W + b)` given the gradient at the output.
/// Returns (dz, dW, db, dx) with dx skipped when not requested.
fn affine_backward(
    activation: Activation,
    weight: &Matrix,
    input: &Matrix,
    pre: &Matrix,
    output: &Matrix,
    dy: &Matrix,
    want_dx: bool,
) -> Result<(PlainGrads, Option<Matrix>)> {
    let cached = if activation.grad_uses_pre() { pre } else { output };
    let dz = match activation {
        Activation::Identity => dy.clone(),
        _ => dy.zip_map(cached, "activation backward", |g, c| g * activation.derivative(c))?,
    };
    let grads = PlainGrads {
        weight: input.t_matmul(&dz)?,
        bias: dz.sum_rows(),
    };
    let dx = if want_dx {
        Some(dz.matmul_t(weight)?)
    } else {
        None
    };
    Ok((grads, dx))
}

impl PlainLayer {
    pub fn new(weight: Matrix, bias: Matrix, activation: Activation) -> Result<Self> {
        check_bias(&weight, &bias, "plain layer bias")?;
        Ok(PlainLayer {
            weight,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, PlainCache)> {
        let pre = x.matmul(&self.weight)?.add_row_bias(&self.bias)?;
        let output = self.activation.apply(&pre);
        let cache = PlainCache {
            input: x.clone(),
            pre,
            output: output.clone(),
        };
        Ok((output, cache))
    }

    /// Output only, no cache.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        let pre = x.matmul(&self.weight)?.add_row_bias(&self.bias)?;
        Ok(self.activation.apply(&pre))
    }

    pub fn backward(&self, cache: &PlainCache, dy: &Matrix) -> Result<(Matrix, PlainGrads)> {
        let (grads, dx) = self.backward_inner(cache, dy, true)?;
        Ok((dx.expect("requested"), grads))
    }

    pub(crate) fn backward_inner(
        &self,
        cache: &PlainCache,
        dy: &Matrix,
        want_dx: bool,
    ) -> Result<(PlainGrads, Option<Matrix>)> {
        dy.expect_same_shape(&cache.output, "plain backward")?;
        affine_backward(
            self.activation,
            &self.weight,
            &cache.input,
            &cache.pre,
            &cache.output,
            dy,
            want_dx,
        )
    }
}

/// How a highway layer obtains its transform gate values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateMode {
    /// `T = σ(x·W_T + b_T)`.
    Learned,
    /// Every gate forced to the constant, detached from `W_T`/`b_T`.
    /// Test hook for the boundary behavior at T = 0 and T = 1.
    Clamped(f64),
}

/// `y = H ⊙ T + x ⊙ (1 − T)` with `H = act(x·W_H + b_H)` and
/// `T = σ(x·W_T + b_T)`. Square: input and output width are equal.
#[derive(Debug, Clone, PartialEq)]
pub struct HighwayLayer {
    pub w_h: Matrix,
    pub b_h: Matrix,
    pub w_t: Matrix,
    pub b_t: Matrix,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct HighwayCache {
    pub input: Matrix,
    pub h_pre: Matrix,
    pub h: Matrix,
    pub gate: Matrix,
    pub output: Matrix,
    pub mode: GateMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighwayGrads {
    pub w_h: Matrix,
    pub b_h: Matrix,
    pub w_t: Matrix,
    pub b_t: Matrix,
}

impl HighwayLayer {
    pub fn new(w_h: Matrix, b_h: Matrix, w_t: Matrix, b_t: Matrix, activation: Activation) -> Result<Self> {
        let d = w_h.rows();
        for m in [&w_h, &w_t] {
            if m.shape() != (d, d) {
                return Err(Error::Shape {
                    op: "highway layer weights must be square",
                    left: w_h.shape(),
                    right: m.shape(),
                });
            }
        }
        check_bias(&w_h, &b_h, "highway b_H")?;
        check_bias(&w_t, &b_t, "highway b_T")?;
        Ok(HighwayLayer {
            w_h,
            b_h,
            w_t,
            b_t,
            activation,
        })
    }

    pub fn width(&self) -> usize {
        self.w_h.rows()
    }

    pub fn param_count(&self) -> usize {
        self.w_h.len() + self.b_h.len() + self.w_t.len() + self.b_t.len()
    }

    /// `T = σ(x·W_T + b_T)`; every entry lies strictly in (0, 1).
    pub fn transform_gate(&self, x: &Matrix) -> Result<Matrix> {
        let pre = x.matmul(&self.w_t)?.add_row_bias(&self.b_t)?;
        Ok(Activation::Sigmoid.apply(&pre))
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, HighwayCache)> {
        self.forward_with(x, GateMode::Learned)
    }

    pub fn forward_with(&self, x: &Matrix, mode: GateMode) -> Result<(Matrix, HighwayCache)> {
        let h_pre = x.matmul(&self.w_h)?.add_row_bias(&self.b_h)?;
        let h = self.activation.apply(&h_pre);
        let gate = match mode {
            GateMode::Learned => self.transform_gate(x)?,
            GateMode::Clamped(c) => Matrix::filled(x.rows(), x.cols(), c),
        };
        let output = combine(&h, &gate, x);
        let cache = HighwayCache {
            input: x.clone(),
            h_pre,
            h,
            gate,
            output: output.clone(),
            mode,
        };
        Ok((output, cache))
    }

    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        let h = self.activation.apply(&x.matmul(&self.w_h)?.add_row_bias(&self.b_h)?);
        let gate = self.transform_gate(x)?;
        Ok(combine(&h, &gate, x))
    }

    /// Gradients from the gated sum: dH = T⊙dy, dT = (H − x)⊙dy and the carry
    /// term (1 − T)⊙dy. dH and dT are then pushed through their affine maps.
    /// dx sums the carry, H and T paths in that order.
    pub fn backward(&self, cache: &HighwayCache, dy: &Matrix) -> Result<(Matrix, HighwayGrads)> {
        dy.expect_same_shape(&cache.output, "highway backward")?;
        let n = dy.len();
        let (x, h, t, g) = (
            cache.input.as_slice(),
            cache.h.as_slice(),
            cache.gate.as_slice(),
            dy.as_slice(),
        );
        let mut d_h = Vec::with_capacity(n);
        let mut d_t = Vec::with_capacity(n);
        let mut dx = Vec::with_capacity(n);
        for i in 0..n {
            d_h.push(t[i] * g[i]);
            d_t.push((h[i] - x[i]) * g[i]);
            dx.push((1.0 - t[i]) * g[i]);
        }
        let (rows, cols) = dy.shape();
        let d_h = Matrix::from_vec(rows, cols, d_h)?;
        let mut dx = Matrix::from_vec(rows, cols, dx)?;

        let (h_grads, dx_h) = affine_backward(
            self.activation,
            &self.w_h,
            &cache.input,
            &cache.h_pre,
            &cache.h,
            &d_h,
            true,
        )?;
        dx.add_assign(&dx_h.expect("requested"))?;

        let (w_t, b_t) = match cache.mode {
            GateMode::Learned => {
                let dz_t = Matrix::from_vec(
                    rows,
                    cols,
                    d_t.iter()
                        .zip(t)
                        .map(|(&d, &s)| d * s * (1.0 - s))
                        .collect(),
                )?;
                dx.add_assign(&dz_t.matmul_t(&self.w_t)?)?;
                (cache.input.t_matmul(&dz_t)?, dz_t.sum_rows())
            }
            GateMode::Clamped(_) => (Matrix::zeros(cols, cols), Matrix::zeros(1, cols)),
        };

        Ok((
            dx,
            HighwayGrads {
                w_h: h_grads.weight,
                b_h: h_grads.bias,
                w_t,
                b_t,
            },
        ))
    }

    /// The block transform `H` alone, as a plain layer sharing W_H and b_H.
    pub fn transform_only(&self) -> PlainLayer {
        PlainLayer {
            weight: self.w_h.clone(),
            bias: self.b_h.clone(),
            activation: self.activation,
        }
    }
}

fn combine(h: &Matrix, gate: &Matrix, x: &Matrix) -> Matrix {
    let data = h
        .as_slice()
        .iter()
        .zip(gate.as_slice())
        .zip(x.as_slice())
        .map(|((&hv, &t), &xv)| hv * t + xv * (1.0 - t))
        .collect();
    Matrix::from_vec(x.rows(), x.cols(), data).expect("same shape")
}
