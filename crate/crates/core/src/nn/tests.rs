use super::*;
use crate::error::Error;
use crate::init::{init_network, Architecture, InitSpec};
use crate::tensor::{sigmoid, Activation, Matrix, RngState};

fn random_highway(d: usize, act: Activation, gate_bias: f64, rng: &mut RngState) -> HighwayLayer {
    HighwayLayer::new(
        rng.uniform(-0.8, 0.8, d, d).unwrap(),
        rng.uniform(-0.3, 0.3, 1, d).unwrap(),
        rng.uniform(-0.8, 0.8, d, d).unwrap(),
        Matrix::filled(1, d, gate_bias),
        act,
    )
    .unwrap()
}

fn random_plain(i: usize, o: usize, act: Activation, rng: &mut RngState) -> PlainLayer {
    PlainLayer::new(rng.uniform(-0.8, 0.8, i, o).unwrap(), rng.uniform(-0.3, 0.3, 1, o).unwrap(), act).unwrap()
}

fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// Central differences of `loss` with respect to every entry of `m`.
fn numeric_grad(m: &Matrix, h: f64, mut loss: impl FnMut(&Matrix) -> f64) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for i in 0..m.len() {
        let mut p = m.clone();
        p.as_mut_slice()[i] += h;
        let mut q = m.clone();
        q.as_mut_slice()[i] -= h;
        out.as_mut_slice()[i] = (loss(&p) - loss(&q)) / (2.0 * h);
    }
    out
}

fn assert_grad_close(analytic: &Matrix, numeric: &Matrix, tol: f64, what: &str) {
    assert_eq!(analytic.shape(), numeric.shape(), "{what}");
    for (i, (&a, &n)) in analytic.as_slice().iter().zip(numeric.as_slice()).enumerate() {
        assert!(rel(a, n) < tol, "{what}[{i}]: analytic {a}, numeric {n}");
    }
}

/// Scalar probe loss Σ c ⊙ y.
fn weighted_sum(y: &Matrix, c: &Matrix) -> f64 {
    y.as_slice().iter().zip(c.as_slice()).map(|(a, b)| a * b).sum()
}

#[test]
fn plain_identity_relu() {
    let l = PlainLayer::new(Matrix::identity(4), Matrix::zeros(1, 4), Activation::Relu).unwrap();
    let x = RngState::new(1).uniform(0.0, 2.0, 3, 4).unwrap();
    let (y, cache) = l.forward(&x).unwrap();
    assert!(y.bitwise_eq(&x));
    let dy = RngState::new(2).uniform(-1.0, 1.0, 3, 4).unwrap();
    let (dx, _) = l.backward(&cache, &dy).unwrap();
    assert!(dx.bitwise_eq(&dy));
}

#[test]
fn plain_zero_input_tanh() {
    let mut rng = RngState::new(3);
    let l = PlainLayer::new(rng.uniform(-1.0, 1.0, 5, 4).unwrap(), Matrix::zeros(1, 4), Activation::Tanh).unwrap();
    let (y, _) = l.forward(&Matrix::zeros(2, 5)).unwrap();
    assert_eq!(y.max_abs(), 0.0);
}

#[test]
fn plain_forward_matches_composition() {
    let mut rng = RngState::new(4);
    for act in [Activation::Tanh, Activation::Relu, Activation::Sigmoid] {
        let l = random_plain(6, 3, act, &mut rng);
        let x = rng.uniform(-1.0, 1.0, 5, 6).unwrap();
        let expected = act.apply(&x.matmul(&l.weight).unwrap().add_row_bias(&l.bias).unwrap());
        assert!(l.forward(&x).unwrap().0.bitwise_eq(&expected));
        assert!(l.infer(&x).unwrap().bitwise_eq(&expected));
    }
}

#[test]
fn plain_shape_mismatch() {
    let l = random_plain(3, 2, Activation::Tanh, &mut RngState::new(0));
    assert!(matches!(l.forward(&Matrix::zeros(1, 4)), Err(Error::Shape { .. })));
    let (_, cache) = l.forward(&Matrix::zeros(1, 3)).unwrap();
    assert!(l.backward(&cache, &Matrix::zeros(1, 3)).is_err());
}

#[test]
fn plain_zero_dy_gives_zero_grads() {
    let mut rng = RngState::new(5);
    let l = random_plain(4, 4, Activation::Tanh, &mut rng);
    let x = rng.uniform(-1.0, 1.0, 3, 4).unwrap();
    let (_, cache) = l.forward(&x).unwrap();
    let (dx, g) = l.backward(&cache, &Matrix::zeros(3, 4)).unwrap();
    assert_eq!(dx.max_abs() + g.weight.max_abs() + g.bias.max_abs(), 0.0);
}

#[test]
fn plain_backward_matches_finite_differences() {
    let h = 1e-5;
    let mut rng = RngState::new(6);
    for act in [Activation::Tanh, Activation::Sigmoid, Activation::Relu] {
        let l = random_plain(5, 4, act, &mut rng);
        let x = rng.uniform(-1.0, 1.0, 3, 5).unwrap();
        let c = rng.uniform(-1.0, 1.0, 3, 4).unwrap();
        let (_, cache) = l.forward(&x).unwrap();
        let (dx, g) = l.backward(&cache, &c).unwrap();
        let nw = numeric_grad(&l.weight, h, |w| {
            let p = PlainLayer::new(w.clone(), l.bias.clone(), act).unwrap();
            weighted_sum(&p.infer(&x).unwrap(), &c)
        });
        let nb = numeric_grad(&l.bias, h, |b| {
            let p = PlainLayer::new(l.weight.clone(), b.clone(), act).unwrap();
            weighted_sum(&p.infer(&x).unwrap(), &c)
        });
        let nx = numeric_grad(&x, h, |xx| weighted_sum(&l.infer(xx).unwrap(), &c));
        assert_grad_close(&g.weight, &nw, 1e-6, "dW");
        assert_grad_close(&g.bias, &nb, 1e-6, "db");
        assert_grad_close(&dx, &nx, 1e-6, "dx");
    }
}

#[test]
fn gate_values() {
    let d = 4;
    let x = RngState::new(7).uniform(-2.0, 2.0, 3, d).unwrap();
    let mut l = HighwayLayer::new(
        Matrix::identity(d),
        Matrix::zeros(1, d),
        Matrix::zeros(d, d),
        Matrix::zeros(1, d),
        Activation::Tanh,
    )
    .unwrap();
    assert!(l.transform_gate(&x).unwrap().as_slice().iter().all(|&t| t == 0.5));
    l.b_t = Matrix::filled(1, d, -10.0);
    for &t in l.transform_gate(&x).unwrap().as_slice() {
        assert!((t - 4.539_786_870_243_439e-5).abs() < 1e-18);
    }
}

#[test]
fn gate_monotone_in_bias() {
    let mut rng = RngState::new(8);
    let mut a = random_highway(5, Activation::Tanh, -1.0, &mut rng);
    let x = rng.uniform(-1.0, 1.0, 6, 5).unwrap();
    let ta = a.transform_gate(&x).unwrap();
    a.b_t = Matrix::filled(1, 5, -3.0);
    let tb = a.transform_gate(&x).unwrap();
    for (p, q) in ta.as_slice().iter().zip(tb.as_slice()) {
        assert!(p > q);
    }
}

#[test]
fn gates_strictly_inside_unit_interval() {
    let mut rng = RngState::new(9);
    let mut l = random_highway(3, Activation::Relu, 0.0, &mut rng);
    for bias in [-1e6, -800.0, -10.0, 0.0, 10.0, 800.0, 1e6] {
        l.b_t = Matrix::filled(1, 3, bias);
        let x = rng.uniform(-100.0, 100.0, 4, 3).unwrap();
        let (_, cache) = l.forward(&x).unwrap();
        assert!(cache.gate.as_slice().iter().all(|&t| t > 0.0 && t < 1.0), "bias {bias}");
    }
}

#[test]
fn clamped_gate_boundaries() {
    let mut rng = RngState::new(10);
    for act in [Activation::Tanh, Activation::Relu] {
        let l = random_highway(6, act, -2.0, &mut rng);
        let x = rng.uniform(-1.0, 1.0, 4, 6).unwrap();
        let (carry, _) = l.forward_with(&x, GateMode::Clamped(0.0)).unwrap();
        assert!(carry.bitwise_eq(&x));
        let (transform, _) = l.forward_with(&x, GateMode::Clamped(1.0)).unwrap();
        let (h, _) = l.transform_only().forward(&x).unwrap();
        assert!(transform.bitwise_eq(&h));
    }
}

#[test]
fn output_is_convex_combination() {
    let mut rng = RngState::new(11);
    for act in [Activation::Tanh, Activation::Relu, Activation::Sigmoid] {
        let l = random_highway(7, act, 0.5, &mut rng);
        let x = rng.uniform(-3.0, 3.0, 20, 7).unwrap();
        let (y, cache) = l.forward(&x).unwrap();
        for i in 0..y.len() {
            let (xi, hi, yi) = (x.as_slice()[i], cache.h.as_slice()[i], y.as_slice()[i]);
            assert!(yi >= xi.min(hi) - 1e-12 && yi <= xi.max(hi) + 1e-12);
        }
    }
}

#[test]
fn clamped_backward_paths() {
    let mut rng = RngState::new(12);
    let l = random_highway(5, Activation::Tanh, -1.0, &mut rng);
    let x = rng.uniform(-1.0, 1.0, 3, 5).unwrap();
    let dy = rng.uniform(-1.0, 1.0, 3, 5).unwrap();

    let (_, cache) = l.forward_with(&x, GateMode::Clamped(0.0)).unwrap();
    let (dx, g) = l.backward(&cache, &dy).unwrap();
    assert!(dx.bitwise_eq(&dy));
    assert_eq!(g.w_t.max_abs() + g.b_t.max_abs() + g.w_h.max_abs() + g.b_h.max_abs(), 0.0);

    let (_, cache) = l.forward_with(&x, GateMode::Clamped(1.0)).unwrap();
    let (dx, g) = l.backward(&cache, &dy).unwrap();
    let plain = l.transform_only();
    let (_, pcache) = plain.forward(&x).unwrap();
    let (pdx, pg) = plain.backward(&pcache, &dy).unwrap();
    assert!(dx.bitwise_eq(&pdx));
    assert!(g.w_h.bitwise_eq(&pg.weight));
    assert!(g.b_h.bitwise_eq(&pg.bias));
    assert_eq!(g.w_t.max_abs() + g.b_t.max_abs(), 0.0);
}

#[test]
fn highway_backward_matches_finite_differences() {
    let h = 1e-5;
    let mut rng = RngState::new(13);
    for act in [Activation::Tanh, Activation::Sigmoid, Activation::Relu] {
        let l = random_highway(4, act, -0.5, &mut rng);
        let x = rng.uniform(-1.0, 1.0, 3, 4).unwrap();
        let c = rng.uniform(-1.0, 1.0, 3, 4).unwrap();
        let (_, cache) = l.forward(&x).unwrap();
        let (dx, g) = l.backward(&cache, &c).unwrap();
        let probe = |layer: &HighwayLayer, xx: &Matrix| weighted_sum(&layer.infer(xx).unwrap(), &c);
        let with = |f: &dyn Fn(&mut HighwayLayer)| {
            let mut m = l.clone();
            f(&mut m);
            m
        };
        let n_wh = numeric_grad(&l.w_h, h, |m| probe(&with(&|k| k.w_h = m.clone()), &x));
        let n_bh = numeric_grad(&l.b_h, h, |m| probe(&with(&|k| k.b_h = m.clone()), &x));
        let n_wt = numeric_grad(&l.w_t, h, |m| probe(&with(&|k| k.w_t = m.clone()), &x));
        let n_bt = numeric_grad(&l.b_t, h, |m| probe(&with(&|k| k.b_t = m.clone()), &x));
        let n_x = numeric_grad(&x, h, |xx| probe(&l, xx));
        assert_grad_close(&g.w_h, &n_wh, 1e-6, "dW_H");
        assert_grad_close(&g.b_h, &n_bh, 1e-6, "db_H");
        assert_grad_close(&g.w_t, &n_wt, 1e-6, "dW_T");
        assert_grad_close(&g.b_t, &n_bt, 1e-6, "db_T");
        assert_grad_close(&dx, &n_x, 1e-6, "dx");
    }
}

/// Numerical Jacobian dy/dx of a single-sample map.
fn jacobian(x: &Matrix, h: f64, f: impl Fn(&Matrix) -> Matrix) -> Matrix {
    let n = x.cols();
    let m = f(x).cols();
    let mut jac = Matrix::zeros(m, n);
    for j in 0..n {
        let mut p = x.clone();
        p.as_mut_slice()[j] += h;
        let mut q = x.clone();
        q.as_mut_slice()[j] -= h;
        let (fp, fq) = (f(&p), f(&q));
        for i in 0..m {
            jac.set(i, j, (fp.as_slice()[i] - fq.as_slice()[i]) / (2.0 * h));
        }
    }
    jac
}

#[test]
fn clamped_jacobians() {
    let h = 1e-6;
    let mut rng = RngState::new(14);
    for act in [Activation::Tanh, Activation::Sigmoid] {
        let l = random_highway(6, act, -1.0, &mut rng);
        let x = rng.uniform(-1.0, 1.0, 1, 6).unwrap();
        let carry = jacobian(&x, h, |xx| l.forward_with(xx, GateMode::Clamped(0.0)).unwrap().0);
        let eye = Matrix::identity(6);
        assert!(carry.sub(&eye).unwrap().max_abs() < 1e-7);

        let transform = jacobian(&x, h, |xx| l.forward_with(xx, GateMode::Clamped(1.0)).unwrap().0);
        let bare = jacobian(&x, h, |xx| l.transform_only().infer(xx).unwrap());
        assert!(transform.sub(&bare).unwrap().max_abs() < 1e-7);
    }
}

fn tiny_net(depth: usize, body: BodyKind, gate_bias: f64, seed: u64) -> Network {
    let arch = Architecture {
        input_dim: 6,
        width: 5,
        classes: 3,
        depth,
        body,
        activation: Activation::Tanh,
    };
    init_network(
        &arch,
        &InitSpec {
            weight_scheme: None,
            gate_bias,
            seed,
        },
    )
    .unwrap()
}

#[test]
fn depth_two_is_plain_plus_softmax() {
    let net = tiny_net(2, BodyKind::Highway, -1.0, 1);
    let x = RngState::new(2).uniform(-1.0, 1.0, 4, 6).unwrap();
    let labels = [0, 1, 2, 1];
    let trace = net.forward(&x, &labels).unwrap();
    let (hidden, _) = net.first.forward(&x).unwrap();
    let logits = hidden.matmul(&net.output.weight).unwrap().add_row_bias(&net.output.bias).unwrap();
    let (loss, _, probs) = softmax_xent(&logits, &labels).unwrap();
    assert_eq!(trace.loss, loss);
    assert!(trace.probs.bitwise_eq(&probs));
}

#[test]
fn trace_chains_layers() {
    let net = tiny_net(7, BodyKind::Highway, -1.0, 3);
    let x = RngState::new(4).uniform(-1.0, 1.0, 3, 6).unwrap();
    let trace = net.forward(&x, &[0, 1, 2]).unwrap();
    assert!(trace.first.output.bitwise_eq(trace.body[0].input()));
    for w in trace.body.windows(2) {
        assert!(w[0].output().bitwise_eq(w[1].input()));
    }
    assert!(trace.body.last().unwrap().output().bitwise_eq(&trace.output.input));
    for c in &trace.body {
        assert!(c.gate().unwrap().as_slice().iter().all(|&t| t > 0.0 && t < 1.0));
    }
}

#[test]
fn forward_is_deterministic() {
    let net = tiny_net(6, BodyKind::Plain, -1.0, 5);
    let x = RngState::new(6).uniform(-1.0, 1.0, 5, 6).unwrap();
    let a = net.forward(&x, &[0, 1, 2, 0, 1]).unwrap();
    let b = net.forward(&x, &[0, 1, 2, 0, 1]).unwrap();
    assert!(a.probs.bitwise_eq(&b.probs));
    assert_eq!(a.loss.to_bits(), b.loss.to_bits());
}

#[test]
fn deep_carry_body_is_near_identity() {
    let arch = Architecture {
        input_dim: 10,
        width: 8,
        classes: 3,
        depth: 50,
        body: BodyKind::Highway,
        activation: Activation::Tanh,
    };
    let mut net = init_network(
        &arch,
        &InitSpec {
            weight_scheme: None,
            gate_bias: -10.0,
            seed: 7,
        },
    )
    .unwrap();
    net.output.weight = Matrix::zeros(8, 3);
    let x = RngState::new(8).uniform(0.0, 1.0, 16, 10).unwrap();
    let labels: Vec<usize> = (0..16).map(|i| i % 3).collect();
    let trace = net.forward(&x, &labels).unwrap();
    let dev = trace.body.last().unwrap().output().sub(&trace.first.output).unwrap().max_abs();
    assert!(dev < 5e-3, "deviation {dev}");
    assert!((trace.loss - 3f64.ln()).abs() < 1e-12);
}

#[test]
fn lesioned_layer_copies_input() {
    let net = tiny_net(6, BodyKind::Highway, -1.0, 9);
    let x = RngState::new(10).uniform(-1.0, 1.0, 4, 6).unwrap();
    let labels = [0, 1, 2, 0];
    let mut seen = Vec::new();
    for l in 0..3 {
        let trace = net.forward_lesioned(&x, &labels, l).unwrap();
        assert!(trace.body[l].output().bitwise_eq(trace.body[l].input()));
        let (loss, acc) = net.lesioned_forward(&x, &labels, l).unwrap();
        assert_eq!(loss.to_bits(), trace.loss.to_bits());
        assert_eq!(acc, trace.accuracy);
        assert_eq!(net.lesioned_forward(&x, &labels, l).unwrap().0.to_bits(), loss.to_bits());
        seen.push(loss.to_bits());
    }
    seen.sort_unstable();
    seen.dedup();
    assert_eq!(seen.len(), 3);
}

#[test]
fn lesion_usage_errors() {
    let x = Matrix::zeros(1, 6);
    let plain = tiny_net(5, BodyKind::Plain, -1.0, 1);
    assert!(matches!(plain.lesioned_forward(&x, &[0], 0), Err(Error::Usage(_))));
    let hw = tiny_net(5, BodyKind::Highway, -1.0, 1);
    assert!(matches!(hw.lesioned_forward(&x, &[0], 3), Err(Error::Usage(_))));
}

#[test]
fn lesioning_near_identity_layer_barely_changes_loss() {
    let net = tiny_net(8, BodyKind::Highway, -10.0, 11);
    let x = RngState::new(12).uniform(-1.0, 1.0, 10, 6).unwrap();
    let labels: Vec<usize> = (0..10).map(|i| i % 3).collect();
    let base = net.forward(&x, &labels).unwrap().loss;
    for l in 0..6 {
        let (loss, _) = net.lesioned_forward(&x, &labels, l).unwrap();
        assert!((loss - base).abs() < 1e-3);
    }
}

#[test]
fn parameter_counts() {
    let hw = HighwayLayer::new(
        Matrix::zeros(50, 50),
        Matrix::zeros(1, 50),
        Matrix::zeros(50, 50),
        Matrix::zeros(1, 50),
        Activation::Tanh,
    )
    .unwrap();
    assert_eq!(hw.param_count(), 5100);
    let plain = PlainLayer::new(Matrix::zeros(71, 71), Matrix::zeros(1, 71), Activation::Tanh).unwrap();
    assert_eq!(plain.param_count(), 5112);

    let net = tiny_net(2, BodyKind::Highway, -1.0, 0);
    assert_eq!(net.param_count(), (6 * 5 + 5) + (5 * 3 + 3));
    assert_eq!(net.param_counts(), vec![35, 18]);
}

#[test]
fn duplicated_sample_doubles_its_contribution() {
    let net = tiny_net(5, BodyKind::Highway, -1.0, 13);
    let x = RngState::new(14).uniform(-1.0, 1.0, 1, 6).unwrap();
    let single = net.backward(&net.forward(&x, &[2]).unwrap(), &[2]).unwrap();
    let xx = x.select_rows(&[0, 0]);
    let double = net.backward(&net.forward(&xx, &[2, 2]).unwrap(), &[2, 2]).unwrap();
    // Summed (not averaged) contribution: batch size × mean gradient.
    for (a, b) in single.tensors().iter().zip(double.tensors()) {
        for (&s, &d) in a.as_slice().iter().zip(b.as_slice()) {
            assert_eq!(2.0 * d, 2.0 * (1.0 * s), "{s} vs {d}");
        }
    }
}

#[test]
fn perfect_prediction_has_zero_gradient() {
    let mut net = tiny_net(5, BodyKind::Highway, -1.0, 15);
    net.output.weight = Matrix::zeros(5, 3);
    net.output.bias = Matrix::row_vector(vec![0.0, 1000.0, 0.0]);
    let x = RngState::new(16).uniform(-1.0, 1.0, 3, 6).unwrap();
    let labels = [1, 1, 1];
    let trace = net.forward(&x, &labels).unwrap();
    assert!(trace.probs.as_slice().iter().all(|&p| p == 0.0 || p == 1.0));
    let g = net.backward(&trace, &labels).unwrap();
    for t in g.tensors() {
        assert_eq!(t.max_abs(), 0.0);
    }
}

#[test]
fn stale_trace_rejected() {
    let a = tiny_net(5, BodyKind::Highway, -1.0, 1);
    let b = tiny_net(6, BodyKind::Highway, -1.0, 1);
    let c = tiny_net(5, BodyKind::Plain, -1.0, 1);
    let x = Matrix::zeros(2, 6);
    let trace = a.forward(&x, &[0, 1]).unwrap();
    assert!(matches!(b.backward(&trace, &[0, 1]), Err(Error::Usage(_))));
    assert!(matches!(c.backward(&trace, &[0, 1]), Err(Error::Usage(_))));
    assert!(a.backward(&trace, &[0]).is_err());
}

#[test]
fn gradient_shapes_mirror_parameters() {
    let net = tiny_net(5, BodyKind::Highway, -1.0, 2);
    let x = Matrix::zeros(2, 6);
    let g = net.backward(&net.forward(&x, &[0, 1]).unwrap(), &[0, 1]).unwrap();
    let shapes: Vec<_> = net.params().iter().map(|m| m.shape()).collect();
    let gshapes: Vec<_> = g.tensors().iter().map(|m| m.shape()).collect();
    assert_eq!(shapes, gshapes);
    assert_eq!(net.param_names().len(), shapes.len());
    assert_eq!(g.input_grad.unwrap().shape(), x.shape());
    assert_eq!(g.body_input_grads.len(), 3);
}

#[test]
fn checkpoint_round_trip() {
    for (body, depth) in [(BodyKind::Highway, 6), (BodyKind::Plain, 4), (BodyKind::Highway, 2)] {
        let net = tiny_net(depth, body, -2.5, 21);
        let bytes = checkpoint::encode(&net);
        assert_eq!(&bytes[..4], b"HWY1");
        let back = checkpoint::decode(&bytes).unwrap();
        assert_eq!(back.body_kind(), body);
        for (a, b) in net.params().iter().zip(back.params()) {
            assert!(a.bitwise_eq(b));
        }
        assert_eq!(back, net);
    }
}

#[test]
fn checkpoint_rejects_corruption() {
    let net = tiny_net(4, BodyKind::Highway, -2.0, 1);
    let bytes = checkpoint::encode(&net);
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(checkpoint::decode(&bad), Err(Error::Checkpoint(_))));
    assert!(matches!(checkpoint::decode(&bytes[..bytes.len() - 3]), Err(Error::Checkpoint(_))));
    let mut long = bytes.clone();
    long.push(0);
    assert!(matches!(checkpoint::decode(&long), Err(Error::Checkpoint(_))));
}

#[test]
fn sigmoid_bias_reference() {
    assert!((sigmoid(-4.0) - 0.017_986_209_962_091_56).abs() < 1e-16);
}
