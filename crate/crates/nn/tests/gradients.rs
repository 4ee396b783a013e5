//! Finite-difference checks for every differentiable operation.

use rand::Rng;
use vocalid_nn::{
    grad_check, seeded, BiLstmLayer, GruWeights, LstmWeights, Mode, NnRng, ParamId, ParameterSet, Tape, Tensor, Var,
};

const TOLERANCE: f64 = 1e-4;

fn random(params: &mut ParameterSet, rng: &mut NnRng, name: &str, shape: &[usize]) -> ParamId {
    let t = Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0));
    params.insert(name, t).unwrap()
}

/// Contracts a tensor with fixed pseudo-random weights so every output
/// element gets a distinct upstream gradient.
fn weighted_sum(tape: &mut Tape, x: Var) -> Var {
    let shape = tape.shape(x).to_vec();
    let w = Tensor::from_fn(&shape, |i| ((i * 7919 % 113) as f64 / 113.0) - 0.4);
    let w = tape.input(w).unwrap();
    let flat_len: usize = shape.iter().product();
    let xf = tape.reshape(x, &[1, flat_len]).unwrap();
    let wf = tape.reshape(w, &[flat_len, 1]).unwrap();
    let zero = tape.input(Tensor::zeros(&[1])).unwrap();
    let y = tape.dense(xf, wf, zero).unwrap();
    tape.sum(y).unwrap()
}

fn assert_passes(name: &str, params: &mut ParameterSet, build: impl Fn(&mut Tape, &ParameterSet) -> vocalid_nn::Result<Var>) {
    let report = grad_check(params, build).unwrap();
    assert!(
        report.max_rel_error < TOLERANCE,
        "{name}: max relative error {:.3e} at {:?}",
        report.max_rel_error,
        report.worst
    );
    assert!(report.checked > 0);
}

#[test]
fn dense_gradients() {
    let mut rng = seeded(1);
    let mut p = ParameterSet::new();
    let x = random(&mut p, &mut rng, "x", &[3, 4]);
    let w = random(&mut p, &mut rng, "w", &[4, 5]);
    let b = random(&mut p, &mut rng, "b", &[5]);
    assert_passes("dense", &mut p, |t, p| {
        let (x, w, b) = (t.param(p, x)?, t.param(p, w)?, t.param(p, b)?);
        let y = t.dense(x, w, b)?;
        t.sum(y)
    });
}

#[test]
fn conv2d_gradients() {
    let mut rng = seeded(2);
    let mut p = ParameterSet::new();
    let x = random(&mut p, &mut rng, "x", &[1, 2, 8, 8]);
    let k = random(&mut p, &mut rng, "k", &[3, 2, 4, 3]);
    let b = random(&mut p, &mut rng, "b", &[3]);
    assert_passes("conv2d_same", &mut p, |t, p| {
        let (x, k, b) = (t.param(p, x)?, t.param(p, k)?, t.param(p, b)?);
        let y = t.conv2d_same(x, k, b)?;
        Ok(weighted_sum(t, y))
    });
}

#[test]
fn maxpool_gradients_are_one_hot() {
    let mut p = ParameterSet::new();
    // Distinct values so finite differences never cross a tie.
    let x = p.insert("x", Tensor::from_fn(&[1, 2, 4, 6], |i| ((i * 37) % 48) as f64 * 0.1)).unwrap();
    assert_passes("maxpool2d", &mut p, |t, p| {
        let x = t.param(p, x)?;
        let y = t.maxpool2d(x, 2, 3)?;
        Ok(weighted_sum(t, y))
    });
    let mut tape = Tape::new();
    let xv = tape.param(&p, x).unwrap();
    let y = tape.maxpool2d(xv, 2, 3).unwrap();
    let s = tape.sum(y).unwrap();
    tape.backward(s, &mut p).unwrap();
    let g = p.grad(x).data();
    assert_eq!(g.iter().filter(|&&v| v == 1.0).count(), 8);
    assert_eq!(g.iter().filter(|&&v| v == 0.0).count(), 40);
}

#[test]
fn conv1d_and_transpose_gradients() {
    let mut rng = seeded(3);
    let mut p = ParameterSet::new();
    let x = random(&mut p, &mut rng, "x", &[2, 3, 9]);
    let k = random(&mut p, &mut rng, "k", &[4, 3, 5]);
    let b = random(&mut p, &mut rng, "b", &[4]);
    let kt = random(&mut p, &mut rng, "kt", &[4, 2, 5]);
    let bt = random(&mut p, &mut rng, "bt", &[2]);
    assert_passes("conv1d/conv1d_transpose", &mut p, |t, p| {
        let (x, k, b, kt, bt) = (t.param(p, x)?, t.param(p, k)?, t.param(p, b)?, t.param(p, kt)?, t.param(p, bt)?);
        let y = t.conv1d(x, k, Some(b), 2)?;
        let z = t.conv1d_transpose(y, kt, Some(bt), 2)?;
        Ok(weighted_sum(t, z))
    });
}

#[test]
fn gru_gradients_through_five_steps() {
    let mut rng = seeded(4);
    let mut p = ParameterSet::new();
    let x = random(&mut p, &mut rng, "x", &[5, 2, 3]);
    let wi = random(&mut p, &mut rng, "w_ih", &[3, 12]);
    let wh = random(&mut p, &mut rng, "w_hh", &[4, 12]);
    let bi = random(&mut p, &mut rng, "b_ih", &[12]);
    let bh = random(&mut p, &mut rng, "b_hh", &[12]);
    assert_passes("gru_seq", &mut p, |t, p| {
        let x = t.param(p, x)?;
        let w = GruWeights {
            w_ih: t.param(p, wi)?,
            w_hh: t.param(p, wh)?,
            b_ih: t.param(p, bi)?,
            b_hh: t.param(p, bh)?,
        };
        let y = t.gru_seq(x, &w)?;
        Ok(weighted_sum(t, y))
    });
}

fn lstm_params(p: &mut ParameterSet, rng: &mut NnRng, prefix: &str, input: usize, hidden: usize) -> [ParamId; 3] {
    [
        random(p, rng, &format!("{prefix}.w_ih"), &[input, 4 * hidden]),
        random(p, rng, &format!("{prefix}.w_hh"), &[hidden, 4 * hidden]),
        random(p, rng, &format!("{prefix}.b"), &[4 * hidden]),
    ]
}

fn lstm_vars(t: &mut Tape, p: &ParameterSet, ids: &[ParamId; 3]) -> vocalid_nn::Result<LstmWeights> {
    Ok(LstmWeights {
        w_ih: t.param(p, ids[0])?,
        w_hh: t.param(p, ids[1])?,
        b: t.param(p, ids[2])?,
    })
}

#[test]
fn bilstm_gradients_three_layers() {
    let mut rng = seeded(5);
    let mut p = ParameterSet::new();
    let hidden = 4;
    let x = random(&mut p, &mut rng, "x", &[5, 2, 3]);
    let mut layers = Vec::new();
    for l in 0..3 {
        let input = if l == 0 { 3 } else { 2 * hidden };
        let f = lstm_params(&mut p, &mut rng, &format!("l{l}.fwd"), input, hidden);
        let b = lstm_params(&mut p, &mut rng, &format!("l{l}.bwd"), input, hidden);
        layers.push((f, b));
    }
    assert_passes("bilstm_seq", &mut p, |t, p| {
        let x = t.param(p, x)?;
        let mut built = Vec::new();
        for (f, b) in &layers {
            built.push(BiLstmLayer {
                forward: lstm_vars(t, p, f)?,
                backward: lstm_vars(t, p, b)?,
            });
        }
        let y = t.bilstm_seq(x, &built)?;
        Ok(weighted_sum(t, y))
    });
}

#[test]
fn softmax_xent_gradients() {
    let mut rng = seeded(6);
    let mut p = ParameterSet::new();
    let logits = random(&mut p, &mut rng, "logits", &[4, 3]);
    let report = grad_check(&mut p, |t, p| {
        let l = t.param(p, logits)?;
        Ok(t.softmax_xent(l, &[0, 2, 1, 2])?.loss)
    })
    .unwrap();
    assert!(report.max_rel_error < 1e-6, "{report:?}");
}

#[test]
fn l1_gradients_away_from_ties() {
    let mut rng = seeded(7);
    let mut p = ParameterSet::new();
    let pred = random(&mut p, &mut rng, "pred", &[3, 5]);
    let target = Tensor::from_fn(&[3, 5], |i| if i % 2 == 0 { 2.0 } else { -2.0 });
    let report = grad_check(&mut p, |t, p| {
        let x = t.param(p, pred)?;
        t.l1_loss(x, &target)
    })
    .unwrap();
    assert!(report.max_rel_error < 1e-6, "{report:?}");
}

#[test]
fn dropout_with_fixed_mask_and_relu_gradients() {
    let mut rng = seeded(8);
    let mut p = ParameterSet::new();
    let x = random(&mut p, &mut rng, "x", &[4, 6]);
    assert_passes("dropout+relu", &mut p, |t, p| {
        let mut mask_rng = seeded(99);
        let x = t.param(p, x)?;
        let y = t.relu(x)?;
        let y = t.dropout(y, 0.5, Mode::Train, &mut mask_rng)?;
        Ok(weighted_sum(t, y))
    });
}

#[test]
fn permute_concat_mean_gradients() {
    let mut rng = seeded(9);
    let mut p = ParameterSet::new();
    let a = random(&mut p, &mut rng, "a", &[2, 3, 4]);
    let b = random(&mut p, &mut rng, "b", &[4, 2, 1]);
    assert_passes("permute/concat/mean", &mut p, |t, p| {
        let a = t.param(p, a)?;
        let a = t.permute3(a, [2, 0, 1])?;
        let b = t.param(p, b)?;
        let c = t.concat_last(a, b)?;
        let m = t.mean_leading(c)?;
        Ok(weighted_sum(t, m))
    });
}

#[test]
fn conv1d_transpose_is_adjoint_of_conv1d() {
    let mut rng = seeded(10);
    for stride in [1usize, 2] {
        let (ch_a, ch_b, kernel, len) = (3, 2, 5, 12);
        let k = Tensor::from_fn(&[ch_a, ch_b, kernel], |_| rng.gen_range(-1.0..1.0));
        let x = Tensor::from_fn(&[1, ch_b, len], |_| rng.gen_range(-1.0..1.0));
        let y = Tensor::from_fn(&[1, ch_a, len / stride], |_| rng.gen_range(-1.0..1.0));
        let mut tape = Tape::new();
        let (kv, xv, yv) = (tape.input(k).unwrap(), tape.input(x.clone()).unwrap(), tape.input(y.clone()).unwrap());
        let cx = tape.conv1d(xv, kv, None, stride).unwrap();
        let ty = tape.conv1d_transpose(yv, kv, None, stride).unwrap();
        let lhs = tape.value(cx).dot(&y).unwrap();
        let rhs = x.dot(tape.value(ty)).unwrap();
        assert!((lhs - rhs).abs() < 1e-9, "stride {stride}: {lhs} vs {rhs}");
    }
}

#[test]
fn reversing_time_swaps_bilstm_halves() {
    let mut rng = seeded(11);
    let mut p = ParameterSet::new();
    let hidden = 3;
    let f = lstm_params(&mut p, &mut rng, "f", 2, hidden);
    let x = Tensor::from_fn(&[6, 1, 2], |_| rng.gen_range(-1.0..1.0));
    let mut reversed = Vec::new();
    for t in (0..6).rev() {
        reversed.extend_from_slice(&x.data()[t * 2..t * 2 + 2]);
    }
    let reversed = Tensor::new(&[6, 1, 2], reversed).unwrap();
    // Same weights in both directions make the two halves directly comparable.
    let run = |input: Tensor| {
        let mut tape = Tape::new();
        let w = lstm_vars(&mut tape, &p, &f).unwrap();
        let xv = tape.input(input).unwrap();
        let y = tape.bilstm_seq(xv, &[BiLstmLayer { forward: w, backward: w }]).unwrap();
        tape.value(y).clone()
    };
    let (a, b) = (run(x), run(reversed));
    for t in 0..6 {
        let row_a = &a.data()[t * 2 * hidden..(t + 1) * 2 * hidden];
        let row_b = &b.data()[(5 - t) * 2 * hidden..(6 - t) * 2 * hidden];
        assert_eq!(&row_a[..hidden], &row_b[hidden..]);
        assert_eq!(&row_a[hidden..], &row_b[..hidden]);
    }
}
