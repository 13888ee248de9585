mod common;

use chanpred_tensor::{Mode, ParamStore, Tape, Tensor, TensorError};
use common::{randn, rng};

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn identity_kernel(c: usize) -> Tensor {
    let mut k = Tensor::zeros(&[c, c, 3, 3]);
    for i in 0..c {
        k.data_mut()[((i * c + i) * 3 + 1) * 3 + 1] = 1.0;
    }
    k
}

#[test]
fn conv_with_centered_delta_is_identity() {
    let x = randn(&mut rng(1), &[2, 3, 6, 5]);
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let k = tape.constant(identity_kernel(3));
    let y = tape.conv2d(xv, k, None, (1, 1), (1, 1)).unwrap();
    assert_eq!(tape.value(y), &x);
}

#[test]
fn all_ones_kernel_sums_neighbourhood() {
    let c = 0.7;
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::full(&[1, 1, 5, 4], c));
    let k = tape.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
    let y = tape.conv2d(x, k, None, (1, 1), (1, 1)).unwrap();
    let out = tape.value(y);
    for h in 1..4 {
        for w in 1..3 {
            assert!((out.data()[h * 4 + w] - 9.0 * c).abs() < 1e-12);
        }
    }
    // corner sees a 2×2 window
    assert!((out.data()[0] - 4.0 * c).abs() < 1e-12);
}

#[test]
fn conv_bias_adds_per_channel() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(&[1, 1, 2, 2]));
    let k = tape.constant(Tensor::full(&[2, 1, 3, 3], 1.0));
    let b = tape.constant(t(&[2], &[1.5, -2.0]));
    let y = tape.conv2d(x, k, Some(b), (1, 1), (1, 1)).unwrap();
    assert_eq!(tape.value(y).data(), &[1.5, 1.5, 1.5, 1.5, -2.0, -2.0, -2.0, -2.0]);
}

#[test]
fn conv_rejects_empty_output_and_channel_mismatch() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(&[1, 2, 1, 1]));
    let k = tape.constant(Tensor::zeros(&[1, 2, 3, 3]));
    assert!(matches!(
        tape.conv2d(x, k, None, (1, 1), (0, 0)),
        Err(TensorError::EmptyOutput { .. })
    ));
    let k3 = tape.constant(Tensor::zeros(&[1, 3, 3, 3]));
    assert!(matches!(
        tape.conv2d(x, k3, None, (1, 1), (1, 1)),
        Err(TensorError::ShapeMismatch { .. })
    ));
}

#[test]
fn conv_transpose_identity_kernel_is_identity() {
    let x = randn(&mut rng(2), &[2, 2, 4, 3]);
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let k = tape.constant(identity_kernel(2));
    let y = tape.conv2d_transpose(xv, k, None, (1, 1), (1, 1), (4, 3)).unwrap();
    assert_eq!(tape.value(y), &x);
}

#[test]
fn conv_transpose_honours_requested_odd_size() {
    let mut tape = Tape::new();
    let x = tape.constant(randn(&mut rng(3), &[1, 4, 18, 4]));
    let k = tape.constant(randn(&mut rng(4), &[4, 2, 3, 3]));
    let y = tape.conv2d_transpose(x, k, None, (2, 2), (1, 1), (36, 7)).unwrap();
    assert_eq!(tape.shape(y), &[1, 2, 36, 7]);
    let bad = tape.conv2d_transpose(x, k, None, (2, 2), (1, 1), (40, 7));
    assert!(matches!(bad, Err(TensorError::InvalidOutputSize { .. })));
}

#[test]
fn activations_match_definitions() {
    let mut tape = Tape::new();
    let x = tape.constant(t(&[3], &[-1.0, 3.0, 0.0]));
    let l = tape.leaky_relu(x, 0.2);
    assert_eq!(tape.value(l).data(), &[-0.2, 3.0, 0.0]);
    let s = tape.sigmoid(x);
    assert_eq!(tape.value(s).data()[2], 0.5);
    let th = tape.tanh(x);
    assert_eq!(tape.value(th).data()[2], 0.0);
    // large negative inputs stay finite
    let big = tape.constant(t(&[2], &[-800.0, 800.0]));
    let sb = tape.sigmoid(big);
    assert_eq!(tape.value(sb).data(), &[0.0, 1.0]);
}

fn channel_moments(x: &Tensor) -> Vec<(f64, f64)> {
    let [n, c, h, w] = *x.shape() else { panic!() };
    (0..c)
        .map(|ch| {
            let vals: Vec<f64> = (0..n)
                .flat_map(|b| x.data()[(b * c + ch) * h * w..(b * c + ch + 1) * h * w].to_vec())
                .collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
            (m, v)
        })
        .collect()
}

#[test]
fn batch_norm_standardizes_then_applies_affine() {
    let x = randn(&mut rng(5), &[4, 3, 5, 2]);
    for (g, b) in [(1.0, 0.0), (2.0, 3.0)] {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let gv = tape.constant(Tensor::full(&[3], g));
        let bv = tape.constant(Tensor::full(&[3], b));
        let y = tape
            .batch_norm(xv, gv, bv, 0.0, Mode::Train, (&[], &[]))
            .unwrap();
        for (m, v) in channel_moments(tape.value(y)) {
            assert!((m - b).abs() < 1e-6);
            assert!((v.sqrt() - g).abs() < 1e-6);
        }
    }
}

#[test]
fn batch_norm_needs_two_samples_in_train_mode() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(&[1, 2, 3, 3]));
    let g = tape.constant(Tensor::full(&[2], 1.0));
    let b = tape.constant(Tensor::zeros(&[2]));
    assert!(matches!(
        tape.batch_norm(x, g, b, 1e-5, Mode::Train, (&[], &[])),
        Err(TensorError::BatchTooSmall(1))
    ));
    // eval mode works on a single sample
    let y = tape
        .batch_norm(x, g, b, 0.0, Mode::Eval, (&[1.0, -1.0], &[4.0, 1.0]))
        .unwrap();
    assert_eq!(tape.value(y).data()[0], -0.5);
    assert_eq!(tape.value(y).data()[9], 1.0);
}

#[test]
fn batch_norm_layer_tracks_running_statistics() {
    use chanpred_tensor::BatchNorm2d;
    let mut store = ParamStore::new();
    let mut bn = BatchNorm2d::new(&mut store, "bn", 1, &mut rng(0));
    let x = Tensor::new(vec![2, 1, 1, 2], vec![1.0, 3.0, 5.0, 7.0]).unwrap();
    let mut tape = Tape::new();
    let xv = tape.constant(x);
    let y = bn.forward(&mut tape, &store, xv, Mode::Train).unwrap();
    bn.absorb(&tape, y);
    // batch mean 4, unbiased var 20/3
    assert!((bn.running_mean[0] - 0.4).abs() < 1e-12);
    assert!((bn.running_var[0] - (0.9 + 0.1 * 20.0 / 3.0)).abs() < 1e-12);
}

#[test]
fn dense_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(t(&[1, 2], &[1.0, 2.0]));
    let w = tape.constant(t(&[1, 2], &[3.0, 4.0]));
    let b = tape.constant(t(&[1], &[5.0]));
    let y = tape.dense(x, w, b).unwrap();
    assert_eq!(tape.value(y).data(), &[16.0]);

    let xr = randn(&mut rng(6), &[3, 4]);
    let x = tape.constant(xr.clone());
    let mut eye = Tensor::zeros(&[4, 4]);
    for i in 0..4 {
        eye.data_mut()[i * 5] = 1.0;
    }
    let w = tape.constant(eye);
    let b = tape.constant(Tensor::zeros(&[4]));
    let y = tape.dense(x, w, b).unwrap();
    assert_eq!(tape.value(y), &xr);
}

#[test]
fn loss_values() {
    let mut tape = Tape::new();
    let half = tape.constant(t(&[2], &[0.5, 0.5]));
    let l = tape.bce_loss(half, &[1.0, 0.0]).unwrap();
    assert!((tape.value(l).data()[0] - std::f64::consts::LN_2).abs() < 1e-12);
    let p = tape.constant(t(&[1], &[0.9]));
    let l = tape.bce_loss(p, &[1.0]).unwrap();
    assert!((tape.value(l).data()[0] - 0.105_360_515_657_826_3).abs() < 1e-12);
    // saturated probabilities are clamped, not infinite
    let z = tape.constant(t(&[1], &[0.0]));
    let l = tape.bce_loss(z, &[1.0]).unwrap();
    assert!((tape.value(l).data()[0] - (-(1e-7f64).ln())).abs() < 1e-9);

    let a = tape.constant(randn(&mut rng(7), &[2, 3]));
    let l1 = tape.l1_loss(a, a).unwrap();
    let mse = tape.mse_loss(a, a).unwrap();
    assert_eq!(tape.value(l1).data()[0], 0.0);
    assert_eq!(tape.value(mse).data()[0], 0.0);
}

#[test]
fn backward_of_sum_and_square() {
    let x = randn(&mut rng(8), &[2, 3]);
    let mut tape = Tape::new();
    let xv = tape.variable(x.clone());
    let s = tape.sum(xv);
    let g = tape.backward(s).unwrap();
    assert!(g.wrt(xv).unwrap().iter().all(|&v| v == 1.0));

    let mut tape = Tape::new();
    let xv = tape.variable(x.clone());
    let sq = tape.mul(xv, xv).unwrap();
    let s = tape.sum(sq);
    let g = tape.backward(s).unwrap();
    for (gv, xv) in g.wrt(xv).unwrap().iter().zip(x.data()) {
        assert!((gv - 2.0 * xv).abs() < 1e-15);
    }
}

#[test]
fn backward_contract_errors() {
    let mut tape = Tape::new();
    let x = tape.variable(Tensor::zeros(&[3]));
    assert!(matches!(tape.backward(x), Err(TensorError::NonScalarLoss(_))));
    let s = tape.sum(x);
    tape.backward(s).unwrap();
    assert!(matches!(tape.backward(s), Err(TensorError::BackwardTwice)));
}

#[test]
fn detached_branch_receives_no_gradient() {
    let mut tape = Tape::new();
    let x = tape.variable(Tensor::full(&[2], 3.0));
    let d = tape.detach(x);
    let y = tape.mul(x, d).unwrap();
    let s = tape.sum(y);
    let g = tape.backward(s).unwrap();
    assert_eq!(g.wrt(x).unwrap(), &[3.0, 3.0]);
    assert!(g.wrt(d).is_none());
}

#[test]
fn store_accumulates_across_backward_calls() {
    let mut store = ParamStore::new();
    let id = store.add("w", Tensor::full(&[2], 1.5));
    for _ in 0..2 {
        let mut tape = Tape::new();
        let w = tape.param(&store, id);
        let s = tape.sum(w);
        let g = tape.backward(s).unwrap();
        store.accumulate(&g);
    }
    assert_eq!(store.grad(id), &[2.0, 2.0]);
    store.zero_grad();
    assert_eq!(store.grad(id), &[0.0, 0.0]);

    // gradients of a foreign store are ignored
    let mut other = ParamStore::new();
    let oid = other.add("v", Tensor::full(&[1], 1.0));
    let mut tape = Tape::new();
    let v = tape.param(&other, oid);
    let s = tape.sum(v);
    let g = tape.backward(s).unwrap();
    store.accumulate(&g);
    assert_eq!(store.grad(id), &[0.0, 0.0]);
}
