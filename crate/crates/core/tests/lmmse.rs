use chanpred_core::channel::circular_gaussian;
use chanpred_core::lmmse::{LmmseModel, LmmseOptions, Ridge};
use chanpred_core::metrics::nmse_h;
use chanpred_core::{Band, CsiMatrix, Predictor};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gaussian_grid(dims: (usize, usize), band: Band, rng: &mut ChaCha8Rng) -> CsiMatrix {
    CsiMatrix::from_fn(dims.0, dims.1, band, |_, _| circular_gaussian(rng))
}

/// `H_DL = A · vec(H_UL)` for a fixed random complex `A`.
fn linear_dataset(
    ul: (usize, usize),
    dl: (usize, usize),
    n: usize,
    seed: u64,
) -> (DMatrix<Complex64>, Vec<(CsiMatrix, CsiMatrix)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(dl.0 * dl.1, ul.0 * ul.1, |_, _| circular_gaussian(&mut rng));
    let pairs = (0..n)
        .map(|_| {
            let h_ul = gaussian_grid(ul, Band::Ul, &mut rng);
            let y = &a * nalgebra::DVector::from_column_slice(h_ul.as_slice());
            let h_dl = CsiMatrix::from_vec(dl.0, dl.1, Band::Dl, y.as_slice().to_vec()).unwrap();
            (h_ul, h_dl)
        })
        .collect();
    (a, pairs)
}

fn refs(pairs: &[(CsiMatrix, CsiMatrix)]) -> Vec<(&CsiMatrix, &CsiMatrix)> {
    pairs.iter().map(|(u, d)| (u, d)).collect()
}

#[test]
fn scalar_map_recovers_scaled_identity() {
    let dims = (6, 2);
    let c = Complex64::new(0.7, -1.3);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pairs: Vec<(CsiMatrix, CsiMatrix)> = (0..10_000)
        .map(|_| {
            let u = gaussian_grid(dims, Band::Ul, &mut rng);
            let d = u.scaled(c).with_band(Band::Dl);
            (u, d)
        })
        .collect();
    let opts = LmmseOptions {
        ridge: Ridge::Fixed(0.0),
        remove_mean: false,
    };
    let model = LmmseModel::fit(&refs(&pairs), opts).unwrap();
    let n = dims.0 * dims.1;
    let expected = DMatrix::from_diagonal_element(n, n, c);
    let dev = (&model.coeff - expected).norm();
    assert!(dev < 1e-6, "coefficient deviation {dev}");
}

#[test]
fn independent_targets_give_vanishing_coefficients() {
    let dims = (4, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut norms = Vec::new();
    for n in [200, 20_000] {
        let pairs: Vec<(CsiMatrix, CsiMatrix)> = (0..n)
            .map(|_| (gaussian_grid(dims, Band::Ul, &mut rng), gaussian_grid(dims, Band::Dl, &mut rng)))
            .collect();
        norms.push(LmmseModel::fit(&refs(&pairs), LmmseOptions::default()).unwrap().coeff.norm());
    }
    assert!(norms[1] < norms[0] / 5.0, "{norms:?}");
    assert!(norms[1] < 0.1);
}

#[test]
fn exact_linear_map_is_learned_on_held_out_data() {
    let (ul, dl) = ((12, 4), (12, 4));
    let dim = ul.0 * ul.1;
    let (_, train) = linear_dataset(ul, dl, 10 * dim, 1);
    let model = LmmseModel::fit(&refs(&train), LmmseOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (a, _) = linear_dataset(ul, dl, 0, 1);
    for _ in 0..50 {
        let h_ul = gaussian_grid(ul, Band::Ul, &mut rng);
        let y = &a * nalgebra::DVector::from_column_slice(h_ul.as_slice());
        let h_dl = CsiMatrix::from_vec(dl.0, dl.1, Band::Dl, y.as_slice().to_vec()).unwrap();
        let pred = model.predict(&h_ul).unwrap();
        let e = nmse_h(&h_dl, &pred).unwrap();
        assert!(e < 1e-6, "held-out nmse_h {e}");
    }
}

#[test]
fn identity_fit_reproduces_the_input() {
    let dims = (5, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pairs: Vec<(CsiMatrix, CsiMatrix)> = (0..400)
        .map(|_| {
            let u = gaussian_grid(dims, Band::Ul, &mut rng);
            let d = u.clone().with_band(Band::Dl);
            (u, d)
        })
        .collect();
    let model = LmmseModel::fit(&refs(&pairs), LmmseOptions::default()).unwrap();
    let x = gaussian_grid(dims, Band::Ul, &mut rng);
    assert!(nmse_h(&x.clone().with_band(Band::Dl), &model.predict(&x).unwrap()).unwrap() < 1e-10);
}

#[test]
fn model_blob_round_trips() {
    let (_, train) = linear_dataset((4, 2), (3, 2), 80, 6);
    let model = LmmseModel::fit(&refs(&train), LmmseOptions::default()).unwrap();
    let mut buf = Vec::new();
    model.save(&mut buf).unwrap();
    let back = LmmseModel::load(buf.as_slice()).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.dl_dims(), (3, 2));
    assert_eq!(Predictor::dl_dims(&back), (3, 2));
}

fn condition_number(m: &DMatrix<Complex64>) -> f64 {
    let eig = m.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn prediction_is_linear(
        seed in any::<u64>(),
        a in (-3.0..3.0f64, -3.0..3.0f64),
        b in (-3.0..3.0f64, -3.0..3.0f64),
    ) {
        let (_, train) = linear_dataset((4, 3), (4, 3), 60, seed);
        let model = LmmseModel::fit(&refs(&train), LmmseOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let x = gaussian_grid((4, 3), Band::Ul, &mut rng);
        let y = gaussian_grid((4, 3), Band::Ul, &mut rng);
        let (a, b) = (Complex64::new(a.0, a.1), Complex64::new(b.0, b.1));
        let mix = CsiMatrix::from_fn(4, 3, Band::Ul, |k, t| a * x.get(k, t) + b * y.get(k, t));
        let lhs = model.predict(&mix).unwrap();
        let (px, py) = (model.predict(&x).unwrap(), model.predict(&y).unwrap());
        let scale = lhs.frobenius_sq().sqrt().max(1.0);
        for (i, z) in lhs.as_slice().iter().enumerate() {
            let rhs = a * px.as_slice()[i] + b * py.as_slice()[i];
            prop_assert!((z - rhs).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn ridge_never_worsens_conditioning(seed in any::<u64>(), n in 3usize..30) {
        // Fewer samples than dimensions leaves r_auto rank deficient.
        let (_, train) = linear_dataset((4, 2), (4, 2), n, seed);
        let model = LmmseModel::fit(&refs(&train), LmmseOptions::default()).unwrap();
        let dim = model.r_auto.nrows();
        let mut previous = condition_number(&model.r_auto);
        for delta in [1e-8, 1e-4, 1e-2, 1.0, 100.0] {
            let c = condition_number(&(&model.r_auto + DMatrix::from_diagonal_element(dim, dim, Complex64::new(delta, 0.0))));
            prop_assert!(c <= previous * (1.0 + 1e-9), "delta {} cond {} > {}", delta, c, previous);
            previous = c;
        }
    }
}
