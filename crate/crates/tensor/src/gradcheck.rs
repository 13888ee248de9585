//! Central finite-difference gradient checking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::params::ParamStore;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Denominator floor for [`relative_error`]; gradient entries far below it are
/// compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// `(f(x + h·e_i) - f(x - h·e_i)) / 2h`
pub fn central_difference(
    f: &mut impl FnMut(&[f64]) -> f64,
    x: &[f64],
    i: usize,
    h: f64,
) -> f64 {
    let mut xp = x.to_vec();
    xp[i] += h;
    let fp = f(&xp);
    xp[i] = x[i] - h;
    let fm = f(&xp);
    (fp - fm) / (2.0 * h)
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub checked: usize,
}

/// Compares `analytic` against central differences of `f` at the listed
/// coordinates.
pub fn check(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    indices: impl IntoIterator<Item = usize>,
    h: f64,
) -> GradCheck {
    let mut report = GradCheck {
        max_rel_err: 0.0,
        worst_index: 0,
        checked: 0,
    };
    for i in indices {
        let numeric = central_difference(&mut f, x, i, h);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_err || report.checked == 0 {
            report.max_rel_err = report.max_rel_err.max(err);
            if err >= report.max_rel_err {
                report.worst_index = i;
            }
        }
        report.checked += 1;
    }
    report
}

/// Checks the gradient of `Σ r ⊙ op(inputs)`, with fixed random weights `r`
/// drawn from `seed`, against central differences over every input entry.
/// Returns the worst relative error.
pub fn op_max_error(inputs: &[Tensor], seed: u64, h: f64, op: impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let out_len = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = op(&mut tape, &vars);
        tape.value(out).len()
    };
    let weights: Vec<f64> = (0..out_len).map(|_| r.random_range(-1.0..1.0)).collect();

    let eval = |flat: &[f64]| -> f64 {
        let mut tape = Tape::new();
        let mut off = 0;
        let vars: Vec<Var> = inputs
            .iter()
            .map(|t| {
                let v = Tensor::new(t.shape().to_vec(), flat[off..off + t.len()].to_vec()).expect("sized from input");
                off += t.len();
                tape.constant(v)
            })
            .collect();
        let out = op(&mut tape, &vars);
        tape.value(out).data().iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>()
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.clone())).collect();
    let out = op(&mut tape, &vars);
    let shape = tape.shape(out).to_vec();
    let w = tape.constant(Tensor::new(shape, weights.clone()).expect("sized from output"));
    let prod = tape.mul(out, w).expect("same shape");
    let loss = tape.sum(prod);
    let grads = tape.backward(loss).expect("scalar loss");
    let analytic: Vec<f64> = vars
        .iter()
        .zip(inputs)
        .flat_map(|(v, t)| grads.wrt(*v).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; t.len()]))
        .collect();
    let flat: Vec<f64> = inputs.iter().flat_map(|t| t.data().to_vec()).collect();
    check(eval, &flat, &analytic, 0..flat.len(), h).max_rel_err
}

#[derive(Debug, Clone, Copy)]
pub struct ParamCheck {
    pub max_rel_err: f64,
    /// `(analytic, numeric)` at the worst coordinate.
    pub worst: (f64, f64),
    pub checked: usize,
    /// Coordinates whose central differences at `h` and `h/2` disagree by
    /// more than the tolerance, i.e. a piecewise-linear kink lies within the
    /// stencil and neither estimate is a derivative.
    pub kinks: usize,
}

impl ParamCheck {
    pub fn kink_share(&self) -> f64 {
        self.kinks as f64 / (self.kinks + self.checked).max(1) as f64
    }
}

/// Compares the gradient that `analytic` accumulates into `store` with
/// central differences of `loss` over up to `per_tensor` random entries of
/// every parameter tensor.
pub fn param_check(
    store: &mut ParamStore,
    seed: u64,
    per_tensor: usize,
    h: f64,
    tol: f64,
    loss: impl Fn(&ParamStore) -> f64,
    analytic: impl FnOnce(&mut ParamStore),
) -> ParamCheck {
    store.zero_grad();
    analytic(store);
    let grads = store.flat_grads();
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0xfd);
    let mut indices = Vec::new();
    let mut offset = 0;
    for (_, t) in store.named_tensors() {
        for _ in 0..per_tensor.min(t.len()) {
            indices.push(offset + r.random_range(0..t.len()));
        }
        offset += t.len();
    }
    let x = store.flat_values();
    let mut probe = store.clone();
    let mut f = |i: usize, v: f64| {
        *probe.flat_value_mut(i) = v;
        let out = loss(&probe);
        *probe.flat_value_mut(i) = x[i];
        out
    };
    let mut report = ParamCheck {
        max_rel_err: 0.0,
        worst: (0.0, 0.0),
        checked: 0,
        kinks: 0,
    };
    for i in indices {
        let wide = (f(i, x[i] + h) - f(i, x[i] - h)) / (2.0 * h);
        let narrow = (f(i, x[i] + h / 2.0) - f(i, x[i] - h / 2.0)) / h;
        if relative_error(wide, narrow) > tol {
            report.kinks += 1;
            continue;
        }
        let err = relative_error(grads[i], narrow);
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst = (grads[i], narrow);
        }
        report.checked += 1;
    }
    report
}
