#![allow(dead_code)]

use leap::tensor::{Array, Tape, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
/// Denominator floor for the relative error, so gradients that are zero up to
/// rounding are compared absolutely.
pub const FD_FLOOR: f64 = 1e-6;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_FLOOR)
}

pub fn random_array(shape: &[usize], scale: f64, rng: &mut ChaCha8Rng) -> Array {
    let n = shape.iter().product();
    Array::new(shape, (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Worst relative error between reverse-mode gradients of a scalar-valued
/// `f` and central differences over every input entry, with the location of
/// the worst entry as `(input, entry, analytic, numeric)`.
pub fn gradient_error<F>(inputs: &[Array], f: F) -> (f64, (usize, usize, f64, f64))
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let eval = |values: &[Array]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|a| tape.leaf(a.clone(), false).unwrap()).collect();
        let out = f(&mut tape, &vars);
        tape.value(out).data()[0]
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|a| tape.leaf(a.clone(), true).unwrap()).collect();
    let out = f(&mut tape, &vars);
    let grads = tape.backward(out).unwrap();

    let mut worst = (0.0, (0, 0, 0.0, 0.0));
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[k]).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; input.len()]);
        for i in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= FD_STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
            let e = rel_err(analytic[i], numeric);
            if e >= worst.0 {
                worst = (e, (k, i, analytic[i], numeric));
            }
        }
    }
    worst
}

/// Asserts that every gradient entry passes the finite-difference check and
/// returns the worst relative error.
pub fn check_gradients<F>(inputs: &[Array], f: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let (e, (k, i, analytic, numeric)) = gradient_error(inputs, f);
    assert!(e < FD_REL_TOL, "input {k} entry {i}: analytic {analytic} vs numeric {numeric} (rel err {e})");
    e
}

/// Fixed-weight scalar readout so every output entry influences the result.
pub fn readout(tape: &mut Tape, x: Var, seed: u64) -> Var {
    let n = tape.value(x).len();
    let flat = tape.reshape(x, &[1, n]).unwrap();
    let mut r = rng(seed);
    let weights = random_array(&[1, n], 1.0, &mut r);
    let w = tape.constant(weights).unwrap();
    let y = tape.linear(flat, w, None).unwrap();
    tape.reshape(y, &[1]).unwrap()
}

/// Step-by-step LSTM cell written independently of the tape kernels.
pub fn reference_lstm(x: &[Vec<f64>], wx: &[f64], wh: &[f64], b: &[f64], h: usize) -> Vec<Vec<f64>> {
    let d = x[0].len();
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    let mut hs = vec![0.0; h];
    let mut cs = vec![0.0; h];
    let mut out = Vec::new();
    for xt in x {
        let gate = |g: usize, j: usize| {
            let row = g * h + j;
            let mut z = b[row];
            for k in 0..d {
                z += wx[row * d + k] * xt[k];
            }
            for k in 0..h {
                z += wh[row * h + k] * hs[k];
            }
            z
        };
        let mut nh = vec![0.0; h];
        let mut nc = vec![0.0; h];
        for j in 0..h {
            let i = sig(gate(0, j));
            let f = sig(gate(1, j));
            let g = gate(2, j).tanh();
            let o = sig(gate(3, j));
            nc[j] = f * cs[j] + i * g;
            nh[j] = o * nc[j].tanh();
        }
        hs = nh;
        cs = nc;
        out.push(hs.clone());
    }
    out
}
