//! Finite-difference helpers shared by the gradient tests and the acceptance run.
#![allow(dead_code)]

use edcnet::ModelParams;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-4;
pub const LINEAR_TOL: f64 = 1e-6;
pub const END_TO_END_TOL: f64 = 1e-3;

pub fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Largest relative deviation between `analytic` and the five-point central
/// difference of `f` at `x` (truncation error O(h^4)).
pub fn fd_error(f: impl Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64], floor: f64) -> f64 {
    let mut worst = 0.0f64;
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let mut at = |d: f64| {
            xp[i] = x[i] + d;
            f(&xp)
        };
        let num = (8.0 * (at(H) - at(-H)) - (at(2.0 * H) - at(-2.0 * H))) / (12.0 * H);
        xp[i] = x[i];
        let err = (num - analytic[i]).abs() / num.abs().max(analytic[i].abs()).max(floor);
        worst = worst.max(err);
    }
    worst
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn flatten(p: &ModelParams<f64>) -> Vec<f64> {
    p.tensors().iter().flat_map(|t| t.data.iter().copied()).collect()
}

pub fn unflatten(p: &mut ModelParams<f64>, v: &[f64]) {
    let mut off = 0;
    for t in p.tensors_mut() {
        let n = t.data.len();
        t.data.copy_from_slice(&v[off..off + n]);
        off += n;
    }
}
