#![allow(dead_code)]
// Index loops mirror the summation formulas on purpose.
#![allow(clippy::needless_range_loop)]

use beliefnet_core::rbm::RbmParams;
use ndarray::{array, Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Machine with uniform(-scale, scale) weights and biases.
pub fn random_machine(gv: usize, gh: usize, scale: f64, seed: u64) -> RbmParams {
    let mut r = rng(seed);
    let mut u = || r.random_range(-scale..scale);
    let w = Array2::from_shape_fn((gv, gh), |_| u());
    let a = Array1::from_shape_fn(gv, |_| u());
    let b = Array1::from_shape_fn(gh, |_| u());
    RbmParams::new(w, a, b).unwrap()
}

pub fn bars_and_stripes() -> Array2<f64> {
    array![
        [0.0, 0.0, 1.0, 1.0],
        [1.0, 1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 1.0],
        [1.0, 0.0, 1.0, 0.0]
    ]
}

pub fn bits(index: usize, n: usize) -> Vec<f64> {
    (0..n).map(|i| ((index >> i) & 1) as f64).collect()
}

/// Literal triple sum `-Σ_ij W_ij v_i h_j - Σ_i a_i v_i - Σ_j b_j h_j`.
pub fn energy_loops(p: &RbmParams, v: &[f64], h: &[f64]) -> f64 {
    let mut e = 0.0;
    for i in 0..v.len() {
        for j in 0..h.len() {
            e -= p.w[[i, j]] * v[i] * h[j];
        }
    }
    for i in 0..v.len() {
        e -= p.a[i] * v[i];
    }
    for j in 0..h.len() {
        e -= p.b[j] * h[j];
    }
    e
}

/// `log Z` by summing the analytic free energy over visible vectors only.
pub fn log_z_by_free_energy(p: &RbmParams) -> f64 {
    let (gv, gh) = (p.n_visible(), p.n_hidden());
    let mut terms = Vec::new();
    for vi in 0..1usize << gv {
        let v = bits(vi, gv);
        let mut t: f64 = (0..gv).map(|i| p.a[i] * v[i]).sum();
        for j in 0..gh {
            let x: f64 = p.b[j] + (0..gv).map(|i| v[i] * p.w[[i, j]]).sum::<f64>();
            t += if x > 0.0 {
                x + (-x).exp().ln_1p()
            } else {
                x.exp().ln_1p()
            };
        }
        terms.push(t);
    }
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}
