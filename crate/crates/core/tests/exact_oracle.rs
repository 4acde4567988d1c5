mod common;

use beliefnet_core::dbn::{transpose_init, DbnStack};
use beliefnet_core::oracle::{exact_loglik, exact_loglik_gradient, ExactOracle};
use beliefnet_core::rbm::{BinaryState, RbmParams};
use common::*;
use ndarray::{array, Array1, Array2};
use rand::Rng;

#[test]
fn partition_function_matches_free_energy_route() {
    let oracle = ExactOracle::default();
    for seed in 0..10 {
        let p = random_machine(3, 3, 2.0, seed);
        let a = oracle.log_partition(&p).unwrap();
        let b = log_z_by_free_energy(&p);
        assert!(((a.exp() - b.exp()) / b.exp()).abs() < 1e-12);
    }
}

#[test]
fn distributions_are_normalized() {
    let oracle = ExactOracle::default();
    for seed in 0..20 {
        let (gv, gh) = (1 + (seed % 5) as usize, 1 + (seed % 4) as usize);
        let p = random_machine(gv, gh, 2.0, seed);
        let mut joint = 0.0;
        for idx in 0..1u64 << (gv + gh) {
            joint += oracle.joint_prob(&BinaryState::from_index(idx, gv, gh), &p).unwrap();
        }
        let mut marginal = 0.0;
        for vi in 0..1usize << gv {
            let v = Array1::from(bits(vi, gv));
            let pv = oracle.marginal_prob(v.view(), &p).unwrap();
            let sum_joint: f64 = (0..1usize << gh)
                .map(|hi| {
                    let s = BinaryState::new(v.clone(), Array1::from(bits(hi, gh))).unwrap();
                    oracle.joint_prob(&s, &p).unwrap()
                })
                .sum();
            assert!((pv - sum_joint).abs() < 1e-12);
            marginal += pv;
        }
        assert!((joint - 1.0).abs() < 1e-12);
        assert!((marginal - 1.0).abs() < 1e-12);
    }
}

#[test]
fn partition_function_invariant_under_hidden_permutation() {
    let oracle = ExactOracle::default();
    let p = random_machine(3, 4, 1.5, 77);
    let perm = [2, 0, 3, 1];
    let mut q = p.clone();
    for (new, &old) in perm.iter().enumerate() {
        q.w.column_mut(new).assign(&p.w.column(old));
        q.b[new] = p.b[old];
    }
    let (a, b) = (oracle.log_partition(&p).unwrap(), oracle.log_partition(&q).unwrap());
    assert!((a - b).abs() < 1e-12);
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

fn finite_difference(data: &Array2<f64>, p: &RbmParams, step: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let eval = |q: &RbmParams| exact_loglik(data.view(), q).unwrap();
    for idx in 0..p.num_params() {
        let mut plus = p.clone();
        let mut minus = p.clone();
        let (wn, an) = (p.w.len(), p.a.len());
        let bump = |q: &mut RbmParams, d: f64| {
            if idx < wn {
                q.w.as_slice_mut().unwrap()[idx] += d;
            } else if idx < wn + an {
                q.a[idx - wn] += d;
            } else {
                q.b[idx - wn - an] += d;
            }
        };
        bump(&mut plus, step);
        bump(&mut minus, -step);
        out.push((eval(&plus) - eval(&minus)) / (2.0 * step));
    }
    out
}

#[test]
fn exact_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let p = random_machine(4, 3, 1.0, seed);
        let mut r = rng(500 + seed);
        let data = Array2::from_shape_fn((6, 4), |_| r.random_range(0..2) as f64);
        let analytic = exact_loglik_gradient(data.view(), &p).unwrap().flatten();
        let numeric = finite_difference(&data, &p, 1e-5);
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!(relative_error(*a, *n) < 1e-6, "seed {seed}: {a} vs {n}");
        }
    }
}

#[test]
fn gradient_vanishes_at_moment_matching_fixed_point() {
    // With W = b = 0 the hidden moments match automatically; solve for the
    // visible bias that makes P(v = 1) equal the data frequency.
    let data = array![[1.0], [1.0], [0.0], [1.0], [0.0]];
    let freq = 0.6;
    let oracle = ExactOracle::default();
    let p_one = |a: f64| {
        let p = RbmParams::new(array![[0.0]], array![a], array![0.0]).unwrap();
        oracle.marginal_prob(array![1.0].view(), &p).unwrap()
    };
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if p_one(mid) < freq {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = 0.5 * (lo + hi);
    let p = RbmParams::new(array![[0.0]], array![a], array![0.0]).unwrap();
    let g = exact_loglik_gradient(data.view(), &p).unwrap();
    assert!(g.flatten().iter().all(|x| x.abs() < 1e-12), "{g:?}");
}

#[test]
fn exact_ascent_is_monotone() {
    let data = bars_and_stripes();
    let mut p = random_machine(4, 6, 0.1, 3);
    let mut prev = exact_loglik(data.view(), &p).unwrap();
    for _ in 0..100 {
        let g = exact_loglik_gradient(data.view(), &p).unwrap();
        p.w.scaled_add(0.01, &g.d_w);
        p.a.scaled_add(0.01, &g.d_a);
        p.b.scaled_add(0.01, &g.d_b);
        let next = exact_loglik(data.view(), &p).unwrap();
        assert!(next >= prev - 1e-12, "{prev} -> {next}");
        prev = next;
    }
}

#[test]
fn transpose_initialized_dbn_equals_base_rbm() {
    let oracle = ExactOracle::default();
    for seed in 0..10 {
        let base = random_machine(3, 3, 2.0, seed);
        let stack = DbnStack::new(vec![base.clone(), transpose_init(&base)]).unwrap();
        let mut total = 0.0;
        for vi in 0..8 {
            let v = Array1::from(bits(vi, 3));
            let dbn = oracle.dbn_marginal(&stack, v.view()).unwrap();
            let rbm = oracle.marginal_prob(v.view(), &base).unwrap();
            assert!((dbn - rbm).abs() < 1e-10);
            total += dbn;
        }
        assert!((total - 1.0).abs() < 1e-10);
    }
}

#[test]
fn generic_dbn_marginal_is_normalized() {
    let oracle = ExactOracle::default();
    let stack = DbnStack::new(vec![random_machine(3, 4, 1.5, 1), random_machine(4, 2, 1.5, 2)]).unwrap();
    let total: f64 = (0..8)
        .map(|vi| oracle.dbn_marginal(&stack, Array1::from(bits(vi, 3)).view()).unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-10);
}
