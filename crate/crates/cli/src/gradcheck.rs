//! Self-check of the training maths against brute-force enumeration.

use std::fmt;

use beliefnet_core::dbn::transpose_init;
use beliefnet_core::oracle::{
    dbn_marginal_exact, exact_loglik, exact_loglik_gradient, joint_prob_exact, marginal_prob_exact,
};
use beliefnet_core::rbm::{bits, cd_gradient};
use beliefnet_core::rng::{seeded, substream};
use beliefnet_core::{BinaryState, DbnStack, RbmParams, Result};
use ndarray::Array2;
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-6;
/// Floor on the denominator of the relative error, so entries near zero are
/// compared absolutely.
pub const FD_FLOOR: f64 = 1e-3;
pub const CD_SAMPLES: u64 = 50_000;
pub const CD_Z_TOL: f64 = 3.0;
pub const SUM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    /// Worst observed discrepancy.
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "{verdict} {:<28} worst {:.3e}  tolerance {:.1e}",
            self.name, self.worst, self.tolerance
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GradcheckOptions {
    pub seed: u64,
    /// Flips the sign of the analytic gradient. Exists to prove the
    /// finite-difference check can fail.
    pub corrupt_sign: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub checks: Vec<Check>,
}

impl GradcheckReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check(name: &'static str, worst: f64, tolerance: f64) -> Check {
    Check {
        name,
        worst,
        tolerance,
        passed: worst <= tolerance,
    }
}

fn machine(gv: usize, gh: usize, rng: &mut impl Rng) -> RbmParams {
    let mut p = RbmParams::zeros(gv, gh);
    p.w.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    p.a.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    p.b.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    p
}

fn bumped(p: &RbmParams, idx: usize, d: f64) -> RbmParams {
    let mut q = p.clone();
    let (wn, an) = (p.w.len(), p.a.len());
    if idx < wn {
        q.w.as_slice_mut().expect("standard layout")[idx] += d;
    } else if idx < wn + an {
        q.a[idx - wn] += d;
    } else {
        q.b[idx - wn - an] += d;
    }
    q
}

fn finite_differences(opts: GradcheckOptions) -> Result<f64> {
    let mut rng = substream(opts.seed, 11);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let p = machine(4, 3, &mut rng);
        let data = Array2::from_shape_fn((6, 4), |_| rng.random_range(0..2) as f64);
        let mut analytic = exact_loglik_gradient(data.view(), &p)?.flatten();
        if opts.corrupt_sign {
            analytic.iter_mut().for_each(|g| *g = -*g);
        }
        for (idx, a) in analytic.iter().enumerate() {
            let up = exact_loglik(data.view(), &bumped(&p, idx, FD_STEP))?;
            let down = exact_loglik(data.view(), &bumped(&p, idx, -FD_STEP))?;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

/// Largest per-entry |mean CD-1 - exact| in standard errors, at zero
/// parameters on the four 2x2 bars-and-stripes patterns.
fn cd_consistency(opts: GradcheckOptions) -> Result<f64> {
    let p = RbmParams::zeros(4, 3);
    let data = Array2::from_shape_fn((4, 4), |(r, c)| {
        let pats = [[1, 1, 0, 0], [0, 0, 1, 1], [1, 0, 1, 0], [0, 1, 0, 1]];
        pats[r][c] as f64
    });
    let exact = exact_loglik_gradient(data.view(), &p)?;
    let mut sum = Array2::<f64>::zeros((4, 3));
    let mut sum_sq = Array2::<f64>::zeros((4, 3));
    for s in 0..CD_SAMPLES {
        let g = cd_gradient(
            data.view(),
            &p,
            1,
            &mut seeded(opts.seed.wrapping_mul(CD_SAMPLES).wrapping_add(s)),
        )?;
        sum += &g.d_w;
        sum_sq += &g.d_w.mapv(|x| x * x);
    }
    let n = CD_SAMPLES as f64;
    let mut worst = 0.0f64;
    for ((s, sq), e) in sum.iter().zip(sum_sq.iter()).zip(exact.d_w.iter()) {
        let mean = s / n;
        let se = ((sq / n - mean * mean) / (n - 1.0)).sqrt();
        let z = if se > 0.0 {
            (mean - e).abs() / se
        } else if mean == *e {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(z);
    }
    Ok(worst)
}

fn normalization(opts: GradcheckOptions) -> Result<f64> {
    let mut rng = substream(opts.seed, 13);
    let mut worst = 0.0f64;
    for m in 0..20 {
        let (gv, gh) = (2 + m % 4, 2 + m % 3);
        let p = machine(gv, gh, &mut rng);
        let mut joint = 0.0;
        for idx in 0..1u64 << (gv + gh) {
            joint += joint_prob_exact(&BinaryState::from_index(idx, gv, gh), &p)?;
        }
        let mut marginal = 0.0;
        for idx in 0..1u64 << gv {
            marginal += marginal_prob_exact(bits(idx, gv).view(), &p)?;
        }
        worst = worst.max((joint - 1.0).abs()).max((marginal - 1.0).abs());
    }
    Ok(worst)
}

fn transpose_equality(opts: GradcheckOptions) -> Result<f64> {
    let mut rng = substream(opts.seed, 14);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let base = machine(3, 3, &mut rng);
        let stack = DbnStack::new(vec![base.clone(), transpose_init(&base)])?;
        for idx in 0..8 {
            let v = bits(idx, 3);
            let diff = dbn_marginal_exact(&stack, v.view())? - marginal_prob_exact(v.view(), &base)?;
            worst = worst.max(diff.abs());
        }
    }
    Ok(worst)
}

pub fn run(opts: GradcheckOptions) -> Result<GradcheckReport> {
    Ok(GradcheckReport {
        checks: vec![
            check("finite-difference gradient", finite_differences(opts)?, FD_TOL),
            check("cd1 expectation (std errors)", cd_consistency(opts)?, CD_Z_TOL),
            check("normalization sums", normalization(opts)?, SUM_TOL),
            check("transpose-init dbn equality", transpose_equality(opts)?, SUM_TOL),
        ],
    })
}
