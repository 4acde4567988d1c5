//! Exact inference by enumerating every joint state of a small machine.
//!
//! Costs grow as `2^(n_visible + n_hidden)`, so every entry point checks an
//! [`EnumerationBudget`]. All sums are taken in log space.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::dbn::DbnStack;
use crate::error::{DbnError, Result};
use crate::rbm::{bits, is_binary, BinaryState, GradientEstimate, RbmParams};

/// Upper bound on the total number of units an enumeration may touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationBudget {
    pub max_total_units: usize,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        EnumerationBudget { max_total_units: 20 }
    }
}

impl EnumerationBudget {
    pub fn check(&self, units: usize) -> Result<()> {
        if units > self.max_total_units || units >= 63 {
            return Err(DbnError::BudgetExceeded {
                units,
                limit: self.max_total_units,
            });
        }
        Ok(())
    }
}

/// `log Σ exp(x)` with the usual max shift. Returns `-inf` for an empty input.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.into_iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `log σ(x)` without clamping.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Exact probabilities and gradients of tiny machines.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactOracle {
    pub budget: EnumerationBudget,
}

impl ExactOracle {
    pub fn new(budget: EnumerationBudget) -> Self {
        ExactOracle { budget }
    }

    /// `-E(v, h)` for every hidden configuration of a fixed `v`,
    /// indexed by the hidden bit pattern.
    fn neg_energies_for_visible(v: ArrayView1<f64>, params: &RbmParams) -> Vec<f64> {
        let gh = params.n_hidden();
        let field = v.dot(&params.w) + &params.b;
        let av = params.a.dot(&v);
        (0..1u64 << gh)
            .map(|hidx| {
                let mut s = av;
                for (j, f) in field.iter().enumerate() {
                    if (hidx >> j) & 1 == 1 {
                        s += f;
                    }
                }
                s
            })
            .collect()
    }

    /// `-E(v, h)` for every joint state, indexed as in [`BinaryState::from_index`].
    fn neg_energies(&self, params: &RbmParams) -> Result<Vec<f64>> {
        let (gv, gh) = (params.n_visible(), params.n_hidden());
        self.budget.check(gv + gh)?;
        let mut out = vec![0.0; 1usize << (gv + gh)];
        for vidx in 0..1u64 << gv {
            let v = bits(vidx, gv);
            for (hidx, e) in Self::neg_energies_for_visible(v.view(), params).into_iter().enumerate() {
                out[((hidx as u64) << gv | vidx) as usize] = e;
            }
        }
        Ok(out)
    }

    pub fn log_partition(&self, params: &RbmParams) -> Result<f64> {
        let e = self.neg_energies(params)?;
        Ok(log_sum_exp(e.iter().copied()))
    }

    /// `Z = Σ_v Σ_h exp(-E(v, h))`. May overflow to infinity for large
    /// energies; use [`Self::log_partition`] in that case.
    pub fn partition_function(&self, params: &RbmParams) -> Result<f64> {
        self.log_partition(params).map(f64::exp)
    }

    pub fn joint_prob(&self, state: &BinaryState, params: &RbmParams) -> Result<f64> {
        let log_z = self.log_partition(params)?;
        let e = crate::rbm::energy_restricted(state, params)?;
        Ok((-e - log_z).exp())
    }

    /// `log P(v)`, marginalizing the hidden units by enumeration.
    pub fn log_marginal(&self, v: ArrayView1<f64>, params: &RbmParams) -> Result<f64> {
        let log_z = self.log_partition(params)?;
        self.log_marginal_given(v, params, log_z)
    }

    fn log_marginal_given(&self, v: ArrayView1<f64>, params: &RbmParams, log_z: f64) -> Result<f64> {
        if v.len() != params.n_visible() {
            return Err(DbnError::shape("visible vector", params.n_visible(), v.len()));
        }
        if !is_binary(v) {
            return Err(DbnError::Validation("visible vector must be binary".into()));
        }
        let e = Self::neg_energies_for_visible(v, params);
        Ok(log_sum_exp(e.iter().copied()) - log_z)
    }

    pub fn marginal_prob(&self, v: ArrayView1<f64>, params: &RbmParams) -> Result<f64> {
        self.log_marginal(v, params).map(f64::exp)
    }

    /// Mean log-likelihood of the rows of `data`.
    pub fn loglik(&self, data: ArrayView2<f64>, params: &RbmParams) -> Result<f64> {
        if data.nrows() == 0 {
            return Err(DbnError::Validation("dataset is empty".into()));
        }
        let log_z = self.log_partition(params)?;
        let mut total = 0.0;
        for row in data.rows() {
            total += self.log_marginal_given(row, params, log_z)?;
        }
        Ok(total / data.nrows() as f64)
    }

    /// Exact gradient of [`Self::loglik`]: data expectations minus model
    /// expectations of `v hᵀ`, `v` and `h`.
    pub fn loglik_gradient(&self, data: ArrayView2<f64>, params: &RbmParams) -> Result<GradientEstimate> {
        let m = data.nrows();
        if m == 0 {
            return Err(DbnError::Validation("dataset is empty".into()));
        }
        if data.ncols() != params.n_visible() {
            return Err(DbnError::shape("dataset columns", params.n_visible(), data.ncols()));
        }
        let (gv, gh) = (params.n_visible(), params.n_hidden());
        let neg_e = self.neg_energies(params)?;
        let log_z = log_sum_exp(neg_e.iter().copied());

        let mut g = GradientEstimate::zeros_like(params);
        for row in data.rows() {
            let ph = crate::rbm::hidden_conditional(row, params)?;
            for i in 0..gv {
                for j in 0..gh {
                    g.d_w[[i, j]] += row[i] * ph[j];
                }
            }
            g.d_a += &row;
            g.d_b += &ph;
        }
        let inv_m = 1.0 / m as f64;
        g.d_w *= inv_m;
        g.d_a *= inv_m;
        g.d_b *= inv_m;

        let mut model_w = Array2::<f64>::zeros((gv, gh));
        let mut model_a = Array1::<f64>::zeros(gv);
        let mut model_b = Array1::<f64>::zeros(gh);
        for (idx, e) in neg_e.iter().enumerate() {
            let p = (e - log_z).exp();
            let s = BinaryState::from_index(idx as u64, gv, gh);
            for i in 0..gv {
                if s.v[i] == 1.0 {
                    model_a[i] += p;
                    for j in 0..gh {
                        if s.h[j] == 1.0 {
                            model_w[[i, j]] += p;
                        }
                    }
                }
            }
            model_b.scaled_add(p, &s.h);
        }
        g.d_w -= &model_w;
        g.d_a -= &model_a;
        g.d_b -= &model_b;
        Ok(g)
    }

    /// Exact `P(v)` of a two-layer belief net: the top machine supplies the
    /// prior over the first hidden layer and the bottom machine the directed
    /// likelihood `P(v | h¹)`.
    pub fn dbn_marginal(&self, stack: &DbnStack, v: ArrayView1<f64>) -> Result<f64> {
        match stack.layers.as_slice() {
            [single] => self.marginal_prob(v, single),
            [bottom, top] => {
                let units = bottom.n_visible() + bottom.n_hidden() + top.n_hidden();
                self.budget.check(units)?;
                if v.len() != bottom.n_visible() {
                    return Err(DbnError::shape("visible vector", bottom.n_visible(), v.len()));
                }
                if !is_binary(v) {
                    return Err(DbnError::Validation("visible vector must be binary".into()));
                }
                let top_log_z = self.log_partition(top)?;
                let g1 = bottom.n_hidden();
                let terms: Vec<f64> = (0..1u64 << g1)
                    .map(|h1_idx| {
                        let h1 = bits(h1_idx, g1);
                        let prior = log_sum_exp(Self::neg_energies_for_visible(h1.view(), top)) - top_log_z;
                        let act = bottom.w.dot(&h1) + &bottom.a;
                        let lik: f64 = act
                            .iter()
                            .zip(v.iter())
                            .map(|(&x, &vi)| if vi == 1.0 { log_sigmoid(x) } else { log_sigmoid(-x) })
                            .sum();
                        prior + lik
                    })
                    .collect();
                Ok(log_sum_exp(terms).exp())
            }
            _ => Err(DbnError::Unsupported(format!(
                "exact belief-net marginal supports at most 2 layers, stack has {}",
                stack.layers.len()
            ))),
        }
    }

    /// Mean exact log-likelihood of a one- or two-layer stack on binary rows.
    pub fn dbn_loglik(&self, stack: &DbnStack, data: ArrayView2<f64>) -> Result<f64> {
        if data.nrows() == 0 {
            return Err(DbnError::Validation("dataset is empty".into()));
        }
        let mut total = 0.0;
        for row in data.rows() {
            total += self.dbn_marginal(stack, row)?.ln();
        }
        Ok(total / data.nrows() as f64)
    }
}

pub fn partition_function_exact(params: &RbmParams) -> Result<f64> {
    ExactOracle::default().partition_function(params)
}

pub fn joint_prob_exact(state: &BinaryState, params: &RbmParams) -> Result<f64> {
    ExactOracle::default().joint_prob(state, params)
}

pub fn marginal_prob_exact(v: ArrayView1<f64>, params: &RbmParams) -> Result<f64> {
    ExactOracle::default().marginal_prob(v, params)
}

pub fn exact_loglik(data: ArrayView2<f64>, params: &RbmParams) -> Result<f64> {
    ExactOracle::default().loglik(data, params)
}

pub fn exact_loglik_gradient(data: ArrayView2<f64>, params: &RbmParams) -> Result<GradientEstimate> {
    ExactOracle::default().loglik_gradient(data, params)
}

pub fn dbn_marginal_exact(stack: &DbnStack, v: ArrayView1<f64>) -> Result<f64> {
    ExactOracle::default().dbn_marginal(stack, v)
}
