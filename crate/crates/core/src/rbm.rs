//! Restricted Boltzmann machine over binary units.
//!
//! Energy: `E(v, h) = -vᵀWh - aᵀv - bᵀh`, with `W` of shape
//! `(n_visible, n_hidden)`. Both conditionals factorize into independent
//! Bernoulli units with logistic activations.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{TrainConfig, VisibleInput};
use crate::error::{DbnError, Result};

/// Activation inputs are clamped to this magnitude before exponentiation.
pub const SIGMOID_CLAMP: f64 = 500.0;

/// Standard deviation of the Gaussian weight initialization.
pub const INIT_STD: f64 = 0.01;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    let x = x.clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP);
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbmParams {
    /// Visible-hidden couplings, `(n_visible, n_hidden)`.
    pub w: Array2<f64>,
    /// Visible bias.
    pub a: Array1<f64>,
    /// Hidden bias.
    pub b: Array1<f64>,
}

impl RbmParams {
    pub fn new(w: Array2<f64>, a: Array1<f64>, b: Array1<f64>) -> Result<Self> {
        let (gv, gh) = w.dim();
        if gv == 0 || gh == 0 {
            return Err(DbnError::Validation(format!(
                "machine needs at least one visible and one hidden unit, got {gv}x{gh}"
            )));
        }
        if a.len() != gv {
            return Err(DbnError::shape("visible bias", gv, a.len()));
        }
        if b.len() != gh {
            return Err(DbnError::shape("hidden bias", gh, b.len()));
        }
        let params = RbmParams { w, a, b };
        if !params.is_finite() {
            return Err(DbnError::Validation("parameters contain NaN or infinity".into()));
        }
        Ok(params)
    }

    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        assert!(n_visible > 0 && n_hidden > 0, "empty machine");
        RbmParams {
            w: Array2::zeros((n_visible, n_hidden)),
            a: Array1::zeros(n_visible),
            b: Array1::zeros(n_hidden),
        }
    }

    /// Zero-mean Gaussian weights with standard deviation `std`, zero biases.
    pub fn random<R: Rng + ?Sized>(n_visible: usize, n_hidden: usize, std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("finite non-negative std");
        let mut params = RbmParams::zeros(n_visible, n_hidden);
        params.w.iter_mut().for_each(|x| *x = normal.sample(rng));
        params
    }

    pub fn n_visible(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_hidden(&self) -> usize {
        self.w.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.w
            .iter()
            .chain(self.a.iter())
            .chain(self.b.iter())
            .all(|x| x.is_finite())
    }

    pub fn num_params(&self) -> usize {
        self.w.len() + self.a.len() + self.b.len()
    }
}

/// A joint configuration of visible and hidden units, each 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryState {
    pub v: Array1<f64>,
    pub h: Array1<f64>,
}

impl BinaryState {
    pub fn new(v: Array1<f64>, h: Array1<f64>) -> Result<Self> {
        if !is_binary(v.view()) || !is_binary(h.view()) {
            return Err(DbnError::Validation("binary state entries must be 0 or 1".into()));
        }
        Ok(BinaryState { v, h })
    }

    /// State whose bits are the binary digits of `index`: visible units take
    /// the low `n_visible` bits, hidden units the next `n_hidden`.
    pub fn from_index(index: u64, n_visible: usize, n_hidden: usize) -> Self {
        BinaryState {
            v: bits(index, n_visible),
            h: bits(index >> n_visible, n_hidden),
        }
    }

    fn check_dims(&self, params: &RbmParams) -> Result<()> {
        if self.v.len() != params.n_visible() {
            return Err(DbnError::shape("state visible units", params.n_visible(), self.v.len()));
        }
        if self.h.len() != params.n_hidden() {
            return Err(DbnError::shape("state hidden units", params.n_hidden(), self.h.len()));
        }
        Ok(())
    }
}

/// The low `n` bits of `index` as a 0/1 vector, least significant first.
pub fn bits(index: u64, n: usize) -> Array1<f64> {
    Array1::from_iter((0..n).map(|i| ((index >> i) & 1) as f64))
}

pub fn is_binary(x: ArrayView1<f64>) -> bool {
    x.iter().all(|&e| e == 0.0 || e == 1.0)
}

pub fn energy_restricted(state: &BinaryState, params: &RbmParams) -> Result<f64> {
    state.check_dims(params)?;
    let interaction = state.v.dot(&params.w.dot(&state.h));
    Ok(-interaction - params.a.dot(&state.v) - params.b.dot(&state.h))
}

/// Energy of a general Boltzmann machine with lateral couplings.
///
/// `l_couplings` (visible-visible) and `j_couplings` (hidden-hidden) must be
/// symmetric with zero diagonal. Biases of `params` are not used.
pub fn energy_general(
    state: &BinaryState,
    params: &RbmParams,
    l_couplings: ArrayView2<f64>,
    j_couplings: ArrayView2<f64>,
) -> Result<f64> {
    state.check_dims(params)?;
    check_coupling("visible couplings", l_couplings, params.n_visible())?;
    check_coupling("hidden couplings", j_couplings, params.n_hidden())?;
    let lateral_v = state.v.dot(&l_couplings.dot(&state.v));
    let lateral_h = state.h.dot(&j_couplings.dot(&state.h));
    let interaction = state.v.dot(&params.w.dot(&state.h));
    Ok(-0.5 * lateral_v - 0.5 * lateral_h - interaction)
}

fn check_coupling(context: &'static str, m: ArrayView2<f64>, n: usize) -> Result<()> {
    if m.dim() != (n, n) {
        return Err(DbnError::shape(
            context,
            format!("{n}x{n}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    for i in 0..n {
        if m[[i, i]] != 0.0 {
            return Err(DbnError::Validation(format!("{context}: nonzero diagonal at {i}")));
        }
        for j in (i + 1)..n {
            if m[[i, j]] != m[[j, i]] {
                return Err(DbnError::Validation(format!("{context}: asymmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// `P(h_j = 1 | v)` for every hidden unit. `v` may be real-valued in `[0, 1]`,
/// in which case it acts as a vector of activation probabilities.
pub fn hidden_conditional(v: ArrayView1<f64>, params: &RbmParams) -> Result<Array1<f64>> {
    if v.len() != params.n_visible() {
        return Err(DbnError::shape("hidden_conditional input", params.n_visible(), v.len()));
    }
    Ok((v.dot(&params.w) + &params.b).mapv_into(sigmoid))
}

/// `P(v_i = 1 | h)` for every visible unit.
pub fn visible_conditional(h: ArrayView1<f64>, params: &RbmParams) -> Result<Array1<f64>> {
    if h.len() != params.n_hidden() {
        return Err(DbnError::shape("visible_conditional input", params.n_hidden(), h.len()));
    }
    Ok((params.w.dot(&h) + &params.a).mapv_into(sigmoid))
}

/// Row-wise hidden probabilities for a batch `(m, n_visible)`.
pub fn hidden_probs_batch(batch: ArrayView2<f64>, params: &RbmParams) -> Result<Array2<f64>> {
    if batch.ncols() != params.n_visible() {
        return Err(DbnError::shape("batch columns", params.n_visible(), batch.ncols()));
    }
    Ok((batch.dot(&params.w) + &params.b).mapv_into(sigmoid))
}

/// Row-wise visible probabilities for a batch `(m, n_hidden)`.
pub fn visible_probs_batch(batch: ArrayView2<f64>, params: &RbmParams) -> Result<Array2<f64>> {
    if batch.ncols() != params.n_hidden() {
        return Err(DbnError::shape("batch columns", params.n_hidden(), batch.ncols()));
    }
    Ok((batch.dot(&params.w.t()) + &params.a).mapv_into(sigmoid))
}

/// Bernoulli draw per entry, in row-major order.
pub fn sample_bernoulli<D, R>(probs: &ndarray::Array<f64, D>, rng: &mut R) -> ndarray::Array<f64, D>
where
    D: ndarray::Dimension,
    R: Rng + ?Sized,
{
    probs.map(|&p| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
}

/// Outcome of one block-Gibbs sweep `v -> h -> v'`.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsSample {
    pub h_sample: Array1<f64>,
    pub v_reconstruction: Array1<f64>,
    /// `P(h = 1 | v')` at the reconstruction.
    pub h_probs: Array1<f64>,
}

pub fn gibbs_step<R: Rng + ?Sized>(v: ArrayView1<f64>, params: &RbmParams, rng: &mut R) -> Result<GibbsSample> {
    let h_sample = sample_bernoulli(&hidden_conditional(v, params)?, rng);
    let v_reconstruction = sample_bernoulli(&visible_conditional(h_sample.view(), params)?, rng);
    let h_probs = hidden_conditional(v_reconstruction.view(), params)?;
    Ok(GibbsSample {
        h_sample,
        v_reconstruction,
        h_probs,
    })
}

/// Log-likelihood ascent direction for one machine.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub d_w: Array2<f64>,
    pub d_a: Array1<f64>,
    pub d_b: Array1<f64>,
}

impl GradientEstimate {
    pub fn zeros_like(params: &RbmParams) -> Self {
        GradientEstimate {
            d_w: Array2::zeros(params.w.raw_dim()),
            d_a: Array1::zeros(params.a.raw_dim()),
            d_b: Array1::zeros(params.b.raw_dim()),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.d_w
            .iter()
            .chain(self.d_a.iter())
            .chain(self.d_b.iter())
            .all(|x| x.is_finite())
    }

    /// All entries flattened in the order `w` (row-major), `a`, `b`.
    pub fn flatten(&self) -> Vec<f64> {
        self.d_w
            .iter()
            .chain(self.d_a.iter())
            .chain(self.d_b.iter())
            .copied()
            .collect()
    }
}

struct CdStats {
    gradient: GradientEstimate,
    /// Sum over rows of squared distance between data and final chain state.
    recon_sq_error: f64,
}

fn cd_stats<R: Rng + ?Sized>(batch: ArrayView2<f64>, params: &RbmParams, k: usize, rng: &mut R) -> Result<CdStats> {
    let m = batch.nrows();
    if m == 0 {
        return Err(DbnError::Validation(
            "contrastive divergence needs a non-empty batch".into(),
        ));
    }
    if k == 0 {
        return Err(DbnError::Validation("contrastive divergence needs k >= 1".into()));
    }
    let pos_h = hidden_probs_batch(batch, params)?;

    // Chain state is sampled; probabilities only enter at the last hidden step.
    let mut probs_h = pos_h.clone();
    let mut v_neg = Array2::zeros(batch.raw_dim());
    for _ in 0..k {
        let h = sample_bernoulli(&probs_h, rng);
        v_neg = sample_bernoulli(&visible_probs_batch(h.view(), params)?, rng);
        probs_h = hidden_probs_batch(v_neg.view(), params)?;
    }
    let neg_h = probs_h;

    let scale = 1.0 / m as f64;
    let d_w = (batch.t().dot(&pos_h) - v_neg.t().dot(&neg_h)) * scale;
    let d_a = (batch.sum_axis(Axis(0)) - v_neg.sum_axis(Axis(0))) * scale;
    let d_b = (pos_h.sum_axis(Axis(0)) - neg_h.sum_axis(Axis(0))) * scale;
    let recon_sq_error = (&batch - &v_neg).mapv(|x| x * x).sum();
    Ok(CdStats {
        gradient: GradientEstimate { d_w, d_a, d_b },
        recon_sq_error,
    })
}

/// CD-k estimate of the mean log-likelihood gradient over `batch`.
///
/// Positive statistics use `P(h|v)` at the data; the chain runs `k` sampled
/// sweeps and the negative hidden statistic uses probabilities at the final
/// visible sample.
pub fn cd_gradient<R: Rng + ?Sized>(
    batch: ArrayView2<f64>,
    params: &RbmParams,
    k: usize,
    rng: &mut R,
) -> Result<GradientEstimate> {
    cd_stats(batch, params, k, rng).map(|s| s.gradient)
}

/// Result of [`train_rbm`].
#[derive(Debug, Clone)]
pub struct RbmTraining {
    pub params: RbmParams,
    /// Mean per-sample squared reconstruction error for each epoch.
    pub recon_error: Vec<f64>,
}

/// Mini-batch CD-k with momentum for `config.epochs` passes over `data`.
///
/// Rows are shuffled each epoch. Rows may be real-valued in `[0, 1]`; with
/// [`VisibleInput::Sampled`] each batch is replaced by a fresh Bernoulli draw
/// before the positive phase, which leaves binary rows unchanged.
pub fn train_rbm<R: Rng + ?Sized>(
    data: ArrayView2<f64>,
    params: RbmParams,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<RbmTraining> {
    config.validate()?;
    if data.nrows() == 0 {
        return Err(DbnError::Validation("training data is empty".into()));
    }
    if data.ncols() != params.n_visible() {
        return Err(DbnError::shape(
            "training data columns",
            params.n_visible(),
            data.ncols(),
        ));
    }
    if data.iter().any(|x| !x.is_finite() || !(0.0..=1.0).contains(x)) {
        return Err(DbnError::Validation(
            "training data must be finite and within [0, 1]".into(),
        ));
    }

    let mut params = params;
    let mut vel = GradientEstimate::zeros_like(&params);
    let mut order: Vec<usize> = (0..data.nrows()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    let lr = config.learning_rate;
    let mu = config.momentum;

    for epoch in 0..config.epochs {
        order.shuffle(rng);
        let mut sq_error = 0.0;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = data.select(Axis(0), chunk);
            let batch = match config.visible_input {
                VisibleInput::Sampled => sample_bernoulli(&batch, rng),
                VisibleInput::Probabilities => batch,
            };
            let stats = cd_stats(batch.view(), &params, config.cd_k, rng)?;
            sq_error += stats.recon_sq_error;
            let g = stats.gradient;

            vel.d_w.zip_mut_with(&g.d_w, |v, &d| *v = mu * *v + lr * d);
            vel.d_a.zip_mut_with(&g.d_a, |v, &d| *v = mu * *v + lr * d);
            vel.d_b.zip_mut_with(&g.d_b, |v, &d| *v = mu * *v + lr * d);
            params.w += &vel.d_w;
            params.a += &vel.d_a;
            params.b += &vel.d_b;

            if !params.is_finite() {
                return Err(DbnError::NonFinite {
                    epoch,
                    batch: batch_idx,
                    what: "rbm parameters",
                });
            }
        }
        trace.push(sq_error / data.nrows() as f64);
    }
    Ok(RbmTraining {
        params,
        recon_error: trace,
    })
}
