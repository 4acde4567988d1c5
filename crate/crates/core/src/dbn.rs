//! Greedy layer-wise stacking of restricted Boltzmann machines.
//!
//! Layer 1 is trained on the data. Each further layer is trained on the
//! representations produced by the frozen layers beneath it.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;

use crate::config::TrainConfig;
use crate::error::{DbnError, Result};
use crate::head::SoftmaxHead;
use crate::rbm::{hidden_conditional, hidden_probs_batch, sample_bernoulli, train_rbm, RbmParams, INIT_STD};
use crate::rng::{seeded, substream};

#[derive(Debug, Clone, PartialEq)]
pub struct DbnStack {
    /// Machines from the input upwards.
    pub layers: Vec<RbmParams>,
    pub head: Option<SoftmaxHead>,
}

impl DbnStack {
    pub fn new(layers: Vec<RbmParams>) -> Result<Self> {
        if layers.is_empty() {
            return Err(DbnError::Validation("a stack needs at least one layer".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].n_hidden() != pair[1].n_visible() {
                return Err(DbnError::shape(
                    "layer chain",
                    format!("layer {} visible = {}", k + 1, pair[0].n_hidden()),
                    pair[1].n_visible(),
                ));
            }
        }
        Ok(DbnStack { layers, head: None })
    }

    pub fn with_head(mut self, head: SoftmaxHead) -> Result<Self> {
        if head.top_size() != self.top_size() {
            return Err(DbnError::shape("head input", self.top_size(), head.top_size()));
        }
        self.head = Some(head);
        Ok(self)
    }

    /// `[n_visible, hidden_1, hidden_2, ...]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].n_visible())
            .chain(self.layers.iter().map(RbmParams::n_hidden))
            .collect()
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].n_visible()
    }

    pub fn top_size(&self) -> usize {
        self.layers.last().map(RbmParams::n_hidden).unwrap_or(0)
    }
}

/// How activations move from one layer to the next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PropagationMode {
    /// Pass `P(h = 1 | v)` upward unchanged.
    #[default]
    MeanField,
    /// Draw binary hidden states at every layer from a generator seeded here.
    Sampled(u64),
}

/// Swap the roles of visible and hidden units: `W` is transposed and the
/// biases exchanged.
pub fn transpose_init(lower: &RbmParams) -> RbmParams {
    RbmParams {
        w: lower.w.t().to_owned(),
        a: lower.b.clone(),
        b: lower.a.clone(),
    }
}

pub fn propagate_up(v: ArrayView1<f64>, stack: &DbnStack, mode: PropagationMode) -> Result<Array1<f64>> {
    if v.len() != stack.input_size() {
        return Err(DbnError::shape("propagate_up input", stack.input_size(), v.len()));
    }
    let mut x = v.to_owned();
    match mode {
        PropagationMode::MeanField => {
            for layer in &stack.layers {
                x = hidden_conditional(x.view(), layer)?;
            }
        }
        PropagationMode::Sampled(seed) => {
            let mut rng = seeded(seed);
            for layer in &stack.layers {
                x = sample_bernoulli(&hidden_conditional(x.view(), layer)?, &mut rng);
            }
        }
    }
    Ok(x)
}

/// Propagates every row of `data` through `layers`.
pub fn propagate_batch(data: ArrayView2<f64>, layers: &[RbmParams], mode: PropagationMode) -> Result<Array2<f64>> {
    let mut x = data.to_owned();
    for (k, layer) in layers.iter().enumerate() {
        let probs = hidden_probs_batch(x.view(), layer)?;
        x = match mode {
            PropagationMode::MeanField => probs,
            PropagationMode::Sampled(seed) => sample_bernoulli(&probs, &mut substream(seed, k as u64)),
        };
    }
    Ok(x)
}

/// Top-layer mean-field features for every row.
pub fn features(data: ArrayView2<f64>, stack: &DbnStack) -> Result<Array2<f64>> {
    if data.ncols() != stack.input_size() {
        return Err(DbnError::shape("feature columns", stack.input_size(), data.ncols()));
    }
    propagate_batch(data, &stack.layers, PropagationMode::MeanField)
}

#[derive(Debug, Clone)]
pub struct Pretrained {
    pub stack: DbnStack,
    /// Per-layer, per-epoch mean reconstruction error.
    pub recon_traces: Vec<Vec<f64>>,
}

/// Greedy pretraining with mean-field propagation between layers.
///
/// `layer_sizes` includes the input width as its first entry.
pub fn greedy_pretrain<R: Rng + ?Sized>(
    data: ArrayView2<f64>,
    layer_sizes: &[usize],
    config: &TrainConfig,
    rng: &mut R,
) -> Result<DbnStack> {
    greedy_pretrain_with(data, layer_sizes, config, PropagationMode::MeanField, rng).map(|p| p.stack)
}

pub fn greedy_pretrain_with<R: Rng + ?Sized>(
    data: ArrayView2<f64>,
    layer_sizes: &[usize],
    config: &TrainConfig,
    mode: PropagationMode,
    rng: &mut R,
) -> Result<Pretrained> {
    if layer_sizes.len() < 2 {
        return Err(DbnError::Validation(
            "need an input size and at least one hidden size".into(),
        ));
    }
    if layer_sizes.contains(&0) {
        return Err(DbnError::Validation(format!(
            "layer sizes must be positive, got {layer_sizes:?}"
        )));
    }
    if layer_sizes[0] != data.ncols() {
        return Err(DbnError::shape("input layer size", data.ncols(), layer_sizes[0]));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(DbnError::Validation("training data contains NaN or infinity".into()));
    }

    let n_layers = layer_sizes.len() - 1;
    let mut layers: Vec<RbmParams> = Vec::with_capacity(n_layers);
    let mut traces = Vec::with_capacity(n_layers);
    let mut inputs = data.to_owned();

    for k in 0..n_layers {
        let (gv, gh) = (layer_sizes[k], layer_sizes[k + 1]);
        let init = match layers.last() {
            Some(below) if below.n_visible() == gh => transpose_init(below),
            _ => RbmParams::random(gv, gh, INIT_STD, rng),
        };
        let trained = train_rbm(inputs.view(), init, config, rng)?;
        if k + 1 < n_layers {
            let layer_mode = match mode {
                PropagationMode::MeanField => PropagationMode::MeanField,
                PropagationMode::Sampled(seed) => PropagationMode::Sampled(seed.wrapping_add(k as u64)),
            };
            inputs = propagate_batch(inputs.view(), std::slice::from_ref(&trained.params), layer_mode)?;
        }
        layers.push(trained.params);
        traces.push(trained.recon_error);
    }
    Ok(Pretrained {
        stack: DbnStack::new(layers)?,
        recon_traces: traces,
    })
}
