//! Multinomial logistic regression on top-level features, plus optional
//! end-to-end fine-tuning through the mean-field sigmoid layers.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::config::TrainConfig;
use crate::dbn::DbnStack;
use crate::error::{DbnError, Result};
use crate::rbm::sigmoid;

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxHead {
    /// `(top_size, n_classes)`.
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

impl SoftmaxHead {
    pub fn zeros(top_size: usize, n_classes: usize) -> Self {
        SoftmaxHead {
            w_out: Array2::zeros((top_size, n_classes)),
            b_out: Array1::zeros(n_classes),
        }
    }

    pub fn new(w_out: Array2<f64>, b_out: Array1<f64>) -> Result<Self> {
        if w_out.ncols() != b_out.len() {
            return Err(DbnError::shape("head bias", w_out.ncols(), b_out.len()));
        }
        if w_out.ncols() == 0 || w_out.nrows() == 0 {
            return Err(DbnError::Validation(
                "head needs at least one input and one class".into(),
            ));
        }
        if w_out.iter().chain(b_out.iter()).any(|x| !x.is_finite()) {
            return Err(DbnError::Validation("head contains NaN or infinity".into()));
        }
        Ok(SoftmaxHead { w_out, b_out })
    }

    pub fn top_size(&self) -> usize {
        self.w_out.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.w_out.ncols()
    }

    fn is_finite(&self) -> bool {
        self.w_out.iter().chain(self.b_out.iter()).all(|x| x.is_finite())
    }
}

/// Numerically stable softmax of one logit vector.
pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let mut e = logits.mapv(|x| (x - max).exp());
    let s = e.sum();
    e /= s;
    e
}

fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let p = softmax(row.view());
        row.assign(&p);
    }
}

pub fn predict_proba(features: ArrayView1<f64>, head: &SoftmaxHead) -> Result<Array1<f64>> {
    if features.len() != head.top_size() {
        return Err(DbnError::shape("head input", head.top_size(), features.len()));
    }
    Ok(softmax((features.dot(&head.w_out) + &head.b_out).view()))
}

pub fn predict_proba_batch(features: ArrayView2<f64>, head: &SoftmaxHead) -> Result<Array2<f64>> {
    if features.ncols() != head.top_size() {
        return Err(DbnError::shape("head input", head.top_size(), features.ncols()));
    }
    let mut logits = features.dot(&head.w_out) + &head.b_out;
    softmax_rows(&mut logits);
    Ok(logits)
}

fn check_labels(labels: &[usize], rows: usize, n_classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(DbnError::shape("label count", rows, labels.len()));
    }
    if rows == 0 {
        return Err(DbnError::Validation("no training samples".into()));
    }
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
        return Err(DbnError::Validation(format!(
            "label {l} at row {i} is outside [0, {n_classes})"
        )));
    }
    Ok(())
}

fn mean_cross_entropy(probs: &Array2<f64>, labels: &[usize]) -> f64 {
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| -probs[[i, l]].max(f64::MIN_POSITIVE).ln())
        .sum();
    total / labels.len() as f64
}

/// Mean cross-entropy plus `l2 / 2 · ‖W‖²`.
pub fn head_loss(head: &SoftmaxHead, features: ArrayView2<f64>, labels: &[usize], l2: f64) -> Result<f64> {
    check_labels(labels, features.nrows(), head.n_classes())?;
    let probs = predict_proba_batch(features, head)?;
    Ok(mean_cross_entropy(&probs, labels) + 0.5 * l2 * head.w_out.mapv(|x| x * x).sum())
}

/// Gradient of [`head_loss`] with respect to `(w_out, b_out)`.
pub fn head_gradient(
    head: &SoftmaxHead,
    features: ArrayView2<f64>,
    labels: &[usize],
    l2: f64,
) -> Result<(Array2<f64>, Array1<f64>)> {
    check_labels(labels, features.nrows(), head.n_classes())?;
    let delta = output_delta(predict_proba_batch(features, head)?, labels);
    let d_w = features.t().dot(&delta) + &(l2 * &head.w_out);
    let d_b = delta.sum_axis(Axis(0));
    Ok((d_w, d_b))
}

/// `(P - Y) / m`, the logit gradient of mean cross-entropy.
fn output_delta(mut probs: Array2<f64>, labels: &[usize]) -> Array2<f64> {
    for (i, &l) in labels.iter().enumerate() {
        probs[[i, l]] -= 1.0;
    }
    let m = labels.len() as f64;
    probs / m
}

#[derive(Debug, Clone)]
pub struct HeadTraining {
    pub head: SoftmaxHead,
    /// Training-set loss after each epoch. Never increases.
    pub loss_trace: Vec<f64>,
}

/// Mini-batch gradient descent for `config.head_epochs` epochs at
/// `config.head_learning_rate`.
///
/// An epoch that raises the full training loss is rolled back and the step
/// size halved.
pub fn train_head<R: Rng + ?Sized>(
    features: ArrayView2<f64>,
    labels: &[usize],
    head: SoftmaxHead,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<HeadTraining> {
    config.validate()?;
    check_labels(labels, features.nrows(), head.n_classes())?;
    if features.ncols() != head.top_size() {
        return Err(DbnError::shape("head input", head.top_size(), features.ncols()));
    }
    let mut head = head;
    let mut lr = config.head_learning_rate;
    let mut best = head_loss(&head, features, labels, config.l2)?;
    let mut trace = Vec::with_capacity(config.head_epochs);
    let mut order: Vec<usize> = (0..labels.len()).collect();

    for epoch in 0..config.head_epochs {
        let snapshot = head.clone();
        order.shuffle(rng);
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let x = features.select(Axis(0), chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (d_w, d_b) = head_gradient(&head, x.view(), &y, config.l2)?;
            head.w_out.scaled_add(-lr, &d_w);
            head.b_out.scaled_add(-lr, &d_b);
            if !head.is_finite() {
                return Err(DbnError::NonFinite {
                    epoch,
                    batch: batch_idx,
                    what: "softmax head",
                });
            }
        }
        let loss = head_loss(&head, features, labels, config.l2)?;
        if loss > best {
            head = snapshot;
            lr *= 0.5;
        } else {
            best = loss;
        }
        trace.push(best);
    }
    Ok(HeadTraining {
        head,
        loss_trace: trace,
    })
}

/// Gradient of [`fine_tune_loss`] for every trainable parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct StackGradient {
    /// Per layer: weight gradient and hidden-bias gradient.
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
}

fn require_head(stack: &DbnStack) -> Result<&SoftmaxHead> {
    stack
        .head
        .as_ref()
        .ok_or_else(|| DbnError::Contract("fine-tuning requires a trained head".into()))
}

/// Activations at every level, input first.
fn forward(stack: &DbnStack, data: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
    if data.ncols() != stack.input_size() {
        return Err(DbnError::shape("input columns", stack.input_size(), data.ncols()));
    }
    let mut acts = vec![data.to_owned()];
    for layer in &stack.layers {
        let next = (acts.last().unwrap().dot(&layer.w) + &layer.b).mapv_into(sigmoid);
        acts.push(next);
    }
    Ok(acts)
}

/// Mean cross-entropy of the whole stack treated as a feed-forward sigmoid
/// network, plus `l2 / 2` times the squared norm of every weight matrix.
pub fn fine_tune_loss(stack: &DbnStack, data: ArrayView2<f64>, labels: &[usize], l2: f64) -> Result<f64> {
    let head = require_head(stack)?;
    check_labels(labels, data.nrows(), head.n_classes())?;
    let acts = forward(stack, data)?;
    let probs = predict_proba_batch(acts.last().unwrap().view(), head)?;
    let penalty: f64 = stack
        .layers
        .iter()
        .map(|l| l.w.mapv(|x| x * x).sum())
        .chain(std::iter::once(head.w_out.mapv(|x| x * x).sum()))
        .sum();
    Ok(mean_cross_entropy(&probs, labels) + 0.5 * l2 * penalty)
}

/// Backpropagation of [`fine_tune_loss`].
pub fn fine_tune_gradient(stack: &DbnStack, data: ArrayView2<f64>, labels: &[usize], l2: f64) -> Result<StackGradient> {
    let head = require_head(stack)?;
    check_labels(labels, data.nrows(), head.n_classes())?;
    let acts = forward(stack, data)?;
    let top = acts.last().unwrap();
    let mut delta = output_delta(predict_proba_batch(top.view(), head)?, labels);

    let head_w = top.t().dot(&delta) + &(l2 * &head.w_out);
    let head_b = delta.sum_axis(Axis(0));

    let mut back_w = &head.w_out;
    let mut layers = Vec::with_capacity(stack.layers.len());
    for (k, layer) in stack.layers.iter().enumerate().rev() {
        let out = &acts[k + 1];
        delta = delta.dot(&back_w.t()) * &out.mapv(|s| s * (1.0 - s));
        let d_w = acts[k].t().dot(&delta) + &(l2 * &layer.w);
        let d_b = delta.sum_axis(Axis(0));
        layers.push((d_w, d_b));
        back_w = &layer.w;
    }
    layers.reverse();
    Ok(StackGradient { layers, head_w, head_b })
}

#[derive(Debug, Clone)]
pub struct FineTuning {
    pub stack: DbnStack,
    pub loss_trace: Vec<f64>,
}

/// End-to-end gradient descent for `config.fine_tune_epochs` epochs, with the
/// same roll-back-and-halve rule as [`train_head`].
pub fn fine_tune<R: Rng + ?Sized>(
    stack: DbnStack,
    data: ArrayView2<f64>,
    labels: &[usize],
    config: &TrainConfig,
    rng: &mut R,
) -> Result<FineTuning> {
    config.validate()?;
    let mut stack = stack;
    let mut best = fine_tune_loss(&stack, data, labels, config.l2)?;
    let mut lr = config.head_learning_rate;
    let mut trace = Vec::with_capacity(config.fine_tune_epochs);
    let mut order: Vec<usize> = (0..labels.len()).collect();

    for epoch in 0..config.fine_tune_epochs {
        let snapshot = stack.clone();
        order.shuffle(rng);
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let x = data.select(Axis(0), chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let g = fine_tune_gradient(&stack, x.view(), &y, config.l2)?;
            for (layer, (d_w, d_b)) in stack.layers.iter_mut().zip(&g.layers) {
                layer.w.scaled_add(-lr, d_w);
                layer.b.scaled_add(-lr, d_b);
            }
            let head = stack.head.as_mut().expect("checked by fine_tune_loss");
            head.w_out.scaled_add(-lr, &g.head_w);
            head.b_out.scaled_add(-lr, &g.head_b);
            if !stack.layers.iter().all(|l| l.is_finite()) || !head.is_finite() {
                return Err(DbnError::NonFinite {
                    epoch,
                    batch: batch_idx,
                    what: "fine-tuned stack",
                });
            }
        }
        let loss = fine_tune_loss(&stack, data, labels, config.l2)?;
        if loss > best {
            stack = snapshot;
            lr *= 0.5;
        } else {
            best = loss;
        }
        trace.push(best);
    }
    Ok(FineTuning {
        stack,
        loss_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use ndarray::array;

    #[test]
    fn zero_head_is_uniform() {
        let head = SoftmaxHead::zeros(10, 12);
        let p = predict_proba(Array1::from_elem(10, 0.3).view(), &head).unwrap();
        for x in p.iter() {
            assert!((x - 1.0 / 12.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shift_invariance() {
        let logits = array![0.3, -2.0, 5.5, 1.0];
        let shifted = logits.mapv(|x| x + 123.0);
        let a = softmax(logits.view());
        let b = softmax(shifted.view());
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn label_out_of_range() {
        let head = SoftmaxHead::zeros(2, 3);
        let x = array![[0.1, 0.2]];
        let cfg = TrainConfig::default();
        assert!(matches!(
            train_head(x.view(), &[3], head, &cfg, &mut seeded(0)),
            Err(DbnError::Validation(_))
        ));
    }

    #[test]
    fn zero_lr_leaves_head_unchanged() {
        let head = SoftmaxHead::new(array![[0.1, -0.2], [0.3, 0.0]], array![0.0, 0.1]).unwrap();
        let x = array![[0.1, 0.2], [0.9, 0.4]];
        let cfg = TrainConfig {
            head_learning_rate: 0.0,
            head_epochs: 5,
            ..TrainConfig::default()
        };
        let out = train_head(x.view(), &[0, 1], head.clone(), &cfg, &mut seeded(0)).unwrap();
        assert_eq!(out.head, head);
        assert!(out.loss_trace.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn one_hot_features_are_learned() {
        let n = 6;
        let x = Array2::from_shape_fn((n, n), |(i, j)| if i == j { 1.0 } else { 0.0 });
        let labels: Vec<usize> = (0..n).collect();
        let cfg = TrainConfig {
            head_epochs: 200,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let out = train_head(x.view(), &labels, SoftmaxHead::zeros(n, n), &cfg, &mut seeded(1)).unwrap();
        let probs = predict_proba_batch(x.view(), &out.head).unwrap();
        for (i, row) in probs.rows().into_iter().enumerate() {
            let arg = row
                .iter()
                .enumerate()
                .fold(0, |b, (j, &p)| if p > row[b] { j } else { b });
            assert_eq!(arg, i);
        }
        assert!(out.loss_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn fine_tune_needs_head() {
        let stack = DbnStack::new(vec![crate::rbm::RbmParams::zeros(2, 2)]).unwrap();
        let x = array![[0.1, 0.2]];
        assert!(matches!(
            fine_tune_loss(&stack, x.view(), &[0], 0.0),
            Err(DbnError::Contract(_))
        ));
    }
}
