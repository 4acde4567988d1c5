use crate::error::{DbnError, Result};

/// How real-valued visible rows enter the positive phase of training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VisibleInput {
    /// Draw binary visible states with the row values as probabilities.
    #[default]
    Sampled,
    /// Use the row values themselves.
    Probabilities,
}

/// Knobs shared by pretraining, head training and fine-tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Hidden layer sizes, bottom to top. The input width comes from the data.
    pub layer_sizes: Vec<usize>,
    /// Contrastive-divergence epochs per layer.
    pub epochs: usize,
    pub cd_k: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// L2 penalty on head (and fine-tuned) weights.
    pub l2: f64,
    pub seed: u64,
    pub fine_tune: bool,
    pub fine_tune_epochs: usize,
    pub head_epochs: usize,
    pub head_learning_rate: f64,
    pub visible_input: VisibleInput,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            layer_sizes: vec![50, 50, 10],
            epochs: 25,
            cd_k: 1,
            learning_rate: 0.05,
            momentum: 0.5,
            batch_size: 10,
            l2: 1e-4,
            seed: 0,
            fine_tune: false,
            fine_tune_epochs: 10,
            head_epochs: 100,
            head_learning_rate: 0.5,
            visible_input: VisibleInput::Sampled,
        }
    }
}

/// The two experimental configurations used for replication runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 50-50-10 hidden units, 25 epochs per layer.
    PaperSmall,
    /// 1000 hidden units per layer, 250 epochs per layer. Long-running.
    PaperLarge,
}

impl Preset {
    pub fn config(self) -> TrainConfig {
        match self {
            Preset::PaperSmall => TrainConfig {
                layer_sizes: vec![50, 50, 10],
                epochs: 25,
                ..TrainConfig::default()
            },
            Preset::PaperLarge => TrainConfig {
                layer_sizes: vec![1000, 1000, 1000],
                epochs: 250,
                ..TrainConfig::default()
            },
        }
    }

    pub fn is_long_running(self) -> bool {
        matches!(self, Preset::PaperLarge)
    }
}

impl TrainConfig {
    /// Checks the contrastive-divergence knobs. `epochs` must be at least one.
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.is_empty() || self.layer_sizes.contains(&0) {
            return Err(DbnError::Validation(format!(
                "layer sizes must be non-empty and positive, got {:?}",
                self.layer_sizes
            )));
        }
        if self.epochs == 0 {
            return Err(DbnError::Validation("epochs must be at least 1".into()));
        }
        if self.cd_k == 0 {
            return Err(DbnError::Validation("cd_k must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(DbnError::Validation(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(DbnError::Validation(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(DbnError::Validation("batch size must be at least 1".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(DbnError::Validation(format!(
                "l2 must be non-negative, got {}",
                self.l2
            )));
        }
        if !(self.head_learning_rate >= 0.0 && self.head_learning_rate.is_finite()) {
            return Err(DbnError::Validation("head learning rate must be non-negative".into()));
        }
        Ok(())
    }
}
