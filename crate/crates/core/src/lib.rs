//! Restricted Boltzmann machines and deep belief networks for
//! smartphone activity recognition.
//!
//! - [`rbm`]: energy, conditionals, Gibbs sampling and contrastive divergence
//! - [`oracle`]: exact enumeration for tiny machines
//! - [`dbn`]: greedy layer-wise pretraining and upward propagation
//! - [`head`]: softmax classifier and end-to-end fine-tuning
//! - [`data`]: loaders, min-max normalization and synthetic clusters
//! - [`eval`]: accuracy, confusion matrix, ROC and AUC

pub mod config;
pub mod data;
pub mod dbn;
pub mod error;
pub mod eval;
pub mod head;
pub mod oracle;
pub mod rbm;
pub mod rng;

pub use config::{Preset, TrainConfig, VisibleInput};
pub use data::{LabeledDataset, Normalizer, SplitTag};
pub use dbn::{DbnStack, PropagationMode};
pub use error::{DbnError, Result};
pub use eval::EvalReport;
pub use head::SoftmaxHead;
pub use oracle::{EnumerationBudget, ExactOracle};
pub use rbm::{BinaryState, GradientEstimate, RbmParams};
