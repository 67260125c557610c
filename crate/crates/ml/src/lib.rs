//! Configuration-learning classifiers.
//!
//! Recurrent classifiers (LSTM, Bi-LSTM, GRU) trained by backpropagation
//! through time in double precision, three classical baselines, k-fold
//! metrics, and the SwitchOpt alternating search over hidden units and epochs.

mod error;
mod linalg;

pub mod baseline;
pub mod evaluate;
pub mod metrics;
pub mod rnn;
pub mod standardize;
pub mod switchopt;
pub mod train;

pub use error::{Error, Result};
pub use evaluate::{evaluate, evaluate_epochs};
pub use metrics::{ConfusionMatrix, Metrics, MetricsReport};
pub use rnn::{RnnKind, RnnModel, Sequences};
pub use train::{fit, ClassifierKind, ClassifierSpec, Model};
