//! Training, evaluation, and ablation harness.

mod ablate;
mod adam;
mod eval;
mod run;

pub use ablate::{ablate, cost_volume_axis, decode_mode_axis, format_table, AblateRow};
pub use adam::Adam;
pub use eval::{adaptive_eval, evaluate, evaluate_samples, EvalOutcome};
pub use run::{train, EpochStats, TrainOutcome};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::metrics::LossWeights;
use crate::net::NetConfig;

/// Optimization settings mirroring the reference protocol: 30 epochs of
/// Adam at lr 0.001 with moments (0.9, 0.999) over batches of 16.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    pub dataset_root: PathBuf,
    pub net: NetConfig,
    /// Per-level loss weights; None derives defaults for the level count.
    pub loss_weights: Option<LossWeights>,
}

impl TrainConfig {
    pub fn new(dataset_root: PathBuf, net: NetConfig, seed: u64) -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            seed,
            dataset_root,
            net,
            loss_weights: None,
        }
    }

    pub fn weights(&self) -> LossWeights {
        self.loss_weights.clone().unwrap_or_else(|| {
            let levels = match self.net.decoder.mode {
                crate::net::DecodeMode::Straight => 1,
                _ => self.net.decoder.l_level,
            };
            LossWeights::default_for(levels)
        })
    }
}
