//! RSS ranging: feature-row assembly, log-loss and per-channel log-loss
//! models, and Gaussian-process regression over 37-channel RSS vectors.

pub mod alg1;
pub mod gpr;
pub mod logloss;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset_io::NUM_DATA_CHANNELS;
use crate::labeling::LabeledPacket;

pub use alg1::{build_feature_rows, mean_timestep, FeatureRowStats, RangingFeatureRow};
pub use gpr::{GprHyper, GprModel, GprOptions, GprPrediction};
pub use logloss::{chill_fit, logloss_fit, ChillModel, ChillPrediction, LogLossModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RangingError {
    #[error("log-loss fit needs at least two distinct distances")]
    DegenerateFit,
    #[error("kernel matrix is not positive definite even with jitter")]
    SingularKernel,
    #[error("feature vector has {got} entries, expected {expected}")]
    IncompleteFeature { expected: usize, got: usize },
    #[error("need {need} rows, have {have}")]
    NotEnoughRows { need: usize, have: usize },
    #[error("invalid hyperparameter {0}")]
    InvalidHyper(&'static str),
    #[error("no samples")]
    Empty,
}

/// One received packet as seen by the ranging stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RssObservation {
    pub timestamp: f64,
    pub channel: u8,
    /// dBm.
    pub rss: f64,
    /// Ground-truth distance, meters.
    pub distance: f64,
}

impl RssObservation {
    pub fn from_labeled(p: &LabeledPacket) -> Self {
        Self {
            timestamp: p.packet.timestamp,
            channel: p.packet.channel,
            rss: p.packet.rss as f64,
            distance: p.distance / 1000.0,
        }
    }
}

/// Uniform random split without replacement: `train_size` rows for
/// training, the rest for testing, both in original order.
pub fn split_rows<T: Clone>(rows: &[T], train_size: usize, seed: u64) -> Result<(Vec<T>, Vec<T>), RangingError> {
    if rows.len() < train_size {
        return Err(RangingError::NotEnoughRows {
            need: train_size,
            have: rows.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![false; rows.len()];
    for i in sample(&mut rng, rows.len(), train_size) {
        chosen[i] = true;
    }
    let mut train = Vec::with_capacity(train_size);
    let mut test = Vec::with_capacity(rows.len() - train_size);
    for (row, c) in rows.iter().zip(chosen) {
        if c {
            train.push(row.clone());
        } else {
            test.push(row.clone());
        }
    }
    Ok((train, test))
}

/// Absolute-error summary in the form reported for ranging.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub mae: f64,
    pub median: f64,
    /// Variance of the absolute errors.
    pub variance: f64,
    pub count: usize,
}

impl ErrorSummary {
    pub fn from_errors(errors: &[f64]) -> Result<Self, RangingError> {
        if errors.is_empty() {
            return Err(RangingError::Empty);
        }
        let mut abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
        abs.sort_by(f64::total_cmp);
        let n = abs.len();
        let mae = abs.iter().sum::<f64>() / n as f64;
        let median = if n % 2 == 1 {
            abs[n / 2]
        } else {
            0.5 * (abs[n / 2 - 1] + abs[n / 2])
        };
        let variance = abs.iter().map(|e| (e - mae).powi(2)).sum::<f64>() / n as f64;
        Ok(Self {
            mae,
            median,
            variance,
            count: n,
        })
    }
}

/// Per-packet errors of a log-loss model over test rows: every channel entry
/// of a row is one packet, judged against the row's distance.
pub fn logloss_errors(model: &LogLossModel, rows: &[RangingFeatureRow]) -> Vec<f64> {
    rows.iter()
        .flat_map(|r| r.rss_by_channel.iter().map(move |&x| model.predict(x) - r.distance))
        .collect()
}

pub fn chill_errors(model: &ChillModel, rows: &[RangingFeatureRow]) -> Vec<f64> {
    rows.iter()
        .flat_map(|r| {
            (0..NUM_DATA_CHANNELS).map(move |c| model.predict(c as u8, r.rss_by_channel[c]).distance - r.distance)
        })
        .collect()
}

/// Per-row GPR errors, with the matching predictive standard deviations.
pub fn gpr_errors(model: &GprModel, rows: &[RangingFeatureRow]) -> Result<(Vec<f64>, Vec<f64>), RangingError> {
    let inputs: Vec<Vec<f64>> = rows.iter().map(|r| r.rss_by_channel.to_vec()).collect();
    let preds = model.predict_batch(&inputs)?;
    Ok(preds
        .iter()
        .zip(rows)
        .map(|(p, r)| (p.mean - r.distance, p.predictive_std))
        .unzip())
}
