//! Log-distance path loss: `d = 10^(−(x − x0) / (10 α))`.

use serde::{Deserialize, Serialize};

use super::{RangingError, RangingFeatureRow};
use crate::dataset_io::NUM_DATA_CHANNELS;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLossModel {
    /// RSS at the 1 m reference distance, dBm.
    pub x0: f64,
    /// Path-loss exponent.
    pub alpha: f64,
}

impl LogLossModel {
    /// Distance in meters for an RSS reading in dBm.
    pub fn predict(&self, rss: f64) -> f64 {
        10f64.powf(-(rss - self.x0) / (10.0 * self.alpha))
    }

    /// Forward model: expected RSS at `distance` meters.
    pub fn rss_at(&self, distance: f64) -> f64 {
        self.x0 - 10.0 * self.alpha * distance.log10()
    }

    /// Least-squares fit of `x = x0 − 10 α log10 d` over (rss, distance) pairs.
    pub fn fit_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self, RangingError> {
        let (mut n, mut su, mut sx, mut suu, mut sux) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut first_u: Option<f64> = None;
        let mut distinct = false;
        for (x, d) in pairs {
            let u = -10.0 * d.log10();
            match first_u {
                None => first_u = Some(u),
                Some(f) if f != u => distinct = true,
                _ => {}
            }
            n += 1.0;
            su += u;
            sx += x;
            suu += u * u;
            sux += u * x;
        }
        let det = n * suu - su * su;
        if !distinct || det <= 0.0 {
            return Err(RangingError::DegenerateFit);
        }
        let alpha = (n * sux - su * sx) / det;
        let x0 = (sx - alpha * su) / n;
        if alpha == 0.0 || !alpha.is_finite() {
            return Err(RangingError::DegenerateFit);
        }
        Ok(Self { x0, alpha })
    }
}

/// One model over every channel entry of every row.
pub fn logloss_fit(rows: &[RangingFeatureRow]) -> Result<LogLossModel, RangingError> {
    LogLossModel::fit_pairs(
        rows.iter()
            .flat_map(|r| r.rss_by_channel.iter().map(move |&x| (x, r.distance))),
    )
}

/// Channel-informed log-loss: one model per data channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChillModel {
    pub per_channel: Vec<Option<LogLossModel>>,
    /// Used for channels without a model of their own.
    pub global: LogLossModel,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChillPrediction {
    pub distance: f64,
    pub fallback_to_global: bool,
}

impl ChillModel {
    pub fn predict(&self, channel: u8, rss: f64) -> ChillPrediction {
        match self.per_channel.get(channel as usize).copied().flatten() {
            Some(m) => ChillPrediction {
                distance: m.predict(rss),
                fallback_to_global: false,
            },
            None => ChillPrediction {
                distance: self.global.predict(rss),
                fallback_to_global: true,
            },
        }
    }
}

pub fn chill_fit(rows: &[RangingFeatureRow]) -> Result<ChillModel, RangingError> {
    let global = logloss_fit(rows)?;
    let per_channel = (0..NUM_DATA_CHANNELS)
        .map(|c| {
            LogLossModel::fit_pairs(
                rows.iter()
                    .filter_map(|r| r.rss_by_channel.get(c).map(|&x| (x, r.distance))),
            )
            .ok()
        })
        .collect();
    Ok(ChillModel { per_channel, global })
}
