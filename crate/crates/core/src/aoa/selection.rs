//! Post-processing: frame remapping, RSS sub-array selection, moving average.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{AoaError, SubArray};

/// Default pairing window for [`rss_select`]: 2.5 connection intervals of 100 ms.
pub const DEFAULT_PAIRING_WINDOW: f64 = 0.25;

/// Default moving-average length.
pub const DEFAULT_WINDOW: usize = 6;

/// Maps a sub-array angle in [0, 180] to the device frame.
///
/// Sub-array 1 covers [-45, 135] (`θ_ULA − 45`); sub-array 2 is its mirror
/// and covers [-135, 45] (`45 − θ_ULA`).
pub fn remap_to_global(theta_ula: f64, sub_array: SubArray) -> f64 {
    match sub_array {
        SubArray::One => theta_ula - 45.0,
        SubArray::Two => 45.0 - theta_ula,
    }
}

/// Inverse of [`remap_to_global`].
pub fn remap_to_ula(theta_global: f64, sub_array: SubArray) -> f64 {
    match sub_array {
        SubArray::One => theta_global + 45.0,
        SubArray::Two => 45.0 - theta_global,
    }
}

/// A per-packet angle estimate in both frames.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleEstimate {
    pub theta_ula: f64,
    pub theta_global: f64,
    pub sub_array: SubArray,
    pub rss: i32,
    pub timestamp: f64,
    /// Near endfire (θ_ULA < 10° or > 170°).
    pub low_confidence: bool,
}

impl AngleEstimate {
    pub fn new(theta_ula: f64, sub_array: SubArray, rss: i32, timestamp: f64) -> Self {
        Self {
            theta_ula,
            theta_global: remap_to_global(theta_ula, sub_array),
            sub_array,
            rss,
            timestamp,
            low_confidence: super::is_endfire(theta_ula),
        }
    }
}

/// Picks the estimate with the higher RSS; ties go to sub-array 1.
///
/// The two estimates must come from different sub-arrays and lie within
/// `window` seconds of each other.
pub fn rss_select(a: &AngleEstimate, b: &AngleEstimate, window: f64) -> Result<AngleEstimate, AoaError> {
    if a.sub_array == b.sub_array || (a.timestamp - b.timestamp).abs() > window {
        return Err(AoaError::UnpairedEstimate {
            timestamp: a.timestamp.max(b.timestamp),
        });
    }
    let (one, two) = if a.sub_array == SubArray::One { (a, b) } else { (b, a) };
    Ok(if two.rss > one.rss { *two } else { *one })
}

/// Streaming RSS selection: each incoming estimate is paired with the most
/// recent estimate of the other sub-array, if that one is within the window.
/// Not meant to be fed from several threads.
#[derive(Clone, Debug)]
pub struct RssSelector {
    window: f64,
    latest: [Option<AngleEstimate>; 2],
    unpaired: usize,
}

impl RssSelector {
    pub fn new(window: f64) -> Self {
        Self {
            window,
            latest: [None, None],
            unpaired: 0,
        }
    }

    pub fn push(&mut self, estimate: AngleEstimate) -> Option<AngleEstimate> {
        let partner = self.latest[estimate.sub_array.other().index()];
        self.latest[estimate.sub_array.index()] = Some(estimate);
        match partner.map(|p| rss_select(&estimate, &p, self.window)) {
            Some(Ok(selected)) => Some(selected),
            _ => {
                self.unpaired += 1;
                None
            }
        }
    }

    /// Estimates that found no partner when they arrived.
    pub fn unpaired(&self) -> usize {
        self.unpaired
    }
}

/// Arithmetic mean of the last `window` angles; fewer during warm-up.
#[derive(Clone, Debug)]
pub struct MovingAverage {
    window: usize,
    values: VecDeque<f64>,
    sum: f64,
}

impl MovingAverage {
    pub fn new(window: usize) -> Self {
        assert!(window >= 1, "moving-average window must be at least 1");
        Self {
            window,
            values: VecDeque::with_capacity(window),
            sum: 0.0,
        }
    }

    pub fn push(&mut self, value: f64) -> f64 {
        if self.values.len() == self.window {
            let old = self.values.pop_front().unwrap_or(0.0);
            self.sum -= old;
        }
        self.values.push_back(value);
        self.sum += value;
        // re-sum to keep rounding from drifting over long streams
        if self.values.len() == self.window {
            self.sum = self.values.iter().sum();
        }
        self.sum / self.values.len() as f64
    }

    pub fn reset(&mut self) {
        self.values.clear();
        self.sum = 0.0;
    }
}

/// Applies a fresh [`MovingAverage`] to a whole sequence.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let mut ma = MovingAverage::new(window);
    values.iter().map(|&v| ma.push(v)).collect()
}
