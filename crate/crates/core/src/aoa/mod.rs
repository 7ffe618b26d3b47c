//! Angle-of-arrival estimation.
//!
//! Three per-packet estimators produce an angle in the sub-array (ULA)
//! frame; [`selection`] remaps it to the device frame, picks the stronger
//! sub-array and smooths the result.

mod geometry;
pub mod music;
pub mod pdoa;
pub mod selection;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset_io::CtePacket;
use crate::iq::{slot_filter, CteLayout, IqError, SlottedCte};
use crate::labeling::LabeledPacket;

pub use geometry::{ArrayGeometry, CalibrationTable, SubArray, BLE_DATA_CHANNEL_MHZ, DESIGN_FREQUENCY_HZ, SPEED_OF_LIGHT};
pub use music::music;
pub use pdoa::{pdoa_naive, pdoa_ti};
pub use selection::{
    moving_average, remap_to_global, remap_to_ula, rss_select, AngleEstimate, MovingAverage, RssSelector,
    DEFAULT_PAIRING_WINDOW, DEFAULT_WINDOW,
};

/// Below this θ_ULA (and above its mirror) estimates are flagged low-confidence.
pub const ENDFIRE_MARGIN_DEG: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AoaError {
    #[error("need at least 2 switching rounds, got {rounds}")]
    InsufficientRounds { rounds: usize },
    #[error("covariance is rank deficient or not positive semi-definite")]
    RankDeficient,
    #[error("pseudo-spectrum has no peak")]
    NoPeak,
    #[error("no carrier frequency for channel {0}")]
    UnknownChannel(u8),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid calibration table")]
    InvalidCalibration,
    #[error("no partner estimate from the other sub-array near t={timestamp}")]
    UnpairedEstimate { timestamp: f64 },
    #[error(transparent)]
    Iq(#[from] IqError),
}

pub(crate) fn is_endfire(theta_ula: f64) -> bool {
    theta_ula < ENDFIRE_MARGIN_DEG || theta_ula > 180.0 - ENDFIRE_MARGIN_DEG
}

/// Raw estimator output in the ULA frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UlaEstimate {
    /// Degrees, [0, 180].
    pub theta_ula: f64,
    pub low_confidence: bool,
    /// The arccos argument fell outside [-1, 1] and was clamped.
    pub clamped: bool,
}

impl UlaEstimate {
    pub fn new(theta_ula: f64, clamped: bool) -> Self {
        Self {
            theta_ula,
            low_confidence: is_endfire(theta_ula),
            clamped,
        }
    }
}

/// Affine correction applied to the TI estimator's output angle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AngleAdjust {
    pub scale: f64,
    pub offset: f64,
}

impl Default for AngleAdjust {
    fn default() -> Self {
        Self { scale: 1.0, offset: 0.0 }
    }
}

impl AngleAdjust {
    pub fn apply(&self, theta: f64) -> f64 {
        (self.scale * theta + self.offset).clamp(0.0, 180.0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Pdoa,
    #[default]
    Ti,
    Music,
}

impl std::str::FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pdoa" => Ok(Algorithm::Pdoa),
            "ti" => Ok(Algorithm::Ti),
            "music" => Ok(Algorithm::Music),
            _ => Err(format!("unknown algorithm '{s}' (expected pdoa, ti or music)")),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Pdoa => "pdoa",
            Algorithm::Ti => "ti",
            Algorithm::Music => "music",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorConfig {
    pub algorithm: Algorithm,
    pub geometry: ArrayGeometry,
    pub layout: CteLayout,
    pub calibration: CalibrationTable,
    pub adjust: AngleAdjust,
    pub grid_deg: f64,
    pub window: usize,
    pub pairing_window: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        let geometry = ArrayGeometry::default();
        Self {
            algorithm: Algorithm::default(),
            calibration: CalibrationTable::zeros(geometry.elements),
            geometry,
            layout: CteLayout::default(),
            adjust: AngleAdjust::default(),
            grid_deg: 0.5,
            window: DEFAULT_WINDOW,
            pairing_window: DEFAULT_PAIRING_WINDOW,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<(), AoaError> {
        self.geometry.validate()?;
        self.layout.validate()?;
        if self.layout.antennas_per_array != self.geometry.elements {
            return Err(AoaError::InvalidGeometry(
                "layout antenna count differs from geometry element count".into(),
            ));
        }
        self.calibration.validate(self.geometry.elements)?;
        if self.window == 0 {
            return Err(AoaError::InvalidGeometry("moving-average window must be >= 1".into()));
        }
        Ok(())
    }
}

/// Runs the configured estimator on an already slotted packet.
pub fn estimate_slotted(slotted: &SlottedCte, cfg: &EstimatorConfig) -> Result<UlaEstimate, AoaError> {
    match cfg.algorithm {
        Algorithm::Pdoa => pdoa_naive(slotted, &cfg.geometry),
        Algorithm::Ti => pdoa_ti(slotted, &cfg.geometry, &cfg.calibration, &cfg.adjust),
        Algorithm::Music => music(slotted, &cfg.geometry, cfg.grid_deg),
    }
}

pub fn estimate_packet(packet: &CtePacket, cfg: &EstimatorConfig) -> Result<UlaEstimate, AoaError> {
    estimate_slotted(&slot_filter(packet, &cfg.layout)?, cfg)
}

/// One output row of [`estimate_stream`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub idx: u64,
    pub timestamp: f64,
    pub channel: u8,
    pub sub_array: SubArray,
    pub rss: i32,
    pub theta_ula: Option<f64>,
    pub theta_global: Option<f64>,
    pub low_confidence: bool,
    pub clamped: bool,
    /// Device-frame angle after RSS sub-array selection.
    pub selected: Option<f64>,
    pub selected_sub_array: Option<SubArray>,
    /// `selected` after the moving average.
    pub smoothed: Option<f64>,
    /// Ground-truth azimuth, when the input was labeled.
    pub gt_azimuth: Option<f64>,
    pub gt_elevation: Option<f64>,
    /// Ground-truth θ_ULA for this packet's sub-array.
    pub gt_theta_ula: Option<f64>,
    pub error: Option<String>,
}

/// Per-packet estimation in parallel, then sequential RSS selection and
/// smoothing in input order.
pub fn estimate_stream(packets: &[LabeledPacket], cfg: &EstimatorConfig) -> Vec<EstimateRecord> {
    let raw: Vec<Result<UlaEstimate, AoaError>> =
        packets.par_iter().map(|lp| estimate_packet(&lp.packet, cfg)).collect();

    let mut selector = RssSelector::new(cfg.pairing_window);
    let mut smoother = MovingAverage::new(cfg.window.max(1));
    packets
        .iter()
        .zip(raw)
        .map(|(lp, res)| {
            let p = &lp.packet;
            let sub_array = SubArray::from_idx(p.idx);
            let gt_theta_ula = Some(cfg.geometry.ula_angle(sub_array, lp.azimuth, lp.elevation));
            let mut rec = EstimateRecord {
                idx: p.idx,
                timestamp: p.timestamp,
                channel: p.channel,
                sub_array,
                rss: p.rss,
                theta_ula: None,
                theta_global: None,
                low_confidence: false,
                clamped: false,
                selected: None,
                selected_sub_array: None,
                smoothed: None,
                gt_azimuth: Some(lp.azimuth),
                gt_elevation: Some(lp.elevation),
                gt_theta_ula,
                error: None,
            };
            match res {
                Ok(est) => {
                    let angle = AngleEstimate::new(est.theta_ula, sub_array, p.rss, p.timestamp);
                    rec.theta_ula = Some(est.theta_ula);
                    rec.theta_global = Some(angle.theta_global);
                    rec.low_confidence = est.low_confidence;
                    rec.clamped = est.clamped;
                    if let Some(sel) = selector.push(angle) {
                        rec.selected = Some(sel.theta_global);
                        rec.selected_sub_array = Some(sel.sub_array);
                        rec.smoothed = Some(smoother.push(sel.theta_global));
                    }
                }
                Err(e) => rec.error = Some(e.to_string()),
            }
            rec
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjust_identity_by_default() {
        assert_eq!(AngleAdjust::default().apply(37.5), 37.5);
        let a = AngleAdjust { scale: 2.0, offset: -10.0 };
        assert_eq!(a.apply(50.0), 90.0);
        assert_eq!(a.apply(120.0), 180.0);
    }

    #[test]
    fn endfire_flag() {
        assert!(UlaEstimate::new(5.0, false).low_confidence);
        assert!(UlaEstimate::new(175.0, false).low_confidence);
        assert!(!UlaEstimate::new(10.0, false).low_confidence);
        assert!(!UlaEstimate::new(90.0, false).low_confidence);
    }

    #[test]
    fn algorithm_names() {
        for a in [Algorithm::Pdoa, Algorithm::Ti, Algorithm::Music] {
            assert_eq!(a.to_string().parse::<Algorithm>().unwrap(), a);
        }
        assert!("esprit".parse::<Algorithm>().is_err());
    }

    #[test]
    fn default_config_is_valid() {
        EstimatorConfig::default().validate().unwrap();
    }
}
