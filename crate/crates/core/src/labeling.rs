//! Joins CTE packets with motion-capture ground truth.
//!
//! The receiver produces a packet every connection interval while the MoCap
//! system reports at its own irregular rate, so the tag position at a packet
//! timestamp is linearly interpolated between the two bracketing GT records.
//! Azimuth, elevation and distance are then taken relative to the anchor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset_io::{CtePacket, GtRecord};

/// Largest bracketing gap accepted by default, seconds.
pub const DEFAULT_MAX_GAP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum LabelError {
    #[error("timestamp {t} outside the GT span or bracketing gap too large")]
    OutOfRange { t: f64 },
    #[error("tag coincides with the anchor in the plane used for the angle")]
    DegeneratePosition,
    #[error("ground truth is empty")]
    EmptyGroundTruth,
    #[error("packet is incomplete")]
    IncompletePacket,
}

/// Receiver position. Boresight is the room +x axis, rotated by `misalignment_deg`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnchorConfig {
    pub x: f64,
    pub y: f64,
    /// Array height above the floor, mm.
    pub height: f64,
    /// Boresight rotation about z relative to the room +x axis, degrees.
    pub misalignment_deg: f64,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self {
            x: -1200.0,
            y: 0.0,
            height: 1100.0,
            misalignment_deg: 0.0,
        }
    }
}

impl AnchorConfig {
    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.height]
    }
}

/// How the distance label is measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMode {
    #[default]
    Spatial,
    Planar,
}

/// Tag pose at a query time.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose {
    pub position: [f64; 3],
    pub rotation: [[f64; 3]; 3],
    pub interpolated: bool,
}

/// Position of the tag at `t`.
///
/// An exact timestamp match returns the record verbatim. Otherwise the
/// position is interpolated linearly between the bracketing records and the
/// rotation copied from the nearer one. No extrapolation is done.
pub fn interpolate_position(gt: &[GtRecord], t: f64, max_gap: f64) -> Result<Pose, LabelError> {
    let (first, last) = match (gt.first(), gt.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(LabelError::EmptyGroundTruth),
    };
    if !(t >= first.timestamp && t <= last.timestamp) {
        return Err(LabelError::OutOfRange { t });
    }
    let upper = gt.partition_point(|r| r.timestamp < t);
    let hi = &gt[upper];
    if hi.timestamp == t {
        return Ok(Pose {
            position: hi.position,
            rotation: hi.rotation,
            interpolated: false,
        });
    }
    let lo = &gt[upper - 1];
    let span = hi.timestamp - lo.timestamp;
    if span > max_gap {
        return Err(LabelError::OutOfRange { t });
    }
    let w = (t - lo.timestamp) / span;
    let lerp = |k: usize| lo.position[k] + w * (hi.position[k] - lo.position[k]);
    let nearer = if w <= 0.5 { lo } else { hi };
    Ok(Pose {
        position: [lerp(0), lerp(1), lerp(2)],
        rotation: nearer.rotation,
        interpolated: true,
    })
}

/// Wraps an angle in degrees into (-180, 180].
pub fn wrap_degrees(a: f64) -> f64 {
    let r = a.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// Azimuth of `tag` seen from `anchor`, degrees in (-180, 180], measured from +x.
pub fn azimuth(tag: [f64; 2], anchor: [f64; 2]) -> Result<f64, LabelError> {
    let dx = tag[0] - anchor[0];
    let dy = tag[1] - anchor[1];
    if dx == 0.0 && dy == 0.0 {
        return Err(LabelError::DegeneratePosition);
    }
    Ok(wrap_degrees(dy.atan2(dx).to_degrees()))
}

/// Elevation of `tag` above the anchor's horizontal plane, degrees.
pub fn elevation(tag: [f64; 3], anchor: &AnchorConfig) -> Result<f64, LabelError> {
    let run = (tag[0] - anchor.x).hypot(tag[1] - anchor.y);
    if run == 0.0 {
        return Err(LabelError::DegeneratePosition);
    }
    Ok((tag[2] - anchor.height).atan2(run).to_degrees())
}

/// Azimuth relative to the anchor's boresight.
pub fn boresight_azimuth(tag: [f64; 3], anchor: &AnchorConfig) -> Result<f64, LabelError> {
    let az = azimuth([tag[0], tag[1]], [anchor.x, anchor.y])?;
    Ok(wrap_degrees(az - anchor.misalignment_deg))
}

/// Tag-anchor distance in mm.
pub fn distance(tag: [f64; 3], anchor: &AnchorConfig, mode: DistanceMode) -> f64 {
    let dx = tag[0] - anchor.x;
    let dy = tag[1] - anchor.y;
    match mode {
        DistanceMode::Spatial => (dx * dx + dy * dy + (tag[2] - anchor.height).powi(2)).sqrt(),
        DistanceMode::Planar => dx.hypot(dy),
    }
}

/// A packet with its ground-truth labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledPacket {
    pub packet: CtePacket,
    /// Degrees, (-180, 180].
    pub azimuth: f64,
    /// Degrees.
    pub elevation: f64,
    /// Millimeters.
    pub distance: f64,
    pub tag_position: [f64; 3],
    pub tag_rotation: [[f64; 3]; 3],
    pub interpolated: bool,
}

/// A packet that could not be labeled, with the reason.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Unlabeled {
    pub idx: u64,
    pub timestamp: f64,
    pub reason: LabelError,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelOptions {
    pub anchor: AnchorConfig,
    pub max_gap: f64,
    pub distance_mode: DistanceMode,
}

impl Default for LabelOptions {
    fn default() -> Self {
        Self {
            anchor: AnchorConfig::default(),
            max_gap: DEFAULT_MAX_GAP,
            distance_mode: DistanceMode::Spatial,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabelOutcome {
    pub labeled: Vec<LabeledPacket>,
    pub unlabeled: Vec<Unlabeled>,
}

fn label_one(packet: &CtePacket, gt: &[GtRecord], opts: &LabelOptions) -> Result<LabeledPacket, LabelError> {
    if !packet.complete {
        return Err(LabelError::IncompletePacket);
    }
    let pose = interpolate_position(gt, packet.timestamp, opts.max_gap)?;
    Ok(LabeledPacket {
        packet: packet.clone(),
        azimuth: boresight_azimuth(pose.position, &opts.anchor)?,
        elevation: elevation(pose.position, &opts.anchor)?,
        distance: distance(pose.position, &opts.anchor, opts.distance_mode),
        tag_position: pose.position,
        tag_rotation: pose.rotation,
        interpolated: pose.interpolated,
    })
}

/// Labels every complete packet that falls inside the GT span. Per-packet
/// failures are collected in [`LabelOutcome::unlabeled`], in input order.
pub fn label_packets(packets: &[CtePacket], gt: &[GtRecord], opts: &LabelOptions) -> LabelOutcome {
    let mut out = LabelOutcome::default();
    for p in packets {
        match label_one(p, gt, opts) {
            Ok(l) => out.labeled.push(l),
            Err(reason) => out.unlabeled.push(Unlabeled {
                idx: p.idx,
                timestamp: p.timestamp,
                reason,
            }),
        }
    }
    out
}
