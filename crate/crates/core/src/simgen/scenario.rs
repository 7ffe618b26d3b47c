//! Synthetic experiments: a tag on a robot circling the anchor.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tone::{quantize, snr_to_phase_sigma, synth_stream, ToneParams};
use crate::aoa::{ArrayGeometry, SubArray};
use crate::dataset_io::{write_gt_file, write_signal_file, Chunk, CtePacket, GtRecord, GtSchema, SignalSchema};
use crate::iq::CteLayout;
use crate::labeling::{boresight_azimuth, distance, elevation, AnchorConfig, DistanceMode};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    #[default]
    Continuous,
    Stopping,
    Zigzag,
}

impl std::str::FromStr for PathKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "continuous" => Ok(PathKind::Continuous),
            "stopping" => Ok(PathKind::Stopping),
            "zigzag" => Ok(PathKind::Zigzag),
            _ => Err(format!("unknown path '{s}'")),
        }
    }
}

impl std::fmt::Display for PathKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PathKind::Continuous => "continuous",
            PathKind::Stopping => "stopping",
            PathKind::Zigzag => "zigzag",
        })
    }
}

/// An angular sector with extra attenuation on both sub-arrays.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub from_deg: f64,
    pub to_deg: f64,
    pub attenuation_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub path: PathKind,
    /// Tag height above the floor, mm.
    pub tag_height: f64,
    /// Horizontal tag–anchor distance, mm.
    pub radius: f64,
    /// Azimuth sweep, degrees.
    pub sweep: [f64; 2],
    /// Angular speed while moving, degrees per second.
    pub speed_deg_s: f64,
    /// Stopping path: dwell per stop and angle between stops.
    pub dwell_s: f64,
    pub step_deg: f64,
    /// Zigzag path: radial swing amplitude (mm) and number of swings over the sweep.
    pub zigzag_amplitude: f64,
    pub zigzag_cycles: f64,
    pub connection_interval: f64,
    pub mocap_interval: f64,
    /// Relative jitter of the MoCap interval.
    pub mocap_jitter: f64,
    pub snr_db: f64,
    pub cfo_hz: f64,
    pub obstacles: Vec<Obstacle>,
    /// RSS at 1 m, dBm.
    pub rss_at_1m: f64,
    pub path_loss_exponent: f64,
    /// Peak sub-array gain toward its normal, dB.
    pub array_gain_db: f64,
    pub rss_noise_db: f64,
    /// Sector (degrees) in which the sub-arrays' RSS dominance is swapped.
    pub anomaly: Option<[f64; 2]>,
    pub anchor: AnchorConfig,
    pub geometry: ArrayGeometry,
    pub layout: CteLayout,
    /// Per sub-array per antenna phase offsets injected into the IQ, radians.
    pub antenna_offsets: [Vec<f64>; 2],
    pub transients: bool,
    /// Spacing of chunk timestamps within a packet, seconds.
    pub chunk_spacing: f64,
    /// Chunks are shuffled within blocks of this size.
    pub shuffle_block: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            path: PathKind::Continuous,
            tag_height: 1100.0,
            radius: 2000.0,
            sweep: [-135.0, 135.0],
            speed_deg_s: 5.0,
            dwell_s: 25.0,
            step_deg: 5.0,
            zigzag_amplitude: 500.0,
            zigzag_cycles: 4.0,
            connection_interval: 0.1,
            mocap_interval: 0.0578,
            mocap_jitter: 0.3,
            snr_db: 30.0,
            cfo_hz: 0.0,
            obstacles: Vec::new(),
            rss_at_1m: -45.0,
            path_loss_exponent: 2.0,
            array_gain_db: 6.0,
            rss_noise_db: 1.0,
            anomaly: None,
            anchor: AnchorConfig::default(),
            geometry: ArrayGeometry::default(),
            layout: CteLayout::default(),
            antenna_offsets: [Vec::new(), Vec::new()],
            transients: true,
            chunk_spacing: 1e-4,
            shuffle_block: 32,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), String> {
        let [lo, hi] = self.sweep;
        if !(lo >= -135.0 && hi <= 135.0 && lo < hi) {
            return Err("sweep must lie within [-135, 135] with lo < hi".into());
        }
        if !(self.connection_interval > 0.0 && self.mocap_interval > 0.0) {
            return Err("intervals must be positive".into());
        }
        if !(self.speed_deg_s > 0.0 && self.radius > 0.0) {
            return Err("speed and radius must be positive".into());
        }
        if self.path == PathKind::Stopping && !(self.step_deg > 0.0 && self.dwell_s >= 0.0) {
            return Err("stopping path needs step > 0 and dwell >= 0".into());
        }
        if self.path == PathKind::Zigzag && self.zigzag_amplitude >= self.radius {
            return Err("zigzag amplitude must be below the radius".into());
        }
        if !(self.mocap_jitter >= 0.0 && self.mocap_jitter < 1.0) {
            return Err("mocap jitter must be in [0, 1)".into());
        }
        self.geometry.validate().map_err(|e| e.to_string())?;
        self.layout.validate().map_err(|e| e.to_string())?;
        Ok(())
    }
}

/// Piecewise-linear azimuth schedule `(time, azimuth)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    knots: Vec<(f64, f64)>,
    kind: PathKind,
    radius: f64,
    zigzag_amplitude: f64,
    zigzag_cycles: f64,
    sweep: [f64; 2],
}

impl Trajectory {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        let [lo, hi] = cfg.sweep;
        let move_time = |a: f64, b: f64| (b - a).abs() / cfg.speed_deg_s;
        let knots = match cfg.path {
            PathKind::Continuous | PathKind::Zigzag => vec![(0.0, lo), (move_time(lo, hi), hi)],
            PathKind::Stopping => {
                let mut knots = Vec::new();
                let mut t = 0.0;
                let stops = ((hi - lo) / cfg.step_deg).floor() as usize;
                for k in 0..=stops {
                    let a = lo + k as f64 * cfg.step_deg;
                    if let Some(&(_, prev)) = knots.last() {
                        t += move_time(prev, a);
                    }
                    knots.push((t, a));
                    t += cfg.dwell_s;
                    knots.push((t, a));
                }
                knots
            }
        };
        Self {
            knots,
            kind: cfg.path,
            radius: cfg.radius,
            zigzag_amplitude: cfg.zigzag_amplitude,
            zigzag_cycles: cfg.zigzag_cycles,
            sweep: cfg.sweep,
        }
    }

    pub fn duration(&self) -> f64 {
        self.knots.last().map_or(0.0, |k| k.0)
    }

    /// Azimuth at `t` and whether the tag is dwelling.
    pub fn azimuth(&self, t: f64) -> (f64, bool) {
        let k = &self.knots;
        if t <= k[0].0 {
            return (k[0].1, false);
        }
        let i = k.partition_point(|p| p.0 <= t);
        if i >= k.len() {
            return (k[k.len() - 1].1, false);
        }
        let (t0, a0) = k[i - 1];
        let (t1, a1) = k[i];
        if a0 == a1 {
            return (a0, true);
        }
        (a0 + (a1 - a0) * (t - t0) / (t1 - t0), false)
    }

    /// Horizontal distance at azimuth `az`, mm.
    pub fn radius_at(&self, az: f64) -> f64 {
        match self.kind {
            PathKind::Zigzag => {
                let [lo, hi] = self.sweep;
                let phase = (az - lo) / (hi - lo) * self.zigzag_cycles;
                // triangle wave in [-1, 1]
                let tri = 4.0 * (phase - (phase + 0.5).floor()).abs() - 1.0;
                self.radius + self.zigzag_amplitude * tri
            }
            _ => self.radius,
        }
    }

    /// Tag position in the room at `t`, mm.
    pub fn position(&self, t: f64, cfg: &ScenarioConfig) -> [f64; 3] {
        let (az, _) = self.azimuth(t);
        let r = self.radius_at(az);
        let heading = (az + cfg.anchor.misalignment_deg).to_radians();
        [
            cfg.anchor.x + r * heading.cos(),
            cfg.anchor.y + r * heading.sin(),
            cfg.tag_height,
        ]
    }
}

/// Per-packet truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub idx: u64,
    pub timestamp: f64,
    pub azimuth: f64,
    pub elevation: f64,
    pub theta_ula: f64,
    /// mm.
    pub distance: f64,
    pub sub_array: SubArray,
    pub channel: u8,
    pub rss: i32,
    pub cfo_hz: f64,
    pub dwell: bool,
    pub shadowed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub packets: Vec<CtePacket>,
    /// Chunks in logger (shuffled) order.
    pub chunks: Vec<Chunk>,
    pub gt: Vec<GtRecord>,
    pub manifest: Vec<ManifestEntry>,
}

fn rotation_z(deg: f64) -> [[f64; 3]; 3] {
    let (s, c) = deg.to_radians().sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// RSS of one sub-array for a tag at device azimuth `az`, before noise.
pub fn ideal_rss(cfg: &ScenarioConfig, sub_array: SubArray, az: f64, distance_mm: f64) -> f64 {
    let mut gain_sub = sub_array;
    if let Some([lo, hi]) = cfg.anomaly {
        if az >= lo && az <= hi {
            gain_sub = sub_array.other();
        }
    }
    let normal = cfg.geometry.orientations[gain_sub.index()];
    let attenuation: f64 = cfg
        .obstacles
        .iter()
        .filter(|o| az >= o.from_deg && az <= o.to_deg)
        .map(|o| o.attenuation_db)
        .sum();
    cfg.rss_at_1m - 10.0 * cfg.path_loss_exponent * (distance_mm / 1000.0).max(1e-3).log10()
        + cfg.array_gain_db * (az - normal).to_radians().cos()
        - attenuation
}

/// MoCap timestamps with jittered intervals whose mean is exactly the configured rate.
fn mocap_times(cfg: &ScenarioConfig, span: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = (span / cfg.mocap_interval).ceil() as usize + 2;
    let raw: Vec<f64> = (0..n)
        .map(|_| 1.0 + cfg.mocap_jitter * rng.random_range(-1.0..1.0))
        .collect();
    let scale = cfg.mocap_interval * n as f64 / raw.iter().sum::<f64>();
    let mut t = 0.0;
    let mut out = vec![0.0];
    for r in raw {
        t += r * scale;
        out.push(t);
    }
    out
}

pub fn generate_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<Scenario, String> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let path = Trajectory::new(cfg);
    let duration = path.duration();

    let gt: Vec<GtRecord> = mocap_times(cfg, duration, &mut rng)
        .into_iter()
        .map(|t| {
            let (az, _) = path.azimuth(t);
            GtRecord {
                timestamp: t,
                position: path.position(t, cfg),
                rotation: rotation_z(az + cfg.anchor.misalignment_deg + 90.0),
            }
        })
        .collect();

    let phase_sigma = snr_to_phase_sigma(cfg.snr_db);
    let rss_noise = Normal::new(0.0, cfg.rss_noise_db.max(0.0)).map_err(|e| e.to_string())?;
    let count = (duration / cfg.connection_interval).floor() as u64 + 1;
    let mut packets = Vec::with_capacity(count as usize);
    let mut manifest = Vec::with_capacity(count as usize);
    for idx in 0..count {
        let t = idx as f64 * cfg.connection_interval;
        let (_, dwell) = path.azimuth(t);
        let pos = path.position(t, cfg);
        let az = boresight_azimuth(pos, &cfg.anchor).map_err(|e| e.to_string())?;
        let el = elevation(pos, &cfg.anchor).map_err(|e| e.to_string())?;
        let dist = distance(pos, &cfg.anchor, DistanceMode::Spatial);
        let sub_array = SubArray::from_idx(idx);
        let theta_ula = cfg.geometry.ula_angle(sub_array, az, el);
        let channel: u8 = rng.random_range(0..37);
        let mut rss = ideal_rss(cfg, sub_array, az, dist);
        if cfg.rss_noise_db > 0.0 {
            rss += rss_noise.sample(&mut rng);
        }
        let rss = rss.round() as i32;
        // receiver AGC keeps the IQ magnitude in a narrow band
        let amplitude = (2048.0 * 10f64.powf((rss as f64 + 60.0) / 20.0)).clamp(512.0, 8192.0);
        let params = ToneParams {
            theta_ula,
            channel,
            cfo_hz: cfg.cfo_hz,
            phase0: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            phase_sigma,
            amplitude,
            antenna_offsets: cfg.antenna_offsets[sub_array.index()].clone(),
            transients: cfg.transients,
            len: crate::dataset_io::MAX_CTE_SAMPLES,
        };
        let stream = synth_stream(&params, &cfg.geometry, &cfg.layout, &mut rng).map_err(|e| e.to_string())?;
        packets.push(CtePacket::complete(idx, t, rss, channel, quantize(&stream)));
        manifest.push(ManifestEntry {
            idx,
            timestamp: t,
            azimuth: az,
            elevation: el,
            theta_ula,
            distance: dist,
            sub_array,
            channel,
            rss,
            cfo_hz: cfg.cfo_hz,
            dwell,
            shadowed: cfg.obstacles.iter().any(|o| az >= o.from_deg && az <= o.to_deg),
        });
    }

    let mut chunks: Vec<Chunk> = packets.iter().flat_map(|p| p.to_chunks(cfg.chunk_spacing)).collect();
    for block in chunks.chunks_mut(cfg.shuffle_block.max(1)) {
        block.shuffle(&mut rng);
    }
    Ok(Scenario {
        packets,
        chunks,
        gt,
        manifest,
    })
}

/// File names written by [`write_scenario`].
pub const SIGNAL_FILE: &str = "signal.json";
pub const GT_FILE: &str = "gt.json";
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const CONVERSION_FILE: &str = "conversion.json";

/// Writes the signal, GT and manifest files plus a one-entry conversion dictionary.
pub fn write_scenario(dir: &Path, name: &str, cfg: &ScenarioConfig, scenario: &Scenario) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(fs::File::create(dir.join(SIGNAL_FILE))?);
    write_signal_file(&scenario.chunks, &SignalSchema::default(), &mut w)?;
    w.flush()?;
    let mut w = BufWriter::new(fs::File::create(dir.join(GT_FILE))?);
    write_gt_file(&scenario.gt, &GtSchema::default(), &mut w)?;
    w.flush()?;
    let mut w = BufWriter::new(fs::File::create(dir.join(MANIFEST_FILE))?);
    for m in &scenario.manifest {
        serde_json::to_writer(&mut w, m)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    let conversion = serde_json::json!({
        name: {
            "signal": SIGNAL_FILE,
            "gt": GT_FILE,
            "height_mm": cfg.tag_height,
            "obstacles": !cfg.obstacles.is_empty(),
            "scenario": cfg.path.to_string(),
        }
    });
    fs::write(dir.join(CONVERSION_FILE), serde_json::to_string_pretty(&conversion)? + "\n")
}
