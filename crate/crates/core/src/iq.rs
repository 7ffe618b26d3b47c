//! Slot filtering of the raw CTE sample stream.
//!
//! The receiver samples at 4 MHz for the whole CTE and leaves it to the host
//! to work out which samples belong to which antenna. The 511 delivered
//! samples start at the reference period (the guard period is never
//! captured): the first 8 µs are the reference antenna, and the rest is a
//! sequence of 2 µs slots, each one antenna dwell with the switching
//! transient at its edges. Only the middle samples of each slot are kept.
//!
//! ```text
//!  0          32      40      48      56      64
//!  | reference |  ant1 |  ant2 |  ant3 |  ant1 | ...
//!              |  xx....xx  (x = discarded edge sample)
//! ```

use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aoa::SubArray;
use crate::dataset_io::{CtePacket, IqPair};

/// Full-scale magnitude of a raw sample.
pub const FULL_SCALE: f64 = 32768.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IqError {
    #[error("packet {idx} is incomplete")]
    IncompletePacket { idx: u64 },
    #[error("invalid CTE layout: {0}")]
    InvalidLayout(String),
    #[error("{len} samples hold no complete switching round")]
    TooShort { len: usize },
    #[error("zero-magnitude sample in slot (antenna {antenna}, round {round})")]
    ZeroMagnitudeSample { antenna: usize, round: usize },
}

/// Timing of the CTE as sampled by the receiver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CteLayout {
    pub sample_rate: f64,
    /// Not captured; kept for documentation and validation.
    pub guard_us: u32,
    pub reference_us: u32,
    /// Antenna dwell length; the AoA hardware only supports 2 µs.
    pub slot_us: u32,
    pub antennas_per_array: usize,
    /// Antenna order within one switching round (0-based ids).
    pub switch_pattern: Vec<usize>,
    /// Samples kept from the middle of each slot.
    pub retained: usize,
    /// Shift of the slot grid relative to the end of the reference period, samples.
    pub boundary_offset: isize,
}

impl Default for CteLayout {
    fn default() -> Self {
        Self {
            sample_rate: 4.0e6,
            guard_us: 4,
            reference_us: 8,
            slot_us: 2,
            antennas_per_array: 3,
            switch_pattern: vec![0, 1, 2],
            retained: 4,
            boundary_offset: 0,
        }
    }
}

impl CteLayout {
    pub fn samples_per_us(&self) -> usize {
        (self.sample_rate / 1.0e6).round() as usize
    }

    pub fn reference_len(&self) -> usize {
        self.reference_us as usize * self.samples_per_us()
    }

    pub fn slot_len(&self) -> usize {
        self.slot_us as usize * self.samples_per_us()
    }

    /// Index of the first retained sample within a slot.
    pub fn trim(&self) -> usize {
        (self.slot_len() - self.retained) / 2
    }

    /// Samples per full switching round.
    pub fn round_len(&self) -> usize {
        self.slot_len() * self.antennas_per_array
    }

    pub fn validate(&self) -> Result<(), IqError> {
        let bad = |m: &str| Err(IqError::InvalidLayout(m.to_string()));
        if !(self.sample_rate > 0.0) || (self.sample_rate / 1.0e6).fract() != 0.0 {
            return bad("sample rate must be a positive whole number of MHz");
        }
        if !matches!(self.slot_us, 1 | 2) {
            return bad("slot length must be 1 or 2 µs");
        }
        if self.antennas_per_array < 2 {
            return bad("need at least two antennas");
        }
        let mut seen = self.switch_pattern.clone();
        seen.sort_unstable();
        if seen != (0..self.antennas_per_array).collect::<Vec<_>>() {
            return bad("switch pattern must visit each antenna exactly once");
        }
        if self.retained == 0 || self.retained > self.slot_len() {
            return bad("retained samples must lie within one slot");
        }
        if self.reference_len() as isize + self.boundary_offset < 0 {
            return bad("boundary offset moves the slot grid before sample 0");
        }
        Ok(())
    }
}

/// Retained samples of one antenna dwell.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotSamples {
    pub antenna: usize,
    pub round: usize,
    /// Stream index of the first retained sample.
    pub start: usize,
    pub samples: Vec<Complex64>,
}

/// A CTE split into its reference period and per-antenna slots.
#[derive(Clone, Debug, PartialEq)]
pub struct SlottedCte {
    pub idx: u64,
    pub sub_array: SubArray,
    pub channel: u8,
    pub sample_rate: f64,
    pub reference: Vec<Complex64>,
    /// `per_antenna[a][r]` is antenna `a` in switching round `r`.
    pub per_antenna: Vec<Vec<SlotSamples>>,
    /// Complete passes through the switching cycle.
    pub rounds: usize,
    /// Samples kept per slot.
    pub retained: usize,
}

impl SlottedCte {
    pub fn antennas(&self) -> usize {
        self.per_antenna.len()
    }

    pub fn time_of(&self, index: f64) -> f64 {
        index / self.sample_rate
    }
}

pub fn to_complex(samples: &[IqPair]) -> Vec<Complex64> {
    samples
        .iter()
        .map(|s| Complex64::new(s.i as f64, s.q as f64))
        .collect()
}

/// Slots a complete reassembled packet. The sub-array is taken from the
/// packet index parity (even → sub-array 1).
pub fn slot_filter(packet: &CtePacket, layout: &CteLayout) -> Result<SlottedCte, IqError> {
    if !packet.complete {
        return Err(IqError::IncompletePacket { idx: packet.idx });
    }
    slot_samples(
        &to_complex(&packet.samples),
        packet.idx,
        SubArray::from_idx(packet.idx),
        packet.channel,
        layout,
    )
}

/// Slots an arbitrary-length complex stream that starts at the reference period.
/// Slots of an incomplete trailing round are dropped.
pub fn slot_samples(
    stream: &[Complex64],
    idx: u64,
    sub_array: SubArray,
    channel: u8,
    layout: &CteLayout,
) -> Result<SlottedCte, IqError> {
    layout.validate()?;
    let ref_len = layout.reference_len();
    let body = (ref_len as isize + layout.boundary_offset) as usize;
    let n = layout.antennas_per_array;
    let slot_len = layout.slot_len();
    if stream.len() < ref_len || stream.len() < body {
        return Err(IqError::TooShort { len: stream.len() });
    }
    let slots = (stream.len() - body) / slot_len;
    let rounds = slots / n;
    if rounds == 0 {
        return Err(IqError::TooShort { len: stream.len() });
    }

    let mut per_antenna: Vec<Vec<SlotSamples>> = vec![Vec::with_capacity(rounds); n];
    let trim = layout.trim();
    for k in 0..rounds * n {
        let antenna = layout.switch_pattern[k % n];
        let start = body + k * slot_len + trim;
        per_antenna[antenna].push(SlotSamples {
            antenna,
            round: k / n,
            start,
            samples: stream[start..start + layout.retained].to_vec(),
        });
    }
    Ok(SlottedCte {
        idx,
        sub_array,
        channel,
        sample_rate: layout.sample_rate,
        reference: stream[..ref_len].to_vec(),
        per_antenna,
        rounds,
        retained: layout.retained,
    })
}

/// Wraps a phase into (-π, π].
pub fn wrap_phase(x: f64) -> f64 {
    let r = (x + PI).rem_euclid(2.0 * PI) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

/// Adds the multiple of 2π that brings `x` nearest to `reference`.
pub fn unwrap_near(x: f64, reference: f64) -> f64 {
    reference + wrap_phase(x - reference)
}

/// Phase of one slot, referred to the slot centre.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlotPhase {
    pub round: usize,
    /// Seconds from the first reference sample to the centre of the retained samples.
    pub time: f64,
    pub phase: f64,
}

/// Per-antenna phase sequences of one CTE, unwrapped along time.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSeries {
    pub sample_rate: f64,
    /// One phase per reference sample.
    pub reference: Vec<f64>,
    pub per_antenna: Vec<Vec<SlotPhase>>,
}

impl PhaseSeries {
    /// Mean per-sample phase advance over the reference period, in rad/s.
    pub fn reference_cfo(&self) -> f64 {
        let n = self.reference.len();
        if n < 2 {
            return 0.0;
        }
        (self.reference[n - 1] - self.reference[0]) / (n - 1) as f64 * self.sample_rate
    }
}

fn sample_phase(s: Complex64, antenna: usize, round: usize) -> Result<f64, IqError> {
    if s.norm() < 1e-12 * FULL_SCALE {
        return Err(IqError::ZeroMagnitudeSample { antenna, round });
    }
    Ok(s.im.atan2(s.re))
}

fn unwrap_sequence(phases: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for p in phases {
        let next = match out.last() {
            Some(&prev) => unwrap_near(p, prev),
            None => p,
        };
        out.push(next);
    }
    out
}

/// Converts retained IQ samples into phases: each slot's samples are
/// unwrapped and averaged, then every antenna's slot phases are unwrapped
/// across rounds.
pub fn extract_phases(slotted: &SlottedCte) -> Result<PhaseSeries, IqError> {
    let reference = unwrap_sequence(
        slotted
            .reference
            .iter()
            .map(|&s| sample_phase(s, 0, 0))
            .collect::<Result<Vec<_>, _>>()?,
    );

    let mut per_antenna = Vec::with_capacity(slotted.antennas());
    for slots in &slotted.per_antenna {
        let mut series = Vec::with_capacity(slots.len());
        let mut previous: Option<f64> = None;
        for slot in slots {
            let raw = slot
                .samples
                .iter()
                .map(|&s| sample_phase(s, slot.antenna, slot.round))
                .collect::<Result<Vec<_>, _>>()?;
            let within = unwrap_sequence(raw);
            let mean = within.iter().sum::<f64>() / within.len() as f64;
            let phase = match previous {
                Some(p) => unwrap_near(mean, p),
                None => wrap_phase(mean),
            };
            previous = Some(phase);
            let centre = slot.start as f64 + (slot.samples.len() as f64 - 1.0) / 2.0;
            series.push(SlotPhase {
                round: slot.round,
                time: slotted.time_of(centre),
                phase,
            });
        }
        per_antenna.push(series);
    }
    Ok(PhaseSeries {
        sample_rate: slotted.sample_rate,
        reference,
        per_antenna,
    })
}

/// Debug dump, one CSV row per slot: `slot,antenna,round,time_us,phase`.
pub fn write_phase_csv<W: Write>(series: &PhaseSeries, antennas_in_order: &[usize], mut out: W) -> io::Result<()> {
    writeln!(out, "slot,antenna,round,time_us,phase")?;
    let rounds = series.per_antenna.first().map_or(0, Vec::len);
    let mut slot = 0;
    for r in 0..rounds {
        for &a in antennas_in_order {
            let p = series.per_antenna[a][r];
            writeln!(out, "{slot},{},{},{:.3},{:.9}", a + 1, p.round, p.time * 1e6, p.phase)?;
            slot += 1;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(len: usize, amp: f64, phase_of: impl Fn(usize) -> f64) -> Vec<Complex64> {
        (0..len).map(|s| Complex64::from_polar(amp, phase_of(s))).collect()
    }

    fn packet_of(samples: Vec<IqPair>) -> CtePacket {
        CtePacket::complete(4, 0.0, -60, 17, samples)
    }

    #[test]
    fn reference_and_slot_counts() {
        let p = packet_of(vec![IqPair::new(1000, 0); 511]);
        let s = slot_filter(&p, &CteLayout::default()).unwrap();
        assert_eq!(s.reference.len(), 32);
        // 479 samples after the reference: 59 slots, 19 full rounds of 3
        assert_eq!((511 - 32) / 8, 59);
        assert_eq!(s.rounds, 19);
        assert_eq!(s.antennas(), 3);
        for a in 0..3 {
            assert_eq!(s.per_antenna[a].len(), 19);
            assert!(s.per_antenna[a].iter().all(|slot| slot.samples.len() == 4));
        }
        assert!(s.retained * s.rounds * s.antennas() <= 479);
        assert_eq!(s.sub_array, SubArray::One);
        // first slot retains samples 34..38
        assert_eq!(s.per_antenna[0][0].start, 34);
        assert_eq!(s.per_antenna[1][0].start, 42);
        assert_eq!(s.per_antenna[0][1].start, 58);
    }

    #[test]
    fn retained_samples_avoid_slot_edges() {
        let s = slot_filter(&packet_of(vec![IqPair::new(1, 1); 511]), &CteLayout::default()).unwrap();
        for slots in &s.per_antenna {
            for slot in slots {
                let pos = (slot.start - 32) % 8;
                assert_eq!(pos, 2);
                assert!(pos + slot.samples.len() <= 6);
            }
        }
    }

    #[test]
    fn incomplete_rejected() {
        let mut p = packet_of(vec![IqPair::new(1, 1); 511]);
        p.complete = false;
        assert_eq!(slot_filter(&p, &CteLayout::default()).unwrap_err(), IqError::IncompletePacket { idx: 4 });
    }

    #[test]
    fn odd_idx_uses_second_sub_array() {
        let mut p = packet_of(vec![IqPair::new(1, 1); 511]);
        p.idx = 5;
        assert_eq!(slot_filter(&p, &CteLayout::default()).unwrap().sub_array, SubArray::Two);
    }

    #[test]
    fn layout_validation() {
        let mut l = CteLayout::default();
        l.slot_us = 3;
        assert!(l.validate().is_err());
        let mut l = CteLayout::default();
        l.switch_pattern = vec![0, 0, 2];
        assert!(l.validate().is_err());
        let mut l = CteLayout::default();
        l.retained = 9;
        assert!(l.validate().is_err());
        let l = CteLayout {
            slot_us: 1,
            ..CteLayout::default()
        };
        assert!(l.validate().is_ok());
        assert_eq!(l.trim(), 0);
    }

    #[test]
    fn too_short_stream() {
        let s = vec![Complex64::new(1.0, 0.0); 32 + 16];
        assert!(matches!(
            slot_samples(&s, 0, SubArray::One, 0, &CteLayout::default()),
            Err(IqError::TooShort { .. })
        ));
    }

    #[test]
    fn constant_slot_phases() {
        let p = packet_of(vec![IqPair::new(1000, 0); 511]);
        let ph = extract_phases(&slot_filter(&p, &CteLayout::default()).unwrap()).unwrap();
        assert!(ph.per_antenna.iter().flatten().all(|s| s.phase == 0.0));

        let p = packet_of(vec![IqPair::new(0, -1000); 511]);
        let ph = extract_phases(&slot_filter(&p, &CteLayout::default()).unwrap()).unwrap();
        for s in ph.per_antenna.iter().flatten() {
            assert!((s.phase + PI / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_sample_rejected() {
        let mut samples = vec![IqPair::new(1000, 0); 511];
        samples[43] = IqPair::new(0, 0);
        let s = slot_filter(&packet_of(samples), &CteLayout::default()).unwrap();
        assert_eq!(
            extract_phases(&s).unwrap_err(),
            IqError::ZeroMagnitudeSample { antenna: 1, round: 0 }
        );
    }

    #[test]
    fn phase_steps_at_slot_boundaries() {
        // Antenna-dependent phase applied exactly over each slot; edge samples
        // are corrupted to emulate switching transients.
        let layout = CteLayout::default();
        let steps = [0.3, -1.1, 2.9];
        let stream = tone(511, 5000.0, |s| {
            if s < 32 {
                return 0.7;
            }
            let k = (s - 32) / 8;
            let within = (s - 32) % 8;
            if within < 2 || within >= 6 {
                return 1.234 * within as f64;
            }
            steps[k % 3]
        });
        let slotted = slot_samples(&stream, 0, SubArray::One, 17, &layout).unwrap();
        let ph = extract_phases(&slotted).unwrap();
        for (a, series) in ph.per_antenna.iter().enumerate() {
            for s in series {
                assert!((s.phase - steps[a]).abs() < 1e-9, "antenna {a}: {}", s.phase);
            }
        }
    }

    #[test]
    fn reference_tracks_cfo_ramp() {
        let cfo = 10e3;
        let step = 2.0 * PI * cfo / 4e6;
        let stream = tone(511, 20000.0, |s| 3.0 + step * s as f64);
        let slotted = slot_samples(&stream, 0, SubArray::One, 17, &CteLayout::default()).unwrap();
        let ph = extract_phases(&slotted).unwrap();
        for w in ph.reference.windows(2) {
            assert!((w[1] - w[0] - 0.015707963267948967).abs() < 1e-6);
        }
        assert!((ph.reference_cfo() - 2.0 * PI * cfo).abs() < 1e-6);
        // slot phases sit on the same ramp, evaluated at the slot centre
        let s = ph.per_antenna[0][3];
        assert!((s.phase - unwrap_near(3.0 + step * s.time * 4e6, s.phase)).abs() < 1e-9);
    }

    #[test]
    fn zero_cfo_zero_offset_all_phases_equal() {
        let stream = tone(511, 1.0, |_| -2.5);
        let slotted = slot_samples(&stream, 0, SubArray::Two, 0, &CteLayout::default()).unwrap();
        let ph = extract_phases(&slotted).unwrap();
        for p in ph.reference.iter().chain(ph.per_antenna.iter().flatten().map(|s| &s.phase)) {
            assert!(wrap_phase(p + 2.5).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_slotting() {
        let stream = tone(511, 100.0, |s| (s as f64).sin());
        let a = slot_samples(&stream, 0, SubArray::One, 3, &CteLayout::default()).unwrap();
        let b = slot_samples(&stream, 0, SubArray::One, 3, &CteLayout::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn boundary_offset_shifts_grid() {
        let layout = CteLayout {
            boundary_offset: 1,
            ..CteLayout::default()
        };
        let stream = tone(511, 1.0, |_| 0.0);
        let s = slot_samples(&stream, 0, SubArray::One, 0, &layout).unwrap();
        assert_eq!(s.per_antenna[0][0].start, 35);
    }

    #[test]
    fn wrap_helpers() {
        assert_eq!(wrap_phase(PI), PI);
        assert_eq!(wrap_phase(-PI), PI);
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((unwrap_near(-3.0, 3.0) - (2.0 * PI - 3.0)).abs() < 1e-12);
    }

    #[test]
    fn csv_dump() {
        let stream = tone(32 + 24, 1.0, |_| 0.0);
        let s = slot_samples(&stream, 0, SubArray::One, 0, &CteLayout::default()).unwrap();
        let mut out = Vec::new();
        write_phase_csv(&extract_phases(&s).unwrap(), &[0, 1, 2], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().nth(2).unwrap().starts_with("1,2,0,"));
    }
}
