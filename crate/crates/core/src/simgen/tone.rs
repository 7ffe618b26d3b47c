//! Synthetic CTE tone as seen by one sub-array.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::aoa::{AoaError, ArrayGeometry};
use crate::dataset_io::{IqPair, MAX_CTE_SAMPLES};
use crate::iq::CteLayout;

/// Phase noise standard deviation (radians) for a per-sample SNR in dB.
pub fn snr_to_phase_sigma(snr_db: f64) -> f64 {
    1.0 / (2.0 * 10f64.powf(snr_db / 10.0)).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToneParams {
    /// Degrees, [0, 180].
    pub theta_ula: f64,
    pub channel: u8,
    pub cfo_hz: f64,
    /// Common carrier phase, radians.
    pub phase0: f64,
    /// White phase noise per sample, radians.
    pub phase_sigma: f64,
    /// Sample magnitude in raw units.
    pub amplitude: f64,
    /// Per-antenna phase offsets added by the "hardware", radians.
    pub antenna_offsets: Vec<f64>,
    /// Corrupt the samples at slot edges the way a switching transient does.
    pub transients: bool,
    pub len: usize,
}

impl Default for ToneParams {
    fn default() -> Self {
        Self {
            theta_ula: 90.0,
            channel: 17,
            cfo_hz: 0.0,
            phase0: 0.0,
            phase_sigma: 0.0,
            amplitude: 2048.0,
            antenna_offsets: Vec::new(),
            transients: false,
            len: MAX_CTE_SAMPLES,
        }
    }
}

/// Antenna active at each sample index, with whether the sample sits in a
/// switching transient.
pub fn antenna_schedule(layout: &CteLayout, len: usize) -> Vec<(usize, bool)> {
    let body = (layout.reference_len() as isize + layout.boundary_offset).max(0) as usize;
    let slot = layout.slot_len();
    let trim = layout.trim();
    let reference_antenna = layout.switch_pattern.first().copied().unwrap_or(0);
    (0..len)
        .map(|j| {
            if j < body {
                (reference_antenna, false)
            } else {
                let k = (j - body) / slot;
                let pos = (j - body) % slot;
                let antenna = layout.switch_pattern[k % layout.switch_pattern.len()];
                (antenna, pos < trim || pos >= slot - trim)
            }
        })
        .collect()
}

/// Complex baseband samples of one CTE.
pub fn synth_stream<R: Rng + ?Sized>(
    params: &ToneParams,
    geom: &ArrayGeometry,
    layout: &CteLayout,
    rng: &mut R,
) -> Result<Vec<Complex64>, AoaError> {
    let step = geom.phase_scale(params.channel)? * params.theta_ula.to_radians().cos();
    let noise = Normal::new(0.0, params.phase_sigma.max(0.0)).expect("finite sigma");
    let schedule = antenna_schedule(layout, params.len);
    Ok(schedule
        .iter()
        .enumerate()
        .map(|(j, &(antenna, transient))| {
            let t = j as f64 / layout.sample_rate;
            let offset = params.antenna_offsets.get(antenna).copied().unwrap_or(0.0);
            let mut phase = params.phase0 + 2.0 * PI * params.cfo_hz * t + antenna as f64 * step + offset;
            if params.phase_sigma > 0.0 {
                phase += noise.sample(rng);
            }
            let mut amp = params.amplitude;
            if params.transients && transient {
                phase += rng.random_range(0.5..1.5) * PI;
                amp *= rng.random_range(0.2..0.6);
            }
            Complex64::from_polar(amp, phase)
        })
        .collect())
}

/// Rounds to the 16-bit sample grid.
pub fn quantize(stream: &[Complex64]) -> Vec<IqPair> {
    let q = |v: f64| v.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
    stream
        .iter()
        .map(|s| IqPair {
            i: q(s.re),
            q: q(s.im),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn snr_mapping() {
        assert!((snr_to_phase_sigma(10.0) - 0.22360679774997896).abs() < 1e-15);
        assert!((snr_to_phase_sigma(40.0) - 0.007071067811865475).abs() < 1e-15);
    }

    #[test]
    fn schedule_follows_layout() {
        let s = antenna_schedule(&CteLayout::default(), MAX_CTE_SAMPLES);
        assert!(s[..32].iter().all(|&(a, t)| a == 0 && !t));
        assert_eq!(s[32], (0, true));
        assert_eq!(s[34], (0, false));
        assert_eq!(s[38], (0, true));
        assert_eq!(s[42], (1, false));
        assert_eq!(s[58], (0, false));
    }

    #[test]
    fn phase_differences_within_physical_bound() {
        let geom = ArrayGeometry::default();
        let layout = CteLayout::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for theta in [0.0, 30.0, 90.0, 150.0, 180.0] {
            for ch in [0u8, 17, 36] {
                let p = ToneParams {
                    theta_ula: theta,
                    channel: ch,
                    ..ToneParams::default()
                };
                let s = synth_stream(&p, &geom, &layout, &mut rng).unwrap();
                let dphi = (s[42] / s[34]).arg();
                let bound = geom.phase_scale(ch).unwrap();
                // the wrapped difference can only reach the bound when it exceeds π
                assert!(dphi.abs() <= bound.min(PI) + 1e-9);
            }
        }
    }
}
