//! Phase-difference-of-arrival estimators.

use num_complex::Complex64;

use super::{AngleAdjust, AoaError, CalibrationTable, UlaEstimate};
use crate::aoa::ArrayGeometry;
use crate::iq::{extract_phases, wrap_phase, PhaseSeries, SlottedCte};

/// Circular mean of a set of phases.
pub(crate) fn circular_mean(phases: impl IntoIterator<Item = f64>) -> f64 {
    let sum: Complex64 = phases.into_iter().map(|p| Complex64::from_polar(1.0, p)).sum();
    sum.arg()
}

/// Inverts a per-element phase step into θ_ULA degrees, clamping the cosine.
pub(crate) fn invert_phase_step(step: f64, scale: f64) -> (f64, bool) {
    let c = step / scale;
    let clamped = c.abs() > 1.0;
    (c.clamp(-1.0, 1.0).acos().to_degrees(), clamped)
}

/// Carrier offset from same-antenna phase advance between consecutive
/// switching rounds, rad/s. Needs at least two rounds.
pub fn round_to_round_cfo(series: &PhaseSeries) -> Result<f64, AoaError> {
    let mut advances = Vec::new();
    let mut period = 0.0;
    let mut periods = 0usize;
    for slots in &series.per_antenna {
        for w in slots.windows(2) {
            advances.push(wrap_phase(w[1].phase - w[0].phase));
            period += w[1].time - w[0].time;
            periods += 1;
        }
    }
    if periods == 0 {
        return Err(AoaError::InsufficientRounds {
            rounds: series.per_antenna.first().map_or(0, Vec::len),
        });
    }
    Ok(circular_mean(advances) / (period / periods as f64))
}

/// Mean CFO-corrected phase difference `antenna b − antenna a` over rounds.
fn pair_difference(series: &PhaseSeries, cfo: f64, a: usize, b: usize) -> f64 {
    let pa = &series.per_antenna[a];
    let pb = &series.per_antenna[b];
    circular_mean(
        pa.iter()
            .zip(pb)
            .map(|(sa, sb)| wrap_phase((sb.phase - cfo * sb.time) - (sa.phase - cfo * sa.time))),
    )
}

/// Naive PDoA: CFO from the reference-period phase slope, then the mean
/// adjacent-element phase difference inverted through arccos.
pub fn pdoa_naive(slotted: &SlottedCte, geom: &ArrayGeometry) -> Result<UlaEstimate, AoaError> {
    let series = extract_phases(slotted)?;
    let cfo = series.reference_cfo();
    let n = series.per_antenna.len();
    let scale = geom.phase_scale(slotted.channel)?;

    let mut diffs = Vec::new();
    for a in 0..n - 1 {
        let (pa, pb) = (&series.per_antenna[a], &series.per_antenna[a + 1]);
        for (sa, sb) in pa.iter().zip(pb) {
            diffs.push(wrap_phase((sb.phase - cfo * sb.time) - (sa.phase - cfo * sa.time)));
        }
    }
    let (theta, clamped) = invert_phase_step(circular_mean(diffs), scale);
    Ok(UlaEstimate::new(theta, clamped))
}

/// Antenna pairs used by the TI-style estimator: adjacent pairs plus the
/// outermost pair, with their spacing in element units.
pub fn ti_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = (0..n - 1).map(|a| (a, a + 1)).collect();
    if n > 2 {
        pairs.push((0, n - 1));
    }
    pairs
}

/// TI-style PDoA.
///
/// The carrier offset comes from each antenna's phase change between
/// consecutive switching rounds, so no reference period is needed.
/// Calibration offsets are removed first. Each pair (1,2), (2,3), (1,3) gives
/// its own angle; the wide pair is unwrapped against the sum of the adjacent
/// pairs and its phase divided by its spacing. The per-pair angles are
/// averaged and passed through `adjust`.
pub fn pdoa_ti(
    slotted: &SlottedCte,
    geom: &ArrayGeometry,
    calib: &CalibrationTable,
    adjust: &AngleAdjust,
) -> Result<UlaEstimate, AoaError> {
    if slotted.rounds < 2 {
        return Err(AoaError::InsufficientRounds {
            rounds: slotted.rounds,
        });
    }
    let series = extract_phases(slotted)?;
    let n = series.per_antenna.len();
    let offsets: Vec<f64> = (0..n)
        .map(|a| calib.offset(slotted.sub_array, a, slotted.channel))
        .collect();
    let calibrated = PhaseSeries {
        per_antenna: series
            .per_antenna
            .iter()
            .zip(&offsets)
            .map(|(slots, off)| {
                slots
                    .iter()
                    .map(|s| crate::iq::SlotPhase {
                        phase: s.phase - off,
                        ..*s
                    })
                    .collect()
            })
            .collect(),
        ..series
    };
    let cfo = round_to_round_cfo(&calibrated)?;
    let scale = geom.phase_scale(slotted.channel)?;

    let adjacent: Vec<f64> = (0..n - 1)
        .map(|a| pair_difference(&calibrated, cfo, a, a + 1))
        .collect();
    let mut clamped = false;
    let mut angles = Vec::with_capacity(n);
    for (a, b) in ti_pairs(n) {
        let span = (b - a) as f64;
        let mut diff = if b == a + 1 {
            adjacent[a]
        } else {
            let expected: f64 = adjacent[a..b].iter().sum();
            let measured = pair_difference(&calibrated, cfo, a, b);
            expected + wrap_phase(measured - expected)
        };
        diff /= span;
        let (theta, c) = invert_phase_step(diff, scale);
        clamped |= c;
        angles.push(theta);
    }
    let theta = angles.iter().sum::<f64>() / angles.len() as f64;
    Ok(UlaEstimate::new(adjust.apply(theta), clamped))
}
