//! MUSIC for a single source on one ULA.
//!
//! Each complete switching round is one snapshot: the CFO-derotated mean of
//! every antenna's retained samples. The sample covariance is
//! eigendecomposed, the dominant eigenvector is taken as the signal subspace
//! and the rest as noise, and the pseudo-spectrum
//! `1 / ‖E_nᴴ a(θ)‖²` is searched over 0..=180° with parabolic refinement.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{pdoa::round_to_round_cfo, AoaError, ArrayGeometry, UlaEstimate};
use crate::iq::{extract_phases, SlottedCte};

/// Relative eigenvalue spread below which the covariance is treated as isotropic.
pub const FLAT_TOLERANCE: f64 = 1e-6;

/// Builds one snapshot per switching round, derotated by `cfo` (rad/s).
pub fn snapshots(slotted: &SlottedCte, cfo: f64) -> Vec<DVector<Complex64>> {
    let n = slotted.antennas();
    (0..slotted.rounds)
        .map(|r| {
            DVector::from_iterator(
                n,
                slotted.per_antenna.iter().map(|slots| {
                    let slot = &slots[r];
                    let sum: Complex64 = slot
                        .samples
                        .iter()
                        .enumerate()
                        .map(|(k, s)| {
                            let t = slotted.time_of((slot.start + k) as f64);
                            s * Complex64::from_polar(1.0, -cfo * t)
                        })
                        .sum();
                    sum / slot.samples.len() as f64
                }),
            )
        })
        .collect()
}

/// Sample covariance `1/M Σ x xᴴ`.
pub fn sample_covariance(snaps: &[DVector<Complex64>]) -> DMatrix<Complex64> {
    let n = snaps.first().map_or(0, |s| s.len());
    let mut r = DMatrix::<Complex64>::zeros(n, n);
    for x in snaps {
        r += x * x.adjoint();
    }
    r / Complex64::from(snaps.len().max(1) as f64)
}

/// Steering vector for a ULA with phase step `scale · cos θ` per element.
pub fn steering(n: usize, scale: f64, theta_deg: f64) -> DVector<Complex64> {
    let step = scale * theta_deg.to_radians().cos();
    DVector::from_iterator(n, (0..n).map(|k| Complex64::from_polar(1.0, k as f64 * step)))
}

/// Pseudo-spectrum sampled on `0, grid, 2·grid, …, 180` degrees.
pub fn music_spectrum(
    cov: &DMatrix<Complex64>,
    scale: f64,
    grid_deg: f64,
) -> Result<Vec<(f64, f64)>, AoaError> {
    let n = cov.nrows();
    if n < 2 || cov.ncols() != n {
        return Err(AoaError::RankDeficient);
    }
    if !(grid_deg > 0.0 && grid_deg <= 90.0) {
        return Err(AoaError::InvalidGeometry(format!("grid {grid_deg}° out of range")));
    }
    let eig = cov.clone().symmetric_eigen();
    let values = &eig.eigenvalues;
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min < -1e-9 * max {
        return Err(AoaError::RankDeficient);
    }
    if max - min <= FLAT_TOLERANCE * max {
        return Err(AoaError::NoPeak);
    }
    let signal = (0..n)
        .max_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    let noise: Vec<usize> = (0..n).filter(|&k| k != signal).collect();
    let noise_basis = eig.eigenvectors.select_columns(&noise);

    let steps = (180.0 / grid_deg).round() as usize;
    let spectrum: Vec<(f64, f64)> = (0..=steps)
        .map(|i| {
            let theta = (i as f64 * grid_deg).min(180.0);
            let a = steering(n, scale, theta);
            let proj = noise_basis.adjoint() * a;
            let den = proj.norm_squared().max(1e-30);
            (theta, 1.0 / den)
        })
        .collect();

    let hi = spectrum.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let lo = spectrum.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    if hi - lo <= FLAT_TOLERANCE * hi {
        return Err(AoaError::NoPeak);
    }
    Ok(spectrum)
}

/// Peak of a sampled spectrum, refined by a parabola through the peak and
/// its neighbours in dB.
pub fn refine_peak(spectrum: &[(f64, f64)], grid_deg: f64) -> f64 {
    let (k, _) = spectrum
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("non-empty spectrum");
    let theta = spectrum[k].0;
    if k == 0 || k + 1 == spectrum.len() {
        return theta;
    }
    let db = |i: usize| 10.0 * spectrum[i].1.log10();
    let (l, c, r) = (db(k - 1), db(k), db(k + 1));
    let curvature = l - 2.0 * c + r;
    if !(curvature < 0.0) {
        return theta;
    }
    let shift = (0.5 * (l - r) / curvature).clamp(-0.5, 0.5);
    (theta + shift * grid_deg).clamp(0.0, 180.0)
}

/// Single-source MUSIC over the ULA frame.
pub fn music(slotted: &SlottedCte, geom: &ArrayGeometry, grid_deg: f64) -> Result<UlaEstimate, AoaError> {
    let n = slotted.antennas();
    if slotted.rounds < n.max(2) {
        return Err(AoaError::RankDeficient);
    }
    let series = extract_phases(slotted)?;
    let cfo = round_to_round_cfo(&series)?;
    let cov = sample_covariance(&snapshots(slotted, cfo));
    let scale = geom.phase_scale(slotted.channel)?;
    let spectrum = music_spectrum(&cov, scale, grid_deg)?;
    Ok(UlaEstimate::new(refine_peak(&spectrum, grid_deg), false))
}
