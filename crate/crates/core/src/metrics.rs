//! Evaluation metrics for angle estimates.
//!
//! Angle errors are always wrapped into (-180, 180] first, since a ±135°
//! sweep otherwise reports near-360° errors at the seam.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aoa::{moving_average, SPEED_OF_LIGHT};
use crate::labeling::wrap_degrees;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("length mismatch: {gt} ground-truth values vs {est} estimates")]
    LengthMismatch { gt: usize, est: usize },
    #[error("no samples")]
    Empty,
    #[error("no ground-truth angle inside [{lo}, {hi}]")]
    EmptySubset { lo: f64, hi: f64 },
    #[error("CRLB is singular at θ = {theta}°")]
    SingularAngle { theta: f64 },
    #[error("invalid CRLB parameter {0}")]
    InvalidParameter(&'static str),
    #[error("expected angle error must be below 90°, got {0}")]
    AngleTooLarge(f64),
}

/// Wrapped signed error `est − gt`.
pub fn angle_errors(gt: &[f64], est: &[f64]) -> Result<Vec<f64>, MetricsError> {
    if gt.len() != est.len() {
        return Err(MetricsError::LengthMismatch {
            gt: gt.len(),
            est: est.len(),
        });
    }
    if gt.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(gt.iter().zip(est).map(|(g, e)| wrap_degrees(e - g)).collect())
}

pub fn mae(gt: &[f64], est: &[f64]) -> Result<f64, MetricsError> {
    let e = angle_errors(gt, est)?;
    Ok(e.iter().map(|x| x.abs()).sum::<f64>() / e.len() as f64)
}

pub fn rmse(gt: &[f64], est: &[f64]) -> Result<f64, MetricsError> {
    let e = angle_errors(gt, est)?;
    Ok((e.iter().map(|x| x * x).sum::<f64>() / e.len() as f64).sqrt())
}

/// MAE over the pairs whose ground truth lies in `[lo, hi]`; also returns the subset size.
pub fn range_mae(gt: &[f64], est: &[f64], lo: f64, hi: f64) -> Result<(f64, usize), MetricsError> {
    if gt.len() != est.len() {
        return Err(MetricsError::LengthMismatch {
            gt: gt.len(),
            est: est.len(),
        });
    }
    let (g, e): (Vec<f64>, Vec<f64>) = gt
        .iter()
        .zip(est)
        .filter(|(g, _)| **g >= lo && **g <= hi)
        .map(|(g, e)| (*g, *e))
        .unzip();
    if g.is_empty() {
        return Err(MetricsError::EmptySubset { lo, hi });
    }
    Ok((mae(&g, &e)?, g.len()))
}

/// MAE of the window-`window` moving average of `est` against `gt`.
pub fn moving_avg_mae(gt: &[f64], est: &[f64], window: usize) -> Result<f64, MetricsError> {
    if window == 0 {
        return Err(MetricsError::InvalidParameter("window"));
    }
    mae(gt, &moving_average(est, window))
}

/// Empirical CDF as (value, fraction ≤ value) pairs, one per distinct value.
pub fn cdf(values: &[f64]) -> Result<Vec<(f64, f64)>, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for (i, v) in sorted.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *v => last.1 = frac,
            _ => out.push((*v, frac)),
        }
    }
    Ok(out)
}

/// Inputs of the PDoA Cramér-Rao lower bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrlbParams {
    /// Samples per slot.
    pub p: f64,
    /// Switching repetitions.
    pub m: f64,
    /// Elements.
    pub n: f64,
    /// Phase noise standard deviation, radians.
    pub sigma: f64,
    /// Element spacing, meters.
    pub d: f64,
    /// Carrier, Hz.
    pub f_c: f64,
    pub c: f64,
    /// Degrees.
    pub theta: f64,
}

impl Default for CrlbParams {
    fn default() -> Self {
        Self {
            p: 4.0,
            m: 19.0,
            n: 3.0,
            sigma: 0.1,
            d: 0.0614,
            f_c: 2.44e9,
            c: SPEED_OF_LIGHT,
            theta: 90.0,
        }
    }
}

/// Lower bound on the angle RMSE, degrees:
/// `sqrt(3 / (2 p m n (n−1)(2n−1))) · σ c / (π d f_c sin θ)`.
pub fn crlb(params: &CrlbParams) -> Result<f64, MetricsError> {
    let CrlbParams { p, m, n, sigma, d, f_c, c, theta } = *params;
    for (v, name) in [(p, "p"), (m, "m"), (sigma, "sigma"), (d, "d"), (f_c, "f_c"), (c, "c")] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(MetricsError::InvalidParameter(name));
        }
    }
    if !(n >= 2.0) {
        return Err(MetricsError::InvalidParameter("n"));
    }
    if !(theta > 0.0 && theta < 180.0) {
        return Err(MetricsError::SingularAngle { theta });
    }
    let sin = theta.to_radians().sin();
    let geometric = (3.0 / (2.0 * p * m * n * (n - 1.0) * (2.0 * n - 1.0))).sqrt();
    Ok((geometric * sigma * c / (std::f64::consts::PI * d * f_c * sin)).to_degrees())
}

/// Expected localization error of a single anchor at `distance`: `d · tan(E[θ_e])`.
pub fn single_anchor_error(distance: f64, expected_angle_error_deg: f64) -> Result<f64, MetricsError> {
    if expected_angle_error_deg.abs() >= 90.0 {
        return Err(MetricsError::AngleTooLarge(expected_angle_error_deg));
    }
    Ok(distance * expected_angle_error_deg.to_radians().tan())
}

pub const RANGE_LO: f64 = -50.0;
pub const RANGE_HI: f64 = 50.0;

/// Summary of one experiment's angle errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub mae: f64,
    /// `None` when no ground truth falls inside the range.
    pub range_mae: Option<f64>,
    pub range_count: usize,
    pub moving_avg_mae: f64,
    pub rmse: f64,
    /// Empirical CDF of absolute errors.
    pub cdf: Vec<(f64, f64)>,
    pub count: usize,
}

impl ErrorReport {
    /// `smoothed` is the moving-averaged version of `est`, or `None` to
    /// compute it here with `window`.
    pub fn compute(gt: &[f64], est: &[f64], smoothed: Option<&[f64]>, window: usize) -> Result<Self, MetricsError> {
        let errors = angle_errors(gt, est)?;
        let (range_mae, range_count) = match range_mae(gt, est, RANGE_LO, RANGE_HI) {
            Ok((v, c)) => (Some(v), c),
            Err(MetricsError::EmptySubset { .. }) => (None, 0),
            Err(e) => return Err(e),
        };
        let moving_avg_mae = match smoothed {
            Some(s) => mae(gt, s)?,
            None => moving_avg_mae(gt, est, window)?,
        };
        let abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
        Ok(Self {
            mae: abs.iter().sum::<f64>() / abs.len() as f64,
            range_mae,
            range_count,
            moving_avg_mae,
            rmse: rmse(gt, est)?,
            cdf: cdf(&abs)?,
            count: gt.len(),
        })
    }
}

/// Writes `error,fraction` rows.
pub fn write_cdf_csv<W: Write>(cdf: &[(f64, f64)], mut out: W) -> io::Result<()> {
    writeln!(out, "error,fraction")?;
    for (e, f) in cdf {
        writeln!(out, "{e},{f}")?;
    }
    Ok(())
}

/// Writes one row per named report: `experiment,mae,range_mae,moving_avg_mae,rmse,count`.
pub fn write_report_csv<'a, W: Write>(
    reports: impl IntoIterator<Item = (&'a str, &'a ErrorReport)>,
    mut out: W,
) -> io::Result<()> {
    writeln!(out, "experiment,mae,range_mae,moving_avg_mae,rmse,count")?;
    for (name, r) in reports {
        let range = r.range_mae.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{name},{},{range},{},{},{}",
            r.mae, r.moving_avg_mae, r.rmse, r.count
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[0.0, 0.0], &[10.0, -10.0]).unwrap(), 10.0);
        assert!((mae(&[179.0], &[-179.0]).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(mae(&[1.0], &[]), Err(MetricsError::LengthMismatch { .. })));
        assert_eq!(mae(&[], &[]), Err(MetricsError::Empty));
    }

    #[test]
    fn range_mae_examples() {
        assert_eq!(range_mae(&[0.0, 100.0], &[5.0, 200.0], -50.0, 50.0).unwrap(), (5.0, 1));
        assert!(matches!(
            range_mae(&[60.0, -100.0], &[0.0, 0.0], -50.0, 50.0),
            Err(MetricsError::EmptySubset { .. })
        ));
    }

    #[test]
    fn range_mae_below_mae_over_seeds() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inner = Normal::new(0.0, 5.0).unwrap();
            let outer = Normal::new(0.0, 30.0).unwrap();
            let gt: Vec<f64> = (0..2000).map(|i| -135.0 + 270.0 * i as f64 / 1999.0).collect();
            let est: Vec<f64> = gt
                .iter()
                .map(|g| {
                    if (-50.0..=50.0).contains(g) {
                        g + inner.sample(&mut rng)
                    } else {
                        g + outer.sample(&mut rng)
                    }
                })
                .collect();
            let (r, _) = range_mae(&gt, &est, -50.0, 50.0).unwrap();
            assert!(r < mae(&gt, &est).unwrap(), "seed {seed}");
        }
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[3.0], &[3.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, 4.0).unwrap();
        let gt = vec![0.0; 100_000];
        let est: Vec<f64> = gt.iter().map(|_| noise.sample(&mut rng)).collect();
        assert!((rmse(&gt, &est).unwrap() / 4.0 - 1.0).abs() < 0.05);
    }

    #[test]
    fn crlb_reference_value() {
        // independent 50-digit evaluation of the closed form
        let v = crlb(&CrlbParams::default()).unwrap();
        assert!((v - 0.09360810881612028).abs() < 1e-12, "{v}");
    }

    #[test]
    fn crlb_scaling() {
        let base = CrlbParams::default();
        let b90 = crlb(&base).unwrap();
        let b30 = crlb(&CrlbParams { theta: 30.0, ..base }).unwrap();
        assert!((b30 / b90 - 2.0).abs() < 1e-12);
        let b2s = crlb(&CrlbParams { sigma: 0.2, ..base }).unwrap();
        assert!((b2s / b90 - 2.0).abs() < 1e-12);
        for theta in [0.0, 180.0] {
            assert!(matches!(
                crlb(&CrlbParams { theta, ..base }),
                Err(MetricsError::SingularAngle { .. })
            ));
        }
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(cdf(&[5.0]).unwrap(), vec![(5.0, 1.0)]);
        let c = cdf(&[4.0, 2.0, 3.0, 1.0]).unwrap();
        assert_eq!(c[1], (2.0, 0.5));
        assert_eq!(c.last().copied(), Some((4.0, 1.0)));
        // ties collapse to the right-continuous value
        assert_eq!(cdf(&[1.0, 1.0, 2.0]).unwrap(), vec![(1.0, 2.0 / 3.0), (2.0, 1.0)]);
    }

    #[test]
    fn cdf_uniform_ks() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let c = cdf(&xs).unwrap();
        let n = xs.len() as f64;
        let ks = c
            .iter()
            .map(|(x, f)| (f - x).abs().max((f - 1.0 / n - x).abs()))
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "{ks}");
    }

    #[test]
    fn single_anchor_examples() {
        assert_eq!(single_anchor_error(3.0, 0.0).unwrap(), 0.0);
        assert!((single_anchor_error(1.0, 45.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((single_anchor_error(3.0, 25.71).unwrap() - 1.444447425498956).abs() < 1e-9);
        assert!(single_anchor_error(1.0, 90.0).is_err());
    }

    #[test]
    fn report_fields() {
        let gt = [0.0, 10.0, 100.0];
        let est = [2.0, 8.0, 110.0];
        let r = ErrorReport::compute(&gt, &est, None, 6).unwrap();
        assert_eq!(r.count, 3);
        assert_eq!(r.range_count, 2);
        assert!((r.range_mae.unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(r.cdf.last().unwrap().1, 1.0);
        let mut buf = Vec::new();
        write_report_csv([("a", &r)], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("experiment,mae"));
    }

    fn paired() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..40).prop_flat_map(|n| {
            (
                proptest::collection::vec(-180.0f64..180.0, n),
                proptest::collection::vec(-180.0f64..180.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn mae_at_most_rmse((gt, est) in paired()) {
            prop_assert!(mae(&gt, &est).unwrap() <= rmse(&gt, &est).unwrap() + 1e-9);
        }

        #[test]
        fn permutation_invariant((gt, est) in paired(), seed in any::<u64>()) {
            let mut idx: Vec<usize> = (0..gt.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..idx.len()).rev() {
                idx.swap(i, rng.random_range(0..=i));
            }
            let g2: Vec<f64> = idx.iter().map(|&i| gt[i]).collect();
            let e2: Vec<f64> = idx.iter().map(|&i| est[i]).collect();
            prop_assert!((mae(&gt, &est).unwrap() - mae(&g2, &e2).unwrap()).abs() < 1e-9);
            prop_assert!((rmse(&gt, &est).unwrap() - rmse(&g2, &e2).unwrap()).abs() < 1e-9);
            let a = range_mae(&gt, &est, -50.0, 50.0).ok();
            let b = range_mae(&g2, &e2, -50.0, 50.0).ok();
            prop_assert_eq!(a.map(|x| x.1), b.map(|x| x.1));
            if let (Some(a), Some(b)) = (a, b) {
                prop_assert!((a.0 - b.0).abs() < 1e-9);
            }
        }

        #[test]
        fn crlb_monotone(theta in 1.0f64..179.0, k in 1.01f64..3.0) {
            let base = CrlbParams { theta, ..CrlbParams::default() };
            let b = crlb(&base).unwrap();
            let grown = [
                CrlbParams { p: base.p * k, ..base },
                CrlbParams { m: base.m * k, ..base },
                CrlbParams { n: base.n * k, ..base },
                CrlbParams { d: base.d * k, ..base },
                CrlbParams { f_c: base.f_c * k, ..base },
            ];
            for g in grown {
                prop_assert!(crlb(&g).unwrap() < b);
            }
            let noisier = CrlbParams { sigma: base.sigma * k, ..base };
            prop_assert!(crlb(&noisier).unwrap() > b);
            let mirrored = CrlbParams { theta: 180.0 - theta, ..base };
            let mirror = crlb(&mirrored).unwrap();
            prop_assert!((mirror - b).abs() <= 1e-12 * b);
        }

        #[test]
        fn cdf_monotone(xs in proptest::collection::vec(-100.0f64..100.0, 1..60)) {
            let c = cdf(&xs).unwrap();
            prop_assert!(c.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1));
            prop_assert_eq!(c.last().unwrap().1, 1.0);
        }
    }
}
