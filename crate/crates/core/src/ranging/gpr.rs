//! Gaussian-process regression with an RBF + linear kernel.
//!
//! `k(x, x') = σ²_rbf · exp(−‖x − x'‖² / (2ℓ²)) + σ_lin · (x · x')`, plus a
//! white noise term on the diagonal. Inputs are centered on the training
//! mean before the linear term is applied and labels are centered on their
//! mean. Hyperparameters maximize the log marginal likelihood on a subset of
//! the training data; the final factorization uses all of it.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RangingError;

/// Jitter starts at this fraction of the mean diagonal and grows tenfold.
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;
/// Cholesky pivots smaller than this fraction of the mean diagonal count as singular.
const PIVOT_FLOOR: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GprHyper {
    pub rbf_variance: f64,
    pub lengthscale: f64,
    pub linear_variance: f64,
    pub noise_variance: f64,
}

impl GprHyper {
    fn validate(&self) -> Result<(), RangingError> {
        if !(self.rbf_variance > 0.0) {
            return Err(RangingError::InvalidHyper("rbf_variance"));
        }
        if !(self.lengthscale > 0.0) {
            return Err(RangingError::InvalidHyper("lengthscale"));
        }
        if !(self.linear_variance >= 0.0) {
            return Err(RangingError::InvalidHyper("linear_variance"));
        }
        if !(self.noise_variance >= 0.0) {
            return Err(RangingError::InvalidHyper("noise_variance"));
        }
        Ok(())
    }

    fn to_log(self) -> [f64; 4] {
        [
            self.rbf_variance.ln(),
            self.lengthscale.ln(),
            self.linear_variance.ln(),
            self.noise_variance.ln(),
        ]
    }

    fn from_log(p: [f64; 4]) -> Self {
        Self {
            rbf_variance: p[0].exp(),
            lengthscale: p[1].exp(),
            linear_variance: p[2].exp(),
            noise_variance: p[3].exp(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GprOptions {
    /// Training points used for the hyperparameter search.
    pub search_subset: usize,
    /// Grid points per parameter across `decades`.
    pub grid_points: usize,
    pub decades: f64,
    pub sweeps: usize,
    /// Halvings of the step in the local refinement.
    pub refinements: usize,
    /// Seed for choosing the search subset.
    pub seed: u64,
}

impl Default for GprOptions {
    fn default() -> Self {
        Self {
            search_subset: 400,
            grid_points: 13,
            decades: 3.0,
            sweeps: 2,
            refinements: 5,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GprPrediction {
    pub mean: f64,
    /// Standard deviation of the latent function.
    pub latent_std: f64,
    /// Standard deviation of a new observation (latent plus noise).
    pub predictive_std: f64,
}

#[derive(Clone, Debug)]
pub struct GprModel {
    pub hyper: GprHyper,
    /// Jitter added to the diagonal on top of the noise variance.
    pub jitter: f64,
    pub log_marginal_likelihood: f64,
    x_mean: Vec<f64>,
    y_mean: f64,
    inputs: Vec<Vec<f64>>,
    alpha: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn kernel_from(h: &GprHyper, sq: f64, dot: f64) -> f64 {
    h.rbf_variance * (-sq / (2.0 * h.lengthscale * h.lengthscale)).exp() + h.linear_variance * dot
}

/// Cholesky of `k + noise·I`, escalating jitter when the factorization fails.
fn factor(k: &DMatrix<f64>, noise: f64) -> Result<(Cholesky<f64, Dyn>, f64), RangingError> {
    let n = k.nrows();
    let mean_diag = (k.trace() / n as f64 + noise).max(f64::MIN_POSITIVE);
    let mut jitter = 0.0;
    loop {
        let mut m = k.clone();
        for i in 0..n {
            m[(i, i)] += noise + jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            let l = chol.l_dirty();
            if (0..n).all(|i| l[(i, i)] * l[(i, i)] > PIVOT_FLOOR * mean_diag) {
                return Ok((chol, jitter));
            }
        }
        jitter = if jitter == 0.0 {
            JITTER_START * mean_diag
        } else {
            jitter * 10.0
        };
        if jitter > JITTER_MAX * mean_diag * (1.0 + 1e-9) {
            return Err(RangingError::SingularKernel);
        }
    }
}

/// Precomputed pairwise terms of a fixed input set.
struct Pairwise {
    sq: DMatrix<f64>,
    dot: DMatrix<f64>,
}

impl Pairwise {
    fn new(x: &[Vec<f64>]) -> Self {
        let n = x.len();
        let mut sq = DMatrix::zeros(n, n);
        let mut dt = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let s = sq_dist(&x[i], &x[j]);
                let d = dot(&x[i], &x[j]);
                sq[(i, j)] = s;
                sq[(j, i)] = s;
                dt[(i, j)] = d;
                dt[(j, i)] = d;
            }
        }
        Self { sq, dot: dt }
    }

    fn kernel(&self, h: &GprHyper) -> DMatrix<f64> {
        self.sq.zip_map(&self.dot, |s, d| kernel_from(h, s, d))
    }
}

fn log_marginal(pw: &Pairwise, y: &DVector<f64>, h: &GprHyper) -> Option<(f64, Cholesky<f64, Dyn>, f64, DVector<f64>)> {
    let (chol, jitter) = factor(&pw.kernel(h), h.noise_variance).ok()?;
    let alpha = chol.solve(y);
    let l = chol.l_dirty();
    let log_det: f64 = (0..y.len()).map(|i| l[(i, i)].ln()).sum();
    let n = y.len() as f64;
    let lml = -0.5 * y.dot(&alpha) - log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
    lml.is_finite().then_some((lml, chol, jitter, alpha))
}

fn check_inputs(x: &[Vec<f64>], y: &[f64]) -> Result<usize, RangingError> {
    if x.is_empty() {
        return Err(RangingError::Empty);
    }
    if x.len() != y.len() {
        return Err(RangingError::NotEnoughRows {
            need: x.len(),
            have: y.len(),
        });
    }
    let dim = x[0].len();
    if let Some(bad) = x.iter().find(|r| r.len() != dim) {
        return Err(RangingError::IncompleteFeature {
            expected: dim,
            got: bad.len(),
        });
    }
    Ok(dim)
}

fn centered(x: &[Vec<f64>], y: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>, DVector<f64>, f64) {
    let dim = x[0].len();
    let n = x.len() as f64;
    let mut x_mean = vec![0.0; dim];
    for row in x {
        for (m, v) in x_mean.iter_mut().zip(row) {
            *m += v / n;
        }
    }
    let xc = x
        .iter()
        .map(|r| r.iter().zip(&x_mean).map(|(v, m)| v - m).collect())
        .collect();
    let y_mean = y.iter().sum::<f64>() / n;
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_mean));
    (xc, x_mean, yc, y_mean)
}

impl GprModel {
    /// Fits with fixed hyperparameters.
    pub fn fit_with(x: &[Vec<f64>], y: &[f64], hyper: GprHyper) -> Result<Self, RangingError> {
        check_inputs(x, y)?;
        hyper.validate()?;
        let (xc, x_mean, yc, y_mean) = centered(x, y);
        let pw = Pairwise::new(&xc);
        let (chol, jitter) = factor(&pw.kernel(&hyper), hyper.noise_variance)?;
        let alpha = chol.solve(&yc);
        let l = chol.l_dirty();
        let log_det: f64 = (0..yc.len()).map(|i| l[(i, i)].ln()).sum();
        let lml = -0.5 * yc.dot(&alpha) - log_det - 0.5 * yc.len() as f64 * (2.0 * std::f64::consts::PI).ln();
        Ok(Self {
            hyper,
            jitter,
            log_marginal_likelihood: lml,
            x_mean,
            y_mean,
            inputs: xc,
            alpha,
            chol,
        })
    }

    /// Selects hyperparameters by log marginal likelihood, then fits on all data.
    pub fn fit(x: &[Vec<f64>], y: &[f64], opts: &GprOptions) -> Result<Self, RangingError> {
        check_inputs(x, y)?;
        let (xc, _, yc, _) = centered(x, y);
        let n = xc.len();
        let mut idx: Vec<usize> = if n > opts.search_subset.max(2) {
            sample(&mut ChaCha8Rng::seed_from_u64(opts.seed), n, opts.search_subset.max(2)).into_vec()
        } else {
            (0..n).collect()
        };
        idx.sort_unstable();
        let sub_x: Vec<Vec<f64>> = idx.iter().map(|&i| xc[i].clone()).collect();
        let sub_y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| yc[i]));
        let pw = Pairwise::new(&sub_x);

        let hyper = search(&pw, &sub_y, &sub_x, opts);
        Self::fit_with(x, y, hyper)
    }

    /// Kernel between two raw (uncentered) inputs.
    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let ac: Vec<f64> = a.iter().zip(&self.x_mean).map(|(v, m)| v - m).collect();
        let bc: Vec<f64> = b.iter().zip(&self.x_mean).map(|(v, m)| v - m).collect();
        kernel_from(&self.hyper, sq_dist(&ac, &bc), dot(&ac, &bc))
    }

    pub fn dim(&self) -> usize {
        self.x_mean.len()
    }

    pub fn training_len(&self) -> usize {
        self.inputs.len()
    }

    pub fn label_mean(&self) -> f64 {
        self.y_mean
    }

    pub fn predict(&self, x: &[f64]) -> Result<GprPrediction, RangingError> {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return Err(RangingError::IncompleteFeature {
                expected: self.dim(),
                got: x.iter().filter(|v| v.is_finite()).count(),
            });
        }
        let xc: Vec<f64> = x.iter().zip(&self.x_mean).map(|(v, m)| v - m).collect();
        let k_star = DVector::from_iterator(
            self.inputs.len(),
            self.inputs
                .iter()
                .map(|xi| kernel_from(&self.hyper, sq_dist(xi, &xc), dot(xi, &xc))),
        );
        let mean = self.y_mean + k_star.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k_star)
            .ok_or(RangingError::SingularKernel)?;
        let prior = kernel_from(&self.hyper, 0.0, dot(&xc, &xc));
        let latent = (prior - v.norm_squared()).max(0.0);
        Ok(GprPrediction {
            mean,
            latent_std: latent.sqrt(),
            predictive_std: (latent + self.hyper.noise_variance).sqrt(),
        })
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<GprPrediction>, RangingError> {
        xs.par_iter().map(|x| self.predict(x)).collect()
    }
}

fn initial_hyper(x: &[Vec<f64>], y: &DVector<f64>) -> GprHyper {
    let n = y.len().max(1) as f64;
    let var_y = (y.norm_squared() / n).max(1e-12);
    let mut dists: Vec<f64> = Vec::new();
    for i in 0..x.len() {
        for j in 0..i {
            dists.push(sq_dist(&x[i], &x[j]).sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let median = dists.get(dists.len() / 2).copied().unwrap_or(1.0).max(1e-6);
    let mean_sq = x.iter().map(|r| dot(r, r)).sum::<f64>() / n;
    GprHyper {
        rbf_variance: var_y,
        lengthscale: median,
        linear_variance: if mean_sq > 0.0 { var_y / mean_sq } else { 1e-6 },
        noise_variance: 0.1 * var_y,
    }
}

fn search(pw: &Pairwise, y: &DVector<f64>, x: &[Vec<f64>], opts: &GprOptions) -> GprHyper {
    let init = initial_hyper(x, y).to_log();
    let half = 0.5 * opts.decades * std::f64::consts::LN_10;
    let points = opts.grid_points.max(3);
    let step = 2.0 * half / (points - 1) as f64;
    let lo: Vec<f64> = init.iter().map(|c| c - half).collect();
    let hi: Vec<f64> = init.iter().map(|c| c + half).collect();

    let score = |p: &[f64; 4]| log_marginal(pw, y, &GprHyper::from_log(*p)).map_or(f64::NEG_INFINITY, |r| r.0);
    let mut best = init;
    let mut best_score = score(&best);
    for _ in 0..opts.sweeps.max(1) {
        for j in 0..4 {
            for g in 0..points {
                let mut cand = best;
                cand[j] = lo[j] + g as f64 * step;
                let s = score(&cand);
                if s > best_score {
                    best = cand;
                    best_score = s;
                }
            }
        }
    }
    let mut delta = step / 2.0;
    for _ in 0..opts.refinements {
        for j in 0..4 {
            for sign in [-1.0, 1.0] {
                let mut cand = best;
                cand[j] = (cand[j] + sign * delta).clamp(lo[j], hi[j]);
                let s = score(&cand);
                if s > best_score {
                    best = cand;
                    best_score = s;
                }
            }
        }
        delta /= 2.0;
    }
    GprHyper::from_log(best)
}
