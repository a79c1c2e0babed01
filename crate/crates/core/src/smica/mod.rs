//! Linear ICA for piecewise-stationary sources by score matching.
//!
//! [`fit`] whitens the data, then alternates an exact nonnegative update of
//! the per-segment parameters `λ(e)` with a line-searched Riemannian gradient
//! step on the unit-norm rows of `W`. Both blocks decrease the objective, so
//! the recorded objective history is monotone. The best of several random
//! orthogonal starts is returned.
//!
//! [`comparison`] holds two reference unmixers used to benchmark the method:
//! symmetric FastICA (maximum-likelihood ICA with a log-cosh contrast) and a
//! covariance-only joint diagonalization across segments.

pub mod comparison;
mod objective;

pub use objective::{lambda_closed_form, sm_grad_w, sm_objective, Family, SegmentedRows};

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::map::AffineMap;
use crate::rng;

/// How data is centred before whitening and fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// Subtract the pooled mean.
    Global,
    /// Subtract each segment's own mean. The model has zero-mean segments,
    /// which sufficient statistics such as `|s|` do not.
    PerSegment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmicaConfig {
    pub family: Family,
    pub centering: Centering,
    /// Maximum block iterations per restart.
    pub iters: usize,
    /// Initial step size of the line search on `W`.
    pub step: f64,
    pub restarts: usize,
    /// Stop when an iteration lowers the objective by less than this
    /// (relative to its magnitude).
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for SmicaConfig {
    fn default() -> Self {
        Self { family: Family::LogCosh, centering: Centering::PerSegment, iters: 500, step: 0.5, restarts: 5, tolerance: 1e-10, seed: 0 }
    }
}

/// Fitted unmixing. `w` lives in whitened coordinates and has unit rows;
/// [`UnmixingModel::unmixing`] folds the whitening back in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmixingModel {
    pub w: DMatrix<f64>,
    /// `E × d`, nonnegative.
    pub lambdas: DMatrix<f64>,
    pub family: Family,
    pub objective: f64,
    /// Objective after every block iteration of the winning restart.
    pub history: Vec<f64>,
    pub whitening: DMatrix<f64>,
    /// Pooled mean, subtracted by [`UnmixingModel::transform`] whatever the
    /// fitting centring was.
    pub mean: DVector<f64>,
}

/// JSON-facing summary of a model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDump {
    /// Row-major unmixing in raw data coordinates.
    pub w: Vec<Vec<f64>>,
    pub lambdas: Vec<Vec<f64>>,
    pub family: Family,
    pub objective: f64,
}

impl UnmixingModel {
    /// Unmixing matrix for centred raw data: `W · V`.
    pub fn unmixing(&self) -> DMatrix<f64> {
        &self.w * &self.whitening
    }

    /// Estimated sources, one row per observation.
    pub fn transform(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let mut centred = z.clone();
        for mut row in centred.row_iter_mut() {
            row -= self.mean.transpose();
        }
        centred * self.unmixing().transpose()
    }

    /// `z ↦ W V (z − mean)` as a differentiable map.
    pub fn as_map(&self) -> AffineMap {
        AffineMap { matrix: self.unmixing(), shift: self.mean.clone() }
    }

    pub fn dump(&self) -> ModelDump {
        let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        ModelDump { w: rows(&self.unmixing()), lambdas: rows(&self.lambdas), family: self.family, objective: self.objective }
    }
}

/// Zero-mean, identity-covariance transform via the covariance
/// eigendecomposition. Returns `(V, mean)`.
pub fn whitening(z: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = z.nrows();
    if n < 2 {
        return Err(Error::Empty("whitening needs at least two rows".into()));
    }
    let mean = z.row_mean().transpose();
    let mut c = z.clone();
    for mut row in c.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = c.transpose() * &c / n as f64;
    let eig = cov.symmetric_eigen();
    let max = eig.eigenvalues.max();
    if !(max > 0.0) || eig.eigenvalues.iter().any(|&v| !(v > 1e-12 * max)) {
        return Err(Error::Degenerate("covariance is singular; a component is constant or collinear".into()));
    }
    let scale = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
    Ok((scale * eig.eigenvectors.transpose(), mean))
}

pub(crate) fn whiten_rows(z: &DMatrix<f64>, v: &DMatrix<f64>, mean: &DVector<f64>) -> Vec<f64> {
    let d = z.ncols();
    let mut out = Vec::with_capacity(z.nrows() * d);
    let mut c = DVector::zeros(d);
    for i in 0..z.nrows() {
        for j in 0..d {
            c[j] = z[(i, j)] - mean[j];
        }
        out.extend((v * &c).iter());
    }
    out
}

fn centre_segments(z: &DMatrix<f64>, labels: &[usize]) -> DMatrix<f64> {
    let n_seg = labels.iter().max().map_or(0, |m| m + 1);
    let mut sums = DMatrix::<f64>::zeros(n_seg, z.ncols());
    let mut counts = vec![0.0; n_seg];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1.0;
        for j in 0..z.ncols() {
            sums[(l, j)] += z[(i, j)];
        }
    }
    DMatrix::from_fn(z.nrows(), z.ncols(), |i, j| z[(i, j)] - sums[(labels[i], j)] / counts[labels[i]])
}

pub(crate) fn random_orthogonal(d: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng::rng(seed);
    let g = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut r));
    g.qr().q()
}

fn normalize_rows(w: &mut DMatrix<f64>) {
    for mut row in w.row_iter_mut() {
        let n = row.norm();
        row /= n;
    }
}

struct Run {
    w: DMatrix<f64>,
    lambdas: DMatrix<f64>,
    objective: f64,
    history: Vec<f64>,
}

fn run(rows: &SegmentedRows, config: &SmicaConfig, seed: u64) -> Result<Run> {
    let fam = config.family;
    let mut w = random_orthogonal(rows.dim, seed);
    let mut lambdas = lambda_closed_form(&w, rows, fam)?;
    let mut obj = sm_objective(&w, &lambdas, rows, fam)?;
    let mut history = vec![obj];
    let mut step = config.step;
    for _ in 0..config.iters {
        let g = sm_grad_w(&w, &lambdas, rows, fam)?;
        // drop the radial component of each row: moves stay on the sphere
        let mut tangent = g.clone();
        for m in 0..rows.dim {
            let radial = g.row(m).dot(&w.row(m));
            let wm = w.row(m).clone_owned();
            tangent.row_mut(m).zip_apply(&wm, |t, x| *t -= radial * x);
        }
        let gnorm2 = tangent.norm_squared();
        if !gnorm2.is_finite() {
            return Err(Error::Optimization("non-finite gradient".into()));
        }
        if gnorm2 < 1e-24 {
            break;
        }
        let mut accepted = None;
        let mut eta = step;
        for _ in 0..50 {
            let mut cand = &w - &tangent * eta;
            normalize_rows(&mut cand);
            let val = sm_objective(&cand, &lambdas, rows, fam)?;
            if val.is_finite() && val <= obj - 1e-4 * eta * gnorm2 {
                accepted = Some((cand, val));
                break;
            }
            eta *= 0.5;
        }
        let Some((cand, _)) = accepted else { break };
        step = (eta * 2.0).min(10.0);
        w = cand;
        lambdas = lambda_closed_form(&w, rows, fam)?;
        let new = sm_objective(&w, &lambdas, rows, fam)?;
        if !new.is_finite() {
            return Err(Error::Optimization("non-finite objective".into()));
        }
        let gain = obj - new;
        obj = new;
        history.push(obj);
        if gain <= config.tolerance * obj.abs().max(1.0) {
            break;
        }
    }
    if w.determinant().abs() <= 1e-12 {
        return Err(Error::Optimization("unmixing rows collapsed".into()));
    }
    Ok(Run { w, lambdas, objective: obj, history })
}

/// Fit an unmixing to `z` (`n × d`, one row per observation).
pub fn fit(z: &DMatrix<f64>, labels: &[usize], config: &SmicaConfig) -> Result<UnmixingModel> {
    if z.nrows() != labels.len() {
        return Err(Error::Dimension { expected: z.nrows(), got: labels.len() });
    }
    if config.restarts == 0 {
        return Err(param("at least one restart is required"));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite input".into()));
    }
    let mean = z.row_mean().transpose();
    let centred = match config.centering {
        Centering::Global => z.clone(),
        Centering::PerSegment => centre_segments(z, labels),
    };
    let (v, centre) = whitening(&centred)?;
    let rows = SegmentedRows::new(&whiten_rows(&centred, &v, &centre), z.ncols(), labels)?;
    let runs: Vec<Result<Run>> =
        (0..config.restarts as u64).into_par_iter().map(|r| run(&rows, config, rng::derive(config.seed, &[r]))).collect();
    let mut best: Option<Run> = None;
    let mut last_err = None;
    for r in runs {
        match r {
            Ok(run) if run.objective.is_finite() => {
                if best.as_ref().is_none_or(|b| run.objective < b.objective) {
                    best = Some(run);
                }
            }
            Ok(_) => last_err = Some(Error::Optimization("non-finite objective".into())),
            Err(e) => last_err = Some(e),
        }
    }
    let best =
        best.ok_or_else(|| Error::Optimization(format!("all restarts failed: {}", last_err.map_or(String::new(), |e| e.to_string()))))?;
    Ok(UnmixingModel {
        w: best.w,
        lambdas: best.lambdas,
        family: config.family,
        objective: best.objective,
        history: best.history,
        whitening: v,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_sources, LambdaScheme, SourceFamily};
    use crate::stats::matched_abs_correlation;

    fn laplace(seed: u64, d: usize, e: usize, n_e: usize, scheme: LambdaScheme) -> (DMatrix<f64>, Vec<usize>) {
        let (p, labels) = gen_sources(d, e, n_e, SourceFamily::LaplaceVariance, scheme, seed).unwrap();
        (p.sources, labels)
    }

    #[test]
    fn identity_mixing_gives_signed_permutation() {
        let (s, labels) = laplace(1, 2, 10, 500, LambdaScheme::RandomScale);
        let m = fit(&s, &labels, &SmicaConfig::default()).unwrap();
        let u = m.unmixing();
        // normalize rows then compare to a signed permutation
        let mut worst_off: f64 = 0.0;
        for i in 0..2 {
            let row = u.row(i) / u.row(i).norm();
            let big = row.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let off = row.iter().map(|v| v.abs()).filter(|&v| v < big).fold(0.0, f64::max);
            worst_off = worst_off.max(off);
        }
        assert!(worst_off < 0.1, "{u}");
    }

    #[test]
    fn objective_history_is_monotone() {
        let (s, labels) = laplace(2, 3, 6, 300, LambdaScheme::RandomScale);
        let mix = random_orthogonal(3, 9) * 2.0;
        let z = &s * mix.transpose();
        let m = fit(&z, &labels, &SmicaConfig::default()).unwrap();
        for pair in m.history.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-10);
        }
        assert!(m.lambdas.iter().all(|&v| v >= 0.0));
        for row in m.w.row_iter() {
            assert!((row.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn whitening_round_trip() {
        let (s, labels) = laplace(3, 2, 5, 200, LambdaScheme::RandomScale);
        let z = &s * DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.3, 2.0]);
        let m = fit(&z, &labels, &SmicaConfig { restarts: 1, centering: Centering::Global, ..Default::default() }).unwrap();
        let raw = m.transform(&z);
        let white = whiten_rows(&z, &m.whitening, &m.mean);
        for i in 0..z.nrows() {
            for j in 0..2 {
                let v = m.w[(j, 0)] * white[2 * i] + m.w[(j, 1)] * white[2 * i + 1];
                assert!((raw[(i, j)] - v).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn converged_fit_is_stationary() {
        let (s, labels) = laplace(4, 2, 8, 400, LambdaScheme::RandomScale);
        let cfg = SmicaConfig { iters: 5000, tolerance: 0.0, restarts: 1, centering: Centering::Global, ..Default::default() };
        let m = fit(&s, &labels, &cfg).unwrap();
        let white = whiten_rows(&s, &m.whitening, &m.mean);
        let rows = SegmentedRows::new(&white, 2, &labels).unwrap();
        let g = sm_grad_w(&m.w, &m.lambdas, &rows, Family::LogCosh).unwrap();
        let mut tangent_norm: f64 = 0.0;
        for i in 0..2 {
            let radial = g.row(i).dot(&m.w.row(i));
            tangent_norm += (g.row(i) - m.w.row(i) * radial).norm_squared();
        }
        assert!(tangent_norm.sqrt() < 1e-5, "{}", tangent_norm.sqrt());
    }

    #[test]
    fn column_permutation_permutes_rows() {
        let (s, labels) = laplace(5, 2, 10, 400, LambdaScheme::RandomScale);
        let z = &s * DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.3, 1.0]);
        let zs = DMatrix::from_fn(z.nrows(), 2, |i, j| z[(i, 1 - j)]);
        let a = fit(&z, &labels, &SmicaConfig::default()).unwrap().transform(&z);
        let b = fit(&zs, &labels, &SmicaConfig::default()).unwrap().transform(&zs);
        let (score, _) = matched_abs_correlation(&a, &b);
        assert!(score > 0.99, "{score}");
    }

    #[test]
    fn restarts_agree() {
        let (s, labels) = laplace(6, 2, 10, 400, LambdaScheme::RandomScale);
        let z = &s * DMatrix::from_row_slice(2, 2, &[1.0, -0.7, 0.5, 1.2]);
        let reference = fit(&z, &labels, &SmicaConfig { restarts: 1, seed: 0, ..Default::default() }).unwrap().transform(&z);
        for seed in 1..5 {
            let other = fit(&z, &labels, &SmicaConfig { restarts: 1, seed, ..Default::default() }).unwrap().transform(&z);
            let (score, _) = matched_abs_correlation(&reference, &other);
            assert!(score > 0.99, "seed {seed}: {score}");
        }
    }

    #[test]
    fn segment_centring_handles_shifted_statistics() {
        // mixtures of |s|: each segment has its own mean
        let (s, labels) = laplace(8, 2, 10, 512, LambdaScheme::RandomScale);
        let abs = s.map(f64::abs);
        let z = &abs * DMatrix::from_row_slice(2, 2, &[1.0, 0.6, -0.4, 1.0]).transpose();
        let m = fit(&z, &labels, &SmicaConfig::default()).unwrap();
        let (score, _) = matched_abs_correlation(&m.transform(&z), &abs);
        assert!(score > 0.95, "{score}");
    }

    #[test]
    fn constant_column_is_degenerate() {
        let (mut s, labels) = laplace(7, 2, 4, 50, LambdaScheme::RandomScale);
        s.column_mut(1).fill(3.0);
        assert!(matches!(fit(&s, &labels, &SmicaConfig::default()), Err(Error::Degenerate(_))));
    }
}
