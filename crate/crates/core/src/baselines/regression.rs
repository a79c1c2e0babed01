//! Least squares and Gaussian-kernel ridge regression.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::rng;
use crate::stats::{median_distance, Points};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionMethod {
    Ols,
    KernelRidge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub method: RegressionMethod,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Kernel bandwidth, kernel ridge only.
    pub bandwidth: Option<f64>,
    /// Ridge penalty per training point, kernel ridge only.
    pub ridge: Option<f64>,
    pub mse: f64,
}

impl RegressionFit {
    fn from_fitted(method: RegressionMethod, y: &[f64], fitted: Vec<f64>, bandwidth: Option<f64>, ridge: Option<f64>) -> Self {
        let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
        let mse = residuals.iter().map(|r| r * r).sum::<f64>() / y.len() as f64;
        Self { method, fitted, residuals, bandwidth, ridge, mse }
    }
}

/// `y ~ a + b x`.
pub fn ols_fit(x: &[f64], y: &[f64]) -> Result<RegressionFit> {
    if x.len() != y.len() {
        return Err(Error::Dimension { expected: x.len(), got: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::Empty("regression needs at least two rows".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 1e-12 * n) {
        return Err(Error::Degenerate("regressor has zero variance".into()));
    }
    let slope = sxy / sxx;
    let fitted = x.iter().map(|v| my + slope * (v - mx)).collect();
    Ok(RegressionFit::from_fitted(RegressionMethod::Ols, y, fitted, None, None))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelRidgeConfig {
    /// Training rows are a seeded subsample of at most this many points;
    /// predictions cover every row.
    pub max_train: usize,
    pub folds: usize,
    /// Multipliers of the median-heuristic bandwidth tried by cross-validation.
    pub bandwidth_factors: Vec<f64>,
    /// Ridge penalties (per training point) tried by cross-validation.
    pub ridges: Vec<f64>,
    pub seed: u64,
}

impl Default for KernelRidgeConfig {
    fn default() -> Self {
        Self { max_train: 500, folds: 5, bandwidth_factors: vec![0.5, 1.0, 2.0], ridges: vec![1e-4, 1e-3, 1e-2], seed: 0 }
    }
}

fn gram(a: &Points, b: &Points, bandwidth: f64) -> DMatrix<f64> {
    let g = -0.5 / (bandwidth * bandwidth);
    DMatrix::from_fn(a.len(), b.len(), |i, j| {
        let d2: f64 = a.row(i).iter().zip(b.row(j)).map(|(u, v)| (u - v).powi(2)).sum();
        (g * d2).exp()
    })
}

fn subset(points: &Points, rows: &[usize]) -> Points {
    let dim = points.dim();
    let data = rows.iter().flat_map(|&i| points.row(i).iter().copied()).collect();
    Points::new(data, dim).expect("rows come from a valid point set")
}

/// Dual coefficients of `(K + ridge·m·I) c = y − ȳ`.
fn solve(k: &DMatrix<f64>, y: &DVector<f64>, ridge: f64) -> Result<DVector<f64>> {
    let m = k.nrows();
    let mut a = k.clone();
    for i in 0..m {
        a[(i, i)] += ridge * m as f64;
    }
    a.cholesky().map(|c| c.solve(y)).ok_or_else(|| Error::Singular("kernel ridge system".into()))
}

/// Gaussian-kernel ridge regression of `y` on `x`, bandwidth and ridge picked
/// by k-fold cross-validation on the training subsample.
pub fn kernel_ridge_fit(x: &Points, y: &[f64], config: &KernelRidgeConfig) -> Result<RegressionFit> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Dimension { expected: n, got: y.len() });
    }
    if n < 5 {
        return Err(param(format!("kernel ridge needs at least 5 rows, got {n}")));
    }
    if config.folds < 2 || config.bandwidth_factors.is_empty() || config.ridges.is_empty() || config.max_train < 5 {
        return Err(param("kernel ridge needs at least 2 folds, a nonempty grid and max_train ≥ 5"));
    }
    let mut train: Vec<usize> =
        if n > config.max_train { sample(&mut rng::rng(config.seed), n, config.max_train).into_vec() } else { (0..n).collect() };
    train.sort_unstable();
    let xt = subset(x, &train);
    let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let m = train.len();
    let median = median_distance(&xt);
    let base = if median > 0.0 { median } else { 1.0 };

    let folds = config.folds.min(m);
    let fold_of: Vec<usize> = (0..m).map(|i| i % folds).collect();
    let mut best = (f64::INFINITY, base, config.ridges[0]);
    for &factor in &config.bandwidth_factors {
        let bw = base * factor;
        let k_all = gram(&xt, &xt, bw);
        for &ridge in &config.ridges {
            let mut sse = 0.0;
            for f in 0..folds {
                let fit_rows: Vec<usize> = (0..m).filter(|&i| fold_of[i] != f).collect();
                let val_rows: Vec<usize> = (0..m).filter(|&i| fold_of[i] == f).collect();
                let mean = fit_rows.iter().map(|&i| yt[i]).sum::<f64>() / fit_rows.len() as f64;
                let k = k_all.select_rows(&fit_rows).select_columns(&fit_rows);
                let target = DVector::from_iterator(fit_rows.len(), fit_rows.iter().map(|&i| yt[i] - mean));
                let c = solve(&k, &target, ridge)?;
                let kv = k_all.select_rows(&val_rows).select_columns(&fit_rows);
                let pred = kv * c;
                sse += val_rows.iter().zip(pred.iter()).map(|(&i, p)| (yt[i] - mean - p).powi(2)).sum::<f64>();
            }
            // strict comparison keeps the first grid point on ties
            if sse < best.0 {
                best = (sse, bw, ridge);
            }
        }
    }
    let (_, bw, ridge) = best;
    let mean = yt.iter().sum::<f64>() / m as f64;
    let target = DVector::from_iterator(m, yt.iter().map(|v| v - mean));
    let c = solve(&gram(&xt, &xt, bw), &target, ridge)?;
    let pred = gram(x, &xt, bw) * c;
    let fitted = pred.iter().map(|p| p + mean).collect();
    Ok(RegressionFit::from_fitted(RegressionMethod::KernelRidge, y, fitted, Some(bw), Some(ridge)))
}
