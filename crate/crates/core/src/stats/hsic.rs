//! Hilbert–Schmidt independence criterion with Gaussian kernels.
//!
//! The statistic is the biased V-statistic `(1/n²) tr(K H L H)`. Two null
//! distributions are available: a permutation null (shuffle `y`, p-value
//! `(1 + #{null ≥ observed}) / (1 + P)`) and the moment-matched gamma
//! approximation of Gretton et al. (2008).
//!
//! For `n ≤ DENSE_LIMIT` the centred Gram matrices are materialized; above it
//! kernel entries are recomputed on the fly from row sums so memory stays
//! linear in `n`.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma};

use crate::error::{param, Error, Result};
use crate::rng;

/// Largest sample count for which Gram matrices are stored densely.
pub const DENSE_LIMIT: usize = 4096;

/// Points used for the median heuristic are an evenly strided subsample of
/// at most this many rows.
pub const MEDIAN_SUBSAMPLE: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Median pairwise Euclidean distance; falls back to 1.0 when it is zero.
    Median,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullMethod {
    Permutation,
    Gamma,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HsicConfig {
    /// Level each individual test is run at (already Bonferroni-adjusted).
    pub alpha: f64,
    pub method: NullMethod,
    pub permutations: usize,
    pub seed: u64,
    pub bandwidth: Bandwidth,
}

impl Default for HsicConfig {
    fn default() -> Self {
        Self { alpha: 0.05, method: NullMethod::Permutation, permutations: 500, seed: 0, bandwidth: Bandwidth::Median }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub alpha_effective: f64,
    pub reject: bool,
    pub method: NullMethod,
}

impl IndependenceTestResult {
    pub fn new(statistic: f64, p_value: f64, alpha_effective: f64, method: NullMethod) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self { statistic, p_value, alpha_effective, reject: p_value < alpha_effective, method }
    }
}

/// `n` points of dimension `dim`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    data: Vec<f64>,
    dim: usize,
}

impl Points {
    pub fn new(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(param("point buffer length is not a multiple of the dimension"));
        }
        Ok(Self { data, dim })
    }

    pub fn scalar(values: &[f64]) -> Self {
        Self { data: values.to_vec(), dim: 1 }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    fn sq_dist(&self, i: usize, j: usize) -> f64 {
        if self.dim == 1 {
            let d = self.data[i] - self.data[j];
            return d * d;
        }
        self.row(i).iter().zip(self.row(j)).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

impl From<&[f64]> for Points {
    fn from(values: &[f64]) -> Self {
        Self::scalar(values)
    }
}

impl From<Vec<f64>> for Points {
    fn from(values: Vec<f64>) -> Self {
        Self { data: values, dim: 1 }
    }
}

/// Median pairwise distance over an evenly strided subsample.
pub fn median_distance(points: &Points) -> f64 {
    let n = points.len();
    let m = n.min(MEDIAN_SUBSAMPLE);
    let idx: Vec<usize> = (0..m).map(|i| i * n / m).collect();
    let mut d = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for a in 0..m {
        for b in a + 1..m {
            d.push(points.sq_dist(idx[a], idx[b]));
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    let mid = d.len() / 2;
    let (_, v, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    v.sqrt()
}

fn resolve_bandwidth(points: &Points, bw: Bandwidth) -> Result<f64> {
    match bw {
        Bandwidth::Fixed(s) if s > 0.0 && s.is_finite() => Ok(s),
        Bandwidth::Fixed(s) => Err(param(format!("bandwidth must be positive, got {s}"))),
        Bandwidth::Median => {
            let m = median_distance(points);
            Ok(if m > 0.0 && m.is_finite() { m } else { 1.0 })
        }
    }
}

/// A Gaussian kernel over one variable, prepared for repeated testing.
///
/// Preparing once and reusing across several tests (the four-test verdict
/// tests every observed variable against two disturbances) avoids
/// recomputing Gram matrices.
#[derive(Debug, Clone)]
pub struct PreparedKernel {
    n: usize,
    sigma: f64,
    repr: KernelRepr,
    /// Mean of the off-diagonal kernel entries.
    offdiag_mean: f64,
}

#[derive(Debug, Clone)]
enum KernelRepr {
    /// Row-major centred Gram matrix `H K H`.
    Dense { centered: Vec<f64> },
    /// Raw points plus row sums of the uncentred kernel.
    Implicit { points: Points, row_sums: Vec<f64>, total: f64 },
}

impl PreparedKernel {
    pub fn new(points: &Points, bandwidth: Bandwidth) -> Result<Self> {
        Self::with_limit(points, bandwidth, DENSE_LIMIT)
    }

    fn with_limit(points: &Points, bandwidth: Bandwidth, dense_limit: usize) -> Result<Self> {
        let n = points.len();
        if n < 4 {
            return Err(param(format!("HSIC needs at least 4 samples, got {n}")));
        }
        if points.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("non-finite sample".into()));
        }
        let sigma = resolve_bandwidth(points, bandwidth)?;
        let gamma = 1.0 / (2.0 * sigma * sigma);
        if n <= dense_limit {
            let mut k = vec![0.0; n * n];
            k.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                for (j, o) in row.iter_mut().enumerate() {
                    *o = (-gamma * points.sq_dist(i, j)).exp();
                }
            });
            let row_means: Vec<f64> = k.chunks(n).map(|r| r.iter().sum::<f64>() / n as f64).collect();
            let grand = row_means.iter().sum::<f64>() / n as f64;
            let offdiag_mean = (grand * (n * n) as f64 - n as f64) / (n * (n - 1)) as f64;
            k.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                for (j, v) in row.iter_mut().enumerate() {
                    *v += grand - row_means[i] - row_means[j];
                }
            });
            Ok(Self { n, sigma, repr: KernelRepr::Dense { centered: k }, offdiag_mean })
        } else {
            let row_sums: Vec<f64> =
                (0..n).into_par_iter().map(|i| (0..n).map(|j| (-gamma * points.sq_dist(i, j)).exp()).sum::<f64>()).collect();
            let total: f64 = row_sums.iter().sum();
            let offdiag_mean = (total - n as f64) / (n * (n - 1)) as f64;
            let repr = KernelRepr::Implicit { points: points.clone(), row_sums, total };
            Ok(Self { n, sigma, repr, offdiag_mean })
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn bandwidth(&self) -> f64 {
        self.sigma
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.repr, KernelRepr::Dense { .. })
    }

    /// Centred kernel entry `(HKH)_{ij}`.
    #[inline]
    fn centered(&self, i: usize, j: usize) -> f64 {
        match &self.repr {
            KernelRepr::Dense { centered } => centered[i * self.n + j],
            KernelRepr::Implicit { points, row_sums, total } => {
                let n = self.n as f64;
                let g = 1.0 / (2.0 * self.sigma * self.sigma);
                (-g * points.sq_dist(i, j)).exp() - row_sums[i] / n - row_sums[j] / n + total / (n * n)
            }
        }
    }
}

/// `Σ_ij Kc_ij Lc_ij` and `Σ_{i≠j} (Kc_ij Lc_ij)²`, with an optional
/// permutation applied to the second variable.
fn pair_sums(k: &PreparedKernel, l: &PreparedKernel, perm: Option<&[usize]>) -> (f64, f64) {
    let n = k.n;
    let rows: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let pi = perm.map_or(i, |p| p[i]);
            let (mut c, mut s) = (0.0, 0.0);
            let mut add = |j: usize, v: f64| {
                c += v;
                if j != i {
                    s += v * v;
                }
            };
            match (&k.repr, &l.repr) {
                (KernelRepr::Dense { centered: kc }, KernelRepr::Dense { centered: lc }) => {
                    let kr = &kc[i * n..(i + 1) * n];
                    let lr = &lc[pi * n..(pi + 1) * n];
                    match perm {
                        None => (0..n).for_each(|j| add(j, kr[j] * lr[j])),
                        Some(p) => (0..n).for_each(|j| add(j, kr[j] * lr[p[j]])),
                    }
                }
                _ => {
                    for j in 0..n {
                        let pj = perm.map_or(j, |p| p[j]);
                        add(j, k.centered(i, j) * l.centered(pi, pj));
                    }
                }
            }
            (c, s)
        })
        .collect();
    // sequential reduction keeps the result independent of thread count
    rows.into_iter().fold((0.0, 0.0), |(c, s), (a, b)| (c + a, s + b))
}

fn check_pair(k: &PreparedKernel, l: &PreparedKernel) -> Result<()> {
    if k.n != l.n {
        return Err(Error::Dimension { expected: k.n, got: l.n });
    }
    Ok(())
}

/// Biased HSIC estimate `(1/n²) tr(KHLH)` from prepared kernels.
pub fn hsic_statistic_prepared(k: &PreparedKernel, l: &PreparedKernel) -> Result<f64> {
    check_pair(k, l)?;
    let n = k.n as f64;
    Ok(pair_sums(k, l, None).0 / (n * n))
}

pub fn hsic_statistic(x: &Points, y: &Points, bandwidth: Bandwidth) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension { expected: x.len(), got: y.len() });
    }
    let k = PreparedKernel::new(x, bandwidth)?;
    let l = PreparedKernel::new(y, bandwidth)?;
    hsic_statistic_prepared(&k, &l)
}

pub fn hsic_test(x: &Points, y: &Points, config: &HsicConfig) -> Result<IndependenceTestResult> {
    if x.len() != y.len() {
        return Err(Error::Dimension { expected: x.len(), got: y.len() });
    }
    let k = PreparedKernel::new(x, config.bandwidth)?;
    let l = PreparedKernel::new(y, config.bandwidth)?;
    hsic_test_prepared(&k, &l, config)
}

/// Test independence of the variables behind two prepared kernels. The
/// `bandwidth` field of `config` is ignored (it was fixed at preparation).
pub fn hsic_test_prepared(k: &PreparedKernel, l: &PreparedKernel, config: &HsicConfig) -> Result<IndependenceTestResult> {
    check_pair(k, l)?;
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(param(format!("alpha must lie in (0, 1), got {}", config.alpha)));
    }
    let n = k.n;
    let m = n as f64;
    match config.method {
        NullMethod::Permutation => {
            if config.permutations < 200 {
                return Err(param(format!("permutation null needs at least 200 permutations, got {}", config.permutations)));
            }
            let observed = pair_sums(k, l, None).0;
            let exceed: usize = (0..config.permutations as u64)
                .map(|p| {
                    let mut perm: Vec<usize> = (0..n).collect();
                    perm.shuffle(&mut rng::rng(rng::derive(config.seed, &[p])));
                    let null = pair_sums(k, l, Some(&perm)).0;
                    // relative slack so that rounding cannot make an
                    // arrangement equal to the observed one look smaller
                    (null >= observed - 1e-12 * observed.abs()) as usize
                })
                .sum();
            let p_value = (1 + exceed) as f64 / (1 + config.permutations) as f64;
            Ok(IndependenceTestResult::new(observed / (m * m), p_value, config.alpha, config.method))
        }
        NullMethod::Gamma => {
            let (t, mean, var) = gamma_moments(k, l)?;
            Ok(IndependenceTestResult::new(t / m, gamma_p_value(t, mean, var), config.alpha, config.method))
        }
    }
}

/// `n · HSIC_b` with the null mean and variance of that quantity.
fn gamma_moments(k: &PreparedKernel, l: &PreparedKernel) -> Result<(f64, f64, f64)> {
    let m = k.n as f64;
    if k.n < 6 {
        return Err(param(format!("gamma approximation needs at least 6 samples, got {}", k.n)));
    }
    let (cross, cross_sq) = pair_sums(k, l, None);
    let var = cross_sq / 36.0 / (m * (m - 1.0)) * 72.0 * (m - 4.0) * (m - 5.0) / (m * (m - 1.0) * (m - 2.0) * (m - 3.0));
    let (mx, my) = (k.offdiag_mean, l.offdiag_mean);
    let mean = (1.0 + mx * my - mx - my) / m;
    Ok((cross / m, m * mean, m * m * var))
}

fn gamma_p_value(t: f64, mean: f64, var: f64) -> f64 {
    if var > 0.0 && mean > 0.0 && var.is_finite() {
        let shape = mean * mean / var;
        let scale = var / mean;
        Gamma::new(shape, 1.0 / scale).map_or(1.0, |g| g.sf(t.max(0.0)))
    } else {
        1.0
    }
}

/// Independence within strata (segments), combined into one test.
///
/// The statistic is `Σ_e n_e · HSIC_b(e)`. Its null keeps each stratum
/// separate: permutations shuffle rows only within a stratum, and the gamma
/// approximation matches the summed per-stratum means and variances. The
/// reported statistic is the row-weighted mean of the per-stratum HSIC.
pub fn stratified_hsic_test(k: &[PreparedKernel], l: &[PreparedKernel], config: &HsicConfig) -> Result<IndependenceTestResult> {
    if k.len() != l.len() {
        return Err(Error::Dimension { expected: k.len(), got: l.len() });
    }
    if k.is_empty() {
        return Err(Error::Empty("strata".into()));
    }
    for (a, b) in k.iter().zip(l) {
        check_pair(a, b)?;
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(param(format!("alpha must lie in (0, 1), got {}", config.alpha)));
    }
    let total: f64 = k.iter().map(|a| a.n as f64).sum();
    let stat_of = |t: f64| t / total;
    match config.method {
        NullMethod::Permutation => {
            if config.permutations < 200 {
                return Err(param(format!("permutation null needs at least 200 permutations, got {}", config.permutations)));
            }
            let observed: f64 = k.iter().zip(l).map(|(a, b)| pair_sums(a, b, None).0 / a.n as f64).sum();
            let exceed: usize = (0..config.permutations as u64)
                .map(|p| {
                    let null: f64 = k
                        .iter()
                        .zip(l)
                        .enumerate()
                        .map(|(e, (a, b))| {
                            let mut perm: Vec<usize> = (0..a.n).collect();
                            perm.shuffle(&mut rng::rng(rng::derive(config.seed, &[p, e as u64])));
                            pair_sums(a, b, Some(&perm)).0 / a.n as f64
                        })
                        .sum();
                    (null >= observed - 1e-12 * observed.abs()) as usize
                })
                .sum();
            let p_value = (1 + exceed) as f64 / (1 + config.permutations) as f64;
            Ok(IndependenceTestResult::new(stat_of(observed), p_value, config.alpha, config.method))
        }
        NullMethod::Gamma => {
            let (mut t, mut mean, mut var) = (0.0, 0.0, 0.0);
            for (a, b) in k.iter().zip(l) {
                let (te, me, ve) = gamma_moments(a, b)?;
                t += te;
                mean += me;
                var += ve;
            }
            Ok(IndependenceTestResult::new(stat_of(t), gamma_p_value(t, mean, var), config.alpha, config.method))
        }
    }
}
