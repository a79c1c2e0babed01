use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::rng::{self, Rng};

/// Range of the per-segment scale parameters.
pub const LAMBDA_RANGE: (f64, f64) = (0.2, 2.0);

/// Proposal draws allowed per accepted sample in the rejection sampler.
const REJECTION_BUDGET: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFamily {
    /// Laplace(0, λ) per segment; variance `2λ²`.
    LaplaceVariance,
    /// Skewed density `∝ exp(−cλ|s| − s²/2)` with `c = 3` for `s ≥ 0` and
    /// `c = 1` otherwise. Sampled exactly by rejection from `N(0, 1)`.
    OddUnnormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaScheme {
    /// Every `λ_j(e)` independent uniform on `[0.2, 2]`.
    RandomScale,
    /// Each source's parameters increase with the segment index, so scales
    /// are positively correlated across sources.
    MonotoneScale,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourcePanel {
    /// `n_tot × d`.
    pub sources: DMatrix<f64>,
    /// `E × d`, entry `(e, j)` is `λ_j(e)`.
    pub lambdas: DMatrix<f64>,
    pub family: SourceFamily,
}

impl SourcePanel {
    /// The stationary term shared by all segments, if the family has one.
    pub fn baseline(&self) -> Option<&'static str> {
        match self.family {
            SourceFamily::LaplaceVariance => None,
            SourceFamily::OddUnnormalized => Some("-s^2/2"),
        }
    }
}

fn draw_lambdas(d: usize, e: usize, scheme: LambdaScheme, r: &mut Rng) -> DMatrix<f64> {
    let (lo, hi) = LAMBDA_RANGE;
    let mut lambdas = DMatrix::from_fn(e, d, |_, _| r.random_range(lo..hi));
    if scheme == LambdaScheme::MonotoneScale {
        for j in 0..d {
            let mut col: Vec<f64> = lambdas.column(j).iter().copied().collect();
            col.sort_by(f64::total_cmp);
            lambdas.column_mut(j).copy_from_slice(&col);
        }
    }
    lambdas
}

fn sample_laplace(scale: f64, r: &mut Rng) -> f64 {
    let a: f64 = Exp1.sample(r);
    let b: f64 = Exp1.sample(r);
    scale * (a - b)
}

fn sample_odd(lambda: f64, r: &mut Rng) -> Result<f64> {
    for _ in 0..REJECTION_BUDGET {
        let s: f64 = StandardNormal.sample(r);
        let c = if s >= 0.0 { 3.0 } else { 1.0 };
        if r.random::<f64>() < (-c * lambda * s.abs()).exp() {
            return Ok(s);
        }
    }
    Err(Error::Sampling(format!("rejection sampler exhausted its budget at lambda = {lambda}")))
}

/// Draw `E · n_e` rows of piecewise-stationary sources. Rows are grouped by
/// segment: labels are `0,…,0, 1,…,1, …`.
pub fn gen_sources(
    d: usize,
    n_segments: usize,
    n_per_segment: usize,
    family: SourceFamily,
    scheme: LambdaScheme,
    seed: u64,
) -> Result<(SourcePanel, Vec<usize>)> {
    if d < 2 {
        return Err(param(format!("dimension must be at least 2, got {d}")));
    }
    if n_segments < 3 {
        return Err(param(format!("at least 3 distinct segments are required for identifiability, got {n_segments}")));
    }
    if n_per_segment < 2 {
        return Err(param(format!("each segment needs at least 2 rows, got {n_per_segment}")));
    }
    let mut r = rng::rng(seed);
    let lambdas = draw_lambdas(d, n_segments, scheme, &mut r);
    let n = n_segments * n_per_segment;
    let mut sources = DMatrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for e in 0..n_segments {
        for i in 0..n_per_segment {
            let row = e * n_per_segment + i;
            for j in 0..d {
                let lam = lambdas[(e, j)];
                sources[(row, j)] = match family {
                    SourceFamily::LaplaceVariance => sample_laplace(lam, &mut r),
                    SourceFamily::OddUnnormalized => sample_odd(lam, &mut r)?,
                };
            }
            labels.push(e);
        }
    }
    Ok((SourcePanel { sources, lambdas, family }, labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankCheck {
    pub full_rank: bool,
    pub rank: usize,
    pub condition_number: f64,
}

/// Whether the differenced parameter matrix `L_{e,i} = λ_i(e) − λ_i(0)` has
/// full column rank, judged by singular values above `1e-10 × σ_max`.
pub fn check_rank_condition(lambdas: &DMatrix<f64>) -> RankCheck {
    let d = lambdas.ncols();
    let l = DMatrix::from_fn(lambdas.nrows(), d, |e, i| lambdas[(e, i)] - lambdas[(0, i)]);
    let sv = l.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let rank = if max > 0.0 { sv.iter().filter(|&&s| s > 1e-10 * max).count() } else { 0 };
    let condition_number = if min > 0.0 { max / min } else { f64::INFINITY };
    RankCheck { full_rank: rank == d, rank, condition_number }
}
