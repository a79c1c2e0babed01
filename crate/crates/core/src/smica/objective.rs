//! Score-matching objective for piecewise-stationary linear ICA.
//!
//! Within segment `e` the model log-density of a whitened observation `z` is
//! `−Σ_j λ_j(e) q(w_j·z)` up to a normalizer, with `λ ≥ 0`. Its score-matching
//! objective, with `y_j = w_j·z`, `G_jk = w_j·w_k` and means taken within
//! each segment, is
//!
//! ```text
//! J = Σ_e [ −Σ_j λ_j(e) mean q''(y_j) + ½ Σ_jk λ_j(e) λ_k(e) G_jk mean q'(y_j) q'(y_k) ]
//!   = Σ_e [ −λ(e)·b(e) + ½ λ(e)ᵀ M(e) λ(e) ]
//! ```
//!
//! so for fixed `W` each segment's `λ(e)` solves a nonnegative quadratic
//! program with matrix `M(e) + 1e-8 I`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const RIDGE: f64 = 1e-8;
const SMOOTH_ABS_EPS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `q(y) = ln cosh y`.
    LogCosh,
    /// `q(y) = sqrt(y² + 1e-4)`, a smoothed `|y|`.
    SmoothAbs,
}

impl Family {
    /// `(q', q'', q''')` at `y`.
    #[inline]
    pub fn derivs(self, y: f64) -> (f64, f64, f64) {
        match self {
            Family::LogCosh => {
                let t = y.tanh();
                let s = 1.0 - t * t;
                (t, s, -2.0 * t * s)
            }
            Family::SmoothAbs => {
                let r2 = y * y + SMOOTH_ABS_EPS;
                let r = r2.sqrt();
                (y / r, SMOOTH_ABS_EPS / (r2 * r), -3.0 * SMOOTH_ABS_EPS * y / (r2 * r2 * r))
            }
        }
    }

    pub fn q(self, y: f64) -> f64 {
        match self {
            // ln cosh y = |y| + ln(1 + e^{-2|y|}) - ln 2, stable for large |y|
            Family::LogCosh => y.abs() + (-2.0 * y.abs()).exp().ln_1p() - std::f64::consts::LN_2,
            Family::SmoothAbs => (y * y + SMOOTH_ABS_EPS).sqrt(),
        }
    }
}

/// Observations grouped contiguously by segment, row-major.
#[derive(Debug, Clone)]
pub struct SegmentedRows {
    pub data: Vec<f64>,
    pub dim: usize,
    /// Row ranges of each segment in `data`.
    pub bounds: Vec<(usize, usize)>,
    /// `order[r]` is the original row index of stored row `r`.
    pub order: Vec<usize>,
}

impl SegmentedRows {
    /// Group rows of `z` (row-major `n × dim`) by label.
    pub fn new(z: &[f64], dim: usize, labels: &[usize]) -> Result<Self> {
        let n = labels.len();
        if z.len() != n * dim {
            return Err(Error::Dimension { expected: n * dim, got: z.len() });
        }
        let segments = labels.iter().max().map_or(0, |m| m + 1);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| labels[i]);
        let mut bounds = vec![(0, 0); segments];
        let mut start = 0;
        for (e, b) in bounds.iter_mut().enumerate() {
            let len = labels.iter().filter(|&&l| l == e).count();
            if len == 0 {
                return Err(Error::Empty(format!("segment {e}")));
            }
            *b = (start, start + len);
            start += len;
        }
        let mut data = Vec::with_capacity(z.len());
        for &i in &order {
            data.extend_from_slice(&z[i * dim..(i + 1) * dim]);
        }
        Ok(Self { data, dim, bounds, order })
    }

    pub fn n_segments(&self) -> usize {
        self.bounds.len()
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }
}

/// Per-segment moments at a given `W`.
struct Moments {
    /// `b(e)_j = mean q''(y_j)`.
    b: Vec<DVector<f64>>,
    /// `C(e)_jk = mean q'(y_j) q'(y_k)`.
    c: Vec<DMatrix<f64>>,
}

fn project(w: &DMatrix<f64>, z: &[f64], y: &mut [f64]) {
    for (j, yj) in y.iter_mut().enumerate() {
        *yj = (0..z.len()).map(|k| w[(j, k)] * z[k]).sum();
    }
}

fn moments(w: &DMatrix<f64>, rows: &SegmentedRows, family: Family) -> Moments {
    let d = rows.dim;
    let mut y = vec![0.0; d];
    let mut q1 = vec![0.0; d];
    let mut out = Moments { b: Vec::new(), c: Vec::new() };
    for &(s, t) in &rows.bounds {
        let mut b = DVector::zeros(d);
        let mut c = DMatrix::zeros(d, d);
        for r in s..t {
            project(w, rows.row(r), &mut y);
            for j in 0..d {
                let (d1, d2, _) = family.derivs(y[j]);
                q1[j] = d1;
                b[j] += d2;
            }
            for j in 0..d {
                for k in 0..=j {
                    c[(j, k)] += q1[j] * q1[k];
                }
            }
        }
        let inv = 1.0 / (t - s) as f64;
        b *= inv;
        for j in 0..d {
            for k in 0..=j {
                c[(j, k)] *= inv;
                c[(k, j)] = c[(j, k)];
            }
        }
        out.b.push(b);
        out.c.push(c);
    }
    out
}

fn system(w: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let g = w * w.transpose();
    g.component_mul(c)
}

fn segment_objective(lambda: &DVector<f64>, b: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    -lambda.dot(b) + 0.5 * lambda.dot(&(m * lambda))
}

/// Objective value at `(W, λ)`; `lambdas` is `E × d`.
pub fn sm_objective(w: &DMatrix<f64>, lambdas: &DMatrix<f64>, rows: &SegmentedRows, family: Family) -> Result<f64> {
    check_shapes(w, lambdas, rows)?;
    let mo = moments(w, rows, family);
    Ok((0..rows.n_segments())
        .map(|e| {
            let lam = lambdas.row(e).transpose();
            segment_objective(&lam, &mo.b[e], &system(w, &mo.c[e]))
        })
        .sum())
}

fn check_shapes(w: &DMatrix<f64>, lambdas: &DMatrix<f64>, rows: &SegmentedRows) -> Result<()> {
    let d = rows.dim;
    if w.nrows() != d || w.ncols() != d {
        return Err(Error::Dimension { expected: d, got: w.nrows() });
    }
    if lambdas.nrows() != rows.n_segments() || lambdas.ncols() != d {
        return Err(Error::Dimension { expected: rows.n_segments(), got: lambdas.nrows() });
    }
    Ok(())
}

/// Euclidean gradient of [`sm_objective`] with respect to `W`.
pub fn sm_grad_w(w: &DMatrix<f64>, lambdas: &DMatrix<f64>, rows: &SegmentedRows, family: Family) -> Result<DMatrix<f64>> {
    check_shapes(w, lambdas, rows)?;
    let d = rows.dim;
    let mo = moments(w, rows, family);
    let g = w * w.transpose();
    let mut grad = DMatrix::zeros(d, d);
    let (mut y, mut q1, mut q2, mut q3) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    for (e, &(s, t)) in rows.bounds.iter().enumerate() {
        let lam: Vec<f64> = lambdas.row(e).iter().copied().collect();
        let inv = 1.0 / (t - s) as f64;
        // coefficient of z in row m: −λ_m q'''(y_m) + λ_m q''(y_m) Σ_k λ_k G_mk q'(y_k)
        for r in s..t {
            let z = rows.row(r);
            project(w, z, &mut y);
            for j in 0..d {
                (q1[j], q2[j], q3[j]) = family.derivs(y[j]);
            }
            for m in 0..d {
                if lam[m] == 0.0 {
                    continue;
                }
                let cross: f64 = (0..d).map(|k| lam[k] * g[(m, k)] * q1[k]).sum();
                let coef = lam[m] * (q2[m] * cross - q3[m]) * inv;
                for (col, zc) in z.iter().enumerate() {
                    grad[(m, col)] += coef * zc;
                }
            }
        }
        // Σ_k λ_m λ_k C_mk w_k
        let c = &mo.c[e];
        for m in 0..d {
            for k in 0..d {
                let f = lam[m] * lam[k] * c[(m, k)];
                if f != 0.0 {
                    for col in 0..d {
                        grad[(m, col)] += f * w[(k, col)];
                    }
                }
            }
        }
    }
    Ok(grad)
}

/// Minimize `½ λᵀMλ − bᵀλ` over `λ ≥ 0`.
fn nonneg_qp(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let d = b.len();
    let m = m + DMatrix::identity(d, d) * RIDGE;
    let solve = |idx: &[usize]| -> Option<DVector<f64>> {
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, c| m[(idx[a], idx[c])]);
        let rhs = DVector::from_iterator(idx.len(), idx.iter().map(|&i| b[i]));
        sub.cholesky().map(|ch| ch.solve(&rhs))
    };
    let all: Vec<usize> = (0..d).collect();
    let full = solve(&all).ok_or_else(|| Error::Singular("segment moment matrix".into()))?;
    if full.iter().all(|&v| v >= 0.0) {
        return Ok(full);
    }
    if d <= 12 {
        // KKT search over active sets; M is positive definite so exactly one
        // subset satisfies the conditions
        let mut best: Option<(f64, DVector<f64>)> = None;
        for mask in 0u32..(1 << d) {
            let idx: Vec<usize> = (0..d).filter(|&i| mask & (1 << i) != 0).collect();
            let mut lam = DVector::zeros(d);
            if !idx.is_empty() {
                let Some(sol) = solve(&idx) else { continue };
                if sol.iter().any(|&v| v < 0.0) {
                    continue;
                }
                for (a, &i) in idx.iter().enumerate() {
                    lam[i] = sol[a];
                }
            }
            let val = 0.5 * lam.dot(&(&m * &lam)) - b.dot(&lam);
            if best.as_ref().is_none_or(|(v, _)| val < *v) {
                best = Some((val, lam));
            }
        }
        return best.map(|(_, l)| l).ok_or_else(|| Error::Singular("nonnegative λ system".into()));
    }
    // projected coordinate descent for larger systems
    let mut lam = full.map(|v| v.max(0.0));
    for _ in 0..10_000 {
        let mut change: f64 = 0.0;
        for i in 0..d {
            let r = b[i] - (0..d).filter(|&k| k != i).map(|k| m[(i, k)] * lam[k]).sum::<f64>();
            let v = (r / m[(i, i)]).max(0.0);
            change = change.max((v - lam[i]).abs());
            lam[i] = v;
        }
        if change < 1e-14 {
            break;
        }
    }
    Ok(lam)
}

/// Optimal nonnegative `λ` for every segment given `W`.
pub fn lambda_closed_form(w: &DMatrix<f64>, rows: &SegmentedRows, family: Family) -> Result<DMatrix<f64>> {
    let d = rows.dim;
    let mo = moments(w, rows, family);
    let mut out = DMatrix::zeros(rows.n_segments(), d);
    for e in 0..rows.n_segments() {
        let lam = nonneg_qp(&system(w, &mo.c[e]), &mo.b[e])?;
        out.row_mut(e).copy_from(&lam.transpose());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    pub(crate) fn random_instance(seed: u64, d: usize, e: usize, n: usize) -> (DMatrix<f64>, DMatrix<f64>, SegmentedRows) {
        let mut r = rng::rng(seed);
        let w = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut r));
        let lam = DMatrix::from_fn(e, d, |_, _| r.random_range(0.1..2.0));
        let z: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut r)).collect();
        let labels: Vec<usize> = (0..n).map(|i| i % e).collect();
        (w, lam, SegmentedRows::new(&z, d, &labels).unwrap())
    }

    #[test]
    fn family_derivatives_match_finite_differences() {
        for fam in [Family::LogCosh, Family::SmoothAbs] {
            for &y in &[-2.0, -0.3, 0.05, 0.7, 3.1] {
                let h = 1e-6;
                let (d1, d2, d3) = fam.derivs(y);
                let fd1 = (fam.q(y + h) - fam.q(y - h)) / (2.0 * h);
                let fd2 = (fam.derivs(y + h).0 - fam.derivs(y - h).0) / (2.0 * h);
                let fd3 = (fam.derivs(y + h).1 - fam.derivs(y - h).1) / (2.0 * h);
                assert!((d1 - fd1).abs() < 1e-6 * (1.0 + d1.abs()), "{fam:?} q' at {y}");
                assert!((d2 - fd2).abs() < 1e-5 * (1.0 + d2.abs()), "{fam:?} q'' at {y}");
                assert!((d3 - fd3).abs() < 1e-4 * (1.0 + d3.abs()), "{fam:?} q''' at {y}");
            }
        }
    }

    #[test]
    fn zero_lambda_gives_zero() {
        let (w, lam, rows) = random_instance(1, 3, 4, 40);
        let zero = DMatrix::zeros(lam.nrows(), lam.ncols());
        assert_eq!(sm_objective(&w, &zero, &rows, Family::LogCosh).unwrap(), 0.0);
        assert!(sm_grad_w(&w, &zero, &rows, Family::LogCosh).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_evaluated_scalar_case() {
        // d = 1, one segment, z = (−1, 0.5, 2), w = 0.8, λ = 1.3
        let z = [-1.0, 0.5, 2.0];
        let rows = SegmentedRows::new(&z, 1, &[0, 0, 0]).unwrap();
        let (w, lam) = (0.8f64, 1.3f64);
        let (mut mq2, mut mq1sq) = (0.0, 0.0);
        for v in z {
            let t = (w * v).tanh();
            mq2 += (1.0 - t * t) / 3.0;
            mq1sq += t * t / 3.0;
        }
        let expect = -lam * mq2 + 0.5 * lam * lam * w * w * mq1sq;
        let got = sm_objective(&DMatrix::from_element(1, 1, w), &DMatrix::from_element(1, 1, lam), &rows, Family::LogCosh).unwrap();
        assert!((got - expect).abs() < 1e-12);
        // scalar closed form λ = mean q'' / (w² mean q'²)
        let l = lambda_closed_form(&DMatrix::from_element(1, 1, w), &rows, Family::LogCosh).unwrap();
        assert!((l[(0, 0)] - mq2 / (w * w * mq1sq + RIDGE)).abs() < 1e-12);
    }

    #[test]
    fn objective_ignores_row_order_within_segments() {
        let (w, lam, rows) = random_instance(2, 2, 3, 30);
        let mut shuffled = rows.clone();
        let (s, t) = shuffled.bounds[1];
        let d = shuffled.dim;
        let seg: Vec<f64> = shuffled.data[s * d..t * d].to_vec();
        let len = t - s;
        for r in 0..len {
            let src = len - 1 - r;
            shuffled.data[(s + r) * d..(s + r + 1) * d].copy_from_slice(&seg[src * d..(src + 1) * d]);
        }
        let a = sm_objective(&w, &lam, &rows, Family::LogCosh).unwrap();
        let b = sm_objective(&w, &lam, &shuffled, Family::LogCosh).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    /// Largest elementwise relative error of the analytic gradient.
    pub(crate) fn gradient_error(seed: u64, family: Family) -> f64 {
        let (w, lam, rows) = random_instance(seed, 2, 3, 60);
        let g = sm_grad_w(&w, &lam, &rows, family).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp[(i, j)] += h;
                wm[(i, j)] -= h;
                let fd = (sm_objective(&wp, &lam, &rows, family).unwrap() - sm_objective(&wm, &lam, &rows, family).unwrap()) / (2.0 * h);
                worst = worst.max((fd - g[(i, j)]).abs() / (fd.abs() + g[(i, j)].abs()).max(1e-8));
            }
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..20 {
            let err = gradient_error(seed, Family::LogCosh);
            assert!(err < 1e-5, "seed {seed}: {err}");
        }
    }

    #[test]
    fn closed_form_is_locally_optimal() {
        let (w, _, rows) = random_instance(3, 3, 4, 200);
        let lam = lambda_closed_form(&w, &rows, Family::LogCosh).unwrap();
        assert!(lam.iter().all(|&v| v >= 0.0));
        let base = sm_objective(&w, &lam, &rows, Family::LogCosh).unwrap();
        let mut r = rng::rng(4);
        for _ in 0..100 {
            let pert = lam.map(|v| (v + r.random_range(-0.05..0.05)).max(0.0));
            assert!(sm_objective(&w, &pert, &rows, Family::LogCosh).unwrap() >= base - 1e-12);
        }
    }

    #[test]
    fn nonneg_qp_matches_brute_force_grid() {
        // indefinite-sign b forces active constraints
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.5, 1.5, 2.0]);
        let b = DVector::from_row_slice(&[1.0, -0.5]);
        let lam = nonneg_qp(&m, &b).unwrap();
        assert!((lam[0] - 0.5).abs() < 1e-6 && lam[1] == 0.0);
        let f = |l: &DVector<f64>| 0.5 * l.dot(&(&m * l)) - b.dot(l);
        let mut best = f64::INFINITY;
        for i in 0..200 {
            for j in 0..200 {
                best = best.min(f(&DVector::from_row_slice(&[i as f64 * 0.01, j as f64 * 0.01])));
            }
        }
        assert!(f(&lam) <= best + 1e-9);
    }
}
