//! Statistical primitives shared by the discovery procedures and baselines.
//!
//! * [`hsic`]: Hilbert–Schmidt independence criterion with Gaussian kernels,
//!   median-heuristic bandwidths and either a permutation or a moment-matched
//!   gamma null distribution.
//! * [`entropy`]: Kozachenko–Leonenko differential entropy and the Kraskov
//!   (KSG, algorithm 1) mutual information estimator.
//! * [`ks`]: two-sample Kolmogorov–Smirnov test.
//! * [`standardize`]: zero-mean, unit-variance rescaling (population
//!   convention, divides by `n`).

pub mod entropy;
pub mod hsic;
pub mod ks;
mod standardize;

pub use entropy::{knn_entropy, mutual_information, DEFAULT_NEIGHBORS};
pub use hsic::{
    hsic_statistic, hsic_statistic_prepared, hsic_test, hsic_test_prepared, median_distance, stratified_hsic_test, Bandwidth, HsicConfig,
    IndependenceTestResult, NullMethod, Points, PreparedKernel,
};
pub use ks::{ks_two_sample, KsResult};
pub use standardize::{mean_and_std, standardize, Standardized};

/// Pearson correlation. Returns 0 when either input is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Average ranks (ties share the mean rank).
pub fn ranks(a: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..a.len()).collect();
    idx.sort_by(|&i, &j| a[i].total_cmp(&a[j]));
    let mut out = vec![0.0; a.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && a[idx[end]] == a[idx[start]] {
            end += 1;
        }
        let r = (start + end - 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            out[i] = r;
        }
        start = end;
    }
    out
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&ranks(a), &ranks(b))
}

/// Assignment maximizing `Σ_i score[(i, perm[i])]` over permutations of a
/// square matrix. Exact subset DP, fine up to about 20 columns.
pub fn best_assignment(score: &nalgebra::DMatrix<f64>) -> Vec<usize> {
    let d = score.nrows();
    assert_eq!(d, score.ncols(), "score matrix must be square");
    assert!(d <= 20, "assignment is exponential in the dimension");
    let full = 1usize << d;
    let mut best = vec![f64::NEG_INFINITY; full];
    let mut choice = vec![0usize; full];
    best[0] = 0.0;
    for mask in 0..full {
        if best[mask] == f64::NEG_INFINITY {
            continue;
        }
        let row = mask.count_ones() as usize;
        if row == d {
            continue;
        }
        for col in 0..d {
            if mask & (1 << col) == 0 {
                let next = mask | (1 << col);
                let v = best[mask] + score[(row, col)];
                if v > best[next] {
                    best[next] = v;
                    choice[next] = col;
                }
            }
        }
    }
    let mut perm = vec![0; d];
    let mut mask = full - 1;
    for row in (0..d).rev() {
        perm[row] = choice[mask];
        mask &= !(1 << choice[mask]);
    }
    perm
}

/// Mean absolute correlation between the columns of `truth` and their best
/// matching columns of `estimate`. Returns the score and, for each truth
/// column `j`, the index of its matched estimate column.
pub fn matched_abs_correlation(estimate: &nalgebra::DMatrix<f64>, truth: &nalgebra::DMatrix<f64>) -> (f64, Vec<usize>) {
    let d = truth.ncols();
    assert_eq!(estimate.ncols(), d);
    let cols = |m: &nalgebra::DMatrix<f64>| (0..d).map(|j| m.column(j).iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>();
    let (t, e) = (cols(truth), cols(estimate));
    let score = nalgebra::DMatrix::from_fn(d, d, |i, j| pearson(&t[i], &e[j]).abs());
    let perm = best_assignment(&score);
    let mean = perm.iter().enumerate().map(|(i, &j)| score[(i, j)]).sum::<f64>() / d as f64;
    (mean, perm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_is_one_for_monotone_maps() {
        let a: Vec<f64> = (0..50).map(|i| i as f64 * 0.3 - 4.0).collect();
        let b: Vec<f64> = a.iter().map(|v| v.powi(3) + 2.0).collect();
        assert!((spearman(&a, &b) - 1.0).abs() < 1e-12);
    }

    fn permutations(d: usize) -> Vec<Vec<usize>> {
        if d == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(d - 1) {
            for pos in 0..d {
                let mut q = p.clone();
                q.insert(pos, d - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn assignment_matches_enumeration() {
        use rand::Rng;
        let mut r = crate::rng::rng(3);
        for d in 1..=6 {
            for _ in 0..20 {
                let m = nalgebra::DMatrix::from_fn(d, d, |_, _| r.random::<f64>());
                let value = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| m[(i, j)]).sum::<f64>();
                let brute = permutations(d).iter().map(|p| value(p)).fold(f64::NEG_INFINITY, f64::max);
                assert!((value(&best_assignment(&m)) - brute).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matched_correlation_undoes_signed_permutation() {
        let t = nalgebra::DMatrix::from_fn(40, 3, |i, j| ((i * (j + 2)) as f64 * 0.7).sin() + j as f64 * (i as f64).cos());
        let e = nalgebra::DMatrix::from_fn(40, 3, |i, j| match j {
            0 => -2.0 * t[(i, 2)],
            1 => t[(i, 0)] + 1.0,
            _ => 0.5 * t[(i, 1)],
        });
        let (score, perm) = matched_abs_correlation(&e, &t);
        assert!((score - 1.0).abs() < 1e-12);
        assert_eq!(perm, vec![1, 2, 0]);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![2.5, 0.0, 2.5, 1.0]);
    }
}
