//! Nearest-neighbour information estimators.
//!
//! [`knn_entropy`] is the Kozachenko–Leonenko estimator for scalar samples,
//! `H ≈ ψ(n) − ψ(k) + mean_i ln(2 r_{i,k})`, and [`mutual_information`] is
//! Kraskov–Stögbauer–Grassberger algorithm 1 with the max-norm in the joint
//! space. Both break exact ties (zero neighbour distances) by adding a tiny
//! deterministic jitter of `1e-10 × std` to every sample.

use std::collections::BinaryHeap;

use rand::Rng as _;
use statrs::function::gamma::digamma;

use crate::error::{param, Error, Result};
use crate::rng;

pub const DEFAULT_NEIGHBORS: usize = 3;

const JITTER_SEED: u64 = 0x6a09_e667_f3bc_c908;

fn jittered(samples: &[f64], stream: u64) -> Vec<f64> {
    let (_, std) = super::mean_and_std(samples);
    let scale = if std > 0.0 { std } else { 1.0 } * 1e-10;
    let mut r = rng::rng(rng::derive(JITTER_SEED, &[stream]));
    samples.iter().map(|v| v + scale * r.random_range(-1.0..1.0)).collect()
}

fn all_identical(samples: &[f64]) -> bool {
    samples.iter().all(|v| *v == samples[0])
}

/// Distance from each sorted point to its k-th nearest neighbour.
fn kth_distances_sorted(sorted: &[f64], k: usize) -> Vec<f64> {
    let n = sorted.len();
    (0..n)
        .map(|i| {
            // merge the two neighbour lists, taking the closer side each step
            let (mut lo, mut hi) = (i, i);
            let mut r = 0.0;
            for _ in 0..k {
                let left = if lo > 0 { sorted[i] - sorted[lo - 1] } else { f64::INFINITY };
                let right = if hi + 1 < n { sorted[hi + 1] - sorted[i] } else { f64::INFINITY };
                if left <= right {
                    lo -= 1;
                    r = left;
                } else {
                    hi += 1;
                    r = right;
                }
            }
            r
        })
        .collect()
}

/// Kozachenko–Leonenko differential entropy of scalar samples, in nats.
pub fn knn_entropy(samples: &[f64], k: usize) -> Result<f64> {
    let n = samples.len();
    if k == 0 {
        return Err(param("k must be at least 1"));
    }
    if n < k + 1 {
        return Err(param(format!("need at least k+1 = {} samples, got {n}", k + 1)));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite sample".into()));
    }
    if all_identical(samples) {
        return Err(Error::Degenerate("all samples identical".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut dist = kth_distances_sorted(&sorted, k);
    if dist.iter().any(|&r| r == 0.0) {
        sorted = jittered(&sorted, 0);
        sorted.sort_by(f64::total_cmp);
        dist = kth_distances_sorted(&sorted, k);
    }
    let mean_log = dist.iter().map(|r| (2.0 * r).ln()).sum::<f64>() / n as f64;
    Ok(digamma(n as f64) - digamma(k as f64) + mean_log)
}

/// Number of entries of `sorted` strictly within `eps` of `v`, excluding one
/// copy of `v` itself.
fn count_within(sorted: &[f64], v: f64, eps: f64) -> usize {
    // compare distances rather than shifted bounds so rounding agrees with
    // the `|x_i - x_j| < eps` definition exactly
    let lo = sorted.partition_point(|&s| v - s >= eps);
    let hi = sorted.partition_point(|&s| s - v < eps);
    hi - lo - 1
}

fn ksg(x: &[f64], y: &[f64], k: usize) -> (f64, bool) {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let mut xsorted = xs.clone();
    xsorted.sort_by(f64::total_cmp);
    let mut ysorted = ys.clone();
    ysorted.sort_by(f64::total_cmp);

    let mut acc = 0.0;
    let mut tie = false;
    let mut heap: BinaryHeap<OrdF64> = BinaryHeap::with_capacity(k + 1);
    for i in 0..n {
        heap.clear();
        let push = |heap: &mut BinaryHeap<OrdF64>, d: f64| {
            if heap.len() < k {
                heap.push(OrdF64(d));
            } else if d < heap.peek().unwrap().0 {
                heap.pop();
                heap.push(OrdF64(d));
            }
        };
        // scan outward in x order; stop once the x gap alone exceeds the
        // current k-th max-norm distance
        let (mut lo, mut hi) = (i, i + 1);
        loop {
            let bound = if heap.len() == k { heap.peek().unwrap().0 } else { f64::INFINITY };
            let left = if lo > 0 { xs[i] - xs[lo - 1] } else { f64::INFINITY };
            let right = if hi < n { xs[hi] - xs[i] } else { f64::INFINITY };
            if left.min(right) > bound || (left.is_infinite() && right.is_infinite()) {
                break;
            }
            if left <= right {
                lo -= 1;
                push(&mut heap, left.max((ys[lo] - ys[i]).abs()));
            } else {
                push(&mut heap, right.max((ys[hi] - ys[i]).abs()));
                hi += 1;
            }
        }
        let eps = heap.peek().unwrap().0;
        if eps == 0.0 {
            tie = true;
            continue;
        }
        let nx = count_within(&xsorted, xs[i], eps);
        let ny = count_within(&ysorted, ys[i], eps);
        acc += digamma(nx as f64 + 1.0) + digamma(ny as f64 + 1.0);
    }
    (digamma(k as f64) + digamma(n as f64) - acc / n as f64, tie)
}

struct OrdF64(f64);
impl PartialEq for OrdF64 {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}
impl Eq for OrdF64 {}
impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Kraskov (KSG algorithm 1) mutual information between two scalar
/// variables, in nats. Can be slightly negative from estimator noise.
pub fn mutual_information(x: &[f64], y: &[f64], k: usize) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension { expected: x.len(), got: y.len() });
    }
    if k == 0 {
        return Err(param("k must be at least 1"));
    }
    if x.len() < k + 1 {
        return Err(param(format!("need at least k+1 = {} samples, got {}", k + 1, x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite sample".into()));
    }
    if all_identical(x) || all_identical(y) {
        return Err(Error::Degenerate("all samples identical".into()));
    }
    let (mi, tie) = ksg(x, y, k);
    if !tie {
        return Ok(mi);
    }
    Ok(ksg(&jittered(x, 1), &jittered(y, 2), k).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn brute_kth(points: &[f64], k: usize) -> Vec<f64> {
        points
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let mut d: Vec<f64> = points.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, q)| (p - q).abs()).collect();
                d.sort_by(f64::total_cmp);
                d[k - 1]
            })
            .collect()
    }

    fn brute_ksg(x: &[f64], y: &[f64], k: usize) -> f64 {
        let n = x.len();
        let mut acc = 0.0;
        for i in 0..n {
            let mut d: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| (x[i] - x[j]).abs().max((y[i] - y[j]).abs())).collect();
            d.sort_by(f64::total_cmp);
            let eps = d[k - 1];
            let nx = (0..n).filter(|&j| j != i && (x[i] - x[j]).abs() < eps).count();
            let ny = (0..n).filter(|&j| j != i && (y[i] - y[j]).abs() < eps).count();
            acc += digamma(nx as f64 + 1.0) + digamma(ny as f64 + 1.0);
        }
        digamma(k as f64) + digamma(n as f64) - acc / n as f64
    }

    fn normals(seed: u64, n: usize) -> Vec<f64> {
        let mut r = rng::rng(seed);
        (0..n).map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut r)).collect()
    }

    #[test]
    fn kth_distance_matches_brute_force() {
        let pts = normals(1, 60);
        let mut sorted = pts.clone();
        sorted.sort_by(f64::total_cmp);
        for k in 1..5 {
            let mut fast = kth_distances_sorted(&sorted, k);
            let mut slow = brute_kth(&sorted, k);
            fast.sort_by(f64::total_cmp);
            slow.sort_by(f64::total_cmp);
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn ksg_matches_brute_force() {
        let x = normals(2, 150);
        let e = normals(3, 150);
        let y: Vec<f64> = x.iter().zip(&e).map(|(a, b)| a * a + 0.3 * b).collect();
        for k in [1, 3, 5] {
            let fast = mutual_information(&x, &y, k).unwrap();
            let slow = brute_ksg(&x, &y, k);
            assert!((fast - slow).abs() < 1e-12, "k={k}: {fast} vs {slow}");
        }
    }

    #[test]
    fn gaussian_entropy() {
        let h = knn_entropy(&normals(4, 4096), 3).unwrap();
        assert!((h - 1.4189385).abs() < 0.05, "{h}");
    }

    #[test]
    fn scaling_shifts_entropy_by_log_factor() {
        let x = normals(5, 4096);
        let scaled: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let d = knn_entropy(&scaled, 3).unwrap() - knn_entropy(&x, 3).unwrap();
        assert!((d - 3f64.ln()).abs() < 0.02, "{d}");
    }

    #[test]
    fn correlated_gaussian_mi() {
        let x = normals(6, 2048);
        let e = normals(7, 2048);
        let rho: f64 = 0.8;
        let y: Vec<f64> = x.iter().zip(&e).map(|(a, b)| rho * a + (1.0 - rho * rho).sqrt() * b).collect();
        let mi = mutual_information(&x, &y, 3).unwrap();
        assert!((mi - 0.5108256).abs() < 0.07, "{mi}");
        let indep = mutual_information(&x, &e, 3).unwrap();
        assert!(indep.abs() < 0.05, "{indep}");
    }

    #[test]
    fn self_information_grows_with_n() {
        let x = normals(8, 2048);
        let mut prev = f64::NEG_INFINITY;
        for n in [128, 512, 2048] {
            let mi = mutual_information(&x[..n], &x[..n], 3).unwrap();
            assert!(mi > prev);
            prev = mi;
        }
    }

    #[test]
    fn duplicates_are_jittered() {
        let mut x = normals(9, 200);
        for i in 0..50 {
            x[i] = 0.25;
        }
        let h = knn_entropy(&x, 3).unwrap();
        assert!(h.is_finite());
        let mi = mutual_information(&x, &x, 3).unwrap();
        assert!(mi.is_finite());
    }

    #[test]
    fn preconditions() {
        assert!(knn_entropy(&[1.0, 2.0, 3.0], 3).is_err());
        assert!(knn_entropy(&[1.0; 10], 3).is_err());
        assert!(mutual_information(&[1.0, 2.0], &[1.0], 1).is_err());
    }
}
