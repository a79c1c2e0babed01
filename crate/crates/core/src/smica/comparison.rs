//! Reference unmixers for benchmarking.

use nalgebra::DMatrix;

use super::{random_orthogonal, whiten_rows, whitening};
use crate::error::{Error, Result};

fn symmetric_decorrelate(w: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = (w * w.transpose()).symmetric_eigen();
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
    &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose() * w
}

/// Symmetric FastICA with the log-cosh contrast. Ignores segment labels.
/// Returns the unmixing for centred raw data.
pub fn fastica(z: &DMatrix<f64>, max_iter: usize, seed: u64) -> Result<DMatrix<f64>> {
    let (v, mean) = whitening(z)?;
    let d = z.ncols();
    let n = z.nrows();
    let white = whiten_rows(z, &v, &mean);
    let mut w = random_orthogonal(d, seed);
    for _ in 0..max_iter {
        let mut next = DMatrix::zeros(d, d);
        for m in 0..d {
            let mut dg = 0.0;
            for i in 0..n {
                let x = &white[i * d..(i + 1) * d];
                let y: f64 = (0..d).map(|k| w[(m, k)] * x[k]).sum();
                let g = y.tanh();
                dg += 1.0 - g * g;
                for k in 0..d {
                    next[(m, k)] += g * x[k];
                }
            }
            for k in 0..d {
                next[(m, k)] = (next[(m, k)] - dg * w[(m, k)]) / n as f64;
            }
        }
        let next = symmetric_decorrelate(&next);
        let change = (0..d).map(|m| 1.0 - next.row(m).dot(&w.row(m)).abs()).fold(0.0, f64::max);
        w = next;
        if !change.is_finite() {
            return Err(Error::Optimization("FastICA diverged".into()));
        }
        if change < 1e-10 {
            break;
        }
    }
    Ok(w * v)
}

/// Jacobi joint diagonalization of the per-segment covariances of the
/// whitened data. Uses second-order nonstationarity only.
pub fn joint_diagonalization(z: &DMatrix<f64>, labels: &[usize]) -> Result<DMatrix<f64>> {
    if z.nrows() != labels.len() {
        return Err(Error::Dimension { expected: z.nrows(), got: labels.len() });
    }
    let (v, mean) = whitening(z)?;
    let d = z.ncols();
    let white = whiten_rows(z, &v, &mean);
    let n_seg = labels.iter().max().map_or(0, |m| m + 1);
    let mut sums = vec![vec![0.0; d]; n_seg];
    let mut counts = vec![0usize; n_seg];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for k in 0..d {
            sums[l][k] += white[i * d + k];
        }
    }
    let mut covs: Vec<DMatrix<f64>> = vec![DMatrix::zeros(d, d); n_seg];
    for (i, &l) in labels.iter().enumerate() {
        let c = counts[l] as f64;
        for a in 0..d {
            let xa = white[i * d + a] - sums[l][a] / c;
            for b in 0..d {
                covs[l][(a, b)] += xa * (white[i * d + b] - sums[l][b] / c) / c;
            }
        }
    }
    let mut covs: Vec<DMatrix<f64>> = covs.into_iter().zip(&counts).filter(|(_, &c)| c > 1).map(|(m, _)| m).collect();
    let mut rot = DMatrix::<f64>::identity(d, d);
    for _ in 0..100 {
        let mut rotated = false;
        for p in 0..d {
            for q in p + 1..d {
                let (mut g1g1, mut g2g2, mut toff) = (0.0, 0.0, 0.0);
                for a in &covs {
                    let g1 = a[(p, p)] - a[(q, q)];
                    let g2 = a[(p, q)] + a[(q, p)];
                    g1g1 += g1 * g1;
                    g2g2 += g2 * g2;
                    toff += 2.0 * g1 * g2;
                }
                let ton = g1g1 - g2g2;
                let theta = 0.5 * toff.atan2(ton + (ton * ton + toff * toff).sqrt());
                let (s, c) = theta.sin_cos();
                if s.abs() <= 1e-12 {
                    continue;
                }
                rotated = true;
                let mut g = DMatrix::<f64>::identity(d, d);
                g[(p, p)] = c;
                g[(q, q)] = c;
                g[(p, q)] = -s;
                g[(q, p)] = s;
                for a in covs.iter_mut() {
                    *a = g.transpose() * &*a * &g;
                }
                rot = rot * g;
            }
        }
        if !rotated {
            break;
        }
    }
    Ok(rot.transpose() * v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_sources, LambdaScheme, SourceFamily};
    use crate::stats::matched_abs_correlation;

    fn mixed(seed: u64) -> (DMatrix<f64>, DMatrix<f64>, Vec<usize>) {
        let (p, labels) = gen_sources(3, 8, 500, SourceFamily::LaplaceVariance, LambdaScheme::RandomScale, seed).unwrap();
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, -0.2, 0.3, 1.0, 0.4, -0.6, 0.2, 1.0]);
        let z = &p.sources * a.transpose();
        (p.sources, z, labels)
    }

    fn recovered(z: &DMatrix<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
        let mean = z.row_mean();
        let mut c = z.clone();
        for mut r in c.row_iter_mut() {
            r -= &mean;
        }
        c * u.transpose()
    }

    #[test]
    fn joint_diagonalization_recovers_variance_modulated_sources() {
        let (s, z, labels) = mixed(1);
        let u = joint_diagonalization(&z, &labels).unwrap();
        let (score, _) = matched_abs_correlation(&recovered(&z, &u), &s);
        assert!(score > 0.95, "{score}");
    }

    #[test]
    fn fastica_recovers_laplace_sources() {
        let (s, z, _) = mixed(2);
        let u = fastica(&z, 500, 0).unwrap();
        let (score, _) = matched_abs_correlation(&recovered(&z, &u), &s);
        assert!(score > 0.9, "{score}");
    }
}
