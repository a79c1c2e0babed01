//! The PC algorithm with Fisher-z partial-correlation tests.
//!
//! Skeleton search removes an edge as soon as some conditioning set of the
//! current size (drawn from the adjacency sets frozen at the start of that
//! size) makes the pair independent. Unshielded triples whose middle node is
//! outside the separating set become v-structures; Meek rules 1–3 then
//! propagate orientations to a fixpoint.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::dag::Dag;
use crate::error::{param, Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcResult {
    pub dag: Dag,
    /// Separating set found for each removed pair (`i < j`).
    pub sepsets: Vec<((usize, usize), Vec<usize>)>,
    pub tests_run: usize,
}

fn correlation(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows() as f64;
    let mean = x.row_mean();
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= &mean;
    }
    let cov = c.transpose() * &c / n;
    let d = x.ncols();
    for j in 0..d {
        if !(cov[(j, j)] > 1e-12 * cov.diagonal().amax().max(f64::MIN_POSITIVE)) {
            return Err(Error::Degenerate(format!("column {} is constant", j + 1)));
        }
    }
    Ok(DMatrix::from_fn(d, d, |i, j| cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt()))
}

/// Partial correlation of `i` and `j` given `cond`.
pub fn partial_correlation(corr: &DMatrix<f64>, i: usize, j: usize, cond: &[usize]) -> Result<f64> {
    if cond.is_empty() {
        return Ok(corr[(i, j)]);
    }
    let idx: Vec<usize> = [i, j].iter().chain(cond).copied().collect();
    let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, b| corr[(idx[a], idx[b])]);
    let prec = sub.try_inverse().ok_or_else(|| Error::Singular("conditioning set is collinear".into()))?;
    Ok((-prec[(0, 1)] / (prec[(0, 0)] * prec[(1, 1)]).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided Fisher-z p-value for a partial correlation.
pub fn fisher_z_p_value(r: f64, n: usize, cond_size: usize) -> f64 {
    let dof = n as f64 - cond_size as f64 - 3.0;
    if dof <= 0.0 {
        return 1.0;
    }
    let r = r.clamp(-1.0 + 1e-15, 1.0 - 1e-15);
    let z = 0.5 * ((1.0 + r) / (1.0 - r)).ln() * dof.sqrt();
    2.0 * (1.0 - Normal::standard().cdf(z.abs()))
}

fn subsets(items: &[usize], size: usize) -> Vec<Vec<usize>> {
    if size == 0 {
        return vec![vec![]];
    }
    if items.len() < size {
        return vec![];
    }
    let mut out = Vec::new();
    for (k, &first) in items.iter().enumerate() {
        for mut rest in subsets(&items[k + 1..], size - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// PC on the rows of `x` (pooled over segments).
pub fn pc_skeleton_orient(x: &DMatrix<f64>, alpha: f64) -> Result<PcResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(param(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let d = x.ncols();
    let n = x.nrows();
    if d < 2 {
        return Err(param("PC needs at least two variables"));
    }
    let corr = correlation(x)?;
    let mut g = Dag::complete(d);
    let mut sep: Vec<Vec<Option<Vec<usize>>>> = vec![vec![None; d]; d];
    let mut tests_run = 0;
    let mut level = 0;
    loop {
        let frozen: Vec<Vec<usize>> = (0..d).map(|i| g.neighbours(i)).collect();
        if frozen.iter().all(|a| a.len() < level + 1) {
            break;
        }
        for i in 0..d {
            for j in 0..d {
                if i == j || !g.adjacent(i, j) {
                    continue;
                }
                let others: Vec<usize> = frozen[i].iter().copied().filter(|&k| k != j).collect();
                for s in subsets(&others, level) {
                    tests_run += 1;
                    let r = partial_correlation(&corr, i, j, &s)?;
                    if fisher_z_p_value(r, n, s.len()) > alpha {
                        g.remove(i, j);
                        sep[i][j] = Some(s.clone());
                        sep[j][i] = Some(s);
                        break;
                    }
                }
            }
        }
        level += 1;
    }

    // v-structures i → k ← j
    for k in 0..d {
        let nb = g.neighbours(k);
        for (a, &i) in nb.iter().enumerate() {
            for &j in &nb[a + 1..] {
                if g.adjacent(i, j) {
                    continue;
                }
                let in_sep = sep[i][j].as_ref().is_some_and(|s| s.contains(&k));
                // orient only edges still undirected so earlier choices stay
                if !in_sep && !g.is_directed(k, i) && !g.is_directed(k, j) {
                    g.orient(i, k);
                    g.orient(j, k);
                }
            }
        }
    }
    apply_meek_rules(&mut g);

    let mut sepsets = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            if let Some(s) = &sep[i][j] {
                sepsets.push(((i, j), s.clone()));
            }
        }
    }
    Ok(PcResult { dag: g, sepsets, tests_run })
}

/// Meek rules 1–3 until nothing changes.
pub fn apply_meek_rules(g: &mut Dag) {
    let d = g.dim();
    loop {
        let mut changed = false;
        for a in 0..d {
            for b in 0..d {
                if a == b || !g.is_undirected(a, b) {
                    continue;
                }
                // rule 1: c → a − b, c and b nonadjacent
                let r1 = (0..d).any(|c| c != b && g.is_directed(c, a) && !g.adjacent(c, b));
                // rule 2: a → c → b
                let r2 = (0..d).any(|c| g.is_directed(a, c) && g.is_directed(c, b));
                // rule 3: a − c → b, a − e → b, c and e nonadjacent
                let r3 = {
                    let mids: Vec<usize> = (0..d).filter(|&c| g.is_undirected(a, c) && g.is_directed(c, b)).collect();
                    mids.iter().enumerate().any(|(k, &c)| mids[k + 1..].iter().any(|&e| !g.adjacent(c, e)))
                };
                if r1 || r2 || r3 {
                    g.orient(a, b);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}
