use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{SegmentedDataset, SourcePanel};
use crate::error::{param, Error, Result};
use crate::map::DifferentiableMap;
use crate::rng::{self, Rng};

/// Negative-side slope of the leaky ReLU between mixing layers.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Off-diagonal weight used in every layer of cyclic mixing.
pub const CYCLIC_WEIGHT: f64 = 0.6;

const MAX_CONDITION: f64 = 1e6;
const MAX_RESAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingMode {
    /// Lower-triangular layers: variable `i` depends only on sources `≤ i`.
    Acyclic,
    /// Every variable depends on every source; there is no causal order.
    Cyclic,
}

/// Edge probability giving `d` expected edges among `d` variables; a
/// bivariate pair always gets its edge.
pub fn default_edge_prob(d: usize) -> f64 {
    if d <= 2 {
        1.0
    } else {
        2.0 / (d as f64 - 1.0)
    }
}

#[inline]
fn leaky(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        LEAKY_SLOPE * v
    }
}

/// `x¹ = A₁ s`, `xˡ = A_l lrelu(xˡ⁻¹)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingNetwork {
    pub layers: Vec<DMatrix<f64>>,
}

impl MixingNetwork {
    pub fn forward(&self, s: &[f64]) -> Vec<f64> {
        let mut h = DVector::from_column_slice(s);
        for (l, a) in self.layers.iter().enumerate() {
            if l > 0 {
                h.apply(|v| *v = leaky(*v));
            }
            h = a * h;
        }
        h.as_slice().to_vec()
    }

    pub fn inverse(&self) -> Result<InverseMixing> {
        let inverses = self
            .layers
            .iter()
            .map(|a| a.clone().try_inverse().ok_or_else(|| Error::Singular("mixing layer".into())))
            .collect::<Result<Vec<_>>>()?;
        Ok(InverseMixing { inverses })
    }
}

/// The exact map from observations back to sources.
#[derive(Debug, Clone)]
pub struct InverseMixing {
    /// `A_l⁻¹` in forward layer order.
    inverses: Vec<DMatrix<f64>>,
}

impl InverseMixing {
    /// Returns sources and the Jacobian `∂s/∂x`.
    fn run(&self, x: &[f64], want_jac: bool) -> (Vec<f64>, Option<DMatrix<f64>>) {
        let d = x.len();
        let mut h = DVector::from_column_slice(x);
        let mut jac = want_jac.then(|| DMatrix::<f64>::identity(d, d));
        for (l, inv) in self.inverses.iter().enumerate().rev() {
            h = inv * h;
            if let Some(j) = jac.as_mut() {
                *j = inv * &*j;
            }
            if l > 0 {
                // undo the leaky ReLU applied before this layer
                for k in 0..d {
                    if h[k] <= 0.0 {
                        h[k] /= LEAKY_SLOPE;
                        if let Some(j) = jac.as_mut() {
                            j.row_mut(k).scale_mut(1.0 / LEAKY_SLOPE);
                        }
                    }
                }
            }
        }
        (h.as_slice().to_vec(), jac)
    }
}

impl DifferentiableMap for InverseMixing {
    fn input_dim(&self) -> usize {
        self.inverses[0].nrows()
    }
    fn output_dim(&self) -> usize {
        self.inverses[0].nrows()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.run(x, false).0
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        self.run(x, true).1.unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `dag[i][j]` is true when `x_i` is a direct cause of `x_j`.
    pub dag: Vec<Vec<bool>>,
    /// Strictly-lower weight pattern shared by all acyclic layers, in the
    /// same `[cause][effect]` orientation. The causal graph is its
    /// transitive closure: composing layers makes every ancestor a parent.
    pub support: Vec<Vec<bool>>,
    pub network: MixingNetwork,
    pub depth: usize,
    pub mode: MixingMode,
    pub sources: SourcePanel,
}

fn magnitude(r: &mut Rng) -> f64 {
    let m = r.random_range(0.5..1.5);
    if r.random::<bool>() {
        m
    } else {
        -m
    }
}

fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

fn sample_layer(d: usize, support: &[Vec<bool>], mode: MixingMode, r: &mut Rng) -> Result<DMatrix<f64>> {
    for _ in 0..MAX_RESAMPLES {
        let mut a = DMatrix::zeros(d, d);
        for i in 0..d {
            a[(i, i)] = magnitude(r);
            for j in 0..d {
                if i == j {
                    continue;
                }
                a[(i, j)] = match mode {
                    MixingMode::Cyclic => CYCLIC_WEIGHT,
                    // row i (effect) reads column j (cause)
                    MixingMode::Acyclic if j < i && support[j][i] => magnitude(r),
                    MixingMode::Acyclic => 0.0,
                };
            }
        }
        if condition_number(&a) <= MAX_CONDITION {
            return Ok(a);
        }
    }
    Err(Error::Sampling(format!("no mixing layer with condition number below {MAX_CONDITION:e}")))
}

fn transitive_closure(adj: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let d = adj.len();
    let mut c = adj.to_vec();
    for k in 0..d {
        for i in 0..d {
            if c[i][k] {
                for j in 0..d {
                    if c[k][j] {
                        c[i][j] = true;
                    }
                }
            }
        }
    }
    c
}

/// Topological-sort check.
pub fn is_acyclic(dag: &[Vec<bool>]) -> bool {
    let d = dag.len();
    let mut indeg: Vec<usize> = (0..d).map(|j| (0..d).filter(|&i| dag[i][j]).count()).collect();
    let mut ready: Vec<usize> = (0..d).filter(|&j| indeg[j] == 0).collect();
    let mut seen = 0;
    while let Some(i) = ready.pop() {
        seen += 1;
        for j in 0..d {
            if dag[i][j] {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    ready.push(j);
                }
            }
        }
    }
    seen == d
}

/// Push sources through a random mixing network.
pub fn mix_dnn(
    sources: SourcePanel,
    labels: &[usize],
    depth: usize,
    mode: MixingMode,
    edge_prob: f64,
    seed: u64,
) -> Result<(SegmentedDataset, GroundTruth)> {
    if depth < 1 {
        return Err(param("mixing depth must be at least 1"));
    }
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(param(format!("edge probability must lie in [0, 1], got {edge_prob}")));
    }
    let d = sources.sources.ncols();
    let mut r = rng::rng(seed);
    let mut support = vec![vec![false; d]; d];
    if mode == MixingMode::Acyclic {
        for (j, row) in support.iter_mut().enumerate() {
            for cell in row.iter_mut().skip(j + 1) {
                *cell = r.random::<f64>() < edge_prob;
            }
        }
    }
    let layers = (0..depth).map(|_| sample_layer(d, &support, mode, &mut r)).collect::<Result<Vec<_>>>()?;
    let network = MixingNetwork { layers };

    let n = sources.sources.nrows();
    let mut x = DMatrix::zeros(n, d);
    let mut row = vec![0.0; d];
    for i in 0..n {
        for (j, v) in row.iter_mut().enumerate() {
            *v = sources.sources[(i, j)];
        }
        for (j, v) in network.forward(&row).into_iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    let dag = match mode {
        MixingMode::Acyclic => transitive_closure(&support),
        MixingMode::Cyclic => (0..d).map(|i| (0..d).map(|j| i != j).collect()).collect(),
    };
    let data = SegmentedDataset::new(x, labels.to_vec())?;
    Ok((data, GroundTruth { dag, support, network, depth, mode, sources }))
}
