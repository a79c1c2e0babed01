//! PC followed by bivariate orientation of the edges PC leaves undirected.

use serde::{Deserialize, Serialize};

use super::dag::{dag_metrics, Dag, DagMetrics};
use super::pc::pc_skeleton_orient;
use super::{direction_on, estimate_disturbances, four_test_on, NonsensConfig};
use crate::datagen::SegmentedDataset;
use crate::error::{param, Result};
use crate::verdict::Decision;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    FourTest,
    LikelihoodRatio,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HybridConfig {
    /// Level of the PC conditional-independence tests.
    pub pc_alpha: f64,
    pub engine: Engine,
    pub nonsens: NonsensConfig,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self { pc_alpha: 0.05, engine: Engine::FourTest, nonsens: NonsensConfig::default() }
    }
}

/// What the bivariate engine said about one undirected PC edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeResolution {
    pub pair: (usize, usize),
    pub decision: Decision,
    /// Strength used to rank edges in cycle repair: `|R|` for the likelihood
    /// ratio, the p-value of the single accepted test for the four-test rule.
    pub evidence: f64,
    /// Set when the engine failed on this pair; the edge stays undirected.
    pub error: Option<String>,
    /// Orientation withdrawn to keep the directed part acyclic.
    pub demoted: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HybridResult {
    pub dag: Dag,
    pub pc_dag: Dag,
    pub edges: Vec<EdgeResolution>,
}

impl HybridResult {
    pub fn metrics(&self, truth: &Dag) -> Result<(DagMetrics, DagMetrics)> {
        Ok((dag_metrics(&self.dag, truth)?, dag_metrics(&self.pc_dag, truth)?))
    }
}

/// Orient one pair of columns with the chosen engine.
pub fn orient_pair(data: &SegmentedDataset, engine: Engine, config: &NonsensConfig) -> Result<(Decision, f64)> {
    let est = estimate_disturbances(data, config)?;
    match engine {
        Engine::FourTest => {
            let v = four_test_on(&est, config)?;
            let evidence = if v.decision == Decision::Inconclusive {
                0.0
            } else {
                v.tests.iter().filter(|t| !t.result.reject).map(|t| t.result.p_value).fold(0.0, f64::max)
            };
            Ok((v.decision, evidence))
        }
        Engine::LikelihoodRatio => {
            let s = direction_on(&est, config)?;
            Ok((s.verdict, s.r.abs()))
        }
    }
}

pub fn hybrid_multivariate(data: &SegmentedDataset, config: &HybridConfig) -> Result<HybridResult> {
    if data.dim() < 3 {
        return Err(param("the multivariate procedure needs at least 3 variables"));
    }
    let (std_data, _, _) = data.standardized()?;
    let pc = pc_skeleton_orient(std_data.x(), config.pc_alpha)?;
    let mut dag = pc.dag.clone();
    let mut edges = Vec::new();
    for (i, j) in pc.dag.undirected_edges() {
        let resolution = data.select_columns(&[i, j]).and_then(|pair| orient_pair(&pair, config.engine, &config.nonsens));
        let (decision, evidence, error) = match resolution {
            Ok((d, e)) => (d, e, None),
            Err(e) => (Decision::Inconclusive, 0.0, Some(e.to_string())),
        };
        match decision {
            Decision::X1Causes => dag.orient(i, j),
            Decision::X2Causes => dag.orient(j, i),
            Decision::Inconclusive => {}
        }
        edges.push(EdgeResolution { pair: (i, j), decision, evidence, error, demoted: false });
    }
    repair_cycles(&mut dag, &mut edges);
    Ok(HybridResult { dag, pc_dag: pc.dag, edges })
}

/// Withdraw the weakest newly oriented edges until no directed cycle
/// remains. Only edges oriented by the bivariate engine are touched.
fn repair_cycles(dag: &mut Dag, edges: &mut [EdgeResolution]) {
    let mut order: Vec<usize> = (0..edges.len()).filter(|&k| edges[k].decision != Decision::Inconclusive).collect();
    order.sort_by(|&a, &b| edges[a].evidence.total_cmp(&edges[b].evidence).then(a.cmp(&b)));
    for k in order {
        if dag.directed_acyclic() {
            break;
        }
        let (i, j) = edges[k].pair;
        let (from, to) = if dag.is_directed(i, j) { (i, j) } else { (j, i) };
        if dag.directed_path(to, from) {
            dag.set_undirected(i, j);
            edges[k].demoted = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolution(pair: (usize, usize), decision: Decision, evidence: f64) -> EdgeResolution {
        EdgeResolution { pair, decision, evidence, error: None, demoted: false }
    }

    #[test]
    fn weakest_edge_on_a_cycle_is_demoted() {
        let mut g = Dag::empty(4);
        g.orient(0, 1);
        g.orient(1, 2);
        g.orient(2, 0);
        g.orient(2, 3);
        let mut edges = vec![
            resolution((0, 1), Decision::X1Causes, 0.9),
            resolution((1, 2), Decision::X1Causes, 0.2),
            resolution((0, 2), Decision::X2Causes, 0.5),
            resolution((2, 3), Decision::X1Causes, 0.01),
        ];
        repair_cycles(&mut g, &mut edges);
        assert!(g.directed_acyclic());
        assert!(g.is_undirected(1, 2));
        assert!(g.is_directed(2, 3), "edges off the cycle keep their orientation");
        assert_eq!(edges.iter().filter(|e| e.demoted).count(), 1);
    }

    #[test]
    fn needs_three_variables() {
        let x = nalgebra::DMatrix::from_fn(12, 2, |i, j| ((i + 1) * (j + 2)) as f64 % 7.0);
        let data = SegmentedDataset::new(x, (0..12).map(|i| i / 4).collect()).unwrap();
        assert!(hybrid_multivariate(&data, &HybridConfig::default()).is_err());
    }
}
