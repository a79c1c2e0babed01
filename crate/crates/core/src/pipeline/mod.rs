//! End-to-end discovery procedures.
//!
//! * [`nonsens_bivariate`]: TCL, then score-matching ICA on the learned
//!   features, then four HSIC tests of each observed variable against each
//!   estimated disturbance at `α/4`. Exactly one non-rejected pair names its
//!   observed variable as the cause; anything else is inconclusive.
//! * [`nonsens_direction`]: same estimation, then the sign of the
//!   likelihood ratio, which always decides.
//! * [`pc`] and [`hybrid`]: multivariate structure by the PC algorithm, with
//!   the edges PC leaves undirected handed to one of the bivariate engines.

pub mod dag;
pub mod hybrid;
pub mod pc;

pub use dag::{dag_metrics, Dag, DagMetrics, EdgeStatus};
pub use hybrid::{hybrid_multivariate, orient_pair, EdgeResolution, Engine, HybridConfig, HybridResult};
pub use pc::{pc_skeleton_orient, PcResult};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::datagen::SegmentedDataset;
use crate::direction::{likelihood_ratio, DirectionScore};
use crate::error::{param, Result};
use crate::rng;
use crate::stats::{HsicConfig, DEFAULT_NEIGHBORS};
use crate::tcl::{recover_disturbances, tcl_train, Disturbances, TclConfig};
use crate::verdict::{four_test_verdict, CausalVerdict, Stratification, Tester};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct NonsensConfig {
    pub alpha: f64,
    /// Base seed. Training, ICA restarts and HSIC nulls draw from streams
    /// derived from it; the seeds inside `tcl` and `hsic` are overwritten.
    pub seed: u64,
    pub tcl: TclConfig,
    pub hsic: HsicConfig,
    pub stratification: Stratification,
    /// Neighbour count of the entropy estimator.
    pub entropy_k: usize,
}

impl Default for NonsensConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            seed: 0,
            tcl: TclConfig::default(),
            hsic: HsicConfig::default(),
            stratification: Stratification::default(),
            entropy_k: DEFAULT_NEIGHBORS,
        }
    }
}

/// Everything estimated on the way to a decision.
#[derive(Debug, Clone)]
pub struct Estimation {
    /// The input after per-column standardization.
    pub data: SegmentedDataset,
    pub disturbances: Disturbances,
    pub train_accuracy: f64,
    pub near_chance: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BivariateRun {
    pub verdict: CausalVerdict,
    pub train_accuracy: f64,
    pub near_chance: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectionRun {
    pub score: DirectionScore,
    pub train_accuracy: f64,
    pub near_chance: bool,
}

fn check_pair(data: &SegmentedDataset) -> Result<()> {
    if data.dim() != 2 {
        return Err(param(format!("bivariate methods need exactly 2 variables, got {}", data.dim())));
    }
    if data.n_segments() < 3 {
        return Err(param("at least 3 distinct segments are required for identifiability"));
    }
    Ok(())
}

/// Standardize, train TCL and unmix its features.
pub fn estimate_disturbances(data: &SegmentedDataset, config: &NonsensConfig) -> Result<Estimation> {
    let (std_data, _, _) = data.standardized()?;
    let mut tcl = config.tcl.clone();
    tcl.train.seed = rng::derive(config.seed, &[1]);
    tcl.smica.seed = rng::derive(config.seed, &[2]);
    let extractor = tcl_train(&std_data, &tcl)?;
    let disturbances = recover_disturbances(&extractor, &std_data, &tcl.smica)?;
    Ok(Estimation { data: std_data, disturbances, train_accuracy: extractor.train_accuracy, near_chance: extractor.near_chance })
}

fn columns(m: &DMatrix<f64>) -> [Vec<f64>; 2] {
    [m.column(0).iter().copied().collect(), m.column(1).iter().copied().collect()]
}

/// Four-test verdict on already estimated disturbances.
pub fn four_test_on(est: &Estimation, config: &NonsensConfig) -> Result<CausalVerdict> {
    let x = columns(est.data.x());
    let n = columns(&est.disturbances.values);
    let hsic = HsicConfig { seed: rng::derive(config.seed, &[3]), ..config.hsic.clone() };
    let tester = Tester::new(est.data.labels(), config.stratification, hsic);
    four_test_verdict([&x[0], &x[1]], [&n[0], &n[1]], &tester, config.alpha)
}

/// Likelihood-ratio score on already estimated disturbances.
pub fn direction_on(est: &Estimation, config: &NonsensConfig) -> Result<DirectionScore> {
    likelihood_ratio(est.data.x(), &est.disturbances.values, &est.disturbances.map(), config.entropy_k)
}

pub fn nonsens_bivariate(data: &SegmentedDataset, config: &NonsensConfig) -> Result<BivariateRun> {
    check_pair(data)?;
    let est = estimate_disturbances(data, config)?;
    let verdict = four_test_on(&est, config)?;
    Ok(BivariateRun { verdict, train_accuracy: est.train_accuracy, near_chance: est.near_chance })
}

pub fn nonsens_direction(data: &SegmentedDataset, config: &NonsensConfig) -> Result<DirectionRun> {
    check_pair(data)?;
    let est = estimate_disturbances(data, config)?;
    let score = direction_on(&est, config)?;
    Ok(DirectionRun { score, train_accuracy: est.train_accuracy, near_chance: est.near_chance })
}
