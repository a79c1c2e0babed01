//! Synthetic non-stationary data: piecewise-stationary sources, mixing
//! networks with a known causal ordering, and CSV/JSON interchange.

mod dataset;
mod io;
mod mixing;
mod sources;

pub use dataset::SegmentedDataset;
pub use io::{read_csv, write_csv, TruthFile};
pub use mixing::{default_edge_prob, is_acyclic, mix_dnn, GroundTruth, InverseMixing, MixingMode, MixingNetwork, LEAKY_SLOPE};
pub use sources::{check_rank_condition, gen_sources, LambdaScheme, RankCheck, SourceFamily, SourcePanel};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rng;

/// Everything needed to generate one synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub dim: usize,
    pub n_segments: usize,
    pub n_per_segment: usize,
    pub depth: usize,
    pub family: SourceFamily,
    pub scheme: LambdaScheme,
    pub mode: MixingMode,
    /// Probability of each strictly-lower edge; `None` uses
    /// [`default_edge_prob`].
    pub edge_prob: Option<f64>,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            n_segments: 10,
            n_per_segment: 512,
            depth: 1,
            family: SourceFamily::LaplaceVariance,
            scheme: LambdaScheme::RandomScale,
            mode: MixingMode::Acyclic,
            edge_prob: None,
            seed: 0,
        }
    }
}

/// Sources and mixing draw from independent child streams of `config.seed`.
pub fn generate(config: &GenConfig) -> Result<(SegmentedDataset, GroundTruth)> {
    let (panel, labels) =
        gen_sources(config.dim, config.n_segments, config.n_per_segment, config.family, config.scheme, rng::derive(config.seed, &[1]))?;
    let edge_prob = config.edge_prob.unwrap_or_else(|| default_edge_prob(config.dim));
    mix_dnn(panel, &labels, config.depth, config.mode, edge_prob, rng::derive(config.seed, &[2]))
}
