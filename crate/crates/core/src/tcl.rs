//! Time-contrastive learning.
//!
//! A classifier is trained to predict each observation's segment label. Its
//! last hidden layer (the *trunk* output, width `d`) then carries a linear
//! mixture of the sources' sufficient statistics, which score-matching ICA
//! unmixes into estimated disturbances.
//!
//! Network layout: `depth` leaky-ReLU layers of width `hidden_width`
//! (default `max(2d, 32)`), a linear feature layer of width `d`, and a softmax head
//! over the `E` segments whose class-0 row is pinned at zero.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::datagen::{SegmentedDataset, LEAKY_SLOPE};
use crate::error::{param, Error, Result};
use crate::map::{AffineMap, Composed};
use crate::neuralnet::{Activation, Mlp, TrainConfig, TrainReport};
use crate::smica::{self, SmicaConfig, UnmixingModel};

/// Narrower layers often stall in poor local optima.
pub const MIN_HIDDEN_WIDTH: usize = 32;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TclConfig {
    /// Number of leaky-ReLU hidden layers before the feature layer.
    pub depth: usize,
    /// Hidden width; `None` means [`MIN_HIDDEN_WIDTH`] or twice the data
    /// dimension, whichever is larger.
    pub hidden_width: Option<usize>,
    pub slope: f64,
    pub train: TrainConfig,
    pub smica: SmicaConfig,
}

impl Default for TclConfig {
    fn default() -> Self {
        Self { depth: 1, hidden_width: None, slope: LEAKY_SLOPE, train: TrainConfig::default(), smica: SmicaConfig::default() }
    }
}

/// A trained segment classifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureExtractor {
    pub network: Mlp,
    pub train_accuracy: f64,
    pub final_loss: f64,
    /// Training accuracy did not clear chance (`1/E`) by more than 0.02.
    pub near_chance: bool,
    pub n_segments: usize,
}

fn row_major(x: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.nrows() {
        out.extend(x.row(i).iter());
    }
    out
}

pub fn tcl_train(data: &SegmentedDataset, config: &TclConfig) -> Result<FeatureExtractor> {
    let e = data.n_segments();
    if e < 3 {
        return Err(param("at least 3 distinct segments are required for identifiability"));
    }
    if config.depth == 0 {
        return Err(param("depth must be at least 1"));
    }
    let d = data.dim();
    let width = config.hidden_width.unwrap_or((2 * d).max(MIN_HIDDEN_WIDTH));
    let mut widths = vec![d];
    widths.extend(std::iter::repeat_n(width, config.depth));
    widths.extend([d, e]);
    let mut acts = vec![Activation::LeakyRelu; config.depth];
    acts.extend([Activation::Identity, Activation::Identity]);
    let mut network = Mlp::random(&widths, &acts, config.slope, true, config.train.seed)?;

    let flat = row_major(data.x());
    let rows: Vec<&[f64]> = flat.chunks(d).collect();
    let TrainReport { final_loss, .. } = network.train(&rows, data.labels(), &config.train)?;
    let predicted = network.predict(&rows)?;
    let correct = predicted.iter().zip(data.labels()).filter(|(p, l)| p == l).count();
    let train_accuracy = correct as f64 / rows.len() as f64;
    Ok(FeatureExtractor { network, train_accuracy, final_loss, near_chance: train_accuracy <= 1.0 / e as f64 + 0.02, n_segments: e })
}

impl FeatureExtractor {
    /// The network up to and including the feature layer.
    pub fn trunk(&self) -> Mlp {
        self.network.truncated(1).expect("extractor has a head and a trunk")
    }

    /// Feature-layer output for every row.
    pub fn hidden_representations(&self, data: &SegmentedDataset) -> Result<DMatrix<f64>> {
        let trunk = self.trunk();
        if data.dim() != trunk.input_dim() {
            return Err(Error::Dimension { expected: trunk.input_dim(), got: data.dim() });
        }
        let flat = row_major(data.x());
        let d_out = trunk.output_dim();
        let mut out = DMatrix::zeros(data.n(), d_out);
        for (i, row) in flat.chunks(data.dim()).enumerate() {
            let h = trunk.output(row)?;
            for (j, v) in h.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }
}

/// Estimated disturbances and the map producing them from (standardized)
/// observations.
#[derive(Debug, Clone)]
pub struct Disturbances {
    /// `n × d`, row-aligned with the data. Column order is arbitrary.
    pub values: DMatrix<f64>,
    pub unmixing: UnmixingModel,
    pub trunk: Mlp,
}

impl Disturbances {
    /// `x ↦ W V (trunk(x) − mean)`.
    pub fn map(&self) -> Composed<Mlp, AffineMap> {
        Composed { inner: self.trunk.clone(), outer: self.unmixing.as_map() }
    }
}

pub fn recover_disturbances(extractor: &FeatureExtractor, data: &SegmentedDataset, config: &SmicaConfig) -> Result<Disturbances> {
    let h = extractor.hidden_representations(data)?;
    let unmixing = smica::fit(&h, data.labels(), config)?;
    let values = unmixing.transform(&h);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite disturbance estimate".into()));
    }
    Ok(Disturbances { values, unmixing, trunk: extractor.trunk() })
}
