//! Discovery methods behind one interface, looked up by name.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::baselines::{
    direct_lingam_bivariate, icp_bivariate, linear_ica_direction, linear_ica_nonsens, reci_bivariate, resit_bivariate, BaselineConfig,
    DecisionMode,
};
use crate::datagen::SegmentedDataset;
use crate::error::{Error, Result};
use crate::pipeline::{direction_on, estimate_disturbances, four_test_on, hybrid_multivariate, Dag, Engine, HybridConfig, NonsensConfig};
use crate::verdict::Decision;

pub const METHOD_NAMES: [&str; 8] = ["nonsens", "nonsens-lr", "lingam", "resit", "icp", "reci", "linear-ica", "pc-hybrid"];

/// What a method concluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Finding {
    Pair { decision: Decision },
    Graph { dag: Dag, pc_dag: Dag },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Discovery {
    pub method: String,
    pub seed: u64,
    pub finding: Finding,
    /// Method-specific record: test results, scores, fitted quantities.
    pub detail: Value,
}

impl Discovery {
    pub fn decision(&self) -> Option<Decision> {
        match self.finding {
            Finding::Pair { decision } => Some(decision),
            Finding::Graph { .. } => None,
        }
    }
}

pub trait Method: Send + Sync {
    fn name(&self) -> &'static str;

    /// Runs on any number of variables ≥ 3 instead of exactly two.
    fn multivariate(&self) -> bool {
        false
    }

    fn run(&self, data: &SegmentedDataset, seed: u64) -> Result<Discovery>;
}

/// Shared settings from which every method takes what it needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodSettings {
    /// Overrides the level inside `nonsens` and `baseline`.
    pub alpha: f64,
    /// A causal effect is known to exist: threshold rules are replaced by
    /// p-value comparisons and the linear-ICA ablation uses the likelihood
    /// ratio.
    pub assume_effect: bool,
    pub nonsens: NonsensConfig,
    pub baseline: BaselineConfig,
    pub pc_alpha: f64,
    pub engine: Engine,
}

impl Default for MethodSettings {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            assume_effect: false,
            nonsens: NonsensConfig::default(),
            baseline: BaselineConfig::default(),
            pc_alpha: 0.05,
            engine: Engine::FourTest,
        }
    }
}

impl MethodSettings {
    fn nonsens(&self, seed: u64) -> NonsensConfig {
        NonsensConfig { alpha: self.alpha, seed, ..self.nonsens.clone() }
    }

    fn baseline(&self, seed: u64) -> BaselineConfig {
        let mode = if self.assume_effect { DecisionMode::PValue } else { self.baseline.mode };
        BaselineConfig { alpha: self.alpha, seed, mode, ..self.baseline.clone() }
    }
}

fn pair(method: &str, seed: u64, decision: Decision, detail: Value) -> Discovery {
    Discovery { method: method.to_string(), seed, finding: Finding::Pair { decision }, detail }
}

struct Nonsens(MethodSettings);
struct NonsensLr(MethodSettings);
struct Lingam(MethodSettings);
struct Resit(MethodSettings);
struct Icp(MethodSettings);
struct Reci(MethodSettings);
struct LinearIca(MethodSettings);
struct PcHybrid(MethodSettings);

impl Method for Nonsens {
    fn name(&self) -> &'static str {
        "nonsens"
    }
    fn run(&self, data: &SegmentedDataset, seed: u64) -> Result<Discovery> {
        let cfg = self.0.nonsens(seed);
        check_pair(data)?;
        let est = estimate_disturbances(data, &cfg)?;
        let v = four_test_on(&est, &cfg)?;
        let detail = json!({ "verdict": v, "train_accuracy": est.train_accuracy, "near_chance": est.near_chance });
        Ok(pair(self.name(), seed, v.decision, detail))
    }
}

impl Method for NonsensLr {
    fn name(&self) -> &'static str {
        "nonsens-lr"
    }
    fn run(&self, data: &SegmentedDataset, seed: u64) -> Result<Discovery> {
        let cfg = self.0.nonsens(seed);
        check_pair(data)?;
        let est = estimate_disturbances(data, &cfg)?;
        let s = direction_on(&est, &cfg)?;
        let detail = json!({ "score": s, "train_accuracy": est.train_accuracy, "near_chance": est.near_chance });
        Ok(pair(self.name(), seed, s.verdict, detail))
    }
}

impl Method for Lingam {
    fn name(&self) -> &'static str {
        "lingam"
    }
    fn run(&self, data: &SegmentedDataset, seed: u64) -> Result<Discovery> {
        let v = direct_lingam_bivariate(data, &self.0.baseline(seed))?;
        Ok(pair(self.name(), seed, v.decision, json!({ "verdict": v })))
    }
}

impl Method for Resit {
    fn name(&self) -> &'static str {
        "resit"
    }
    fn run(&self, data: &SegmentedDataset, seed: u64) -> Result<Discovery> {
        let v = resit_bivariate(data, &self.0.baseline(seed))?;
        Ok(pair(self.name(), seed, v.decision, json!({ "verdict": v })))
    }
}

impl Method for Icp {
    fn name(&self) -> &'static str {
        "icp"
    }
    fn run(&self, data: &SegmentedDataset, seed: u64) -> Result<Discovery> {
        let v = icp_bivariate(data, &self.0.baseline(seed))?;
        Ok(pair(self.name(), seed, v.decision, json!({ "verdict": v })))
    }
}

impl Method for Reci {
    fn name(&self) -> &'static str {
        "reci"
    }
    fn run(&self, data: &SegmentedDataset, seed: u64) -> Result<Discovery> {
        let v = reci_bivariate(data, &self.0.baseline(seed))?;
        Ok(pair(self.name(), seed, v.decision, json!({ "verdict": v })))
    }
}

impl Method for LinearIca {
    fn name(&self) -> &'static str {
        "linear-ica"
    }
    fn run(&self, data: &SegmentedDataset, seed: u64) -> Result<Discovery> {
        let cfg = self.0.baseline(seed);
        if self.0.assume_effect {
            let s = linear_ica_direction(data, &cfg)?;
            Ok(pair(self.name(), seed, s.verdict, json!({ "score": s })))
        } else {
            let v = linear_ica_nonsens(data, &cfg)?;
            Ok(pair(self.name(), seed, v.decision, json!({ "verdict": v })))
        }
    }
}

impl Method for PcHybrid {
    fn name(&self) -> &'static str {
        "pc-hybrid"
    }
    fn multivariate(&self) -> bool {
        true
    }
    fn run(&self, data: &SegmentedDataset, seed: u64) -> Result<Discovery> {
        let cfg = HybridConfig { pc_alpha: self.0.pc_alpha, engine: self.0.engine, nonsens: self.0.nonsens(seed) };
        let r = hybrid_multivariate(data, &cfg)?;
        let detail = json!({ "edges": r.edges, "edge_list": r.dag.edge_list() });
        Ok(Discovery { method: self.name().to_string(), seed, finding: Finding::Graph { dag: r.dag, pc_dag: r.pc_dag }, detail })
    }
}

fn check_pair(data: &SegmentedDataset) -> Result<()> {
    if data.dim() != 2 {
        return Err(crate::error::param(format!("bivariate methods need exactly 2 variables, got {}", data.dim())));
    }
    Ok(())
}

/// Look a method up by its command-line name.
pub fn method(name: &str, settings: &MethodSettings) -> Result<Box<dyn Method>> {
    let s = settings.clone();
    Ok(match name {
        "nonsens" => Box::new(Nonsens(s)),
        "nonsens-lr" => Box::new(NonsensLr(s)),
        "lingam" => Box::new(Lingam(s)),
        "resit" => Box::new(Resit(s)),
        "icp" => Box::new(Icp(s)),
        "reci" => Box::new(Reci(s)),
        "linear-ica" => Box::new(LinearIca(s)),
        "pc-hybrid" => Box::new(PcHybrid(s)),
        other => return Err(Error::UnknownMethod(other.to_string())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, GenConfig};
    use crate::stats::NullMethod;

    #[test]
    fn every_name_resolves_to_itself() {
        let s = MethodSettings::default();
        for name in METHOD_NAMES {
            let m = method(name, &s).unwrap();
            assert_eq!(m.name(), name);
            assert_eq!(m.multivariate(), name == "pc-hybrid");
        }
        assert!(matches!(method("cdnod", &s), Err(Error::UnknownMethod(_))));
    }

    #[test]
    fn bivariate_methods_refuse_three_columns() {
        let (data, _) = generate(&GenConfig { dim: 3, n_per_segment: 30, ..Default::default() }).unwrap();
        let s = MethodSettings::default();
        for name in METHOD_NAMES.iter().filter(|n| **n != "pc-hybrid") {
            assert!(method(name, &s).unwrap().run(&data, 0).is_err(), "{name}");
        }
    }

    #[test]
    fn settings_override_alpha_and_mode() {
        let s = MethodSettings { alpha: 0.1, assume_effect: true, ..Default::default() };
        assert_eq!(s.nonsens(4).alpha, 0.1);
        assert_eq!(s.nonsens(4).seed, 4);
        assert_eq!(s.baseline(4).mode, DecisionMode::PValue);
    }

    #[test]
    fn reci_always_decides_and_serializes() {
        let (data, _) = generate(&GenConfig { n_per_segment: 64, seed: 2, ..Default::default() }).unwrap();
        let mut s = MethodSettings::default();
        s.baseline.hsic.method = NullMethod::Gamma;
        let d = method("reci", &s).unwrap().run(&data, 1).unwrap();
        assert_ne!(d.decision(), Some(Decision::Inconclusive));
        let text = serde_json::to_string(&d).unwrap();
        let back: Discovery = serde_json::from_str(&text).unwrap();
        assert_eq!(back.finding, d.finding);
    }
}
