//! Seeded benchmark sweeps over synthetic data.
//!
//! Every (grid cell, trial) pair gets a data seed derived from the base seed
//! and the cell's coordinates, and every method a seed derived from the data
//! seed and its name, so results do not depend on how trials are scheduled.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{default_edge_prob, generate, GenConfig, MixingMode};
use crate::error::{param, Error, Result};
use crate::methods::{method, Finding, Method, MethodSettings};
use crate::pipeline::{dag_metrics, Dag};
use crate::rng;
use crate::stats::NullMethod;
use crate::verdict::Decision;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    /// Acyclic pairs; methods may answer inconclusive.
    Bivariate4Test,
    /// Acyclic pairs; an effect is assumed to exist.
    BivariateAssumeCause,
    /// Cyclic mixing with no causal order; the right answer is inconclusive.
    NoEffect,
    /// Random DAGs over `dim` variables, scored by F1 and Hamming distance.
    Multivariate,
    /// Acyclic pairs, assumed effect, learned features against linear
    /// unmixing.
    LinearIcaBench,
}

impl BenchMode {
    pub fn default_methods(self) -> Vec<String> {
        let names: &[&str] = match self {
            BenchMode::Bivariate4Test | BenchMode::NoEffect => &["nonsens", "lingam", "resit", "icp", "linear-ica"],
            BenchMode::BivariateAssumeCause => &["nonsens-lr", "lingam", "resit", "icp", "reci", "linear-ica"],
            BenchMode::Multivariate => &["pc-hybrid"],
            BenchMode::LinearIcaBench => &["nonsens-lr", "linear-ica"],
        };
        names.iter().map(|s| s.to_string()).collect()
    }

    fn assume_effect(self) -> bool {
        matches!(self, BenchMode::BivariateAssumeCause | BenchMode::LinearIcaBench)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub segments: Vec<usize>,
    pub n_per_segment: Vec<usize>,
    pub depths: Vec<usize>,
}

impl Default for Grid {
    fn default() -> Self {
        Self { segments: vec![5, 10, 20], n_per_segment: vec![512], depths: vec![1, 2, 3] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub mode: BenchMode,
    pub grid: Grid,
    pub seeds: usize,
    pub base_seed: u64,
    /// Empty means the mode's default list.
    pub methods: Vec<String>,
    pub alpha: f64,
    /// Variables per dataset in multivariate mode; pairs otherwise.
    pub dim: usize,
    /// Multivariate edge probability; `None` gives `2 / (dim - 1)`.
    pub edge_prob: Option<f64>,
    /// Depth of the TCL network; `None` matches the mixing depth.
    pub tcl_depth: Option<usize>,
    /// Method hyperparameters. `alpha` and the assume-effect flag are
    /// overwritten from the fields above and the mode.
    pub settings: MethodSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut settings = MethodSettings::default();
        settings.nonsens.hsic.method = NullMethod::Gamma;
        settings.baseline.hsic.method = NullMethod::Gamma;
        Self {
            mode: BenchMode::Bivariate4Test,
            grid: Grid::default(),
            seeds: 20,
            base_seed: 0,
            methods: Vec::new(),
            alpha: 0.05,
            dim: 6,
            edge_prob: None,
            tcl_depth: None,
            settings,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.segments.is_empty() || g.n_per_segment.is_empty() || g.depths.is_empty() {
            return Err(param("every grid axis needs at least one value"));
        }
        if self.seeds == 0 {
            return Err(param("seeds must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(param(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if let Some(&e) = g.segments.iter().find(|&&e| e < 3) {
            return Err(param(format!("E = {e}: at least 3 distinct segments are required for identifiability")));
        }
        if self.mode == BenchMode::Multivariate && self.dim < 3 {
            return Err(param("multivariate mode needs dim ≥ 3"));
        }
        Ok(())
    }

    pub fn method_names(&self) -> Vec<String> {
        if self.methods.is_empty() {
            self.mode.default_methods()
        } else {
            self.methods.clone()
        }
    }

    /// Generator settings for one trial.
    pub fn gen_config(&self, cell: Cell, data_seed: u64) -> GenConfig {
        let multivariate = self.mode == BenchMode::Multivariate;
        let dim = if multivariate { self.dim } else { 2 };
        GenConfig {
            dim,
            n_segments: cell.segments,
            n_per_segment: cell.n_per_segment,
            depth: cell.depth,
            mode: if self.mode == BenchMode::NoEffect { MixingMode::Cyclic } else { MixingMode::Acyclic },
            edge_prob: Some(if multivariate { self.edge_prob.unwrap_or_else(|| default_edge_prob(dim)) } else { 1.0 }),
            seed: data_seed,
            ..Default::default()
        }
    }

    fn settings_for(&self, cell: Cell) -> MethodSettings {
        let mut s = self.settings.clone();
        s.alpha = self.alpha;
        s.assume_effect = self.mode.assume_effect();
        s.nonsens.tcl.depth = self.tcl_depth.unwrap_or(cell.depth);
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub segments: usize,
    pub n_per_segment: usize,
    pub depth: usize,
}

/// One method on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub mode: BenchMode,
    pub method: String,
    #[serde(rename = "E")]
    pub segments: usize,
    pub n_e: usize,
    pub depth: usize,
    pub trial: usize,
    /// Seed for regenerating the dataset.
    pub data_seed: u64,
    /// Seed the method ran with.
    pub method_seed: u64,
    /// Columns were swapped after generation, so the true cause is X2.
    pub swapped: bool,
    pub truth: String,
    pub decision: Option<String>,
    pub correct: Option<bool>,
    pub f1: Option<f64>,
    pub hamming: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    #[serde(rename = "E")]
    pub segments: usize,
    pub n_e: usize,
    pub depth: usize,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
}

/// Method name under which PC-only results of the hybrid are reported.
pub const PC_ONLY: &str = "pc";

pub fn data_seed(base: u64, cell: Cell, trial: usize) -> u64 {
    rng::derive(base, &[cell.segments as u64, cell.n_per_segment as u64, cell.depth as u64, trial as u64])
}

pub fn method_seed(data_seed: u64, name: &str) -> u64 {
    rng::derive(data_seed, &[rng::hash_str(name)])
}

fn run_trial(config: &ExperimentConfig, cell: Cell, trial: usize, methods: &[Box<dyn Method>]) -> Vec<TrialRecord> {
    let seed = data_seed(config.base_seed, cell, trial);
    let gen = config.gen_config(cell, seed);
    let record = |name: &str, swapped: bool, truth: String| TrialRecord {
        mode: config.mode,
        method: name.to_string(),
        segments: cell.segments,
        n_e: cell.n_per_segment,
        depth: cell.depth,
        trial,
        data_seed: seed,
        method_seed: method_seed(seed, name),
        swapped,
        truth,
        decision: None,
        correct: None,
        f1: None,
        hamming: None,
        error: None,
    };
    let generated = generate(&gen);
    let (data, truth) = match generated {
        Ok(v) => v,
        Err(e) => {
            return methods
                .iter()
                .map(|m| TrialRecord { error: Some(format!("generation failed: {e}")), ..record(m.name(), false, String::new()) })
                .collect();
        }
    };

    if config.mode == BenchMode::Multivariate {
        let true_dag = Dag::from_adjacency(&truth.dag).expect("generator emits a square DAG");
        let mut out = Vec::new();
        for m in methods {
            let mut rec = record(m.name(), false, true_dag.edge_list().trim_end().replace('\n', "; "));
            match m.run(&data, rec.method_seed) {
                Ok(d) => match d.finding {
                    Finding::Graph { dag, pc_dag } => {
                        let mut pc = rec.clone();
                        pc.method = PC_ONLY.to_string();
                        let est = dag_metrics(&dag, &true_dag).expect("same dimension");
                        let base = dag_metrics(&pc_dag, &true_dag).expect("same dimension");
                        rec.decision = Some(dag.edge_list().trim_end().replace('\n', "; "));
                        rec.f1 = Some(est.f1);
                        rec.hamming = Some(est.hamming);
                        pc.decision = Some(pc_dag.edge_list().trim_end().replace('\n', "; "));
                        pc.f1 = Some(base.f1);
                        pc.hamming = Some(base.hamming);
                        out.push(rec);
                        out.push(pc);
                    }
                    Finding::Pair { .. } => {
                        rec.error = Some("bivariate method in multivariate mode".into());
                        out.push(rec);
                    }
                },
                Err(e) => {
                    rec.error = Some(e.to_string());
                    out.push(rec);
                }
            }
        }
        return out;
    }

    // hide the generator's column order: the cause is X2 half of the time
    let swapped = config.mode != BenchMode::NoEffect && rng::derive(seed, &[7]) & 1 == 1;
    let data = if swapped { data.select_columns(&[1, 0]).expect("two columns") } else { data };
    let expected = match (config.mode, swapped) {
        (BenchMode::NoEffect, _) => Decision::Inconclusive,
        (_, false) => Decision::X1Causes,
        (_, true) => Decision::X2Causes,
    };
    methods
        .iter()
        .map(|m| {
            let mut rec = record(m.name(), swapped, expected.as_str().to_string());
            match m.run(&data, rec.method_seed).map(|d| d.decision()) {
                Ok(Some(decision)) => {
                    rec.decision = Some(decision.as_str().to_string());
                    rec.correct = Some(decision == expected);
                }
                Ok(None) => rec.error = Some("multivariate method in bivariate mode".into()),
                Err(e) => rec.error = Some(e.to_string()),
            }
            rec
        })
        .collect()
}

/// Run the sweep on up to `jobs` threads.
pub fn run_bench(config: &ExperimentConfig, jobs: usize) -> Result<BenchResult> {
    config.validate()?;
    let names = config.method_names();
    for name in &names {
        method(name, &config.settings)?;
    }
    let mut cells = Vec::new();
    for &segments in &config.grid.segments {
        for &n_per_segment in &config.grid.n_per_segment {
            for &depth in &config.grid.depths {
                cells.push(Cell { segments, n_per_segment, depth });
            }
        }
    }
    let jobs_list: Vec<(Cell, usize)> = cells.iter().flat_map(|&c| (0..config.seeds).map(move |t| (c, t))).collect();
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
    let records: Vec<TrialRecord> = pool.install(|| {
        jobs_list
            .par_iter()
            .map(|&(cell, trial)| {
                let settings = config.settings_for(cell);
                let methods: Vec<Box<dyn Method>> = names.iter().map(|n| method(n, &settings).expect("checked above")).collect();
                run_trial(config, cell, trial, &methods)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    });
    let summary = summarize(&records, config.mode, config.alpha);
    Ok(BenchResult { records, summary })
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Aggregate trial records into per-(method, cell, metric) rows. Failed
/// trials only enter the `failure_rate` metric.
pub fn summarize(records: &[TrialRecord], mode: BenchMode, alpha: f64) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, usize, usize, usize), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.method.clone(), r.segments, r.n_e, r.depth)).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((method, segments, n_e, depth), rows) in groups {
        let mut push = |metric: &str, values: Vec<f64>| {
            if values.is_empty() {
                return;
            }
            let (mean, stderr) = mean_stderr(&values);
            out.push(SummaryRow {
                method: method.clone(),
                segments,
                n_e,
                depth,
                metric: metric.to_string(),
                mean,
                stderr,
                trials: values.len(),
            });
        };
        let ok: Vec<&&TrialRecord> = rows.iter().filter(|r| r.error.is_none()).collect();
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        if mode == BenchMode::Multivariate {
            push("f1", ok.iter().filter_map(|r| r.f1).collect());
            push("hamming", ok.iter().filter_map(|r| r.hamming.map(|h| h as f64)).collect());
        } else {
            let inconclusive = |r: &&&TrialRecord| r.decision.as_deref() == Some(Decision::Inconclusive.as_str());
            if mode != BenchMode::NoEffect {
                push("accuracy", ok.iter().map(|r| flag(r.correct == Some(true))).collect());
                push("accuracy_decided", ok.iter().filter(|r| !inconclusive(r)).map(|r| flag(r.correct == Some(true))).collect());
            }
            push("inconclusive_rate", ok.iter().map(|r| flag(inconclusive(r))).collect());
            if mode == BenchMode::NoEffect {
                out.push(SummaryRow {
                    method: method.clone(),
                    segments,
                    n_e,
                    depth,
                    metric: "reference_inconclusive_rate".into(),
                    mean: 1.0 - alpha,
                    stderr: 0.0,
                    trials: 0,
                });
            }
        }
        let failures: Vec<f64> = rows.iter().map(|r| flag(r.error.is_some())).collect();
        let (mean, stderr) = mean_stderr(&failures);
        out.push(SummaryRow { method, segments, n_e, depth, metric: "failure_rate".into(), mean, stderr, trials: failures.len() });
    }
    out
}

pub fn write_records<W: Write>(records: &[TrialRecord], out: W) -> Result<()> {
    write_rows(records, out)
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    write_rows(rows, out)
}

fn write_rows<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: std::io::Read>(input: R) -> Result<Vec<TrialRecord>> {
    csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(|e| Error::Format(e.to_string()))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(mode: BenchMode, methods: &[&str]) -> ExperimentConfig {
        let mut c = ExperimentConfig {
            mode,
            grid: Grid { segments: vec![4], n_per_segment: vec![64], depths: vec![1] },
            seeds: 3,
            base_seed: 11,
            methods: methods.iter().map(|s| s.to_string()).collect(),
            dim: 4,
            ..Default::default()
        };
        c.settings.nonsens.tcl.train.epochs = 20;
        c.settings.baseline.regression.max_train = 100;
        c
    }

    fn csv_of(result: &BenchResult) -> String {
        let mut buf = Vec::new();
        write_records(&result.records, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let cfg = tiny(BenchMode::Bivariate4Test, &["nonsens", "lingam", "reci"]);
        let a = csv_of(&run_bench(&cfg, 1).unwrap());
        let b = csv_of(&run_bench(&cfg, 3).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 1 + 3 * 3);
    }

    #[test]
    fn summary_matches_recomputation_from_csv() {
        let cfg = tiny(BenchMode::BivariateAssumeCause, &["lingam", "reci"]);
        let result = run_bench(&cfg, 1).unwrap();
        let back = read_records(csv_of(&result).as_bytes()).unwrap();
        assert_eq!(back, result.records);
        for row in result.summary.iter().filter(|r| r.metric == "accuracy") {
            let hits: Vec<f64> = back
                .iter()
                .filter(|r| r.method == row.method && r.error.is_none())
                .map(|r| if r.correct == Some(true) { 1.0 } else { 0.0 })
                .collect();
            assert_eq!(row.trials, hits.len());
            assert!((row.mean - hits.iter().sum::<f64>() / hits.len() as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn no_effect_summary_carries_reference_line() {
        let cfg = tiny(BenchMode::NoEffect, &["lingam"]);
        let result = run_bench(&cfg, 1).unwrap();
        let r = result.summary.iter().find(|r| r.metric == "reference_inconclusive_rate").unwrap();
        assert_eq!(r.mean, 0.95);
        assert!(result.records.iter().all(|r| r.truth == "inconclusive" && !r.swapped));
    }

    #[test]
    fn multivariate_reports_hybrid_and_pc_only() {
        let cfg = tiny(BenchMode::Multivariate, &["pc-hybrid"]);
        let result = run_bench(&cfg, 1).unwrap();
        assert!(result.records.iter().any(|r| r.method == PC_ONLY));
        assert!(result.summary.iter().any(|r| r.method == "pc-hybrid" && r.metric == "f1"));
    }

    #[test]
    fn trial_seeds_reproduce_the_dataset() {
        let cfg = tiny(BenchMode::Bivariate4Test, &["lingam"]);
        let result = run_bench(&cfg, 1).unwrap();
        let rec = &result.records[1];
        let cell = Cell { segments: rec.segments, n_per_segment: rec.n_e, depth: rec.depth };
        assert_eq!(rec.data_seed, data_seed(cfg.base_seed, cell, rec.trial));
        assert_eq!(rec.method_seed, method_seed(rec.data_seed, "lingam"));
    }

    #[test]
    fn orientation_is_randomized() {
        let mut cfg = tiny(BenchMode::BivariateAssumeCause, &["reci"]);
        cfg.seeds = 16;
        let result = run_bench(&cfg, 1).unwrap();
        let swapped = result.records.iter().filter(|r| r.swapped).count();
        assert!(swapped > 0 && swapped < 16);
        assert!(result.records.iter().all(|r| (r.truth == "x2_causes") == r.swapped));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = tiny(BenchMode::Bivariate4Test, &["lingam"]);
        cfg.grid.segments = vec![2];
        assert!(run_bench(&cfg, 1).unwrap_err().to_string().contains("identifiability"));
        let mut cfg = tiny(BenchMode::Bivariate4Test, &["nope"]);
        cfg.seeds = 1;
        assert!(run_bench(&cfg, 1).is_err());
        let cfg = ExperimentConfig { seeds: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn defaults_follow_the_desk_scale_grid() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.grid.n_per_segment, vec![512]);
        assert_eq!(cfg.dim, 6);
        assert_eq!(cfg.gen_config(Cell { segments: 10, n_per_segment: 512, depth: 1 }, 0).edge_prob, Some(1.0));
        let multi = ExperimentConfig { mode: BenchMode::Multivariate, ..Default::default() };
        assert_eq!(multi.gen_config(Cell { segments: 10, n_per_segment: 512, depth: 1 }, 0).edge_prob, Some(0.4));
    }
}
