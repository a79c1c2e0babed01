//! Bivariate decisions and the counting rules that produce them.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::rng;
use crate::stats::{stratified_hsic_test, HsicConfig, IndependenceTestResult, Points, PreparedKernel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    X1Causes,
    X2Causes,
    Inconclusive,
}

impl Decision {
    /// Decision for the candidate cause with index 0 or 1.
    pub fn cause(index: usize) -> Self {
        if index == 0 {
            Decision::X1Causes
        } else {
            Decision::X2Causes
        }
    }

    /// The same decision after the two variables swap places.
    pub fn swapped(self) -> Self {
        match self {
            Decision::X1Causes => Decision::X2Causes,
            Decision::X2Causes => Decision::X1Causes,
            Decision::Inconclusive => Decision::Inconclusive,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Decision::X1Causes => "x1_causes",
            Decision::X2Causes => "x2_causes",
            Decision::Inconclusive => "inconclusive",
        }
    }
}

/// One independence test between an observed variable and a second
/// quantity (an estimated disturbance, or a regression residual).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyedTest {
    /// Observed variable, 0 or 1.
    pub variable: usize,
    /// Disturbance column, or for two-test rules the regression target.
    pub partner: usize,
    pub result: IndependenceTestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalVerdict {
    pub decision: Decision,
    pub tests: Vec<KeyedTest>,
    pub alpha: f64,
    pub alpha_effective: f64,
}

/// Four tests of each observed variable against each estimated disturbance.
/// A decision is made only when exactly one pair is not rejected; the cause
/// is that pair's observed variable. `rejects[variable][disturbance]`.
pub fn four_test_rule(rejects: [[bool; 2]; 2]) -> Decision {
    let kept: Vec<usize> = (0..4).filter(|&i| !rejects[i / 2][i % 2]).collect();
    match kept.as_slice() {
        [only] => Decision::cause(only / 2),
        _ => Decision::Inconclusive,
    }
}

/// Two tests, one per candidate cause (regressor vs. residual): the
/// candidate whose test alone is not rejected is the cause.
pub fn two_test_rule(reject_x1_cause: bool, reject_x2_cause: bool) -> Decision {
    match (reject_x1_cause, reject_x2_cause) {
        (false, true) => Decision::X1Causes,
        (true, false) => Decision::X2Causes,
        _ => Decision::Inconclusive,
    }
}

/// Compare p-values instead of thresholds: the candidate with the larger
/// independence p-value is the cause. Equal p-values go to X2 with the tie
/// flag set.
pub fn p_value_rule(p_x1_cause: f64, p_x2_cause: f64) -> (Decision, bool) {
    if p_x1_cause > p_x2_cause {
        (Decision::X1Causes, false)
    } else {
        (Decision::X2Causes, p_x1_cause == p_x2_cause)
    }
}

/// Which rows an HSIC test compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratification {
    /// One test over all rows.
    Pooled,
    /// Independence within every segment, combined into one test. Sources
    /// that are independent given the segment but share segment-wise
    /// scales are dependent when pooled; this mode does not see that.
    #[default]
    WithinSegment,
}

/// HSIC tests over a fixed row partition.
#[derive(Debug, Clone)]
pub struct Tester {
    strata: Vec<Vec<usize>>,
    config: HsicConfig,
}

impl Tester {
    pub fn new(labels: &[usize], stratification: Stratification, config: HsicConfig) -> Self {
        let strata = match stratification {
            Stratification::Pooled => vec![(0..labels.len()).collect()],
            Stratification::WithinSegment => {
                let n_seg = labels.iter().max().map_or(0, |m| m + 1);
                let mut rows = vec![Vec::new(); n_seg];
                for (i, &l) in labels.iter().enumerate() {
                    rows[l].push(i);
                }
                rows.retain(|r: &Vec<usize>| !r.is_empty());
                rows
            }
        };
        Self { strata, config }
    }

    /// Kernels of one variable, one per stratum.
    pub fn prepare(&self, values: &[f64]) -> Result<Vec<PreparedKernel>> {
        self.strata
            .iter()
            .map(|rows| {
                let v: Vec<f64> = rows.iter().map(|&i| values[i]).collect();
                PreparedKernel::new(&Points::scalar(&v), self.config.bandwidth)
            })
            .collect()
    }

    /// Test at level `alpha`; `stream` selects the permutation seed stream.
    pub fn test(&self, a: &[PreparedKernel], b: &[PreparedKernel], alpha: f64, stream: &[u64]) -> Result<IndependenceTestResult> {
        let cfg = HsicConfig { alpha, seed: rng::derive(self.config.seed, stream), ..self.config.clone() };
        stratified_hsic_test(a, b, &cfg)
    }
}

/// Run the four observed-vs-disturbance HSIC tests at `alpha / 4` and apply
/// [`four_test_rule`].
pub fn four_test_verdict(x: [&[f64]; 2], disturbances: [&[f64]; 2], tester: &Tester, alpha: f64) -> Result<CausalVerdict> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(param(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let alpha_effective = alpha / 4.0;
    let kx = [tester.prepare(x[0])?, tester.prepare(x[1])?];
    let kn = [tester.prepare(disturbances[0])?, tester.prepare(disturbances[1])?];
    let mut tests = Vec::with_capacity(4);
    let mut rejects = [[false; 2]; 2];
    for (v, kv) in kx.iter().enumerate() {
        for (j, kj) in kn.iter().enumerate() {
            let result = tester.test(kv, kj, alpha_effective, &[v as u64, j as u64])?;
            rejects[v][j] = result.reject;
            tests.push(KeyedTest { variable: v, partner: j, result });
        }
    }
    Ok(CausalVerdict { decision: four_test_rule(rejects), tests, alpha, alpha_effective })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_test_rule_over_all_patterns() {
        let mut decided = 0;
        for mask in 0u8..16 {
            let rejects = [[mask & 1 != 0, mask & 2 != 0], [mask & 4 != 0, mask & 8 != 0]];
            let kept: Vec<(usize, usize)> = (0..2).flat_map(|v| (0..2).map(move |j| (v, j))).filter(|&(v, j)| !rejects[v][j]).collect();
            let d = four_test_rule(rejects);
            if kept.len() == 1 {
                decided += 1;
                assert_eq!(d, Decision::cause(kept[0].0), "pattern {mask:04b}");
            } else {
                assert_eq!(d, Decision::Inconclusive, "pattern {mask:04b}");
            }
        }
        assert_eq!(decided, 4);
    }

    #[test]
    fn all_rejected_is_inconclusive() {
        assert_eq!(four_test_rule([[true, true], [true, true]]), Decision::Inconclusive);
        assert_eq!(two_test_rule(true, true), Decision::Inconclusive);
        assert_eq!(two_test_rule(false, false), Decision::Inconclusive);
        assert_eq!(two_test_rule(false, true), Decision::X1Causes);
    }

    #[test]
    fn p_value_rule_breaks_ties_toward_x2() {
        assert_eq!(p_value_rule(0.3, 0.1), (Decision::X1Causes, false));
        assert_eq!(p_value_rule(0.1, 0.3), (Decision::X2Causes, false));
        assert_eq!(p_value_rule(0.2, 0.2), (Decision::X2Causes, true));
    }

    #[test]
    fn tester_partitions_rows() {
        let labels = [0, 1, 0, 2, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2];
        let t = Tester::new(&labels, Stratification::WithinSegment, HsicConfig::default());
        assert_eq!(t.strata.len(), 3);
        assert_eq!(t.strata[0], vec![0, 2, 6, 9, 12]);
        let kernels = t.prepare(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0, 13.0, 14.0, 15.0]).unwrap();
        assert_eq!(kernels.iter().map(|k| k.len()).collect::<Vec<_>>(), vec![5, 5, 5]);
        assert_eq!(Tester::new(&labels, Stratification::Pooled, HsicConfig::default()).strata.len(), 1);
    }

    #[test]
    fn bonferroni_level_is_a_quarter() {
        let x1: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let x2: Vec<f64> = (0..40).map(|i| (i as f64 * 0.91).cos()).collect();
        let cfg = HsicConfig { method: crate::stats::NullMethod::Gamma, ..Default::default() };
        let labels: Vec<usize> = (0..40).map(|i| i / 10).collect();
        let tester = Tester::new(&labels, Stratification::Pooled, cfg);
        let v = four_test_verdict([&x1, &x2], [&x2, &x1], &tester, 0.05).unwrap();
        assert_eq!(v.alpha_effective, 0.0125);
        assert_eq!(v.tests.len(), 4);
        assert!(v.tests.iter().all(|t| t.result.alpha_effective == 0.0125));
        // x1 is trivially dependent on itself
        assert!(v.tests.iter().find(|t| t.variable == 0 && t.partner == 1).unwrap().result.reject);
    }
}
