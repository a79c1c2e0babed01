//! Bivariate comparison methods.
//!
//! * [`direct_lingam_bivariate`]: least-squares residuals, HSIC of each
//!   regressor against the residual it produced.
//! * [`resit_bivariate`]: the same with kernel ridge regression.
//! * [`icp_bivariate`]: kernel ridge on the pooled data, then a test that the
//!   residual distribution is the same in every segment.
//! * [`reci_bivariate`]: the direction with the smaller regression error.
//! * [`linear_ica_nonsens`]: score-matching ICA on the observations
//!   themselves instead of on learned features, then the four tests.
//!
//! Residual-based methods decide with [`two_test_rule`] at `α/2` per test,
//! or by [`p_value_rule`] when an effect is assumed to exist.

pub mod regression;

pub use regression::{kernel_ridge_fit, ols_fit, KernelRidgeConfig, RegressionFit, RegressionMethod};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::datagen::SegmentedDataset;
use crate::direction::{likelihood_ratio, DirectionScore};
use crate::error::{param, Result};
use crate::rng;
use crate::smica::{self, SmicaConfig, UnmixingModel};
use crate::stats::{ks_two_sample, HsicConfig, Points, DEFAULT_NEIGHBORS};
use crate::verdict::{four_test_verdict, p_value_rule, two_test_rule, CausalVerdict, Decision, KeyedTest, Stratification, Tester};

/// How a pair of per-direction tests becomes a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionMode {
    /// Exactly one non-rejected test names the cause.
    #[default]
    Threshold,
    /// An effect is assumed; the larger p-value names the cause.
    PValue,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub alpha: f64,
    pub seed: u64,
    pub mode: DecisionMode,
    pub hsic: HsicConfig,
    pub stratification: Stratification,
    pub regression: KernelRidgeConfig,
    pub smica: SmicaConfig,
    pub entropy_k: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            seed: 0,
            mode: DecisionMode::Threshold,
            hsic: HsicConfig::default(),
            stratification: Stratification::default(),
            regression: KernelRidgeConfig::default(),
            smica: SmicaConfig::default(),
            entropy_k: DEFAULT_NEIGHBORS,
        }
    }
}

impl BaselineConfig {
    fn check_alpha(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(param(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }

    fn regression(&self) -> KernelRidgeConfig {
        KernelRidgeConfig { seed: rng::derive(self.seed, &[4]), ..self.regression.clone() }
    }
}

/// Standardized columns of a two-variable dataset.
fn standardized_pair(data: &SegmentedDataset) -> Result<(SegmentedDataset, [Vec<f64>; 2])> {
    if data.dim() != 2 {
        return Err(param(format!("bivariate methods need exactly 2 variables, got {}", data.dim())));
    }
    let (std, _, _) = data.standardized()?;
    let cols = [std.column(0), std.column(1)];
    Ok((std, cols))
}

fn decide(mode: DecisionMode, reject: [bool; 2], p: [f64; 2]) -> Decision {
    match mode {
        DecisionMode::Threshold => two_test_rule(reject[0], reject[1]),
        DecisionMode::PValue => p_value_rule(p[0], p[1]).0,
    }
}

/// `residuals[j]` is the residual of `x_j` regressed on the other variable.
/// Each candidate cause is tested against the residual of the other.
fn residual_verdict(x: &[Vec<f64>; 2], residuals: [&[f64]; 2], labels: &[usize], config: &BaselineConfig) -> Result<CausalVerdict> {
    config.check_alpha()?;
    let alpha_effective = config.alpha / 2.0;
    let hsic = HsicConfig { seed: rng::derive(config.seed, &[3]), ..config.hsic.clone() };
    let tester = Tester::new(labels, config.stratification, hsic);
    let mut tests = Vec::with_capacity(2);
    for cause in 0..2 {
        let effect = 1 - cause;
        let kx = tester.prepare(&x[cause])?;
        let kr = tester.prepare(residuals[effect])?;
        // one seed stream for both tests keeps the method symmetric under a
        // column swap
        let result = tester.test(&kx, &kr, alpha_effective, &[0])?;
        tests.push(KeyedTest { variable: cause, partner: effect, result });
    }
    let decision =
        decide(config.mode, [tests[0].result.reject, tests[1].result.reject], [tests[0].result.p_value, tests[1].result.p_value]);
    Ok(CausalVerdict { decision, tests, alpha: config.alpha, alpha_effective })
}

pub fn direct_lingam_bivariate(data: &SegmentedDataset, config: &BaselineConfig) -> Result<CausalVerdict> {
    let (std, x) = standardized_pair(data)?;
    let r1 = ols_fit(&x[1], &x[0])?.residuals;
    let r2 = ols_fit(&x[0], &x[1])?.residuals;
    residual_verdict(&x, [&r1, &r2], std.labels(), config)
}

pub fn resit_bivariate(data: &SegmentedDataset, config: &BaselineConfig) -> Result<CausalVerdict> {
    let (std, x) = standardized_pair(data)?;
    let reg = config.regression();
    let r1 = kernel_ridge_fit(&Points::scalar(&x[1]), &x[0], &reg)?.residuals;
    let r2 = kernel_ridge_fit(&Points::scalar(&x[0]), &x[1], &reg)?.residuals;
    residual_verdict(&x, [&r1, &r2], std.labels(), config)
}

/// Residual-invariance test for one candidate cause.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceTest {
    pub cause: usize,
    /// Largest KS distance between one segment's residuals and the rest.
    pub statistic: f64,
    /// Smallest per-segment KS p-value.
    pub min_p_value: f64,
    /// Bonferroni-adjusted over segments.
    pub p_value: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpVerdict {
    pub decision: Decision,
    pub tests: [InvarianceTest; 2],
    pub alpha: f64,
    pub alpha_effective: f64,
}

/// Smallest segment the KS comparison accepts.
pub const MIN_SEGMENT_ROWS: usize = 5;

pub fn icp_bivariate(data: &SegmentedDataset, config: &BaselineConfig) -> Result<IcpVerdict> {
    config.check_alpha()?;
    let (std, x) = standardized_pair(data)?;
    let segments = std.segment_rows();
    if segments.len() < 2 {
        return Err(param("invariance across segments needs at least 2 segments"));
    }
    if let Some(small) = segments.iter().map(Vec::len).find(|&len| len < MIN_SEGMENT_ROWS) {
        return Err(param(format!("every segment needs at least {MIN_SEGMENT_ROWS} rows for the KS test, found {small}")));
    }
    let labels = std.labels();
    let e = segments.len();
    let alpha_effective = config.alpha / 2.0;
    let reg = config.regression();
    let mut tests = Vec::with_capacity(2);
    for cause in 0..2 {
        let res = kernel_ridge_fit(&Points::scalar(&x[cause]), &x[1 - cause], &reg)?.residuals;
        let mut statistic: f64 = 0.0;
        let mut min_p: f64 = 1.0;
        for (seg, rows) in segments.iter().enumerate() {
            let inside: Vec<f64> = rows.iter().map(|&i| res[i]).collect();
            let outside: Vec<f64> = res.iter().zip(labels).filter(|(_, &l)| l != seg).map(|(r, _)| *r).collect();
            let ks = ks_two_sample(&inside, &outside)?;
            statistic = statistic.max(ks.statistic);
            min_p = min_p.min(ks.p_value);
        }
        let p_value = (min_p * e as f64).min(1.0);
        tests.push(InvarianceTest { cause, statistic, min_p_value: min_p, p_value, reject: p_value < alpha_effective });
    }
    let decision = decide(config.mode, [tests[0].reject, tests[1].reject], [tests[0].p_value, tests[1].p_value]);
    let tests: [InvarianceTest; 2] = tests.try_into().expect("two directions");
    Ok(IcpVerdict { decision, tests, alpha: config.alpha, alpha_effective })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReciVerdict {
    pub decision: Decision,
    /// `mse[c]`: error of predicting the other variable from variable `c`.
    pub mse: [f64; 2],
    /// The errors were exactly equal; the decision defaults to X2.
    pub tie: bool,
}

pub fn reci_bivariate(data: &SegmentedDataset, config: &BaselineConfig) -> Result<ReciVerdict> {
    let (_, x) = standardized_pair(data)?;
    let reg = config.regression();
    let mse = [kernel_ridge_fit(&Points::scalar(&x[0]), &x[1], &reg)?.mse, kernel_ridge_fit(&Points::scalar(&x[1]), &x[0], &reg)?.mse];
    let decision = if mse[0] < mse[1] { Decision::X1Causes } else { Decision::X2Causes };
    Ok(ReciVerdict { decision, mse, tie: mse[0] == mse[1] })
}

/// Linear unmixing of the standardized observations.
#[derive(Debug, Clone)]
pub struct LinearIcaEstimate {
    pub data: SegmentedDataset,
    pub model: UnmixingModel,
    pub disturbances: DMatrix<f64>,
}

pub fn linear_ica_estimate(data: &SegmentedDataset, config: &BaselineConfig) -> Result<LinearIcaEstimate> {
    let (std, _) = standardized_pair(data)?;
    if std.n_segments() < 3 {
        return Err(param("at least 3 distinct segments are required for identifiability"));
    }
    let cfg = SmicaConfig { seed: rng::derive(config.seed, &[2]), ..config.smica.clone() };
    let model = smica::fit(std.x(), std.labels(), &cfg)?;
    let disturbances = model.transform(std.x());
    Ok(LinearIcaEstimate { data: std, model, disturbances })
}

/// Four tests on linearly unmixed observations.
pub fn linear_ica_nonsens(data: &SegmentedDataset, config: &BaselineConfig) -> Result<CausalVerdict> {
    config.check_alpha()?;
    let est = linear_ica_estimate(data, config)?;
    let x = [est.data.column(0), est.data.column(1)];
    let n: Vec<Vec<f64>> = (0..2).map(|j| est.disturbances.column(j).iter().copied().collect()).collect();
    let hsic = HsicConfig { seed: rng::derive(config.seed, &[3]), ..config.hsic.clone() };
    let tester = Tester::new(est.data.labels(), config.stratification, hsic);
    four_test_verdict([&x[0], &x[1]], [&n[0], &n[1]], &tester, config.alpha)
}

/// Likelihood-ratio direction with the linear unmixing as the disturbance map.
pub fn linear_ica_direction(data: &SegmentedDataset, config: &BaselineConfig) -> Result<DirectionScore> {
    let est = linear_ica_estimate(data, config)?;
    likelihood_ratio(est.data.x(), &est.disturbances, &est.model.as_map(), config.entropy_k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, GenConfig, MixingMode};
    use crate::rng;
    use crate::stats::NullMethod;
    use rand::Rng as _;
    use rand_distr::{Distribution, Exp1, StandardNormal};

    fn config(seed: u64) -> BaselineConfig {
        let mut c = BaselineConfig { seed, ..Default::default() };
        c.hsic.method = NullMethod::Gamma;
        c
    }

    fn laplace(r: &mut rng::Rng) -> f64 {
        let e: f64 = Exp1.sample(r);
        if r.random::<bool>() {
            e
        } else {
            -e
        }
    }

    /// Segmented dataset from row-wise generator `f(segment, rng) -> (x, y)`.
    fn pairs(e: usize, n_e: usize, seed: u64, mut f: impl FnMut(usize, &mut rng::Rng) -> (f64, f64)) -> SegmentedDataset {
        let mut r = rng::rng(seed);
        let mut x = DMatrix::zeros(e * n_e, 2);
        let mut labels = Vec::with_capacity(e * n_e);
        for i in 0..e * n_e {
            let seg = i / n_e;
            let (a, b) = f(seg, &mut r);
            x[(i, 0)] = a;
            x[(i, 1)] = b;
            labels.push(seg);
        }
        SegmentedDataset::new(x, labels).unwrap()
    }

    fn swapped(data: &SegmentedDataset) -> SegmentedDataset {
        data.select_columns(&[1, 0]).unwrap()
    }

    #[test]
    fn lingam_orients_laplace_pairs() {
        let mut right = 0;
        for seed in 0..20 {
            let data = pairs(4, 512, seed, |_, r| {
                let a = laplace(r);
                (a, 0.8 * a + 0.6 * laplace(r))
            });
            right += (direct_lingam_bivariate(&data, &config(seed)).unwrap().decision == Decision::X1Causes) as usize;
        }
        assert!(right >= 18, "{right}/20");
    }

    #[test]
    fn lingam_has_no_direction_bias_on_gaussian_pairs() {
        let mut counts = [0usize; 2];
        for seed in 0..40 {
            let data = pairs(4, 256, 100 + seed, |_, r| {
                let a: f64 = StandardNormal.sample(r);
                let e: f64 = StandardNormal.sample(r);
                (a, 0.8 * a + 0.6 * e)
            });
            match direct_lingam_bivariate(&data, &config(seed)).unwrap().decision {
                Decision::X1Causes => counts[0] += 1,
                Decision::X2Causes => counts[1] += 1,
                Decision::Inconclusive => {}
            }
        }
        // with Gaussian noise both residuals are independent; decisions are
        // rare and undirected
        assert!(counts[0] + counts[1] <= 8, "{counts:?}");
        assert!(counts[0].abs_diff(counts[1]) <= 6, "{counts:?}");
    }

    #[test]
    fn resit_orients_cubic_additive_noise() {
        let mut right = 0;
        for seed in 0..12 {
            let data = pairs(4, 256, 200 + seed, |_, r| {
                let a: f64 = StandardNormal.sample(r);
                (a, a.powi(3) + laplace(r))
            });
            right += (resit_bivariate(&data, &config(seed)).unwrap().decision == Decision::X1Causes) as usize;
        }
        assert!(right >= 10, "{right}/12");
    }

    #[test]
    fn resit_rarely_errs_on_gaussian_pairs() {
        let mut wrong = 0;
        for seed in 0..20 {
            let data = pairs(4, 128, 300 + seed, |_, r| {
                let a: f64 = StandardNormal.sample(r);
                let e: f64 = StandardNormal.sample(r);
                (a, 0.7 * a + 0.7 * e)
            });
            wrong += (resit_bivariate(&data, &config(seed)).unwrap().decision == Decision::X2Causes) as usize;
        }
        assert!(wrong <= 2, "{wrong}/20");
    }

    #[test]
    fn icp_finds_invariant_mechanism() {
        let mut right = 0;
        for seed in 0..10 {
            let data = pairs(5, 200, 400 + seed, |seg, r| {
                let z: f64 = StandardNormal.sample(r);
                let a = seg as f64 - 2.0 + (0.5 + 0.3 * seg as f64) * z;
                let e: f64 = StandardNormal.sample(r);
                (a, a.tanh() * 2.0 + 0.3 * e)
            });
            right += (icp_bivariate(&data, &config(seed)).unwrap().decision == Decision::X1Causes) as usize;
        }
        assert!(right >= 8, "{right}/10");
    }

    #[test]
    fn icp_is_inconclusive_when_both_mechanisms_shift() {
        let mut inconclusive = 0;
        for seed in 0..10 {
            let data = pairs(5, 200, 500 + seed, |seg, r| {
                let a: f64 = StandardNormal.sample(r);
                let e: f64 = StandardNormal.sample(r);
                let k = 0.5 + 0.5 * seg as f64;
                (a + 0.3 * k * e, k * a + e)
            });
            inconclusive += (icp_bivariate(&data, &config(seed)).unwrap().decision == Decision::Inconclusive) as usize;
        }
        assert!(inconclusive >= 7, "{inconclusive}/10");
    }

    #[test]
    fn icp_needs_segments() {
        let data = pairs(1, 50, 1, |_, r| (r.random(), r.random()));
        assert!(icp_bivariate(&data, &config(0)).is_err());
        let data = pairs(12, 4, 1, |_, r| (r.random(), r.random()));
        assert!(icp_bivariate(&data, &config(0)).is_err());
    }

    #[test]
    fn reci_orients_quadratic_pairs() {
        let mut right = 0;
        for seed in 0..20 {
            let data = pairs(2, 200, 600 + seed, |_, r| {
                let a: f64 = r.random_range(0.0..1.0);
                let e: f64 = StandardNormal.sample(r);
                (a, a * a + 0.05 * e)
            });
            right += (reci_bivariate(&data, &config(seed)).unwrap().decision == Decision::X1Causes) as usize;
        }
        assert!(right >= 14, "{right}/20");
    }

    #[test]
    fn reci_is_affine_invariant() {
        let data = pairs(3, 150, 7, |_, r| {
            let a: f64 = StandardNormal.sample(r);
            (a, a.sin() + 0.2 * laplace(r))
        });
        let scaled = data.with_x(data.x().map(|v| 2.0 * v + 1.0)).unwrap();
        let a = reci_bivariate(&data, &config(1)).unwrap();
        let b = reci_bivariate(&scaled, &config(1)).unwrap();
        assert_eq!(a.decision, b.decision);
        assert!((a.mse[0] - b.mse[0]).abs() < 1e-10 && (a.mse[1] - b.mse[1]).abs() < 1e-10);
    }

    #[test]
    fn methods_are_symmetric_under_column_swap() {
        let mut cfg = config(3);
        cfg.hsic.method = NullMethod::Permutation;
        cfg.hsic.permutations = 200;
        for seed in 0..3 {
            let data = pairs(4, 100, 700 + seed, |seg, r| {
                let a = laplace(r) * (1.0 + seg as f64 * 0.3);
                (a, a.tanh() + 0.5 * laplace(r))
            });
            let sw = swapped(&data);
            let pairs = [
                (direct_lingam_bivariate(&data, &cfg).unwrap().decision, direct_lingam_bivariate(&sw, &cfg).unwrap().decision),
                (resit_bivariate(&data, &cfg).unwrap().decision, resit_bivariate(&sw, &cfg).unwrap().decision),
                (icp_bivariate(&data, &cfg).unwrap().decision, icp_bivariate(&sw, &cfg).unwrap().decision),
                (reci_bivariate(&data, &cfg).unwrap().decision, reci_bivariate(&sw, &cfg).unwrap().decision),
            ];
            for (i, (a, b)) in pairs.into_iter().enumerate() {
                assert_eq!(a, b.swapped(), "method {i} seed {seed}");
            }
            let a = resit_bivariate(&data, &cfg).unwrap();
            let b = resit_bivariate(&sw, &cfg).unwrap();
            assert_eq!(a.tests[0].result.p_value, b.tests[1].result.p_value);
        }
    }

    #[test]
    fn p_value_mode_always_decides() {
        let mut cfg = config(0);
        cfg.mode = DecisionMode::PValue;
        let data = pairs(4, 128, 9, |_, r| {
            let a: f64 = StandardNormal.sample(r);
            (a, StandardNormal.sample(r))
        });
        assert_ne!(direct_lingam_bivariate(&data, &cfg).unwrap().decision, Decision::Inconclusive);
        assert_ne!(icp_bivariate(&data, &cfg).unwrap().decision, Decision::Inconclusive);
    }

    #[test]
    fn linear_ica_orients_linear_mixing() {
        let mut right = 0;
        let mut lr = 0;
        for seed in 0..6 {
            let (data, _) = generate(&GenConfig { seed: 80 + seed, ..Default::default() }).unwrap();
            right += (linear_ica_nonsens(&data, &config(seed)).unwrap().decision == Decision::X1Causes) as usize;
            lr += (linear_ica_direction(&data, &config(seed)).unwrap().verdict == Decision::X1Causes) as usize;
        }
        assert!(right >= 4, "four-test {right}/6");
        assert!(lr >= 5, "likelihood ratio {lr}/6");
    }

    #[test]
    fn linear_ica_is_inconclusive_on_cyclic_mixing() {
        let mut inconclusive = 0;
        for seed in 0..6 {
            let cfg = GenConfig { seed: 90 + seed, mode: MixingMode::Cyclic, ..Default::default() };
            let (data, _) = generate(&cfg).unwrap();
            inconclusive += (linear_ica_nonsens(&data, &config(seed)).unwrap().decision == Decision::Inconclusive) as usize;
        }
        assert!(inconclusive >= 5, "{inconclusive}/6");
    }

    #[test]
    fn bivariate_methods_reject_other_dimensions() {
        let (data, _) = generate(&GenConfig { dim: 3, n_per_segment: 30, ..Default::default() }).unwrap();
        assert!(direct_lingam_bivariate(&data, &config(0)).is_err());
        assert!(reci_bivariate(&data, &config(0)).is_err());
        assert!(linear_ica_nonsens(&data, &config(0)).is_err());
    }
}
