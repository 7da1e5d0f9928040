//! Estimation and hypothesis testing for the protocol's count data.
//!
//! The estimand is Delta = nu(a+|c+) - nu(a+|b+) - nu(c+|b-). Positive
//! true Delta is what the whole experiment is after, so the primary
//! test is one-sided: H0 "Delta <= 0" (a classical description is
//! possible as far as this inequality goes) against H1 "Delta > 0".
//! The three branches are independent binomials because every subject
//! appears in exactly one branch; that independence is a requirement on
//! ingested data, not something the test can verify.
//!
//! Two methods are provided: a z-test on the delta estimate (primary)
//! and a minimum chi-squared fit of the observed counts to the
//! realizable set (the closest literal reading of "apply the chi-square
//! criteria"). Boundary proportions switch interval construction to
//! Wilson scores, and zero-variance point estimates never auto-claim
//! significance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use thiserror::Error;

use crate::classical::{realize, RealizabilityVerdict};
use crate::prob::ConditionalTriple;
use crate::protocol::{
    frequencies, homogeneity_check, FrequencyTriple, HomogeneityCheck, ProtocolError,
    ProtocolResult,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("a conditional branch has zero trials; no frequency is defined")]
    ZeroBranch,
    #[error("target delta {0} outside (0, 1]")]
    InvalidTarget(f64),
    #[error("power {0} outside (0, 1)")]
    InvalidPower(f64),
    #[error("invalid test configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Which decision procedure to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    #[default]
    ZTest,
    Chi2Fit,
}

/// Test parameters. `delta_threshold` is the practical-significance
/// margin the experimenter fixes in advance, `alpha` the test level and
/// `confidence` the level of the reported lower bound on Delta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TestConfigRaw", into = "TestConfigRaw")]
pub struct TestConfig {
    pub delta_threshold: f64,
    pub alpha: f64,
    pub confidence: f64,
    pub method: TestMethod,
}

#[derive(Serialize, Deserialize)]
struct TestConfigRaw {
    delta_threshold: f64,
    alpha: f64,
    confidence: f64,
    method: TestMethod,
}

impl TryFrom<TestConfigRaw> for TestConfig {
    type Error = StatsError;
    fn try_from(raw: TestConfigRaw) -> Result<Self, Self::Error> {
        TestConfig::new(raw.delta_threshold, raw.alpha, raw.confidence, raw.method)
    }
}

impl From<TestConfig> for TestConfigRaw {
    fn from(cfg: TestConfig) -> Self {
        TestConfigRaw {
            delta_threshold: cfg.delta_threshold,
            alpha: cfg.alpha,
            confidence: cfg.confidence,
            method: cfg.method,
        }
    }
}

impl TestConfig {
    pub fn new(
        delta_threshold: f64,
        alpha: f64,
        confidence: f64,
        method: TestMethod,
    ) -> Result<Self, StatsError> {
        if !delta_threshold.is_finite() || delta_threshold < 0.0 {
            return Err(StatsError::InvalidConfig(format!(
                "delta threshold {delta_threshold} must be >= 0"
            )));
        }
        if !alpha.is_finite() || !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
            return Err(StatsError::InvalidConfig(format!(
                "alpha {alpha} must lie in (0, 1)"
            )));
        }
        if !confidence.is_finite() || !(0.0..1.0).contains(&confidence) || confidence == 0.0 {
            return Err(StatsError::InvalidConfig(format!(
                "confidence {confidence} must lie in (0, 1)"
            )));
        }
        Ok(TestConfig {
            delta_threshold,
            alpha,
            confidence,
            method,
        })
    }
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            delta_threshold: 0.01,
            alpha: 0.05,
            confidence: 0.95,
            method: TestMethod::ZTest,
        }
    }
}

/// Point estimate of Delta with its delta-method standard error over
/// three independent binomial branches. `boundary` flags any branch
/// proportion at 0 or 1, where the plug-in variance degenerates and
/// interval methods must take over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaEstimate {
    pub value: f64,
    pub std_error: f64,
    pub boundary: bool,
}

/// Delta estimate from the three observed frequencies.
pub fn delta_hat(f: &FrequencyTriple) -> Result<DeltaEstimate, StatsError> {
    if f.trials().contains(&0) {
        return Err(StatsError::ZeroBranch);
    }
    let [p1, p2, p3] = f.values();
    let [n1, n2, n3] = f.trials().map(|n| n as f64);
    let value = p3 - p1 - p2;
    let variance = p1 * (1.0 - p1) / n1 + p2 * (1.0 - p2) / n2 + p3 * (1.0 - p3) / n3;
    let boundary = [p1, p2, p3].iter().any(|&p| p == 0.0 || p == 1.0);
    Ok(DeltaEstimate {
        value,
        std_error: variance.sqrt(),
        boundary,
    })
}

/// Final verdict over a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ClassicalConsistent,
    QuantumLike,
    Inconclusive,
}

/// Everything the analysis reports for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub delta_hat: f64,
    pub std_error: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub lower_confidence_bound: f64,
    pub exceeds_delta_threshold: bool,
    pub boundary_adjusted: bool,
    pub verdict: Verdict,
    pub homogeneity_pass: bool,
    pub homogeneity_chi2: f64,
    pub realizability: RealizabilityVerdict,
    pub frequencies: FrequencyTriple,
    pub config: TestConfig,
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

pub(crate) fn normal_quantile(p: f64) -> f64 {
    standard_normal().inverse_cdf(p)
}

pub(crate) fn normal_sf(z: f64) -> f64 {
    standard_normal().sf(z)
}

fn chi2_sf_1dof(x: f64) -> f64 {
    ChiSquared::new(1.0).expect("1 dof").sf(x.max(0.0))
}

/// One-sided Wilson score bounds for a binomial proportion at quantile `z`.
fn wilson_bounds(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denominator = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denominator;
    let halfwidth = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denominator;
    ((center - halfwidth).max(0.0), (center + halfwidth).min(1.0))
}

/// Lower confidence bound on Delta built from per-branch Wilson bounds:
/// lower on the positive branch, upper on the two negated ones.
fn wilson_delta_lower(f: &FrequencyTriple, z: f64) -> f64 {
    let lower3 = wilson_bounds(
        f.nu_a_given_c_plus.successes,
        f.nu_a_given_c_plus.trials,
        z,
    )
    .0;
    let upper1 = wilson_bounds(
        f.nu_a_given_b_plus.successes,
        f.nu_a_given_b_plus.trials,
        z,
    )
    .1;
    let upper2 = wilson_bounds(
        f.nu_c_given_b_minus.successes,
        f.nu_c_given_b_minus.trials,
        z,
    )
    .1;
    lower3 - upper1 - upper2
}

/// Wilson-center standard error, strictly positive even at boundary
/// proportions; used so boundary data still yields a finite statistic.
fn wilson_adjusted_std_error(f: &FrequencyTriple, z: f64) -> f64 {
    let z2 = z * z;
    let mut variance = 0.0;
    for freq in [
        f.nu_a_given_b_plus,
        f.nu_c_given_b_minus,
        f.nu_a_given_c_plus,
    ] {
        let n = freq.trials as f64;
        let adjusted = (freq.successes as f64 + z2 / 2.0) / (n + z2);
        variance += adjusted * (1.0 - adjusted) / (n + z2);
    }
    variance.sqrt()
}

/// Pearson chi-squared of the observed branch counts against candidate
/// conditionals `t`, three independent binomial branches.
fn pearson_chi2(f: &FrequencyTriple, t: &[f64; 3]) -> f64 {
    let observed = f.values();
    let trials = f.trials().map(|n| n as f64);
    let mut total = 0.0;
    for i in 0..3 {
        let diff = observed[i] - t[i];
        if diff.abs() < 1e-15 {
            continue;
        }
        let denominator = (t[i] * (1.0 - t[i])).max(1e-12);
        total += trials[i] * diff * diff / denominator;
    }
    total
}

/// Minimum Pearson chi-squared over the realizable set, found by
/// projected multi-directional descent with a halving step. Returns 0
/// whenever the observed triple itself is realizable.
fn chi2_fit_statistic(f: &FrequencyTriple) -> f64 {
    let observed = f.values();
    if realizable(&observed) {
        return 0.0;
    }

    // 26 direction vectors: every nonzero sign pattern over 3 coords,
    // so descent can slide along any single active face.
    let mut directions = Vec::with_capacity(26);
    for dx in [-1.0, 0.0, 1.0] {
        for dy in [-1.0, 0.0, 1.0] {
            for dz in [-1.0, 0.0, 1.0] {
                if dx != 0.0 || dy != 0.0 || dz != 0.0 {
                    directions.push([dx, dy, dz]);
                }
            }
        }
    }

    let centroid = [0.5, 0.5, 0.5];
    let mut best: Option<([f64; 3], f64)> = None;
    for start in [project_toward(&observed, &centroid), centroid] {
        let mut current = start;
        let mut value = pearson_chi2(f, &current);
        let mut step = 0.25;
        // Step halving alone guarantees termination; the sweep budget
        // bounds the move phase as well.
        let mut sweeps = 0u32;
        while step > 1e-12 && sweeps < 10_000 {
            sweeps += 1;
            let mut moved = false;
            for d in &directions {
                let candidate = [
                    (current[0] + step * d[0]).clamp(0.0, 1.0),
                    (current[1] + step * d[1]).clamp(0.0, 1.0),
                    (current[2] + step * d[2]).clamp(0.0, 1.0),
                ];
                if !realizable(&candidate) {
                    continue;
                }
                let candidate_value = pearson_chi2(f, &candidate);
                if candidate_value < value {
                    current = candidate;
                    value = candidate_value;
                    moved = true;
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        if best.is_none_or(|(_, b)| value < b) {
            best = Some((current, value));
        }
    }
    best.expect("at least one start point").1
}

fn realizable(t: &[f64; 3]) -> bool {
    ConditionalTriple::new(t[0], t[1], t[2])
        .map(|triple| realize(&triple).feasible)
        .unwrap_or(false)
}

/// Walks from `from` toward `to` until the point is realizable.
fn project_toward(from: &[f64; 3], to: &[f64; 3]) -> [f64; 3] {
    let mut low = 0.0; // fraction of the way toward `to`
    let mut high = 1.0;
    let at = |lambda: f64| {
        [
            from[0] + lambda * (to[0] - from[0]),
            from[1] + lambda * (to[1] - from[1]),
            from[2] + lambda * (to[2] - from[2]),
        ]
    };
    if realizable(&at(0.0)) {
        return *from;
    }
    for _ in 0..60 {
        let mid = 0.5 * (low + high);
        if realizable(&at(mid)) {
            high = mid;
        } else {
            low = mid;
        }
    }
    at(high)
}

/// The decision procedure: estimates Delta, tests H0 "Delta <= 0"
/// against H1 "Delta > 0" by the configured method, reports whether the
/// lower confidence bound clears the practical threshold, and attaches
/// the realizability verdict on the point estimates.
pub fn test_quantum_like(
    f: &FrequencyTriple,
    homogeneity: &HomogeneityCheck,
    cfg: &TestConfig,
) -> Result<TestReport, StatsError> {
    let est = delta_hat(f)?;
    let z_confidence = normal_quantile(cfg.confidence);

    let (lower_confidence_bound, boundary_adjusted) = if est.boundary {
        (wilson_delta_lower(f, z_confidence), true)
    } else {
        (est.value - z_confidence * est.std_error, false)
    };

    let (statistic, p_value) = match cfg.method {
        TestMethod::ZTest => {
            let std_error = if est.boundary {
                wilson_adjusted_std_error(f, z_confidence)
            } else {
                est.std_error
            };
            let z = est.value / std_error;
            (z, normal_sf(z))
        }
        TestMethod::Chi2Fit => {
            let chi2 = chi2_fit_statistic(f);
            (chi2, chi2_sf_1dof(chi2))
        }
    };

    let realizability = realize(&f.point_triple());
    let quantum_like = p_value < cfg.alpha && est.value > 0.0 && homogeneity.pass;
    let verdict = if quantum_like {
        Verdict::QuantumLike
    } else if realizability.feasible || p_value >= cfg.alpha {
        Verdict::ClassicalConsistent
    } else {
        Verdict::Inconclusive
    };

    Ok(TestReport {
        delta_hat: est.value,
        std_error: est.std_error,
        statistic,
        p_value,
        lower_confidence_bound,
        exceeds_delta_threshold: lower_confidence_bound > cfg.delta_threshold,
        boundary_adjusted,
        verdict,
        homogeneity_pass: homogeneity.pass,
        homogeneity_chi2: homogeneity.chi2,
        realizability,
        frequencies: *f,
        config: *cfg,
    })
}

/// Full analysis of a protocol run: frequencies, homogeneity, test.
pub fn analyze(r: &ProtocolResult, cfg: &TestConfig) -> Result<TestReport, StatsError> {
    let f = frequencies(r)?;
    let homogeneity = homogeneity_check(r, cfg.alpha);
    test_quantum_like(&f, &homogeneity, cfg)
}

/// The canonical violation shape scaled so its delta equals `d`: the
/// affine family through (1/4, 1/4, 3/4) reaching (0, 0, 1) at d = 1.
pub fn scaled_canonical_triple(d: f64) -> ConditionalTriple {
    let q = (1.0 - d) / 3.0;
    ConditionalTriple::new(q, q, (2.0 + d) / 3.0).expect("scaled triple is valid for d in (0, 1]")
}

/// Sample-size plan for detecting a target delta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSizePlan {
    pub n_per_branch: u64,
    pub triple: ConditionalTriple,
    /// True when the planning triple has (near-)zero variance, where the
    /// analytic formula degenerates.
    pub boundary_variance: bool,
    /// True when alpha and power make the normal quantiles cancel and
    /// any sample size nominally "suffices".
    pub degenerate_config: bool,
}

/// Smallest per-branch sample size at which the one-sided z-test at
/// level `cfg.alpha` attains the requested power against the scaled
/// canonical triple: n = (z_{1-alpha} + z_{power})^2 * sum p_i(1-p_i) / d^2,
/// rounded up.
pub fn required_sample_size(
    target_delta: f64,
    cfg: &TestConfig,
    power: f64,
) -> Result<SampleSizePlan, StatsError> {
    if !target_delta.is_finite() || target_delta <= 0.0 || target_delta > 1.0 {
        return Err(StatsError::InvalidTarget(target_delta));
    }
    if !power.is_finite() || power <= 0.0 || power >= 1.0 {
        return Err(StatsError::InvalidPower(power));
    }
    let triple = scaled_canonical_triple(target_delta);
    let variance_sum = [
        triple.p_a_given_b_plus,
        triple.p_c_given_b_minus,
        triple.p_a_given_c_plus,
    ]
    .iter()
    .map(|p| p * (1.0 - p))
    .sum::<f64>();
    let z_sum = normal_quantile(1.0 - cfg.alpha) + normal_quantile(power);
    let raw = z_sum * z_sum * variance_sum / (target_delta * target_delta);
    let n_per_branch = (raw.ceil() as u64).max(1);
    Ok(SampleSizePlan {
        n_per_branch,
        triple,
        boundary_variance: variance_sum < 1e-9,
        degenerate_config: z_sum <= 0.0,
    })
}

/// Monte Carlo rejection rate of the one-sided z-test when each branch
/// draws `n_per_branch` subjects from `triple`. Used to verify the
/// analytic sample-size formula and to calibrate the test under null
/// models. Deterministic in `base_seed`; replication r uses stream r+1.
pub fn empirical_rejection_rate(
    triple: &ConditionalTriple,
    n_per_branch: u64,
    cfg: &TestConfig,
    replications: u64,
    base_seed: u64,
) -> f64 {
    let probabilities = [
        triple.p_a_given_b_plus,
        triple.p_c_given_b_minus,
        triple.p_a_given_c_plus,
    ];
    let mut rejections = 0u64;
    for replication in 0..replications {
        let mut rng = ChaCha12Rng::seed_from_u64(base_seed);
        rng.set_stream(replication.wrapping_add(1));
        let mut successes = [0u64; 3];
        for (branch, &p) in probabilities.iter().enumerate() {
            for _ in 0..n_per_branch {
                if rng.random::<f64>() < p {
                    successes[branch] += 1;
                }
            }
        }
        let f = FrequencyTriple {
            nu_a_given_b_plus: crate::protocol::Frequency {
                successes: successes[0],
                trials: n_per_branch,
            },
            nu_c_given_b_minus: crate::protocol::Frequency {
                successes: successes[1],
                trials: n_per_branch,
            },
            nu_a_given_c_plus: crate::protocol::Frequency {
                successes: successes[2],
                trials: n_per_branch,
            },
        };
        let est = delta_hat(&f).expect("positive trials");
        let p_value = if est.std_error > 0.0 {
            normal_sf(est.value / est.std_error)
        } else {
            // Degenerate draw: fall back to the boundary-adjusted
            // statistic, which never auto-claims significance.
            let z_confidence = normal_quantile(cfg.confidence);
            normal_sf(est.value / wilson_adjusted_std_error(&f, z_confidence))
        };
        if p_value < cfg.alpha {
            rejections += 1;
        }
    }
    rejections as f64 / replications as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::Frequency;

    fn triple_counts(k1: u64, n1: u64, k2: u64, n2: u64, k3: u64, n3: u64) -> FrequencyTriple {
        FrequencyTriple {
            nu_a_given_b_plus: Frequency {
                successes: k1,
                trials: n1,
            },
            nu_c_given_b_minus: Frequency {
                successes: k2,
                trials: n2,
            },
            nu_a_given_c_plus: Frequency {
                successes: k3,
                trials: n3,
            },
        }
    }

    fn passing_homogeneity() -> HomogeneityCheck {
        HomogeneityCheck {
            chi2_u: 0.0,
            chi2_v: 0.0,
            chi2: 0.0,
            dof: 2,
            threshold: 5.99,
            pass: true,
        }
    }

    #[test]
    fn delta_hat_examples() {
        let f = triple_counts(250, 1000, 250, 1000, 750, 1000);
        let est = delta_hat(&f).unwrap();
        assert_eq!(est.value, 0.25);
        let expected_se = (3.0 * 0.1875f64 / 1000.0).sqrt();
        assert!((est.std_error - expected_se).abs() < 1e-15);
        assert!((est.std_error - 0.02372).abs() < 5e-6);
        assert!(!est.boundary);

        let f = triple_counts(50, 100, 50, 100, 50, 100);
        assert_eq!(delta_hat(&f).unwrap().value, -0.5);

        let f = triple_counts(0, 10, 0, 10, 10, 10);
        let est = delta_hat(&f).unwrap();
        assert_eq!(est.value, 1.0);
        assert_eq!(est.std_error, 0.0);
        assert!(est.boundary);

        let f = triple_counts(0, 0, 1, 2, 1, 2);
        assert_eq!(delta_hat(&f).unwrap_err(), StatsError::ZeroBranch);
    }

    #[test]
    fn z_test_on_canonical_counts() {
        let f = triple_counts(250, 1000, 250, 1000, 750, 1000);
        let cfg = TestConfig::new(0.1, 0.05, 0.95, TestMethod::ZTest).unwrap();
        let report = test_quantum_like(&f, &passing_homogeneity(), &cfg).unwrap();
        assert!((report.statistic - 10.5409).abs() < 1e-3);
        assert!(report.p_value < 1e-15);
        assert!((report.lower_confidence_bound - 0.211).abs() < 5e-4);
        assert!(report.exceeds_delta_threshold);
        assert_eq!(report.verdict, Verdict::QuantumLike);
        assert!(!report.realizability.feasible);
        assert!(!report.boundary_adjusted);
    }

    #[test]
    fn z_test_on_null_counts() {
        let f = triple_counts(500, 1000, 500, 1000, 500, 1000);
        let cfg = TestConfig::default();
        let report = test_quantum_like(&f, &passing_homogeneity(), &cfg).unwrap();
        assert_eq!(report.delta_hat, -0.5);
        assert!(report.statistic < 0.0);
        assert!(report.p_value > 0.5);
        assert_eq!(report.verdict, Verdict::ClassicalConsistent);
        assert!(report.realizability.feasible);
    }

    #[test]
    fn failed_homogeneity_blocks_quantum_verdict() {
        let f = triple_counts(250, 1000, 250, 1000, 750, 1000);
        let cfg = TestConfig::default();
        let failing = HomogeneityCheck {
            chi2_u: 40.0,
            chi2_v: 0.0,
            chi2: 40.0,
            dof: 2,
            threshold: 5.99,
            pass: false,
        };
        let report = test_quantum_like(&f, &failing, &cfg).unwrap();
        assert_ne!(report.verdict, Verdict::QuantumLike);
        assert_eq!(report.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn boundary_counts_use_wilson_and_never_auto_claim() {
        // Deterministic boundary table: delta-hat is exactly 0 with
        // zero plug-in variance.
        let f = triple_counts(500, 500, 0, 500, 500, 500);
        let cfg = TestConfig::default();
        let report = test_quantum_like(&f, &passing_homogeneity(), &cfg).unwrap();
        assert!(report.boundary_adjusted);
        assert_eq!(report.delta_hat, 0.0);
        assert!(report.statistic.abs() < 1e-12);
        assert!((report.p_value - 0.5).abs() < 1e-12);
        assert!(report.lower_confidence_bound < 0.0);
        assert!(!report.exceeds_delta_threshold);
        assert_ne!(report.verdict, Verdict::QuantumLike);

        // Perfect violation at small n: finite statistic, Wilson bound
        // strictly inside (0, 1).
        let f = triple_counts(0, 10, 0, 10, 10, 10);
        let report = test_quantum_like(&f, &passing_homogeneity(), &cfg).unwrap();
        assert!(report.statistic.is_finite());
        assert!(report.lower_confidence_bound < 1.0);
        assert!(report.lower_confidence_bound > 0.0);
    }

    #[test]
    fn wilson_bounds_closed_forms() {
        let z = normal_quantile(0.95);
        let (lower, upper) = wilson_bounds(10, 10, z);
        assert!((lower - 10.0 / (10.0 + z * z)).abs() < 1e-12);
        assert_eq!(upper, 1.0);
        let (lower, upper) = wilson_bounds(0, 10, z);
        assert_eq!(lower, 0.0);
        assert!((upper - z * z / (10.0 + z * z)).abs() < 1e-12);
    }

    #[test]
    fn chi2_fit_zero_on_realizable_data() {
        let f = triple_counts(500, 1000, 500, 1000, 500, 1000);
        let cfg = TestConfig::new(0.01, 0.05, 0.95, TestMethod::Chi2Fit).unwrap();
        let report = test_quantum_like(&f, &passing_homogeneity(), &cfg).unwrap();
        assert!(report.statistic.abs() <= 1e-9);
        assert_eq!(report.p_value, 1.0);
        assert_eq!(report.verdict, Verdict::ClassicalConsistent);
    }

    #[test]
    fn chi2_fit_detects_canonical_violation() {
        let f = triple_counts(250, 1000, 250, 1000, 750, 1000);
        let cfg = TestConfig::new(0.01, 0.05, 0.95, TestMethod::Chi2Fit).unwrap();
        let report = test_quantum_like(&f, &passing_homogeneity(), &cfg).unwrap();
        assert!(report.statistic > 0.0);
        assert!(report.p_value < 1e-6);
        assert_eq!(report.verdict, Verdict::QuantumLike);
    }

    /// Independent oracle for the constrained minimum: scan the active
    /// face t3 = t1 + t2 on a fine grid.
    #[test]
    fn chi2_fit_matches_face_grid_scan() {
        let f = triple_counts(250, 1000, 250, 1000, 750, 1000);
        let statistic = chi2_fit_statistic(&f);

        let mut best = f64::INFINITY;
        let steps = 1000;
        for i in 0..=steps {
            let t1 = i as f64 / steps as f64;
            for j in 0..=steps {
                let t2 = j as f64 / steps as f64;
                let t3 = t1 + t2;
                if t3 > 1.0 {
                    continue;
                }
                if !realizable(&[t1, t2, t3]) {
                    continue;
                }
                best = best.min(pearson_chi2(&f, &[t1, t2, t3]));
            }
        }
        assert!(
            statistic <= best + 1e-6,
            "descent ({statistic}) worse than face grid ({best})"
        );
        assert!(
            statistic >= best - 0.05,
            "descent ({statistic}) suspiciously below grid floor ({best})"
        );
    }

    #[test]
    fn required_sample_size_canonical() {
        let cfg = TestConfig::default();
        let plan = required_sample_size(0.25, &cfg, 0.9).unwrap();
        assert_eq!(plan.n_per_branch, 78);
        assert!(!plan.boundary_variance);
        assert!(!plan.degenerate_config);
        let t = plan.triple;
        assert!((t.p_a_given_b_plus - 0.25).abs() < 1e-12);
        assert!((t.p_c_given_b_minus - 0.25).abs() < 1e-12);
        assert!((t.p_a_given_c_plus - 0.75).abs() < 1e-12);
    }

    #[test]
    fn required_sample_size_edge_cases() {
        let cfg = TestConfig::default();
        let plan = required_sample_size(1.0, &cfg, 0.9).unwrap();
        assert!(plan.boundary_variance);
        assert!(plan.n_per_branch <= 2);

        let loose = TestConfig::new(0.0, 0.5, 0.95, TestMethod::ZTest).unwrap();
        let plan = required_sample_size(0.25, &loose, 0.5).unwrap();
        assert_eq!(plan.n_per_branch, 1);
        assert!(plan.degenerate_config);

        assert!(matches!(
            required_sample_size(0.0, &cfg, 0.9),
            Err(StatsError::InvalidTarget(_))
        ));
        assert!(matches!(
            required_sample_size(1.5, &cfg, 0.9),
            Err(StatsError::InvalidTarget(_))
        ));
        assert!(matches!(
            required_sample_size(0.25, &cfg, 1.0),
            Err(StatsError::InvalidPower(_))
        ));
    }

    #[test]
    fn sample_size_formula_agrees_with_monte_carlo() {
        let cfg = TestConfig::default();
        let plan = required_sample_size(0.25, &cfg, 0.9).unwrap();
        let power = empirical_rejection_rate(&plan.triple, plan.n_per_branch, &cfg, 4000, 977);
        assert!(
            (power - 0.9).abs() <= 0.05,
            "empirical power {power} at n = {}",
            plan.n_per_branch
        );
        // The smallest n reaching the target power empirically lies
        // within +-10% of the analytic n: power clears 0.9 by 1.1x n
        // and is already close at 0.9x n.
        let n = plan.n_per_branch as f64;
        let above = empirical_rejection_rate(&plan.triple, (n * 1.1).ceil() as u64, &cfg, 4000, 977);
        assert!(above >= 0.9, "power {above} at 1.1x n");
        let below = empirical_rejection_rate(&plan.triple, (n * 0.7) as u64, &cfg, 4000, 977);
        assert!(below < power);
    }

    #[test]
    fn calibration_at_noise_bearing_null() {
        // True delta exactly 0 with variance in every branch.
        let null = ConditionalTriple::new(0.25, 0.5, 0.75).unwrap();
        let cfg = TestConfig::default();
        let rate = empirical_rejection_rate(&null, 1000, &cfg, 2000, 31);
        assert!(
            (0.03..=0.07).contains(&rate),
            "rejection rate {rate} off nominal 0.05"
        );
    }

    #[test]
    fn interior_null_rejects_below_alpha() {
        let interior = ConditionalTriple::new(0.5, 0.5, 0.5).unwrap(); // delta -0.5
        let cfg = TestConfig::default();
        let rate = empirical_rejection_rate(&interior, 200, &cfg, 1000, 8);
        assert!(rate <= cfg.alpha);
        assert_eq!(rate, 0.0);
    }

    #[test]
    fn infeasible_data_with_negative_delta_is_inconclusive_under_chi2() {
        // All three conditionals near 0.9: delta is strongly negative,
        // yet no symmetric-marginal joint carries three simultaneous
        // 0.45 pair masses, so the fit rejects while the one-sided
        // delta claim stays off the table.
        let f = triple_counts(900, 1000, 900, 1000, 900, 1000);
        let cfg = TestConfig::new(0.01, 0.05, 0.95, TestMethod::Chi2Fit).unwrap();
        let report = test_quantum_like(&f, &passing_homogeneity(), &cfg).unwrap();
        assert!(report.delta_hat < 0.0);
        assert!(!report.realizability.feasible);
        assert!(report.statistic > 0.0);
        assert!(report.p_value < cfg.alpha);
        assert_eq!(report.verdict, Verdict::Inconclusive);

        // The z-test reads the same data as classically consistent: it
        // only ever looks at the delta direction.
        let cfg_z = TestConfig::default();
        let report_z = test_quantum_like(&f, &passing_homogeneity(), &cfg_z).unwrap();
        assert_eq!(report_z.verdict, Verdict::ClassicalConsistent);
        assert!(report_z.p_value >= cfg_z.alpha);
    }

    #[test]
    fn inhomogeneous_quantum_population_never_claims_quantum_like() {
        use crate::protocol::{run_protocol, AgentModel};
        use crate::quantum::{DensityMatrix2, QubitExperiment};
        // A partially polarized state biases the first answers; the
        // homogeneity gate must block the quantum-like verdict no
        // matter what the delta estimate does.
        let state = DensityMatrix2::from_bloch(0.0, 0.0, 0.4).unwrap();
        let experiment = QubitExperiment::with_state(120.0, 0.0, 60.0, state);
        assert!(!experiment.is_homogeneous());
        let model = AgentModel::quantum(experiment);
        let result = run_protocol(&model, 20_000, 3).unwrap();
        let report = analyze(&result, &TestConfig::default()).unwrap();
        assert!(!report.homogeneity_pass);
        assert_ne!(report.verdict, Verdict::QuantumLike);
    }

    #[test]
    fn analyze_runs_end_to_end() {
        use crate::protocol::{run_protocol, AgentModel};
        use crate::quantum::QubitExperiment;
        let model = AgentModel::quantum(QubitExperiment::canonical());
        let result = run_protocol(&model, 10_000, 11).unwrap();
        let report = analyze(&result, &TestConfig::default()).unwrap();
        assert_eq!(report.verdict, Verdict::QuantumLike);
        assert!(report.p_value < 1e-6);
        assert!(report.homogeneity_pass);
        assert!(!report.realizability.feasible);
    }

    #[test]
    fn report_json_round_trip_is_lossless() {
        let f = triple_counts(250, 1000, 250, 1000, 750, 1000);
        let report =
            test_quantum_like(&f, &passing_homogeneity(), &TestConfig::default()).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let back: TestReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        // Stable key order means byte-identical reserialization.
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }

    #[test]
    fn config_validation() {
        assert!(TestConfig::new(-0.1, 0.05, 0.95, TestMethod::ZTest).is_err());
        assert!(TestConfig::new(0.0, 0.0, 0.95, TestMethod::ZTest).is_err());
        assert!(TestConfig::new(0.0, 0.05, 1.0, TestMethod::ZTest).is_err());
        assert!(serde_json::from_str::<TestConfig>(
            r#"{"delta_threshold":0.0,"alpha":2.0,"confidence":0.9,"method":"z_test"}"#
        )
        .is_err());
    }
}
