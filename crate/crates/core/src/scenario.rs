//! Missed-thrust-event scenarios: which reference segments may lose their
//! burn and for how long. A scenario with `k` start indices defines the
//! depth-`k` robust problem; `k = 0` is the non-robust baseline.
//!
//! The Weibull coverage sampler estimates how much of the outage space a
//! single-MTE, capped-duration scenario set spans. Distribution parameters
//! are user-supplied; fitting them to mission history is out of scope.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Realization start indices `n_omega` (1-based reference segment numbers,
/// strictly increasing, each `1 <= n < n_ref_segments`) plus the common
/// outage duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MteScenario {
    pub start_indices: Vec<usize>,
    /// Outage duration (TU), identical across all realizations.
    pub delta_tau: f64,
}

impl MteScenario {
    /// The non-robust problem: no realizations.
    pub fn non_robust() -> Self {
        Self {
            start_indices: Vec::new(),
            delta_tau: 0.0,
        }
    }

    pub fn new(start_indices: Vec<usize>, delta_tau: f64) -> Self {
        Self {
            start_indices,
            delta_tau,
        }
    }

    /// Depth of robustness `k`.
    pub fn depth(&self) -> usize {
        self.start_indices.len()
    }

    /// Stable identifier used in archive records, e.g. `k2-n4-24-dt0.5000`.
    pub fn id(&self) -> String {
        let mut s = format!("k{}", self.depth());
        if !self.start_indices.is_empty() {
            s.push_str("-n");
            for (i, n) in self.start_indices.iter().enumerate() {
                if i > 0 {
                    s.push('-');
                }
                s.push_str(&format!("{n}"));
            }
            s.push_str(&format!("-dt{:.4}", self.delta_tau));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullParams {
    pub shape: f64,
    /// Scale in TU.
    pub scale: f64,
}

impl WeibullParams {
    pub fn is_valid(&self) -> bool {
        self.shape > 0.0 && self.scale > 0.0 && self.shape.is_finite() && self.scale.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioViolation {
    /// Index outside `1 <= n_omega < n_ref_segments`; the upper limit also
    /// rejects the degenerate zero-segment realization `n_omega = N`.
    IndexOutOfRange { position: usize, index: usize },
    NotStrictlyIncreasing { position: usize },
    NonPositiveDuration,
}

impl core::fmt::Display for ScenarioViolation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ScenarioViolation::IndexOutOfRange { position, index } => {
                write!(f, "start index #{position} = {index} outside [1, n_segments)")
            }
            ScenarioViolation::NotStrictlyIncreasing { position } => {
                write!(f, "start index #{position} does not increase strictly")
            }
            ScenarioViolation::NonPositiveDuration => {
                write!(f, "delta_tau must be positive when realizations exist")
            }
        }
    }
}

/// Total classification of a scenario against a reference segment count:
/// returns every violation rather than failing on the first.
pub fn validate(scenario: &MteScenario, n_ref_segments: usize) -> Vec<ScenarioViolation> {
    let mut violations = Vec::new();
    for (position, &index) in scenario.start_indices.iter().enumerate() {
        if index < 1 || index >= n_ref_segments {
            violations.push(ScenarioViolation::IndexOutOfRange { position, index });
        }
        if position > 0 && index <= scenario.start_indices[position - 1] {
            violations.push(ScenarioViolation::NotStrictlyIncreasing { position });
        }
    }
    if scenario.depth() >= 1 && !(scenario.delta_tau > 0.0) {
        violations.push(ScenarioViolation::NonPositiveDuration);
    }
    violations
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CoverageError {
    #[error("weibull parameters must be positive and finite")]
    InvalidWeibull,
    #[error("rate and horizon must be non-negative and finite, with rate*horizon <= 500")]
    InvalidRate,
    #[error("n_samples must be at least 1")]
    NoSamples,
}

/// Monte-Carlo coverage estimate for an outage model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    pub n_samples: usize,
    /// Probability of zero MTEs over the horizon.
    pub p_zero: f64,
    /// Probability of exactly one MTE.
    pub p_one: f64,
    /// Probability of two or more MTEs.
    pub p_multi: f64,
    /// Fraction of sampled outage durations at or below the cap.
    pub duration_within_cap: f64,
}

fn sample_weibull<R: Rng + ?Sized>(params: &WeibullParams, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    params.scale * (-(1.0 - u).ln()).powf(1.0 / params.shape)
}

/// Poisson counts by Knuth's product-of-uniforms method; adequate for the
/// modest `rate * horizon` this validates against (guarded at 500).
fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> usize {
    if lambda == 0.0 {
        return 0;
    }
    let limit = (-lambda).exp();
    let mut count = 0usize;
    let mut product: f64 = 1.0;
    loop {
        product *= rng.random::<f64>();
        if product <= limit {
            return count;
        }
        count += 1;
    }
}

/// Estimates MTE-count probabilities over `horizon` (Poisson with the given
/// rate) and the fraction of Weibull-sampled durations within `duration_cap`.
/// Deterministic for a fixed RNG state.
pub fn sample_mte_coverage<R: Rng + ?Sized>(
    duration: &WeibullParams,
    rate: f64,
    horizon: f64,
    duration_cap: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<CoverageStats, CoverageError> {
    if !duration.is_valid() {
        return Err(CoverageError::InvalidWeibull);
    }
    if !(rate >= 0.0) || !(horizon >= 0.0) || !(rate * horizon).is_finite() || rate * horizon > 500.0
    {
        return Err(CoverageError::InvalidRate);
    }
    if n_samples == 0 {
        return Err(CoverageError::NoSamples);
    }

    let lambda = rate * horizon;
    let mut counts = [0usize; 3];
    let mut within = 0usize;
    for _ in 0..n_samples {
        let n_mte = sample_poisson(lambda, rng);
        counts[n_mte.min(2)] += 1;
        if sample_weibull(duration, rng) <= duration_cap {
            within += 1;
        }
    }
    let norm = 1.0 / n_samples as f64;
    Ok(CoverageStats {
        n_samples,
        p_zero: counts[0] as f64 * norm,
        p_one: counts[1] as f64 * norm,
        p_multi: counts[2] as f64 * norm,
        duration_within_cap: within as f64 * norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn paper_scenario_validates() {
        let scenario = MteScenario::new(vec![4, 24, 48], 0.12);
        assert!(validate(&scenario, 50).is_empty());
    }

    #[test]
    fn index_at_segment_count_is_rejected() {
        let scenario = MteScenario::new(vec![50], 0.1);
        assert_eq!(
            validate(&scenario, 50),
            vec![ScenarioViolation::IndexOutOfRange {
                position: 0,
                index: 50
            }]
        );
    }

    #[test]
    fn ordering_violation_is_reported() {
        let scenario = MteScenario::new(vec![8, 4], 0.1);
        assert_eq!(
            validate(&scenario, 50),
            vec![ScenarioViolation::NotStrictlyIncreasing { position: 1 }]
        );
    }

    #[test]
    fn validate_collects_all_violations() {
        let scenario = MteScenario::new(vec![0, 60, 60], -1.0);
        let v = validate(&scenario, 50);
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn zero_rate_means_no_events() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let stats = sample_mte_coverage(
            &WeibullParams { shape: 2.0, scale: 1.0 },
            0.0,
            10.0,
            1.0,
            1000,
            &mut rng,
        )
        .unwrap();
        assert_eq!(stats.p_zero, 1.0);
        assert_eq!(stats.p_one, 0.0);
        assert_eq!(stats.p_multi, 0.0);
    }

    #[test]
    fn infinite_cap_covers_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let stats = sample_mte_coverage(
            &WeibullParams { shape: 0.8, scale: 2.0 },
            0.1,
            5.0,
            f64::INFINITY,
            1000,
            &mut rng,
        )
        .unwrap();
        assert_eq!(stats.duration_within_cap, 1.0);
    }

    #[test]
    fn exponential_special_case_matches_closed_form() {
        // shape = 1 reduces to Exp(scale); cap at scale*ln 2 covers half.
        let scale = 3.0;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let stats = sample_mte_coverage(
            &WeibullParams { shape: 1.0, scale },
            0.0,
            1.0,
            scale * core::f64::consts::LN_2,
            100_000,
            &mut rng,
        )
        .unwrap();
        assert!(
            (stats.duration_within_cap - 0.5).abs() < 0.02,
            "coverage {}",
            stats.duration_within_cap
        );
    }

    #[test]
    fn coverage_is_reproducible_for_a_fixed_seed() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            sample_mte_coverage(
                &WeibullParams { shape: 1.5, scale: 0.5 },
                0.3,
                8.0,
                0.7,
                5000,
                &mut rng,
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn poisson_mean_is_sane() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lambda = 2.5;
        let n = 200_000;
        let mean: f64 =
            (0..n).map(|_| sample_poisson(lambda, &mut rng) as f64).sum::<f64>() / n as f64;
        assert!((mean - lambda).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn scenario_ids_are_stable() {
        assert_eq!(MteScenario::non_robust().id(), "k0");
        assert_eq!(MteScenario::new(vec![4, 24], 0.5).id(), "k2-n4-24-dt0.5000");
    }
}
