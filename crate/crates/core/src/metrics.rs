//! Algorithmic performance metrics over archived solve records: feasibility
//! ratio, time per solution, and delta-v quality, plus the cumulative
//! variants that charge a conditional strategy for the cost of generating
//! its seed solutions.

use crate::solver::SolveRecord;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no records match the requested strategy tag")]
    EmptySlice,
    #[error("cumulative metrics need a conditional target tag")]
    NotConditional,
    #[error("source report depth {got} does not match target lineage {expected}")]
    LineageMismatch { got: usize, expected: usize },
    #[error("strategy tag {0:?} is not of the form S(k) or S(k|k')")]
    BadTag(String),
}

/// Five-number-plus-mean summary of the feasible delta-v distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaVSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub strategy: String,
    pub n_attempts: usize,
    pub n_feasible: usize,
    /// Percent of attempts that converged feasible.
    pub feasibility_ratio: f64,
    /// Wall time of all attempts divided by the feasible count; `None` when
    /// nothing converged.
    pub time_per_solution: Option<f64>,
    /// Median wall time among feasible solves.
    pub median_solve_time: Option<f64>,
    pub delta_v: Option<DeltaVSummary>,
    /// Product-rule ratio through the seed lineage; conditional tags only.
    pub cumulative_feasibility_ratio: Option<f64>,
    /// Sum-rule time through the seed lineage; conditional tags only.
    pub cumulative_time: Option<f64>,
}

/// Parses `S(k)` into `(k, None)` and `S(k|k')` into `(k, Some(k'))`.
pub fn parse_strategy_tag(tag: &str) -> Result<(usize, Option<usize>), MetricsError> {
    let bad = || MetricsError::BadTag(tag.to_string());
    let inner = tag
        .strip_prefix("S(")
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(bad)?;
    match inner.split_once('|') {
        Some((k, k_prime)) => Ok((
            k.parse().map_err(|_| bad())?,
            Some(k_prime.parse().map_err(|_| bad())?),
        )),
        None => Ok((inner.parse().map_err(|_| bad())?, None)),
    }
}

/// Linear-interpolation quantile of pre-sorted values.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 < n {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    } else {
        sorted[n - 1]
    }
}

/// Aggregates the slice's records carrying `strategy` into a report.
/// Delta-v summaries cover feasible records only.
pub fn report(records: &[SolveRecord], strategy: &str) -> Result<StrategyReport, MetricsError> {
    let matching: Vec<&SolveRecord> = records.iter().filter(|r| r.strategy == strategy).collect();
    if matching.is_empty() {
        return Err(MetricsError::EmptySlice);
    }
    let n_attempts = matching.len();
    let feasible: Vec<&&SolveRecord> = matching
        .iter()
        .filter(|r| r.status.is_feasible())
        .collect();
    let n_feasible = feasible.len();
    let total_wall: f64 = matching.iter().map(|r| r.wall_time).sum();

    let (time_per_solution, median_solve_time, delta_v) = if n_feasible > 0 {
        let mut feasible_walls: Vec<f64> = feasible.iter().map(|r| r.wall_time).collect();
        feasible_walls.sort_unstable_by(f64::total_cmp);
        let mut dvs: Vec<f64> = feasible.iter().filter_map(|r| r.delta_v).collect();
        dvs.sort_unstable_by(f64::total_cmp);
        let summary = (!dvs.is_empty()).then(|| DeltaVSummary {
            min: dvs[0],
            q1: quantile(&dvs, 0.25),
            median: quantile(&dvs, 0.5),
            q3: quantile(&dvs, 0.75),
            mean: dvs.iter().sum::<f64>() / dvs.len() as f64,
            max: dvs[dvs.len() - 1],
        });
        (
            Some(total_wall / n_feasible as f64),
            Some(quantile(&feasible_walls, 0.5)),
            summary,
        )
    } else {
        (None, None, None)
    };

    Ok(StrategyReport {
        strategy: strategy.to_string(),
        n_attempts,
        n_feasible,
        feasibility_ratio: 100.0 * n_feasible as f64 / n_attempts as f64,
        time_per_solution,
        median_solve_time,
        delta_v,
        cumulative_feasibility_ratio: None,
        cumulative_time: None,
    })
}

/// Fills the cumulative fields of a conditional report from its seed
/// strategy's report: ratios multiply, times add. Chains compose through
/// the source's own cumulative fields when present.
pub fn cumulative(
    target: &StrategyReport,
    source: &StrategyReport,
) -> Result<StrategyReport, MetricsError> {
    let (_, lineage) = parse_strategy_tag(&target.strategy)?;
    let Some(expected_depth) = lineage else {
        return Err(MetricsError::NotConditional);
    };
    let (source_depth, _) = parse_strategy_tag(&source.strategy)?;
    if source_depth != expected_depth {
        return Err(MetricsError::LineageMismatch {
            got: source_depth,
            expected: expected_depth,
        });
    }

    let source_ratio = source
        .cumulative_feasibility_ratio
        .unwrap_or(source.feasibility_ratio);
    let source_time = source.cumulative_time.or(source.time_per_solution);

    let mut out = target.clone();
    out.cumulative_feasibility_ratio = Some(source_ratio / 100.0 * target.feasibility_ratio);
    out.cumulative_time = match (source_time, target.time_per_solution) {
        (Some(a), Some(b)) => Some(a + b),
        _ => None,
    };
    Ok(out)
}
