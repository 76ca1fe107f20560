//! Initial-guess generation strategies and batch orchestration.
//!
//! The non-conditional strategy `S(k)` samples the decision space uniformly
//! within bounds and refines feasible finds with monotonic basin hopping.
//! The conditional strategy `S(k|k')` maps archived depth-`k'` solutions
//! into the depth-`k` space: the reference leg is preserved verbatim, and
//! each target realization is seeded either from the source reference
//! (post-outage control tail, zero initial coast) or from one of the source
//! realizations.
//!
//! All randomness flows from one master seed through per-seed ChaCha streams,
//! so batches are bit-reproducible regardless of executor scheduling.

use crate::solver::{solve, SolveRecord, SolverConfig};
use crate::time::Clock;
use crate::transcription::{BoxBounds, DecisionVector, Problem};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sampling box for initial guesses; identical to the solver's box bounds,
/// including the truncated realization shooting-time caps.
pub type SamplingBounds = BoxBounds;

/// Bounds realizing the control-variable table for a problem.
pub fn sampling_bounds(problem: &Problem) -> SamplingBounds {
    problem.box_bounds()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("mapping requires k > k' >= 0 (got k' = {k_prime}, k = {k})")]
    InvalidMappingArguments { k_prime: usize, k: usize },
    #[error("seed source is not a feasible record")]
    RejectedSeed,
    #[error("mapping mismatch: {0}")]
    MappingMismatch(&'static str),
    #[error("no usable seed sources in the archive slice")]
    NoSeeds,
}

/// Independent RNG stream for one seed index under a master seed.
pub fn seed_stream(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Draws every component i.i.d. uniform within its bounds.
pub fn sample_initial_guess<R: Rng + ?Sized>(
    bounds: &SamplingBounds,
    rng: &mut R,
) -> DecisionVector {
    let values: Vec<f64> = (0..bounds.len())
        .map(|i| {
            let u: f64 = rng.random();
            bounds.lower[i] + u * (bounds.upper[i] - bounds.lower[i])
        })
        .collect();
    DecisionVector::new(bounds.layouts().to_vec(), values)
        .expect("bounds and layouts agree by construction")
}

/// How every target realization of one conditional seed is sourced. The two
/// choice classes are never mixed within one spec, which is exactly what the
/// `k'^k + 1` count enumerates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MappingChoice {
    /// Seed every target realization from the source reference leg.
    FromReference,
    /// Seed target realization `t` from source realization `assignment[t]`.
    FromSourceRealizations(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingSpec {
    pub source_depth: usize,
    pub target_depth: usize,
    pub choice: MappingChoice,
}

impl MappingSpec {
    pub fn from_reference(source_depth: usize, target_depth: usize) -> Self {
        Self {
            source_depth,
            target_depth,
            choice: MappingChoice::FromReference,
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.target_depth <= self.source_depth {
            return Err(SearchError::InvalidMappingArguments {
                k_prime: self.source_depth,
                k: self.target_depth,
            });
        }
        if let MappingChoice::FromSourceRealizations(assignment) = &self.choice {
            if self.source_depth == 0 {
                return Err(SearchError::MappingMismatch(
                    "realization-sourced mapping needs a robust source",
                ));
            }
            if assignment.len() != self.target_depth
                || assignment.iter().any(|&j| j >= self.source_depth)
            {
                return Err(SearchError::MappingMismatch(
                    "assignment length or indices out of range",
                ));
            }
        }
        Ok(())
    }
}

/// Count of distinct mapping operators from depth `k'` solutions to depth
/// `k` initial guesses: `k'^k` realization-to-realization assignments plus
/// the single all-from-reference map (which is the only map when `k' = 0`).
pub fn count_realization_mappings(k_prime: usize, k: usize) -> Result<u128, SearchError> {
    if k <= k_prime {
        return Err(SearchError::InvalidMappingArguments { k_prime, k });
    }
    if k_prime == 0 {
        return Ok(1);
    }
    (k_prime as u128)
        .checked_pow(k as u32)
        .and_then(|n| n.checked_add(1))
        .ok_or(SearchError::MappingMismatch("mapping count overflow"))
}

/// Exhaustive enumeration of the mapping specs counted by
/// [`count_realization_mappings`].
pub fn enumerate_mappings(k_prime: usize, k: usize) -> Result<Vec<MappingSpec>, SearchError> {
    if k <= k_prime {
        return Err(SearchError::InvalidMappingArguments { k_prime, k });
    }
    let mut specs = vec![MappingSpec::from_reference(k_prime, k)];
    if k_prime >= 1 {
        let mut assignment = vec![0usize; k];
        loop {
            specs.push(MappingSpec {
                source_depth: k_prime,
                target_depth: k,
                choice: MappingChoice::FromSourceRealizations(assignment.clone()),
            });
            // Odometer increment in base k'.
            let mut pos = k;
            loop {
                if pos == 0 {
                    return Ok(specs);
                }
                pos -= 1;
                assignment[pos] += 1;
                if assignment[pos] < k_prime {
                    break;
                }
                assignment[pos] = 0;
            }
        }
    }
    Ok(specs)
}

/// Copies one source leg's components into a target leg block, adjusting the
/// segment list per the mapping rules. Returns the block values.
fn map_leg_block(
    source: crate::transcription::LegView<'_>,
    source_controls_from: usize,
    target_segments: usize,
    t_s: f64,
    t_i: f64,
    t_f: f64,
    m_f: f64,
    align_tail: bool,
) -> Vec<f64> {
    let mut block = Vec::with_capacity(3 * target_segments + 4);
    block.push(t_s);
    block.push(t_i);
    block.push(t_f);
    let n_src = source.layout.n_segments - source_controls_from;
    for q in 0..target_segments {
        let src_index = if align_tail {
            // Latest segments aligned at the terminal end; early target
            // segments without a source counterpart coast.
            let pad = target_segments.saturating_sub(n_src);
            if q < pad {
                None
            } else {
                let dropped = n_src.saturating_sub(target_segments);
                Some(source_controls_from + dropped + (q - pad))
            }
        } else {
            // Positional copy from the first post-outage source segment.
            let idx = source_controls_from + q;
            (idx < source.layout.n_segments).then_some(idx)
        };
        match src_index {
            Some(p) => {
                let u = source.control(p);
                block.push(u.throttle);
                block.push(u.alpha);
                block.push(u.beta);
            }
            None => {
                block.push(0.0);
                block.push(0.0);
                block.push(0.0);
            }
        }
    }
    block.push(m_f);
    block
}

/// Maps a solved depth-`k'` record into a depth-`k` initial guess.
///
/// The target reference leg is the source reference leg verbatim. Realization
/// seeds follow the spec's choice class; the result is clamped into the
/// target sampling bounds.
pub fn map_solution(
    source: &SolveRecord,
    target: &Problem,
    spec: &MappingSpec,
) -> Result<DecisionVector, SearchError> {
    spec.validate()?;
    if !source.status.is_feasible() {
        return Err(SearchError::RejectedSeed);
    }
    let source_depth = source.x.n_legs() - 1;
    if source_depth != spec.source_depth || target.depth() != spec.target_depth {
        return Err(SearchError::MappingMismatch(
            "spec depths do not match the source record / target problem",
        ));
    }
    let src_ref = source.x.leg(0);
    let n_ref = target.layouts[0].n_segments;
    if src_ref.layout.n_segments != n_ref {
        return Err(SearchError::MappingMismatch(
            "source and target reference segment counts differ",
        ));
    }

    let mut values: Vec<f64> = Vec::with_capacity(target.decision_len());
    values.extend_from_slice(src_ref.as_slice());

    for (t_idx, &n_omega) in target.scenario.start_indices.iter().enumerate() {
        let layout = target.layouts[t_idx + 1];
        let block = match &spec.choice {
            MappingChoice::FromReference => {
                // Post-outage control tail, zero initial coast, proportional
                // shooting-time share.
                let ratio = layout.n_segments as f64 / n_ref as f64;
                map_leg_block(
                    src_ref,
                    n_omega - 1,
                    layout.n_segments,
                    ratio * src_ref.t_s(),
                    0.0,
                    src_ref.t_f(),
                    src_ref.m_f(),
                    false,
                )
            }
            MappingChoice::FromSourceRealizations(assignment) => {
                let j = assignment[t_idx];
                let src_leg = source.x.leg(j + 1);
                map_leg_block(
                    src_leg,
                    0,
                    layout.n_segments,
                    src_leg.t_s(),
                    src_leg.t_i(),
                    src_leg.t_f(),
                    src_leg.m_f(),
                    true,
                )
            }
        };
        values.extend(block);
    }

    let x = DecisionVector::new(target.layouts.clone(), values)
        .map_err(|_| SearchError::MappingMismatch("mapped vector has the wrong length"))?;
    Ok(target.box_bounds().clamp_vector(x))
}

/// Batch execution surface. Implementations must return per-job outputs in
/// job order; the `mtkit` companion crate provides a work-stealing pool.
pub trait SolveExecutor: Sync {
    fn run_batch(
        &self,
        n_jobs: usize,
        job: &(dyn Fn(usize) -> Vec<SolveRecord> + Sync),
    ) -> Vec<Vec<SolveRecord>>;
}

/// In-order, single-threaded executor.
#[derive(Debug, Clone, Copy, Default)]
pub struct SerialExecutor;

impl SolveExecutor for SerialExecutor {
    fn run_batch(
        &self,
        n_jobs: usize,
        job: &(dyn Fn(usize) -> Vec<SolveRecord> + Sync),
    ) -> Vec<Vec<SolveRecord>> {
        (0..n_jobs).map(job).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub n_seeds: usize,
    /// Per-solve wall budget in seconds before the `(1 + k)` scaling.
    pub base_wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MbhConfig {
    /// Hop budget per feasible incumbent before the `(1 + k)` scaling;
    /// zero reduces the strategy to pure multistart.
    pub hops: usize,
    /// Componentwise uniform perturbation amplitude as a fraction of each
    /// bound range.
    pub hop_fraction: f64,
}

impl Default for MbhConfig {
    fn default() -> Self {
        Self {
            hops: 0,
            hop_fraction: 0.05,
        }
    }
}

fn perturb<R: Rng + ?Sized>(
    x: &DecisionVector,
    bounds: &SamplingBounds,
    fraction: f64,
    rng: &mut R,
) -> DecisionVector {
    let values: Vec<f64> = x
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let u: f64 = rng.random();
            let delta = (2.0 * u - 1.0) * fraction * bounds.range(i);
            (v + delta).clamp(bounds.lower[i], bounds.upper[i])
        })
        .collect();
    x.with_same_shape(values).expect("perturbation keeps shape")
}

fn solver_config_for(problem: &Problem, config: &SolverConfig, budget: &SearchBudget) -> SolverConfig {
    let mut per_solve = config.clone();
    per_solve.max_wall_time = budget.base_wall_time;
    per_solve.scaled_for_depth(problem.depth())
}

/// Non-conditional strategy `S(k)`: uniform seeds plus monotonic basin
/// hopping on feasible incumbents. Every local solve (seed or hop) yields
/// one record; failures are recorded, never raised.
#[allow(clippy::too_many_arguments)]
pub fn run_non_conditional(
    problem: &Problem,
    solver_config: &SolverConfig,
    budget: &SearchBudget,
    mbh: &MbhConfig,
    master_seed: u64,
    clock: &dyn Clock,
    executor: &dyn SolveExecutor,
) -> Vec<SolveRecord> {
    let depth = problem.depth();
    let tag = format!("S({depth})");
    let scenario_id = problem.scenario.id();
    let per_solve = solver_config_for(problem, solver_config, budget);
    let bounds = sampling_bounds(problem);
    let hop_budget = mbh.hops * (1 + depth);

    let job = |seed: usize| -> Vec<SolveRecord> {
        let mut rng = seed_stream(master_seed, seed as u64);
        let x0 = sample_initial_guess(&bounds, &mut rng);
        let mut record = solve(problem, &x0, &per_solve, clock);
        record.strategy = tag.clone();
        record.seed_source = "sampled".to_string();
        record.id = format!("{scenario_id}/{tag}/s{seed:04}");
        let mut records = vec![record];
        let mut incumbent = records[0].status.is_feasible().then_some(0usize);

        for hop in 0..hop_budget {
            let Some(best) = incumbent else { break };
            let x_hop = perturb(&records[best].x, &bounds, mbh.hop_fraction, &mut rng);
            let mut record = solve(problem, &x_hop, &per_solve, clock);
            record.strategy = tag.clone();
            record.seed_source = records[best].id.clone();
            record.id = format!("{scenario_id}/{tag}/s{seed:04}h{hop:02}");
            let improves = record.status.is_feasible()
                && match (record.objective, records[best].objective) {
                    (Some(new), Some(old)) => new < old,
                    _ => false,
                };
            records.push(record);
            if improves {
                incumbent = Some(records.len() - 1);
            }
        }
        records
    };

    executor
        .run_batch(budget.n_seeds, &job)
        .into_iter()
        .flatten()
        .collect()
}

/// Seed-construction policy for the conditional strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MappingPolicy {
    /// The paper's production rule: one from-reference seed per source.
    FromReferenceOnly,
    /// Every mapping operator per source (count `k'^k + 1`).
    AllMappings,
}

/// Conditional strategy `S(k|k')`: maps archived feasible depth-`k'`
/// solutions into depth-`k` seeds and solves each. Records carry the source
/// lineage in `seed_source`.
#[allow(clippy::too_many_arguments)]
pub fn run_conditional(
    problem: &Problem,
    sources: &[SolveRecord],
    policy: MappingPolicy,
    solver_config: &SolverConfig,
    budget: &SearchBudget,
    clock: &dyn Clock,
    executor: &dyn SolveExecutor,
) -> Result<Vec<SolveRecord>, SearchError> {
    let depth = problem.depth();
    let feasible: Vec<&SolveRecord> = sources.iter().filter(|r| r.status.is_feasible()).collect();
    let source_depth = match feasible.first() {
        Some(r) => r.x.n_legs() - 1,
        None => return Err(SearchError::NoSeeds),
    };
    if depth <= source_depth {
        return Err(SearchError::InvalidMappingArguments {
            k_prime: source_depth,
            k: depth,
        });
    }
    let tag = format!("S({depth}|{source_depth})");
    let scenario_id = problem.scenario.id();
    let per_solve = solver_config_for(problem, solver_config, budget);

    let specs = match policy {
        MappingPolicy::FromReferenceOnly => vec![MappingSpec::from_reference(source_depth, depth)],
        MappingPolicy::AllMappings => enumerate_mappings(source_depth, depth)?,
    };
    let seeds: Vec<(usize, usize)> = (0..feasible.len())
        .flat_map(|s| (0..specs.len()).map(move |m| (s, m)))
        .take(budget.n_seeds)
        .collect();

    let job = |idx: usize| -> Vec<SolveRecord> {
        let (s, m) = seeds[idx];
        let source = feasible[s];
        let mut record = match map_solution(source, problem, &specs[m]) {
            Ok(x0) => solve(problem, &x0, &per_solve, clock),
            Err(e) => SolveRecord {
                id: String::new(),
                scenario_id: scenario_id.clone(),
                strategy: String::new(),
                seed_source: String::new(),
                status: crate::solver::SolveStatus::Error,
                x: problem.zero_vector(),
                objective: None,
                defect_norms: None,
                delta_v: None,
                wall_time: 0.0,
                iterations: 0,
                error: Some(e.to_string()),
            },
        };
        record.strategy = tag.clone();
        record.seed_source = source.id.clone();
        record.id = format!("{scenario_id}/{tag}/m{idx:04}");
        vec![record]
    };

    Ok(executor
        .run_batch(seeds.len(), &job)
        .into_iter()
        .flatten()
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mapping_counts_match_the_examples() {
        assert_eq!(count_realization_mappings(1, 2).unwrap(), 2);
        assert_eq!(count_realization_mappings(2, 3).unwrap(), 9);
        assert_eq!(count_realization_mappings(3, 4).unwrap(), 82);
        assert_eq!(count_realization_mappings(0, 1).unwrap(), 1);
    }

    #[test]
    fn mapping_count_requires_deeper_target() {
        assert!(count_realization_mappings(1, 1).is_err());
        assert!(count_realization_mappings(3, 2).is_err());
    }

    #[test]
    fn enumeration_agrees_with_the_count_formula() {
        for k_prime in 0..=3usize {
            for k in (k_prime + 1)..=4 {
                let specs = enumerate_mappings(k_prime, k).unwrap();
                let expected = count_realization_mappings(k_prime, k).unwrap();
                assert_eq!(specs.len() as u128, expected, "k'={k_prime}, k={k}");
                for spec in &specs {
                    spec.validate().unwrap();
                }
                // All specs distinct.
                for (i, a) in specs.iter().enumerate() {
                    for b in specs.iter().skip(i + 1) {
                        assert_ne!(a, b);
                    }
                }
            }
        }
    }

    #[test]
    fn seed_streams_are_independent_and_reproducible() {
        let mut a1 = seed_stream(7, 0);
        let mut a2 = seed_stream(7, 0);
        let mut b = seed_stream(7, 1);
        let xs1: Vec<f64> = (0..8).map(|_| a1.random()).collect();
        let xs2: Vec<f64> = (0..8).map(|_| a2.random()).collect();
        let ys: Vec<f64> = (0..8).map(|_| b.random()).collect();
        assert_eq!(xs1, xs2);
        assert_ne!(xs1, ys);
    }
}
