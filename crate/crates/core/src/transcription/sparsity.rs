//! Structural sparsity of the constraint Jacobian.
//!
//! Each leg's defect rows are dense against that leg's own block. Realization
//! rows additionally couple to the reference block through the inherited
//! state at the outage and through the arrival-epoch phase: columns `T_s`,
//! `T_i`, and every reference control segment flown before the outage.
//! Reference rows never depend on realization variables.

use super::TranscriptionError;
use crate::scenario::{self, MteScenario};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentationMode {
    /// Realization `k` gets `N - n_omega_k` segments (the production rule).
    Adaptive,
    /// Every realization keeps the full `N` segments; analysis-only.
    Uniform,
}

/// Structural nonzero set of the defect-plus-objective Jacobian.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    pub n_rows: usize,
    pub n_cols: usize,
    /// Row-major sorted `(row, col)` pairs.
    pub pairs: Vec<(usize, usize)>,
}

impl SparsityPattern {
    pub fn dense_entry_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.pairs.binary_search(&(row, col)).is_ok()
    }

    /// Coordinate-list text: one `row col` pair per line.
    pub fn to_coordinate_text(&self) -> String {
        let mut out = String::with_capacity(self.pairs.len() * 8);
        for &(r, c) in &self.pairs {
            let _ = writeln!(out, "{r} {c}");
        }
        out
    }
}

/// Enumerates the structural nonzeros for a scenario under either
/// segmentation mode and reports the dense-entry count.
pub fn build_sparsity(
    n_ref_segments: usize,
    scenario: &MteScenario,
    mode: SegmentationMode,
) -> Result<SparsityPattern, TranscriptionError> {
    let violations = scenario::validate(scenario, n_ref_segments);
    if !violations.is_empty() {
        return Err(TranscriptionError::InvalidScenario(violations));
    }

    let k = scenario.depth();
    let ref_len = 3 * n_ref_segments + 4;
    let leg_segments: Vec<usize> = core::iter::once(n_ref_segments)
        .chain(scenario.start_indices.iter().map(|&n_omega| match mode {
            SegmentationMode::Adaptive => n_ref_segments - n_omega,
            SegmentationMode::Uniform => n_ref_segments,
        }))
        .collect();
    let leg_lens: Vec<usize> = leg_segments.iter().map(|&n| 3 * n + 4).collect();
    let leg_offsets: Vec<usize> = leg_lens
        .iter()
        .scan(0usize, |acc, &len| {
            let offset = *acc;
            *acc += len;
            Some(offset)
        })
        .collect();
    let n_cols: usize = leg_lens.iter().sum();
    let n_rows = 7 * (1 + k) + 1;

    let mut pairs = Vec::new();
    for leg in 0..=k {
        let row0 = 7 * leg;
        // Own block: dense.
        for row in row0..row0 + 7 {
            for col in leg_offsets[leg]..leg_offsets[leg] + leg_lens[leg] {
                pairs.push((row, col));
            }
        }
        // Coupling to the reference block through the outage branch state
        // and the arrival-epoch phase.
        if leg > 0 {
            let n_omega = scenario.start_indices[leg - 1];
            for row in row0..row0 + 7 {
                pairs.push((row, super::IDX_TS));
                pairs.push((row, super::IDX_TI));
                for p in 0..n_omega - 1 {
                    for component in 0..3 {
                        pairs.push((row, 3 + 3 * p + component));
                    }
                }
            }
        }
    }
    // Objective row: J = -m_f of the reference leg.
    pairs.push((7 * (1 + k), ref_len - 1));
    pairs.sort_unstable();

    Ok(SparsityPattern {
        n_rows,
        n_cols,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn non_robust_pattern_is_the_reference_block() {
        let scenario = MteScenario::non_robust();
        let adaptive = build_sparsity(50, &scenario, SegmentationMode::Adaptive).unwrap();
        let uniform = build_sparsity(50, &scenario, SegmentationMode::Uniform).unwrap();
        assert_eq!(adaptive, uniform);
        assert_eq!(adaptive.dense_entry_count(), 7 * 154 + 1);
        assert_eq!(adaptive.n_rows, 8);
        assert_eq!(adaptive.n_cols, 154);
    }

    #[test]
    fn adaptive_is_strictly_sparser_for_robust_scenarios() {
        let scenario = MteScenario::new(vec![8, 16, 24], 0.1);
        let adaptive = build_sparsity(50, &scenario, SegmentationMode::Adaptive).unwrap();
        let uniform = build_sparsity(50, &scenario, SegmentationMode::Uniform).unwrap();
        assert!(adaptive.dense_entry_count() < uniform.dense_entry_count());
    }

    #[test]
    fn counts_match_a_direct_block_sum() {
        // Independent count: per leg, 7 rows times (own length + coupling
        // columns), plus one objective entry.
        let n = 40;
        let scenario = MteScenario::new(vec![10, 30], 0.1);
        let pattern = build_sparsity(n, &scenario, SegmentationMode::Adaptive).unwrap();
        let expected: usize = 7 * (3 * n + 4)
            + scenario
                .start_indices
                .iter()
                .map(|&n_omega| 7 * ((3 * (n - n_omega) + 4) + 2 + 3 * (n_omega - 1)))
                .sum::<usize>()
            + 1;
        assert_eq!(pattern.dense_entry_count(), expected);
    }

    #[test]
    fn pairs_are_unique_and_sorted() {
        let scenario = MteScenario::new(vec![4, 24, 48], 0.1);
        let pattern = build_sparsity(50, &scenario, SegmentationMode::Uniform).unwrap();
        let mut deduped = pattern.pairs.clone();
        deduped.dedup();
        assert_eq!(deduped.len(), pattern.pairs.len());
        assert!(pattern.pairs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn coordinate_text_roundtrips() {
        let scenario = MteScenario::new(vec![2], 0.1);
        let pattern = build_sparsity(4, &scenario, SegmentationMode::Adaptive).unwrap();
        let text = pattern.to_coordinate_text();
        let parsed: Vec<(usize, usize)> = text
            .lines()
            .map(|l| {
                let mut it = l.split_whitespace();
                (
                    it.next().unwrap().parse().unwrap(),
                    it.next().unwrap().parse().unwrap(),
                )
            })
            .collect();
        assert_eq!(parsed, pattern.pairs);
    }
}
