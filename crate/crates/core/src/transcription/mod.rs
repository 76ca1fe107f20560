//! Forward-backward multiple-shooting transcription of the robust problem.
//!
//! The decision vector stacks one reference leg and `K` realization legs,
//! each laid out as `(T_s, T_i, T_f, u_1 .. u_N, m_f)` with `u_p =
//! (throttle, alpha, beta)`, for `3N + 4` entries per leg. Equality
//! constraints are the per-leg matchpoint defects (position, velocity,
//! mass), `7 + 7K` rows in total; variable bounds are box constraints
//! handled by the solver, not constraint rows.
//!
//! Realization `k` flies the reference control until the outage at the start
//! of reference segment `n_omega_k`, coasts ballistically for `delta_tau`,
//! then flies its own leg against the same target orbit. Adaptive
//! segmentation gives it `N - n_omega_k` segments so per-segment durations
//! (control authority) stay comparable with the reference.

mod eval;
mod sparsity;

pub use eval::{BranchPoint, Evaluation};
pub use sparsity::{build_sparsity, SegmentationMode, SparsityPattern};

use crate::dynamics::{ControlSegment, DynamicsParams, SpacecraftState};
use crate::orbit::OrbitTable;
use crate::propagation::PropagationError;
use crate::scenario::{self, MteScenario, ScenarioViolation};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Component offsets within one leg block.
pub const IDX_TS: usize = 0;
pub const IDX_TI: usize = 1;
pub const IDX_TF: usize = 2;

/// Per-leg segment count and component bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegLayout {
    pub n_segments: usize,
    /// Shooting-time upper bound (TU); realizations carry the truncated value.
    pub t_s_max: f64,
    pub t_i_max: f64,
    pub t_f_max: f64,
    /// Final-mass upper bound (MU).
    pub m_f_max: f64,
}

impl LegLayout {
    /// Component count of one leg: `3 N + 4`.
    pub fn len(&self) -> usize {
        3 * self.n_segments + 4
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Column of the throttle component of 0-based segment `p`.
    pub fn control_col(&self, p: usize, component: usize) -> usize {
        debug_assert!(p < self.n_segments && component < 3);
        3 + 3 * p + component
    }

    /// Column of the final-mass entry.
    pub fn m_f_col(&self) -> usize {
        3 + 3 * self.n_segments
    }

    /// Forward-side segment count: the matchpoint sits at the boundary after
    /// segment `ceil(N / 2)`.
    pub fn midpoint(&self) -> usize {
        self.n_segments.div_ceil(2)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TranscriptionError {
    #[error("invalid scenario: {0:?}")]
    InvalidScenario(Vec<ScenarioViolation>),
    #[error("decision vector length {got} does not match layouts (expected {expected})")]
    LengthMismatch { expected: usize, got: usize },
    #[error("leg {leg}: {source}")]
    Leg {
        leg: usize,
        source: PropagationError,
    },
    #[error("boundary conditions invalid: {0}")]
    Boundary(&'static str),
}

/// Builds the reference layout plus one layout per realization under the
/// adaptive segmentation rule `N_omega = N - n_omega`, with the realization
/// shooting-time bound truncated by `(N - n_omega) / N`.
pub fn make_layouts(
    reference: &LegLayout,
    scenario: &MteScenario,
) -> Result<Vec<LegLayout>, TranscriptionError> {
    let violations = scenario::validate(scenario, reference.n_segments);
    if !violations.is_empty() {
        return Err(TranscriptionError::InvalidScenario(violations));
    }
    let n_ref = reference.n_segments;
    let mut layouts = Vec::with_capacity(1 + scenario.depth());
    layouts.push(*reference);
    for &n_omega in &scenario.start_indices {
        let n_seg = n_ref - n_omega;
        let ratio = n_seg as f64 / n_ref as f64;
        layouts.push(LegLayout {
            n_segments: n_seg,
            t_s_max: ratio * reference.t_s_max,
            t_i_max: reference.t_i_max,
            t_f_max: reference.t_f_max,
            m_f_max: reference.m_f_max,
        });
    }
    Ok(layouts)
}

/// Flattened decision vector together with the leg layouts that interpret it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionVector {
    layouts: Vec<LegLayout>,
    values: Vec<f64>,
}

impl DecisionVector {
    pub fn new(layouts: Vec<LegLayout>, values: Vec<f64>) -> Result<Self, TranscriptionError> {
        let expected: usize = layouts.iter().map(|l| l.len()).sum();
        if values.len() != expected {
            return Err(TranscriptionError::LengthMismatch {
                expected,
                got: values.len(),
            });
        }
        Ok(Self { layouts, values })
    }

    pub fn zeros(layouts: Vec<LegLayout>) -> Self {
        let len = layouts.iter().map(|l| l.len()).sum();
        Self {
            layouts,
            values: alloc::vec![0.0; len],
        }
    }

    pub fn layouts(&self) -> &[LegLayout] {
        &self.layouts
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of legs including the reference.
    pub fn n_legs(&self) -> usize {
        self.layouts.len()
    }

    /// Offset of leg `leg` within the flat vector.
    pub fn leg_offset(&self, leg: usize) -> usize {
        self.layouts[..leg].iter().map(|l| l.len()).sum()
    }

    pub fn leg(&self, leg: usize) -> LegView<'_> {
        let offset = self.leg_offset(leg);
        let layout = self.layouts[leg];
        LegView {
            layout,
            values: &self.values[offset..offset + layout.len()],
        }
    }

    pub fn with_same_shape(&self, values: Vec<f64>) -> Result<Self, TranscriptionError> {
        Self::new(self.layouts.clone(), values)
    }
}

/// Read-only view of one leg's block.
#[derive(Debug, Clone, Copy)]
pub struct LegView<'a> {
    pub layout: LegLayout,
    values: &'a [f64],
}

impl<'a> LegView<'a> {
    pub fn t_s(&self) -> f64 {
        self.values[IDX_TS]
    }

    pub fn t_i(&self) -> f64 {
        self.values[IDX_TI]
    }

    pub fn t_f(&self) -> f64 {
        self.values[IDX_TF]
    }

    /// Control of 0-based segment `p`.
    pub fn control(&self, p: usize) -> ControlSegment {
        let base = 3 + 3 * p;
        ControlSegment::new(self.values[base], self.values[base + 1], self.values[base + 2])
    }

    pub fn controls(&self) -> Vec<ControlSegment> {
        (0..self.layout.n_segments).map(|p| self.control(p)).collect()
    }

    pub fn m_f(&self) -> f64 {
        self.values[self.layout.m_f_col()]
    }

    pub fn as_slice(&self) -> &'a [f64] {
        self.values
    }
}

/// Fixed boundary data: departure state, initial mass, and the target
/// periodic orbit the optimizer may insert into at any phase.
#[derive(Debug, Clone)]
pub struct BoundaryConditions {
    /// Departure position/velocity; the mass carried in this state is
    /// ignored in favor of `m0`.
    pub initial_state: SpacecraftState,
    pub target_orbit: OrbitTable,
    pub m0: f64,
}

impl BoundaryConditions {
    /// Departure state with the mass set from `m0`.
    pub fn departure(&self) -> SpacecraftState {
        SpacecraftState::new(self.initial_state.r, self.initial_state.v, self.m0)
    }
}

/// Per-leg matchpoint defects: position (DU), velocity (DU/TU), mass (MU),
/// ordered like the state vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectVector {
    pub legs: Vec<[f64; 7]>,
}

impl DefectVector {
    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.legs.iter().flat_map(|l| l.iter().copied())
    }

    pub fn norm_inf(&self) -> f64 {
        self.flat().fold(0.0, |acc: f64, v| acc.max(v.abs()))
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.flat().collect()
    }
}

/// Constraint Jacobian in coordinate form. Rows `0 .. 7(1+K)` are defect
/// partials; the final row is the objective gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    /// `(row, col, value)` triplets, unique and sorted row-major.
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = alloc::vec![alloc::vec![0.0; self.n_cols]; self.n_rows];
        for &(r, c, v) in &self.entries {
            dense[r][c] = v;
        }
        dense
    }

    /// `out += scale * A^T * lambda` restricted to the first `n_defect_rows`.
    pub fn accumulate_transpose_product(
        &self,
        lambda: &[f64],
        n_defect_rows: usize,
        scale: f64,
        out: &mut [f64],
    ) {
        for &(r, c, v) in &self.entries {
            if r < n_defect_rows {
                out[c] += scale * v * lambda[r];
            }
        }
    }

    /// Defect-row product `out = A[..n_defect_rows] * x`.
    pub fn defect_rows_times(&self, x: &[f64], n_defect_rows: usize, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = 0.0;
        }
        for &(r, c, v) in &self.entries {
            if r < n_defect_rows {
                out[r] += v * x[c];
            }
        }
    }
}

/// Box constraints on the decision vector. Times and masses are bounded
/// below by zero; throttle spans `[0, 1]`; the in-plane angle spans a full
/// turn and the out-of-plane angle a half turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    layouts: Vec<LegLayout>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxBounds {
    pub fn for_layouts(layouts: &[LegLayout]) -> Self {
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for layout in layouts {
            lower.push(0.0);
            upper.push(layout.t_s_max);
            lower.push(0.0);
            upper.push(layout.t_i_max);
            lower.push(0.0);
            upper.push(layout.t_f_max);
            for _ in 0..layout.n_segments {
                lower.push(0.0);
                upper.push(1.0);
                lower.push(-core::f64::consts::PI);
                upper.push(core::f64::consts::PI);
                lower.push(-core::f64::consts::FRAC_PI_2);
                upper.push(core::f64::consts::FRAC_PI_2);
            }
            lower.push(0.0);
            upper.push(layout.m_f_max);
        }
        Self {
            layouts: layouts.to_vec(),
            lower,
            upper,
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn layouts(&self) -> &[LegLayout] {
        &self.layouts
    }

    pub fn project_in_place(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.lower.len());
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    pub fn clamp_vector(&self, mut x: DecisionVector) -> DecisionVector {
        self.project_in_place(x.values_mut());
        x
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.lower.len()
            && x.iter()
                .enumerate()
                .all(|(i, &v)| v >= self.lower[i] && v <= self.upper[i])
    }

    /// Width of component `i`'s admissible interval.
    pub fn range(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }
}

/// One robust problem instance: everything `evaluate` and the solver need.
#[derive(Debug, Clone)]
pub struct Problem {
    pub params: DynamicsParams,
    pub boundary: BoundaryConditions,
    pub scenario: MteScenario,
    pub layouts: Vec<LegLayout>,
    /// Integration tolerance used for every propagation.
    pub tol: f64,
}

impl Problem {
    pub fn new(
        params: DynamicsParams,
        boundary: BoundaryConditions,
        scenario: MteScenario,
        reference: LegLayout,
        tol: f64,
    ) -> Result<Self, TranscriptionError> {
        params
            .validate()
            .map_err(|_| TranscriptionError::Boundary("dynamics parameters invalid"))?;
        if !(boundary.m0 > 0.0) {
            return Err(TranscriptionError::Boundary("initial mass must be positive"));
        }
        let layouts = make_layouts(&reference, &scenario)?;
        Ok(Self {
            params,
            boundary,
            scenario,
            layouts,
            tol,
        })
    }

    /// Depth of robustness `k`.
    pub fn depth(&self) -> usize {
        self.scenario.depth()
    }

    pub fn decision_len(&self) -> usize {
        self.layouts.iter().map(|l| l.len()).sum()
    }

    /// Defect constraint rows: `7 + 7K`.
    pub fn constraint_rows(&self) -> usize {
        7 * self.layouts.len()
    }

    pub fn leg_offset(&self, leg: usize) -> usize {
        self.layouts[..leg].iter().map(|l| l.len()).sum()
    }

    /// Column (in the flat vector) of the reference final mass, the single
    /// objective-bearing variable.
    pub fn objective_col(&self) -> usize {
        self.layouts[0].m_f_col()
    }

    pub fn zero_vector(&self) -> DecisionVector {
        DecisionVector::zeros(self.layouts.clone())
    }

    pub fn box_bounds(&self) -> BoxBounds {
        BoxBounds::for_layouts(&self.layouts)
    }

    pub fn structural_sparsity(&self) -> SparsityPattern {
        sparsity::build_sparsity(
            self.layouts[0].n_segments,
            &self.scenario,
            SegmentationMode::Adaptive,
        )
        .expect("problem scenario was validated at construction")
    }
}
