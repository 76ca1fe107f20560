//! Forward-backward shooting evaluation of the defects and their analytic
//! Jacobian.
//!
//! Each leg is shot from both boundaries toward the matchpoint after segment
//! `ceil(N/2)`: forward from the departure (or outage branch) state, backward
//! from the target-orbit anchor at the leg's arrival epoch with mass seeded
//! at `m_f`. The defect is forward-minus-backward. Partials chain per-arc
//! STMs/CSMs with vector-field evaluations at arc ends for the duration
//! terms, and the spline's epoch derivative for the anchor terms.

use super::{DecisionVector, DefectVector, LegLayout, LegView, Problem, SparseMatrix, TranscriptionError, IDX_TF, IDX_TI, IDX_TS};
use crate::dynamics::{eval_vector_field, ControlSegment, SpacecraftState};
use crate::linalg::{mat7_col, mat7_mul, mat7_mul_7x3, mat7_mul_vec, mat7x3_col, Mat7, Mat7x3, Vec7};
use crate::propagation::{propagate, Arc, PropagationError};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Objective and defects at one decision vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// `J = -m_f` of the reference leg.
    pub objective: f64,
    pub defects: DefectVector,
}

/// Where a realization leaves the reference: the state inherited at the
/// outage start and the state after the ballistic outage window.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    /// Outage start time `tau_1` (TU since departure).
    pub tau1: f64,
    pub delta_tau: f64,
    pub state_at_tau1: SpacecraftState,
    pub state_after_outage: SpacecraftState,
}

/// One propagated arc plus the vector field at its final state, which is the
/// derivative of the final state with respect to the arc's signed duration.
struct PropagatedArc {
    stm: Mat7,
    csm: Mat7x3,
    end_state: SpacecraftState,
    end_field: Vec7,
}

fn prop_arc(
    initial: &SpacecraftState,
    duration: f64,
    control: Option<ControlSegment>,
    problem: &Problem,
    with_sens: bool,
) -> Result<PropagatedArc, PropagationError> {
    let arc = Arc {
        t0: 0.0,
        tf: duration,
        initial: *initial,
        control,
    };
    let res = propagate(&arc, &problem.params, with_sens, problem.tol)?;
    let end_field = if with_sens {
        eval_vector_field(&res.final_state, control.as_ref(), &problem.params)?
    } else {
        [0.0; 7]
    };
    Ok(PropagatedArc {
        stm: res.stm,
        csm: res.csm,
        end_state: res.final_state,
        end_field,
    })
}

/// Suffix STM products over a chain: `s[j] = Phi_last * .. * Phi_{j+1}`,
/// with `s[last] = I`.
fn suffix_stms(arcs: &[PropagatedArc]) -> Vec<Mat7> {
    let n = arcs.len();
    let mut s = Vec::with_capacity(n);
    s.resize(n, crate::linalg::mat7_identity());
    for j in (0..n.saturating_sub(1)).rev() {
        s[j] = mat7_mul(&s[j + 1], &arcs[j + 1].stm);
    }
    s
}

fn vec7_sub(a: &Vec7, b: &Vec7) -> Vec7 {
    let mut out = [0.0; 7];
    for i in 0..7 {
        out[i] = a[i] - b[i];
    }
    out
}

fn vec7_scale(a: &Vec7, s: f64) -> Vec7 {
    let mut out = *a;
    for v in out.iter_mut() {
        *v *= s;
    }
    out
}

fn vec7_add_assign(a: &mut Vec7, b: &Vec7) {
    for i in 0..7 {
        a[i] += b[i];
    }
}

/// Everything the Jacobian assembly needs from one shot leg.
struct LegShot {
    defect: Vec7,
    /// Partials of the defect against the leg's own block columns; present
    /// only when sensitivities were requested.
    own_cols: Vec<Vec7>,
    /// Partial against the leg's initial state (used for outage coupling).
    d_init: Mat7,
    /// Partial against the leg's epoch base (the arrival-phase shift a
    /// realization inherits from `tau_1`).
    d_epoch: Vec7,
}

/// Shoots one leg forward and backward. `fwd` must already hold the coast
/// arc followed by the forward-half segment arcs.
#[allow(clippy::too_many_arguments)]
fn shoot_leg(
    leg: LegView<'_>,
    layout: &LegLayout,
    fwd: &[PropagatedArc],
    epoch_base: f64,
    problem: &Problem,
    with_sens: bool,
) -> Result<LegShot, PropagationError> {
    let n = layout.n_segments;
    let mid = layout.midpoint();
    let dt = leg.t_s() / n as f64;
    debug_assert_eq!(fwd.len(), mid + 1);

    // Backward side: anchor at the arrival epoch, then the final coast and
    // the rear segments, all with negative durations.
    let t_arr = epoch_base + leg.t_i() + leg.t_s() + leg.t_f();
    let (anchor, anchor_dot) = problem.boundary.target_orbit.state_at_epoch(t_arr);
    let anchor_state = SpacecraftState::new(
        [anchor[0], anchor[1], anchor[2]],
        [anchor[3], anchor[4], anchor[5]],
        leg.m_f(),
    );
    let nb = n - mid;
    let mut bwd = Vec::with_capacity(nb + 1);
    bwd.push(prop_arc(&anchor_state, -leg.t_f(), None, problem, with_sens)?);
    for q in 1..=nb {
        let p = n + 1 - q; // 1-based segment index flown by this backward arc
        let prev = bwd[q - 1].end_state;
        bwd.push(prop_arc(
            &prev,
            -dt,
            Some(leg.control(p - 1)),
            problem,
            with_sens,
        )?);
    }

    let fwd_end = fwd[mid].end_state.to_array();
    let bwd_end = bwd[nb].end_state.to_array();
    let defect = vec7_sub(&fwd_end, &bwd_end);

    if !with_sens {
        return Ok(LegShot {
            defect,
            own_cols: Vec::new(),
            d_init: crate::linalg::mat7_zero(),
            d_epoch: [0.0; 7],
        });
    }

    let s_f = suffix_stms(fwd);
    let s_b = suffix_stms(&bwd);
    let phi_b_total = mat7_mul(&s_b[0], &bwd[0].stm);
    let anchor_vec: Vec7 = [
        anchor_dot[0],
        anchor_dot[1],
        anchor_dot[2],
        anchor_dot[3],
        anchor_dot[4],
        anchor_dot[5],
        0.0,
    ];
    let epoch_dir = mat7_mul_vec(&phi_b_total, &anchor_vec);

    // Forward-side duration partials.
    let df_dti = mat7_mul_vec(&s_f[0], &fwd[0].end_field);
    let mut df_dts = [0.0; 7];
    for j in 1..=mid {
        vec7_add_assign(&mut df_dts, &mat7_mul_vec(&s_f[j], &fwd[j].end_field));
    }
    let df_dts = vec7_scale(&df_dts, 1.0 / n as f64);

    // Backward-side duration partials carry a sign flip: lengthening a
    // backward arc moves its endpoint along -f.
    let db_dtf = vec7_sub(&epoch_dir, &mat7_mul_vec(&s_b[0], &bwd[0].end_field));
    let mut db_dts_sum = [0.0; 7];
    for q in 1..=nb {
        vec7_add_assign(&mut db_dts_sum, &mat7_mul_vec(&s_b[q], &bwd[q].end_field));
    }
    let db_dts = vec7_sub(&epoch_dir, &vec7_scale(&db_dts_sum, 1.0 / n as f64));

    let mut own_cols = alloc::vec![[0.0f64; 7]; layout.len()];
    own_cols[IDX_TS] = vec7_sub(&df_dts, &db_dts);
    own_cols[IDX_TI] = vec7_sub(&df_dti, &epoch_dir);
    own_cols[IDX_TF] = vec7_scale(&db_dtf, -1.0);
    for p in 1..=n {
        if p <= mid {
            let block = mat7_mul_7x3(&s_f[p], &fwd[p].csm);
            for component in 0..3 {
                own_cols[layout.control_col(p - 1, component)] = mat7x3_col(&block, component);
            }
        } else {
            let q = n + 1 - p;
            let block = mat7_mul_7x3(&s_b[q], &bwd[q].csm);
            for component in 0..3 {
                own_cols[layout.control_col(p - 1, component)] =
                    vec7_scale(&mat7x3_col(&block, component), -1.0);
            }
        }
    }
    own_cols[layout.m_f_col()] = vec7_scale(&mat7_col(&phi_b_total, 6), -1.0);

    let d_init = mat7_mul(&s_f[0], &fwd[0].stm);
    let d_epoch = vec7_scale(&epoch_dir, -1.0);

    Ok(LegShot {
        defect,
        own_cols,
        d_init,
        d_epoch,
    })
}

/// Reference forward chain: the initial coast plus segments `1..=upto`,
/// threading states. Returned arcs are indexed `[coast, seg 1, .., seg upto]`.
fn forward_chain(
    start: &SpacecraftState,
    leg: LegView<'_>,
    upto: usize,
    problem: &Problem,
    with_sens: bool,
) -> Result<Vec<PropagatedArc>, PropagationError> {
    let dt = leg.t_s() / leg.layout.n_segments as f64;
    let mut arcs = Vec::with_capacity(upto + 1);
    arcs.push(prop_arc(start, leg.t_i(), None, problem, with_sens)?);
    for p in 1..=upto {
        let prev = arcs[p - 1].end_state;
        arcs.push(
            prop_arc(&prev, dt, Some(leg.control(p - 1)), problem, with_sens)
                .map_err(|e| e.in_segment(p - 1))?,
        );
    }
    Ok(arcs)
}

/// Per-realization coupling partials through the inherited branch state.
struct BranchPartials {
    state_after_outage: SpacecraftState,
    /// d(branch state)/d(T_i_ref)
    d_ti: Vec7,
    /// d(branch state)/d(T_s_ref)
    d_ts: Vec7,
    /// d(branch state)/d(u_p_ref) for p = 1 .. n_omega - 1
    d_controls: Vec<Mat7x3>,
    /// d(tau_1)/d(T_s_ref) = (n_omega - 1) / N
    dtau1_dts: f64,
}

fn branch_partials(
    ref_chain: &[PropagatedArc],
    n_omega: usize,
    n_ref: usize,
    delta_tau: f64,
    problem: &Problem,
    with_sens: bool,
) -> Result<BranchPartials, PropagationError> {
    let prefix = &ref_chain[..n_omega]; // coast + segments 1..n_omega-1
    let state_tau1 = prefix[n_omega - 1].end_state;
    let outage = prop_arc(&state_tau1, delta_tau, None, problem, with_sens)?;

    if !with_sens {
        return Ok(BranchPartials {
            state_after_outage: outage.end_state,
            d_ti: [0.0; 7],
            d_ts: [0.0; 7],
            d_controls: Vec::new(),
            dtau1_dts: 0.0,
        });
    }

    let s = suffix_stms(prefix);
    let d_ti = mat7_mul_vec(&outage.stm, &mat7_mul_vec(&s[0], &prefix[0].end_field));
    let mut d_ts = [0.0; 7];
    for j in 1..n_omega {
        vec7_add_assign(&mut d_ts, &mat7_mul_vec(&s[j], &prefix[j].end_field));
    }
    let d_ts = mat7_mul_vec(&outage.stm, &vec7_scale(&d_ts, 1.0 / n_ref as f64));
    let d_controls = (1..n_omega)
        .map(|p| mat7_mul_7x3(&outage.stm, &mat7_mul_7x3(&s[p], &prefix[p].csm)))
        .collect();

    Ok(BranchPartials {
        state_after_outage: outage.end_state,
        d_ti,
        d_ts,
        d_controls,
        dtau1_dts: (n_omega - 1) as f64 / n_ref as f64,
    })
}

fn check_shape(problem: &Problem, x: &DecisionVector) -> Result<(), TranscriptionError> {
    if x.layouts() != problem.layouts.as_slice() || x.len() != problem.decision_len() {
        return Err(TranscriptionError::LengthMismatch {
            expected: problem.decision_len(),
            got: x.len(),
        });
    }
    Ok(())
}

impl Problem {
    /// Objective `-m_f_ref` and matchpoint defects for every leg.
    ///
    /// Out-of-bounds decision vectors are evaluated as-is; bounds are the
    /// solver's concern.
    pub fn evaluate(&self, x: &DecisionVector) -> Result<Evaluation, TranscriptionError> {
        self.evaluate_impl(x, false).map(|(e, _)| e)
    }

    /// Evaluation plus the analytic sparse Jacobian of `(defects, objective)`.
    pub fn evaluate_with_jacobian(
        &self,
        x: &DecisionVector,
    ) -> Result<(Evaluation, SparseMatrix), TranscriptionError> {
        self.evaluate_impl(x, true)
            .map(|(e, jac)| (e, jac.expect("jacobian requested")))
    }

    pub fn evaluate_jacobian(&self, x: &DecisionVector) -> Result<SparseMatrix, TranscriptionError> {
        Ok(self.evaluate_with_jacobian(x)?.1)
    }

    /// Outage branch states of every realization, exposed for structural
    /// checks: the realization inherits the reference flow's state and mass
    /// at `tau_1` and coasts ballistically through the outage window.
    pub fn branch_points(&self, x: &DecisionVector) -> Result<Vec<BranchPoint>, TranscriptionError> {
        check_shape(self, x)?;
        let reference = x.leg(0);
        let max_prefix = self.scenario.start_indices.iter().copied().max().unwrap_or(0);
        if max_prefix == 0 {
            return Ok(Vec::new());
        }
        let chain = forward_chain(
            &self.boundary.departure(),
            reference,
            max_prefix - 1,
            self,
            false,
        )
        .map_err(|source| TranscriptionError::Leg { leg: 0, source })?;
        let dt = reference.t_s() / self.layouts[0].n_segments as f64;
        self.scenario
            .start_indices
            .iter()
            .enumerate()
            .map(|(k, &n_omega)| {
                let state_at_tau1 = chain[n_omega - 1].end_state;
                let outage = prop_arc(&state_at_tau1, self.scenario.delta_tau, None, self, false)
                    .map_err(|source| TranscriptionError::Leg { leg: k + 1, source })?;
                Ok(BranchPoint {
                    tau1: reference.t_i() + (n_omega - 1) as f64 * dt,
                    delta_tau: self.scenario.delta_tau,
                    state_at_tau1,
                    state_after_outage: outage.end_state,
                })
            })
            .collect()
    }

    fn evaluate_impl(
        &self,
        x: &DecisionVector,
        with_jac: bool,
    ) -> Result<(Evaluation, Option<SparseMatrix>), TranscriptionError> {
        check_shape(self, x)?;
        let reference = x.leg(0);
        let ref_layout = self.layouts[0];
        let n_ref = ref_layout.n_segments;
        let mid_ref = ref_layout.midpoint();

        // One forward pass serves both the reference's own shooting and every
        // realization branch state.
        let max_branch_prefix = self
            .scenario
            .start_indices
            .iter()
            .map(|&n_omega| n_omega - 1)
            .max()
            .unwrap_or(0);
        let prefix_needed = mid_ref.max(max_branch_prefix);
        let ref_chain = forward_chain(
            &self.boundary.departure(),
            reference,
            prefix_needed,
            self,
            with_jac,
        )
        .map_err(|source| TranscriptionError::Leg { leg: 0, source })?;

        let mut legs = Vec::with_capacity(self.layouts.len());
        let ref_shot = shoot_leg(
            reference,
            &ref_layout,
            &ref_chain[..=mid_ref],
            0.0,
            self,
            with_jac,
        )
        .map_err(|source| TranscriptionError::Leg { leg: 0, source })?;

        let mut realization_shots = Vec::with_capacity(self.depth());
        for (k, &n_omega) in self.scenario.start_indices.iter().enumerate() {
            let leg_index = k + 1;
            let branch = branch_partials(
                &ref_chain,
                n_omega,
                n_ref,
                self.scenario.delta_tau,
                self,
                with_jac,
            )
            .map_err(|source| TranscriptionError::Leg { leg: leg_index, source })?;
            let view = x.leg(leg_index);
            let layout = self.layouts[leg_index];
            let dt_ref = reference.t_s() / n_ref as f64;
            let tau1 = reference.t_i() + (n_omega - 1) as f64 * dt_ref;
            let epoch_base = tau1 + self.scenario.delta_tau;
            let fwd = forward_chain(
                &branch.state_after_outage,
                view,
                layout.midpoint(),
                self,
                with_jac,
            )
            .map_err(|source| TranscriptionError::Leg { leg: leg_index, source })?;
            let shot = shoot_leg(view, &layout, &fwd, epoch_base, self, with_jac)
                .map_err(|source| TranscriptionError::Leg { leg: leg_index, source })?;
            realization_shots.push((n_omega, branch, shot));
        }

        legs.push(ref_shot.defect);
        for (_, _, shot) in &realization_shots {
            legs.push(shot.defect);
        }
        let evaluation = Evaluation {
            objective: -reference.m_f(),
            defects: DefectVector { legs },
        };

        if !with_jac {
            return Ok((evaluation, None));
        }

        // Assemble triplets in structural-pattern order: each leg's own block
        // plus the realization coupling into the reference block.
        let mut entries = Vec::new();
        let push_block =
            |entries: &mut Vec<(usize, usize, f64)>, row0: usize, col0: usize, cols: &[Vec7]| {
                for (offset, col) in cols.iter().enumerate() {
                    for i in 0..7 {
                        entries.push((row0 + i, col0 + offset, col[i]));
                    }
                }
            };

        push_block(&mut entries, 0, 0, &ref_shot.own_cols);
        for (k, (n_omega, branch, shot)) in realization_shots.iter().enumerate() {
            let row0 = 7 * (k + 1);
            let col0 = self.leg_offset(k + 1);
            push_block(&mut entries, row0, col0, &shot.own_cols);

            // Coupling into the reference block.
            let mut dts = mat7_mul_vec(&shot.d_init, &branch.d_ts);
            vec7_add_assign(&mut dts, &vec7_scale(&shot.d_epoch, branch.dtau1_dts));
            let mut dti = mat7_mul_vec(&shot.d_init, &branch.d_ti);
            vec7_add_assign(&mut dti, &shot.d_epoch);
            for i in 0..7 {
                entries.push((row0 + i, IDX_TS, dts[i]));
                entries.push((row0 + i, IDX_TI, dti[i]));
            }
            for (p_idx, du) in branch.d_controls.iter().enumerate() {
                let block = mat7_mul_7x3(&shot.d_init, du);
                for component in 0..3 {
                    let col = ref_layout.control_col(p_idx, component);
                    let v = mat7x3_col(&block, component);
                    for i in 0..7 {
                        entries.push((row0 + i, col, v[i]));
                    }
                }
            }
            let _ = n_omega;
        }
        // Objective row: d(-m_f_ref)/dx.
        entries.push((self.constraint_rows(), self.objective_col(), -1.0));
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));

        let jacobian = SparseMatrix {
            n_rows: self.constraint_rows() + 1,
            n_cols: self.decision_len(),
            entries,
        };
        Ok((evaluation, Some(jacobian)))
    }
}
