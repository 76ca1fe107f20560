//! Adaptive Runge-Kutta propagation of the spacecraft state, optionally
//! augmented with the variational equations for the state-transition matrix
//! `dPhi/dt = A(t) Phi` and control-sensitivity matrix `dPsi/dt = A(t) Psi + B(t)`.
//!
//! The integrator is an embedded Dormand-Prince 5(4) pair with PI step-size
//! control and FSAL reuse. Backward propagation is negative-duration
//! integration of the same vector field, so forward and backward shooting
//! share one code path.

use crate::dynamics::{eval_field_jacobian, eval_vector_field, ControlSegment, DynamicsError, DynamicsParams, SpacecraftState};
use crate::linalg::{mat7_mul, Mat7, Mat7x3};
use alloc::boxed::Box;
use alloc::vec::Vec;
use num_traits::Float;
use thiserror::Error;

/// One finite-burn (or coast) arc with constant control.
#[derive(Debug, Clone, Copy)]
pub struct Arc {
    pub t0: f64,
    pub tf: f64,
    pub initial: SpacecraftState,
    pub control: Option<ControlSegment>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
}

/// Propagation output. `stm` and `csm` are identity/zero unless sensitivities
/// were requested.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcResult {
    pub final_state: SpacecraftState,
    pub stm: Mat7,
    pub csm: Mat7x3,
    pub stats: StepStats,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PropagationError {
    #[error("propellant depleted: mass reached zero during the arc")]
    PropellantDepleted,
    #[error("step size underflow at t = {t_mantissa}e{t_exp}; trajectory too close to a primary")]
    StepSizeUnderflow { t_mantissa: i64, t_exp: i32 },
    #[error("dynamics evaluation failed: {0}")]
    Dynamics(#[from] DynamicsError),
    #[error("tolerance outside [1e-14, 1e-6]")]
    InvalidTolerance,
    #[error("segment {index}: {source}")]
    Segment {
        index: usize,
        source: Box<PropagationError>,
    },
}

impl PropagationError {
    fn underflow(t: f64) -> Self {
        // Stored as mantissa/exponent so the error type stays Eq.
        let exp = if t == 0.0 { 0 } else { t.abs().log10().floor() as i32 };
        let mantissa = (t / 10f64.powi(exp) * 1e6) as i64;
        PropagationError::StepSizeUnderflow {
            t_mantissa: mantissa,
            t_exp: exp,
        }
    }

    /// Annotates an error with the chain segment it occurred in.
    pub fn in_segment(self, index: usize) -> Self {
        PropagationError::Segment {
            index,
            source: Box::new(self),
        }
    }
}

const STAGES: usize = 7;
// Dormand-Prince 5(4) tableau.
const C: [f64; STAGES] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; STAGES] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Fifth-order weights coincide with the last tableau row (FSAL).
const B5: [f64; STAGES] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
// Error weights e = b5 - b4.
const E: [f64; STAGES] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Augmented vector: state (7), STM columns (49), CSM columns (21).
const N_AUG: usize = 7 + 49 + 21;
type Aug = [f64; N_AUG];

fn pack(state: &SpacecraftState, stm: &Mat7, csm: &Mat7x3) -> Aug {
    let mut y = [0.0; N_AUG];
    y[..7].copy_from_slice(&state.to_array());
    for j in 0..7 {
        for i in 0..7 {
            y[7 + j * 7 + i] = stm[i][j];
        }
    }
    for j in 0..3 {
        for i in 0..7 {
            y[56 + j * 7 + i] = csm[i][j];
        }
    }
    y
}

fn unpack(y: &Aug) -> (SpacecraftState, Mat7, Mat7x3) {
    let mut arr = [0.0; 7];
    arr.copy_from_slice(&y[..7]);
    let state = SpacecraftState::from_array(&arr);
    let mut stm = [[0.0; 7]; 7];
    for j in 0..7 {
        for i in 0..7 {
            stm[i][j] = y[7 + j * 7 + i];
        }
    }
    let mut csm = [[0.0; 3]; 7];
    for j in 0..3 {
        for i in 0..7 {
            csm[i][j] = y[56 + j * 7 + i];
        }
    }
    (state, stm, csm)
}

/// Right-hand side of the (optionally augmented) system.
fn rhs(
    y: &Aug,
    control: Option<&ControlSegment>,
    params: &DynamicsParams,
    with_sensitivities: bool,
    out: &mut Aug,
) -> Result<(), PropagationError> {
    let mut arr = [0.0; 7];
    arr.copy_from_slice(&y[..7]);
    let state = SpacecraftState::from_array(&arr);
    let f = eval_vector_field(&state, control, params)?;
    out[..7].copy_from_slice(&f);
    if with_sensitivities {
        let (a, b) = eval_field_jacobian(&state, control, params)?;
        // Phi' = A Phi, column by column.
        for j in 0..7 {
            for i in 0..7 {
                let mut acc = 0.0;
                for k in 0..7 {
                    acc += a[i][k] * y[7 + j * 7 + k];
                }
                out[7 + j * 7 + i] = acc;
            }
        }
        // Psi' = A Psi + B.
        for j in 0..3 {
            for i in 0..7 {
                let mut acc = b[i][j];
                for k in 0..7 {
                    acc += a[i][k] * y[56 + j * 7 + k];
                }
                out[56 + j * 7 + i] = acc;
            }
        }
    }
    Ok(())
}

/// Propagates one arc at local error tolerance `tol`.
///
/// When `with_sensitivities` is set the STM and CSM are integrated alongside
/// the state; otherwise they are returned as identity/zero. Zero-length arcs
/// return the initial state with identity STM.
pub fn propagate(
    arc: &Arc,
    params: &DynamicsParams,
    with_sensitivities: bool,
    tol: f64,
) -> Result<ArcResult, PropagationError> {
    if !(1e-14..=1e-6).contains(&tol) {
        return Err(PropagationError::InvalidTolerance);
    }
    if !arc.initial.is_finite() {
        return Err(PropagationError::Dynamics(DynamicsError::InvalidInput));
    }

    let duration = arc.tf - arc.t0;
    let mut stm = crate::linalg::mat7_identity();
    let mut csm = crate::linalg::mat7x3_zero();
    if duration == 0.0 {
        return Ok(ArcResult {
            final_state: arc.initial,
            stm,
            csm,
            stats: StepStats::default(),
        });
    }
    if !with_sensitivities {
        stm = crate::linalg::mat7_identity();
        csm = crate::linalg::mat7x3_zero();
    }

    let n = if with_sensitivities { N_AUG } else { 7 };
    let dir = duration.signum();
    let mut t = 0.0f64; // time relative to t0, signed
    let mut y = pack(&arc.initial, &stm, &csm);
    let mut h = duration / 16.0;
    let h_min = duration.abs() * 1e-14 + 1e-300;
    let mut stats = StepStats::default();

    let mut k = [[0.0f64; N_AUG]; STAGES];
    rhs(&y, arc.control.as_ref(), params, with_sensitivities, &mut k[0])?;
    let mut err_prev: f64 = 1.0;

    loop {
        let remaining = duration - t;
        if remaining == 0.0 || remaining.abs() <= duration.abs() * 1e-16 {
            break;
        }
        if h.abs() > remaining.abs() {
            h = remaining;
        }
        if h.abs() < h_min {
            // Near depletion the u/m acceleration diverges and strangles the
            // step size; classify that as running out of propellant rather
            // than a primary flyby.
            let drain = arc
                .control
                .map_or(0.0, |c| c.throttle.abs() * params.t_max / params.isp_g);
            if drain > 0.0 && y[6] <= drain * remaining.abs() {
                return Err(PropagationError::PropellantDepleted);
            }
            return Err(PropagationError::underflow(arc.t0 + t));
        }

        // Stages 2..7 (stage 1 is k[0], fresh or FSAL).
        let mut failed_stage = false;
        for s in 1..STAGES {
            let mut ys = [0.0f64; N_AUG];
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a_sj = A[s][j];
                    if a_sj != 0.0 {
                        acc += a_sj * kj[i];
                    }
                }
                ys[i] = y[i] + h * acc;
            }
            let _ = C; // stage times unused: the field is autonomous
            match rhs(&ys, arc.control.as_ref(), params, with_sensitivities, &mut k[s]) {
                Ok(()) => {}
                Err(PropagationError::Dynamics(DynamicsError::SingularMass)) => {
                    return Err(PropagationError::PropellantDepleted)
                }
                Err(PropagationError::Dynamics(DynamicsError::InvalidInput)) => {
                    // A wild step produced non-finite trial values; retry smaller.
                    failed_stage = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if failed_stage {
            stats.rejected += 1;
            h *= 0.25;
            continue;
        }

        // Fifth-order update and embedded error estimate.
        let mut y_new = [0.0f64; N_AUG];
        let mut err_sq = 0.0;
        for i in 0..n {
            let mut dy = 0.0;
            let mut de = 0.0;
            for s in 0..STAGES {
                dy += B5[s] * k[s][i];
                de += E[s] * k[s][i];
            }
            y_new[i] = y[i] + h * dy;
            let scale = tol + tol * y[i].abs().max(y_new[i].abs());
            let e = h * de / scale;
            err_sq += e * e;
        }
        let err = (err_sq / n as f64).sqrt();

        if !err.is_finite() {
            stats.rejected += 1;
            h *= 0.25;
            continue;
        }

        if err <= 1.0 {
            t += h;
            y = y_new;
            stats.accepted += 1;
            if y[6] <= 0.0 {
                return Err(PropagationError::PropellantDepleted);
            }
            // FSAL: last stage of the accepted step seeds the next one.
            k[0] = k[STAGES - 1];
            // PI controller (Gustafsson).
            let fac = 0.9 * err.max(1e-10).powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
            err_prev = err.max(1e-10);
            h *= fac.clamp(0.2, 6.0);
        } else {
            stats.rejected += 1;
            let fac = 0.9 * err.powf(-1.0 / 5.0);
            h *= fac.clamp(0.1, 1.0).min(0.9);
        }
        if h * dir <= 0.0 {
            // Controller must never flip the march direction.
            h = dir * h_min * 2.0;
        }
    }

    let (final_state, stm, csm) = unpack(&y);
    if !final_state.is_finite() {
        return Err(PropagationError::Dynamics(DynamicsError::InvalidInput));
    }
    Ok(ArcResult {
        final_state,
        stm,
        csm,
        stats,
    })
}

/// Propagates a chain of equal-duration control segments, threading each
/// final state into the next arc. Errors carry the failing segment index.
pub fn propagate_chain(
    initial: &SpacecraftState,
    segments: &[ControlSegment],
    t_start: f64,
    seg_duration: f64,
    params: &DynamicsParams,
    with_sensitivities: bool,
    tol: f64,
) -> Result<Vec<ArcResult>, PropagationError> {
    debug_assert!(!segments.is_empty() && seg_duration != 0.0);
    let mut out = Vec::with_capacity(segments.len());
    let mut state = *initial;
    let mut t = t_start;
    for (idx, control) in segments.iter().enumerate() {
        let arc = Arc {
            t0: t,
            tf: t + seg_duration,
            initial: state,
            control: Some(*control),
        };
        let res = propagate(&arc, params, with_sensitivities, tol)
            .map_err(|e| e.in_segment(idx))?;
        state = res.final_state;
        t += seg_duration;
        out.push(res);
    }
    Ok(out)
}

/// Ordered product of per-arc STMs: `Phi(t_n, t_0) = Phi_n * ... * Phi_1`.
pub fn chain_stm(results: &[ArcResult]) -> Mat7 {
    let mut acc = crate::linalg::mat7_identity();
    for r in results {
        acc = mat7_mul(&r.stm, &acc);
    }
    acc
}
