//! Controlled circular restricted three-body dynamics with mass flow.
//!
//! The rotating-frame CR3BP places the primaries on the x-axis: the larger
//! primary (mass `1 - mu`) at `(-mu, 0, 0)` and the smaller (mass `mu`) at
//! `(1 - mu, 0, 0)`. States are nondimensional: distances in DU, times in TU
//! (so one rotation of the primaries takes `2*pi` TU), masses in MU. Thrust
//! is a constant-per-segment vector expressed in spherical coordinates in
//! the rotating frame.

use crate::linalg::{Mat7, Mat7x3, Vec3, Vec7};
use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Nondimensional model parameters plus the unit scales used for IO
/// conversion. The dynamics themselves never touch the unit scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    /// Mass ratio of the smaller primary, `0 < mu < 1/2`.
    pub mu: f64,
    /// Maximum thrust magnitude (nondimensional force, DU/TU^2 * MU).
    pub t_max: f64,
    /// Exhaust velocity `Isp * g0` (nondimensional velocity, DU/TU).
    pub isp_g: f64,
    /// Kilometers per distance unit.
    pub length_unit: f64,
    /// Seconds per time unit.
    pub time_unit: f64,
    /// Kilograms per mass unit.
    pub mass_unit: f64,
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let ok = self.mu > 0.0
            && self.mu < 0.5
            && self.t_max > 0.0
            && self.isp_g > 0.0
            && self.length_unit > 0.0
            && self.time_unit > 0.0
            && self.mass_unit > 0.0
            && [
                self.mu,
                self.t_max,
                self.isp_g,
                self.length_unit,
                self.time_unit,
                self.mass_unit,
            ]
            .iter()
            .all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(DynamicsError::InvalidParams)
        }
    }
}

/// Integrated quantity: position, velocity, and mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpacecraftState {
    /// Position in the rotating frame (DU).
    pub r: Vec3,
    /// Velocity in the rotating frame (DU/TU).
    pub v: Vec3,
    /// Wet mass (MU).
    pub m: f64,
}

impl SpacecraftState {
    pub fn new(r: Vec3, v: Vec3, m: f64) -> Self {
        Self { r, v, m }
    }

    pub fn to_array(&self) -> Vec7 {
        [
            self.r[0], self.r[1], self.r[2], self.v[0], self.v[1], self.v[2], self.m,
        ]
    }

    pub fn from_array(x: &Vec7) -> Self {
        Self {
            r: [x[0], x[1], x[2]],
            v: [x[3], x[4], x[5]],
            m: x[6],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

/// One finite-burn control segment: both magnitude and direction are held
/// constant over the segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSegment {
    /// Throttle in `[0, 1]`; thrust magnitude is `throttle * t_max`.
    pub throttle: f64,
    /// In-plane thrust angle (rad), measured in the rotating xy-plane.
    pub alpha: f64,
    /// Out-of-plane thrust angle (rad), in `[-pi/2, pi/2]`.
    pub beta: f64,
}

impl ControlSegment {
    pub const COAST: ControlSegment = ControlSegment {
        throttle: 0.0,
        alpha: 0.0,
        beta: 0.0,
    };

    pub fn new(throttle: f64, alpha: f64, beta: f64) -> Self {
        Self {
            throttle,
            alpha,
            beta,
        }
    }

    /// Thrust direction unit vector in the rotating frame.
    pub fn direction(&self) -> Vec3 {
        let (sa, ca) = self.alpha.sin_cos();
        let (sb, cb) = self.beta.sin_cos();
        [cb * ca, cb * sa, sb]
    }

    /// Thrust vector `u = throttle * t_max * direction`.
    pub fn thrust_vector(&self, params: &DynamicsParams) -> Vec3 {
        let d = self.direction();
        let mag = self.throttle * params.t_max;
        [mag * d[0], mag * d[1], mag * d[2]]
    }

    pub fn is_finite(&self) -> bool {
        self.throttle.is_finite() && self.alpha.is_finite() && self.beta.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DynamicsError {
    #[error("state or control contains non-finite components")]
    InvalidInput,
    #[error("spacecraft mass is non-positive")]
    SingularMass,
    #[error("state coincides with a primary body")]
    Singularity,
    #[error("dynamics parameters violate their invariants")]
    InvalidParams,
}

/// Distances to the two primaries.
fn primary_offsets(r: &Vec3, mu: f64) -> (Vec3, Vec3) {
    ([r[0] + mu, r[1], r[2]], [r[0] - 1.0 + mu, r[1], r[2]])
}

/// Effective potential `U = (x^2 + y^2)/2 + (1-mu)/d1 + mu/d2`.
fn effective_potential(r: &Vec3, mu: f64) -> Result<f64, DynamicsError> {
    let (r1, r2) = primary_offsets(r, mu);
    let d1 = (r1[0] * r1[0] + r1[1] * r1[1] + r1[2] * r1[2]).sqrt();
    let d2 = (r2[0] * r2[0] + r2[1] * r2[1] + r2[2] * r2[2]).sqrt();
    if d1 == 0.0 || d2 == 0.0 {
        return Err(DynamicsError::Singularity);
    }
    Ok(0.5 * (r[0] * r[0] + r[1] * r[1]) + (1.0 - mu) / d1 + mu / d2)
}

fn check_inputs(
    state: &SpacecraftState,
    control: Option<&ControlSegment>,
) -> Result<(), DynamicsError> {
    if !state.is_finite() || control.is_some_and(|c| !c.is_finite()) {
        return Err(DynamicsError::InvalidInput);
    }
    if state.m <= 0.0 {
        return Err(DynamicsError::SingularMass);
    }
    Ok(())
}

/// Time derivative of the augmented state: `(v, grad U + coriolis + u/m, -|u|/isp_g)`.
///
/// With no control (or zero throttle) the acceleration is purely ballistic
/// and the mass derivative is exactly zero.
pub fn eval_vector_field(
    state: &SpacecraftState,
    control: Option<&ControlSegment>,
    params: &DynamicsParams,
) -> Result<Vec7, DynamicsError> {
    check_inputs(state, control)?;
    let mu = params.mu;
    let (r1, r2) = primary_offsets(&state.r, mu);
    let d1sq = r1[0] * r1[0] + r1[1] * r1[1] + r1[2] * r1[2];
    let d2sq = r2[0] * r2[0] + r2[1] * r2[1] + r2[2] * r2[2];
    if d1sq == 0.0 || d2sq == 0.0 {
        return Err(DynamicsError::Singularity);
    }
    let d1_3 = d1sq * d1sq.sqrt();
    let d2_3 = d2sq * d2sq.sqrt();
    let c1 = (1.0 - mu) / d1_3;
    let c2 = mu / d2_3;

    let [x, y, _z] = state.r;
    let [vx, vy, _vz] = state.v;
    let mut acc = [
        x - c1 * r1[0] - c2 * r2[0] + 2.0 * vy,
        y - c1 * r1[1] - c2 * r2[1] - 2.0 * vx,
        -c1 * r1[2] - c2 * r2[2],
    ];

    let mut mdot = 0.0;
    if let Some(c) = control {
        if c.throttle != 0.0 {
            let u = c.thrust_vector(params);
            let inv_m = 1.0 / state.m;
            acc[0] += u[0] * inv_m;
            acc[1] += u[1] * inv_m;
            acc[2] += u[2] * inv_m;
            mdot = -c.throttle * params.t_max / params.isp_g;
        }
    }

    Ok([
        state.v[0], state.v[1], state.v[2], acc[0], acc[1], acc[2], mdot,
    ])
}

/// Jacobi constant `C = 2 U(r) - |v|^2`; conserved along ballistic arcs and
/// used as an integration diagnostic.
pub fn jacobi_constant(state: &SpacecraftState, params: &DynamicsParams) -> Result<f64, DynamicsError> {
    if !state.is_finite() {
        return Err(DynamicsError::InvalidInput);
    }
    let u = effective_potential(&state.r, params.mu)?;
    let v2 = state.v[0] * state.v[0] + state.v[1] * state.v[1] + state.v[2] * state.v[2];
    Ok(2.0 * u - v2)
}

/// Analytic partials of the vector field: the 7x7 state Jacobian `A` and the
/// 7x3 control Jacobian `B` used by the variational equations.
pub fn eval_field_jacobian(
    state: &SpacecraftState,
    control: Option<&ControlSegment>,
    params: &DynamicsParams,
) -> Result<(Mat7, Mat7x3), DynamicsError> {
    check_inputs(state, control)?;
    let mu = params.mu;
    let (r1, r2) = primary_offsets(&state.r, mu);
    let d1sq = r1[0] * r1[0] + r1[1] * r1[1] + r1[2] * r1[2];
    let d2sq = r2[0] * r2[0] + r2[1] * r2[1] + r2[2] * r2[2];
    if d1sq == 0.0 || d2sq == 0.0 {
        return Err(DynamicsError::Singularity);
    }
    let d1 = d1sq.sqrt();
    let d2 = d2sq.sqrt();
    let d1_3 = d1sq * d1;
    let d2_3 = d2sq * d2;
    let d1_5 = d1_3 * d1sq;
    let d2_5 = d2_3 * d2sq;

    let mut a = [[0.0; 7]; 7];
    // dr/dt = v
    a[0][3] = 1.0;
    a[1][4] = 1.0;
    a[2][5] = 1.0;
    // Hessian of the effective potential: centrifugal part plus, per primary,
    // m_i * (3 r_i r_i^T / d^5 - I / d^3).
    for i in 0..3 {
        for j in 0..3 {
            let mut h = (1.0 - mu) * (3.0 * r1[i] * r1[j] / d1_5) + mu * (3.0 * r2[i] * r2[j] / d2_5);
            if i == j {
                h -= (1.0 - mu) / d1_3 + mu / d2_3;
                if i < 2 {
                    h += 1.0;
                }
            }
            a[3 + i][j] = h;
        }
    }
    // Coriolis.
    a[3][4] = 2.0;
    a[4][3] = -2.0;

    let mut b = [[0.0; 3]; 7];
    if let Some(c) = control {
        let (sa, ca) = c.alpha.sin_cos();
        let (sb, cb) = c.beta.sin_cos();
        let dir = [cb * ca, cb * sa, sb];
        let inv_m = 1.0 / state.m;
        let mag = c.throttle * params.t_max;
        // d(accel)/dm = -u / m^2
        for i in 0..3 {
            a[3 + i][6] = -mag * dir[i] * inv_m * inv_m;
        }
        // d(accel)/d(throttle, alpha, beta)
        let d_alpha = [-cb * sa, cb * ca, 0.0];
        let d_beta = [-sb * ca, -sb * sa, cb];
        for i in 0..3 {
            b[3 + i][0] = params.t_max * dir[i] * inv_m;
            b[3 + i][1] = mag * d_alpha[i] * inv_m;
            b[3 + i][2] = mag * d_beta[i] * inv_m;
        }
        // d(mdot)/d(throttle); mdot is independent of the state, so the
        // bottom row of A stays zero.
        b[6][0] = -params.t_max / params.isp_g;
    }

    Ok((a, b))
}
