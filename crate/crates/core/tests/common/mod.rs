//! Shared fixtures: an Earth-Moon parameter set, fabricated closed target
//! orbits (optionally pinned through prescribed states), and a constructor
//! for self-consistent decision vectors whose defects vanish by direct
//! continuous propagation.

use mtkit_core::dynamics::{ControlSegment, DynamicsParams, SpacecraftState};
use mtkit_core::orbit::OrbitTable;
use mtkit_core::propagation::{propagate, Arc};
use mtkit_core::scenario::MteScenario;
use mtkit_core::transcription::{BoundaryConditions, DecisionVector, LegLayout, Problem};

pub const TEST_TOL: f64 = 1e-14;

pub fn earth_moon() -> DynamicsParams {
    DynamicsParams {
        mu: 0.012150585609624,
        t_max: 0.1,
        isp_g: 2.0,
        length_unit: 384_400.0,
        time_unit: 375_190.25,
        mass_unit: 1000.0,
    }
}

pub fn reference_layout(n: usize) -> LegLayout {
    LegLayout {
        n_segments: n,
        t_s_max: 0.8,
        t_i_max: 0.3,
        t_f_max: 0.3,
        m_f_max: 1.0,
    }
}

/// Smooth closed curve used as a stand-in target orbit. Not a trajectory of
/// the dynamics; transcription math only needs a valid closed table.
fn base_curve(theta: f64) -> [f64; 6] {
    [
        0.38 + 0.22 * theta.cos(),
        0.25 + 0.22 * theta.sin(),
        0.03 * (2.0 * theta).sin(),
        -0.14 * theta.sin(),
        0.14 * theta.cos(),
        0.02 * (2.0 * theta).cos(),
    ]
}

pub fn fabricated_orbit(period: f64, n: usize) -> OrbitTable {
    pinned_orbit(period, n, &[])
}

/// Closed table over `period` with `n` base intervals, with extra knots
/// inserted at each `(epoch, state)` pin so the spline passes through them
/// exactly. Grid knots too close to a pin are dropped to keep spacing sane.
pub fn pinned_orbit(period: f64, n: usize, pins: &[(f64, [f64; 6])]) -> OrbitTable {
    let spacing = period / n as f64;
    let phases: Vec<(f64, [f64; 6])> = pins
        .iter()
        .map(|&(epoch, state)| (epoch.rem_euclid(period), state))
        .collect();
    for (phase, _) in &phases {
        assert!(
            *phase > 0.6 * spacing && *phase < period - 0.6 * spacing,
            "pin phase {phase} too close to the table seam"
        );
    }
    let mut knots: Vec<(f64, [f64; 6])> = (0..n)
        .map(|i| {
            let t = period * i as f64 / n as f64;
            (t, base_curve(t / period * core::f64::consts::TAU))
        })
        .filter(|(t, _)| {
            phases
                .iter()
                .all(|(phase, _)| (t - phase).abs() > 0.4 * spacing)
        })
        .collect();
    knots.extend(phases);
    knots.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert!(
        knots.windows(2).all(|w| w[1].0 > w[0].0),
        "duplicate pin phases"
    );
    let first_state = knots[0].1;
    knots.push((period, first_state));
    let (times, states): (Vec<f64>, Vec<[f64; 6]>) = knots.into_iter().unzip();
    OrbitTable::new(times, states).expect("fabricated orbit is a valid closed table")
}

pub fn departure_state() -> SpacecraftState {
    SpacecraftState::new([0.52, -0.18, 0.01], [0.05, 0.42, -0.01], 1.0)
}

pub fn problem_with_orbit(scenario: MteScenario, n_ref: usize, orbit: OrbitTable) -> Problem {
    Problem::new(
        earth_moon(),
        BoundaryConditions {
            initial_state: departure_state(),
            target_orbit: orbit,
            m0: 1.0,
        },
        scenario,
        reference_layout(n_ref),
        TEST_TOL,
    )
    .expect("fixture problem is valid")
}

pub fn set_leg(
    x: &mut DecisionVector,
    leg: usize,
    t_s: f64,
    t_i: f64,
    t_f: f64,
    controls: &[ControlSegment],
    m_f: f64,
) {
    let offset = x.leg_offset(leg);
    let layout = x.layouts()[leg];
    assert_eq!(controls.len(), layout.n_segments);
    let values = x.values_mut();
    values[offset] = t_s;
    values[offset + 1] = t_i;
    values[offset + 2] = t_f;
    for (p, c) in controls.iter().enumerate() {
        values[offset + 3 + 3 * p] = c.throttle;
        values[offset + 4 + 3 * p] = c.alpha;
        values[offset + 5 + 3 * p] = c.beta;
    }
    values[offset + 3 + 3 * layout.n_segments] = m_f;
}

fn coast(state: &SpacecraftState, duration: f64, params: &DynamicsParams) -> SpacecraftState {
    if duration == 0.0 {
        return *state;
    }
    propagate(
        &Arc {
            t0: 0.0,
            tf: duration,
            initial: *state,
            control: None,
        },
        params,
        false,
        TEST_TOL,
    )
    .expect("fixture coast propagates")
    .final_state
}

fn burn_chain(
    state: &SpacecraftState,
    controls: &[ControlSegment],
    dt: f64,
    params: &DynamicsParams,
) -> SpacecraftState {
    let mut s = *state;
    for c in controls {
        s = propagate(
            &Arc {
                t0: 0.0,
                tf: dt,
                initial: s,
                control: Some(*c),
            },
            params,
            false,
            TEST_TOL,
        )
        .expect("fixture burn propagates")
        .final_state;
    }
    s
}

/// Leg value choices for the self-consistent constructor.
pub struct LegPlan {
    pub t_s: f64,
    pub t_i: f64,
    pub t_f: f64,
    pub controls: Vec<ControlSegment>,
}

/// Builds a problem whose target orbit is pinned through the terminal states
/// of every leg of a continuously propagated trajectory, together with the
/// decision vector that reproduces it. The returned vector has zero defects
/// up to integration error.
pub fn self_consistent_problem(
    scenario: MteScenario,
    n_ref: usize,
    reference: LegPlan,
    realizations: &[LegPlan],
) -> (Problem, DecisionVector) {
    let params = earth_moon();
    assert_eq!(realizations.len(), scenario.depth());
    assert_eq!(reference.controls.len(), n_ref);

    // Reference leg flown end to end.
    let dt_ref = reference.t_s / n_ref as f64;
    let s_after_coast = coast(&departure_state(), reference.t_i, &params);
    let mut segment_ends = Vec::with_capacity(n_ref);
    let mut s = s_after_coast;
    for c in &reference.controls {
        s = burn_chain(&s, &[*c], dt_ref, &params);
        segment_ends.push(s);
    }
    let ref_terminal = coast(&s, reference.t_f, &params);
    let ref_arrival = reference.t_i + reference.t_s + reference.t_f;
    let mut pins = vec![(
        ref_arrival,
        [
            ref_terminal.r[0],
            ref_terminal.r[1],
            ref_terminal.r[2],
            ref_terminal.v[0],
            ref_terminal.v[1],
            ref_terminal.v[2],
        ],
    )];

    // Realization legs: branch from the reference flow at tau_1, coast the
    // outage, then fly the plan.
    let mut realization_values = Vec::new();
    for (k, plan) in realizations.iter().enumerate() {
        let n_omega = scenario.start_indices[k];
        let n_seg = n_ref - n_omega;
        assert_eq!(plan.controls.len(), n_seg);
        let state_tau1 = if n_omega == 1 {
            s_after_coast
        } else {
            segment_ends[n_omega - 2]
        };
        let tau1 = reference.t_i + (n_omega - 1) as f64 * dt_ref;
        let after_outage = coast(&state_tau1, scenario.delta_tau, &params);
        let after_ti = coast(&after_outage, plan.t_i, &params);
        let dt = plan.t_s / n_seg as f64;
        let after_burns = burn_chain(&after_ti, &plan.controls, dt, &params);
        let terminal = coast(&after_burns, plan.t_f, &params);
        let arrival = tau1 + scenario.delta_tau + plan.t_i + plan.t_s + plan.t_f;
        pins.push((
            arrival,
            [
                terminal.r[0],
                terminal.r[1],
                terminal.r[2],
                terminal.v[0],
                terminal.v[1],
                terminal.v[2],
            ],
        ));
        realization_values.push((plan, terminal.m));
    }

    let orbit = pinned_orbit(2.3, 96, &pins);
    let problem = problem_with_orbit(scenario, n_ref, orbit);

    let mut x = problem.zero_vector();
    set_leg(
        &mut x,
        0,
        reference.t_s,
        reference.t_i,
        reference.t_f,
        &reference.controls,
        ref_terminal.m,
    );
    for (k, (plan, m_f)) in realization_values.iter().enumerate() {
        set_leg(
            &mut x,
            k + 1,
            plan.t_s,
            plan.t_i,
            plan.t_f,
            &plan.controls,
            *m_f,
        );
    }
    (problem, x)
}

/// Mild control profile that keeps fixture trajectories away from the
/// primaries.
pub fn gentle_controls(n: usize, phase: f64) -> Vec<ControlSegment> {
    (0..n)
        .map(|p| {
            let t = p as f64 / n as f64;
            ControlSegment::new(
                0.3 + 0.4 * (2.0 * t + phase).sin().abs(),
                1.2 * (t + phase).sin(),
                0.3 * (3.0 * t - phase).cos(),
            )
        })
        .collect()
}
