//! Solver oracles: a brute-force grid search on a two-segment toy problem,
//! descent and merit monotonicity from feasible starts, immediate return at
//! stationary points, determinism, and wall-clock budget handling.

mod common;

use common::*;
use mtkit_core::dynamics::{ControlSegment, SpacecraftState};
use mtkit_core::propagation::{propagate, Arc};
use mtkit_core::scenario::MteScenario;
use mtkit_core::search::{sample_initial_guess, sampling_bounds, seed_stream};
use mtkit_core::solver::{
    check_feasibility, solve, solve_traced, FeasibilityTolerances, SolveStatus, SolverConfig,
};
use mtkit_core::time::{Clock, NullClock};
use mtkit_core::transcription::{BoundaryConditions, DecisionVector, LegLayout, Problem};

const TOY_TOL: f64 = 1e-9;

/// Two-segment planar toy: coasts pinned to zero by their bounds, a short
/// shooting window, and a generous defect tolerance so the near-linear
/// control grid has a rich feasible set.
fn toy_problem() -> (Problem, DecisionVector, SolverConfig) {
    let params = earth_moon();
    let n = 2;
    let layout = LegLayout {
        n_segments: n,
        t_s_max: 0.44,
        t_i_max: 0.0,
        t_f_max: 0.0,
        m_f_max: 1.0,
    };

    // Planar target orbit (z = vz = 0 everywhere).
    let period = 2.3;
    let samples = 64;
    let times: Vec<f64> = (0..=samples).map(|i| period * i as f64 / samples as f64).collect();
    let states: Vec<[f64; 6]> = times
        .iter()
        .map(|&t| {
            let th = t / period * core::f64::consts::TAU;
            [
                0.40 + 0.2 * th.cos(),
                0.22 + 0.2 * th.sin(),
                0.0,
                -0.12 * th.sin(),
                0.12 * th.cos(),
                0.0,
            ]
        })
        .collect();
    let orbit = mtkit_core::orbit::OrbitTable::new(times, states).unwrap();

    // Departure chosen so throttle (0.5, 0.5) at t_s = 0.44 is exactly
    // feasible: fly the reference plan backward from the anchor.
    let t_s_star = 0.44;
    let dt = t_s_star / n as f64;
    let burns = [
        ControlSegment::new(0.5, 0.3, 0.0),
        ControlSegment::new(0.5, -0.2, 0.0),
    ];
    let (anchor, _) = orbit.state_at_epoch(t_s_star);
    let m_f_star = 1.0 - t_s_star / 2.0 * (0.5 + 0.5) * params.t_max / params.isp_g;
    let mut state = SpacecraftState::new(
        [anchor[0], anchor[1], anchor[2]],
        [anchor[3], anchor[4], anchor[5]],
        m_f_star,
    );
    for control in burns.iter().rev() {
        state = propagate(
            &Arc {
                t0: 0.0,
                tf: -dt,
                initial: state,
                control: Some(*control),
            },
            &params,
            false,
            TOY_TOL,
        )
        .unwrap()
        .final_state;
    }
    let m0 = state.m;

    let problem = Problem::new(
        params,
        BoundaryConditions {
            initial_state: state,
            target_orbit: orbit,
            m0,
        },
        MteScenario::non_robust(),
        layout,
        TOY_TOL,
    )
    .unwrap();

    let mut x_star = problem.zero_vector();
    set_leg(&mut x_star, 0, t_s_star, 0.0, 0.0, &burns, m_f_star);

    let config = SolverConfig {
        feasibility: FeasibilityTolerances {
            position: 5e-3,
            velocity: 5e-3,
            mass: 1e-6,
        },
        optimality_tolerance: 1e-7,
        max_iterations: 60,
        ..SolverConfig::default()
    };
    (problem, x_star, config)
}

/// Brute-force oracle: sweep (t_s, throttle_1, alpha_1, throttle_2, alpha_2)
/// on a dense grid, mass defect zeroed in closed form, and return the best
/// feasible objective. Fully independent of the solver path.
fn toy_grid_best(problem: &Problem, config: &SolverConfig) -> f64 {
    let params = &problem.params;
    let n_ts = 12;
    let n_thr = 9;
    let n_alpha = 13;
    let mut best = f64::INFINITY;
    for i_ts in 1..=n_ts {
        let t_s = 0.44 * i_ts as f64 / n_ts as f64;
        let dt = t_s / 2.0;
        let (anchor, _) = problem.boundary.target_orbit.state_at_epoch(t_s);
        for i1 in 0..n_thr {
            let thr1 = i1 as f64 / (n_thr - 1) as f64;
            for a1 in 0..n_alpha {
                let alpha1 = -core::f64::consts::PI
                    + core::f64::consts::TAU * a1 as f64 / n_alpha as f64;
                // Forward half: one segment from departure.
                let fwd = propagate(
                    &Arc {
                        t0: 0.0,
                        tf: dt,
                        initial: problem.boundary.departure(),
                        control: Some(ControlSegment::new(thr1, alpha1, 0.0)),
                    },
                    params,
                    false,
                    TOY_TOL,
                );
                let Ok(fwd) = fwd else { continue };
                for i2 in 0..n_thr {
                    let thr2 = i2 as f64 / (n_thr - 1) as f64;
                    let m_f = problem.boundary.m0
                        - dt * (thr1 + thr2) * params.t_max / params.isp_g;
                    for a2 in 0..n_alpha {
                        let alpha2 = -core::f64::consts::PI
                            + core::f64::consts::TAU * a2 as f64 / n_alpha as f64;
                        let bwd = propagate(
                            &Arc {
                                t0: 0.0,
                                tf: -dt,
                                initial: SpacecraftState::new(
                                    [anchor[0], anchor[1], anchor[2]],
                                    [anchor[3], anchor[4], anchor[5]],
                                    m_f,
                                ),
                                control: Some(ControlSegment::new(thr2, alpha2, 0.0)),
                            },
                            params,
                            false,
                            TOY_TOL,
                        );
                        let Ok(bwd) = bwd else { continue };
                        let f = fwd.final_state.to_array();
                        let b = bwd.final_state.to_array();
                        let feasible = (0..3).all(|c| {
                            (f[c] - b[c]).abs() <= config.feasibility.position
                        }) && (3..6).all(|c| {
                            (f[c] - b[c]).abs() <= config.feasibility.velocity
                        });
                        if feasible {
                            best = best.min(-m_f);
                        }
                    }
                }
            }
        }
    }
    assert!(best.is_finite(), "grid found no feasible point");
    best
}

#[test]
fn toy_solve_matches_brute_force_grid() {
    let (problem, x_star, config) = toy_problem();
    let grid_best = toy_grid_best(&problem, &config);

    // Solve from the constructed feasible start plus a few random seeds.
    let bounds = sampling_bounds(&problem);
    let mut best_obj = f64::INFINITY;
    let record = solve(&problem, &x_star, &config, &NullClock);
    assert!(record.status.is_feasible(), "status {:?}", record.status);
    best_obj = best_obj.min(record.objective.unwrap());
    for seed in 0..6u64 {
        let mut rng = seed_stream(11, seed);
        let x0 = sample_initial_guess(&bounds, &mut rng);
        let record = solve(&problem, &x0, &config, &NullClock);
        if record.status.is_feasible() {
            best_obj = best_obj.min(record.objective.unwrap());
        }
    }

    // One grid step of throttle changes m_f by dt_max * t_max / isp_g / 8;
    // tolerance-band slack is worth about m * tol_vel / isp_g. The solver
    // must sit within that resolution of the grid optimum.
    let throttle_step_effect =
        0.22 * problem.params.t_max / problem.params.isp_g / 8.0 * 2.0;
    let slack_effect = config.feasibility.velocity / problem.params.isp_g;
    let grid_tol = 3.0 * (throttle_step_effect + slack_effect);
    assert!(
        best_obj >= grid_best - grid_tol,
        "solver {best_obj} implausibly beats the grid {grid_best} by more than {grid_tol}"
    );
    assert!(
        best_obj <= grid_best + grid_tol,
        "solver {best_obj} worse than grid {grid_best} beyond resolution {grid_tol}"
    );
    println!("grid best {grid_best:.6}, solver best {best_obj:.6}, tol {grid_tol:.6}");
}

#[test]
fn resolving_an_optimum_returns_immediately() {
    let (problem, x_star, config) = toy_problem();
    let first = solve(&problem, &x_star, &config, &NullClock);
    assert!(first.status.is_feasible());
    let again = solve(&problem, &first.x, &config, &NullClock);
    assert_eq!(again.status, SolveStatus::FeasibleOptimal);
    assert!(
        again.iterations <= 1,
        "restart took {} iterations",
        again.iterations
    );
    assert!(again.objective.unwrap() <= first.objective.unwrap() + 1e-12);
}

#[test]
fn descent_from_feasible_start_never_worsens_the_objective() {
    let n = 10;
    let (mut problem, x) = self_consistent_problem(
        MteScenario::non_robust(),
        n,
        LegPlan {
            t_s: 0.75,
            t_i: 0.2,
            t_f: 0.25,
            controls: gentle_controls(n, 0.3),
        },
        &[],
    );
    // The construction tolerance is tighter than solves need.
    problem.tol = 1e-11;
    let config = SolverConfig {
        feasibility: FeasibilityTolerances::from_physical(1.0, 0.1, 1.0, &problem.params),
        max_iterations: 40,
        ..SolverConfig::default()
    };
    let initial_objective = problem.evaluate(&x).unwrap().objective;
    let (record, trace) = solve_traced(&problem, &x, &config, &NullClock);
    assert!(record.status.is_feasible(), "status {:?}", record.status);
    assert!(
        record.objective.unwrap() <= initial_objective + 1e-12,
        "objective rose from {initial_objective} to {}",
        record.objective.unwrap()
    );
    // Inner solves never increase the merit they minimize.
    for (i, outer) in trace.outer.iter().enumerate() {
        assert!(
            outer.merit_final <= outer.merit_initial + 1e-10,
            "outer {i}: merit rose {} -> {}",
            outer.merit_initial,
            outer.merit_final
        );
    }
}

#[test]
fn solve_is_deterministic() {
    let (problem, x_star, config) = toy_problem();
    let mut rng = seed_stream(5, 3);
    let bounds = sampling_bounds(&problem);
    let x0 = sample_initial_guess(&bounds, &mut rng);
    let a = solve(&problem, &x0, &config, &NullClock);
    let b = solve(&problem, &x0, &config, &NullClock);
    assert_eq!(a, b);
    let _ = x_star;
}

#[test]
fn feasibility_check_agrees_with_record_status() {
    let (problem, x_star, config) = toy_problem();
    let record = solve(&problem, &x_star, &config, &NullClock);
    let report = check_feasibility(&problem, &record.x, &config.feasibility).unwrap();
    assert_eq!(report.pass, record.status.is_feasible());
    assert_eq!(report.legs.len(), 1);
}

/// Clock that advances a fixed amount on every read.
struct SteppingClock {
    step: f64,
    reads: core::sync::atomic::AtomicU64,
}

impl Clock for SteppingClock {
    fn now(&self) -> f64 {
        let n = self
            .reads
            .fetch_add(1, core::sync::atomic::Ordering::Relaxed);
        n as f64 * self.step
    }
}

#[test]
fn wall_time_budget_stops_the_outer_loop() {
    let (problem, _, mut config) = toy_problem();
    config.max_iterations = 500;
    config.max_wall_time = 2.5;
    let bounds = sampling_bounds(&problem);
    let mut rng = seed_stream(17, 0);
    let x0 = sample_initial_guess(&bounds, &mut rng);
    let clock = SteppingClock {
        step: 1.0,
        reads: core::sync::atomic::AtomicU64::new(0),
    };
    let record = solve(&problem, &x0, &config, &clock);
    // One read at entry plus one per outer iteration: the budget of 2.5
    // seconds admits at most a couple of outer iterations.
    assert!(
        record.iterations <= 3,
        "wall budget ignored: {} iterations",
        record.iterations
    );
    assert!(record.wall_time > 0.0);
}
