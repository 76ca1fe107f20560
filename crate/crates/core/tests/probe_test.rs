mod common;
use common::*;
use mtkit_core::scenario::MteScenario;
use mtkit_core::solver::{solve_traced, FeasibilityTolerances, SolverConfig};
use mtkit_core::time::NullClock;

#[test]
fn probe() {
    // replicate toy inline quickly via solver_behavior's builder? simpler: use descent fixture
    let n = 10;
    let (mut problem, x) = self_consistent_problem(
        MteScenario::non_robust(), n,
        LegPlan { t_s: 0.75, t_i: 0.2, t_f: 0.25, controls: gentle_controls(n, 0.3) },
        &[],
    );
    problem.tol = 1e-11;
    let config = SolverConfig {
        feasibility: FeasibilityTolerances::from_physical(1.0, 0.1, 1.0, &problem.params),
        max_iterations: 40,
        ..SolverConfig::default()
    };
    let (rec, trace) = solve_traced(&problem, &x, &config, &NullClock);
    println!("first: status {:?}, iters {}, obj {:?}", rec.status, rec.iterations, rec.objective);
    for (i, o) in trace.outer.iter().enumerate().take(14) {
        println!("  outer {i}: pen {:.1e} merit {:.10} -> {:.10} |c| {:.2e} obj {:.8}", o.penalty, o.merit_initial, o.merit_final, o.defect_inf, o.objective);
    }
    let (rec2, trace2) = solve_traced(&problem, &rec.x, &config, &NullClock);
    println!("again: status {:?}, iters {}, obj {:?}", rec2.status, rec2.iterations, rec2.objective);
    for (i, o) in trace2.outer.iter().enumerate().take(14) {
        println!("  outer {i}: pen {:.1e} merit {:.10} -> {:.10} |c| {:.2e} obj {:.8}", o.penalty, o.merit_initial, o.merit_final, o.defect_inf, o.objective);
    }
}
