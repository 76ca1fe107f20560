//! Gradient-based local NLP solver.
//!
//! An augmented Lagrangian drives the matchpoint defects to tolerance while
//! minimizing `-m_f` subject to the box bounds: outer iterations update the
//! multipliers (or grow the penalty when feasibility stalls), inner
//! iterations minimize the merit with the projected L-BFGS solver using the
//! analytic sparse Jacobian. The solver is deterministic; wall-clock limits
//! enter only through the injected [`Clock`].

mod lbfgs;

pub use lbfgs::{minimize_box, projected_gradient_norm, InnerOptions};

use crate::dynamics::DynamicsParams;
use crate::linalg::solve_dense;
use crate::time::Clock;
use crate::transcription::{
    DecisionVector, DefectVector, Evaluation, Problem, SparseMatrix, TranscriptionError,
};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;
use num_traits::Float;
use serde::{Deserialize, Serialize};

/// Defect tolerances in nondimensional units, one per component type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityTolerances {
    /// Position components (DU).
    pub position: f64,
    /// Velocity components (DU/TU).
    pub velocity: f64,
    /// Mass component (MU).
    pub mass: f64,
}

impl FeasibilityTolerances {
    /// Converts physical tolerances (km, km/s, kg) through the unit scales.
    pub fn from_physical(pos_km: f64, vel_km_s: f64, mass_kg: f64, params: &DynamicsParams) -> Self {
        let velocity_unit_km_s = params.length_unit / params.time_unit;
        Self {
            position: pos_km / params.length_unit,
            velocity: vel_km_s / velocity_unit_km_s,
            mass: mass_kg / params.mass_unit,
        }
    }

    /// Tolerance for component `i` of a 7-component defect.
    pub fn component(&self, i: usize) -> f64 {
        match i {
            0..=2 => self.position,
            3..=5 => self.velocity,
            _ => self.mass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Outer (multiplier/penalty) iteration cap.
    pub max_iterations: usize,
    /// Wall-time budget in seconds; callers scale this by `(1 + k)`.
    pub max_wall_time: f64,
    pub feasibility: FeasibilityTolerances,
    /// Projected-gradient norm of the Lagrangian at which a feasible point
    /// counts as locally optimal.
    pub optimality_tolerance: f64,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
    /// Inner L-BFGS iteration cap per outer iteration.
    pub inner_iterations: usize,
    pub lbfgs_memory: usize,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        let ok = self.max_iterations > 0
            && self.max_wall_time > 0.0
            && self.feasibility.position > 0.0
            && self.feasibility.velocity > 0.0
            && self.feasibility.mass > 0.0
            && self.optimality_tolerance > 0.0
            && self.initial_penalty > 0.0
            && self.penalty_growth > 1.0
            && self.max_penalty >= self.initial_penalty
            && self.inner_iterations > 0;
        if ok {
            Ok(())
        } else {
            Err("solver configuration violates its invariants")
        }
    }

    /// Copy with the wall-time budget scaled by `(1 + k)`.
    pub fn scaled_for_depth(&self, depth: usize) -> Self {
        Self {
            max_wall_time: self.max_wall_time * (1 + depth) as f64,
            ..self.clone()
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            max_wall_time: f64::INFINITY,
            feasibility: FeasibilityTolerances {
                position: 1e-6,
                velocity: 1e-4,
                mass: 1e-3,
            },
            optimality_tolerance: 1e-6,
            initial_penalty: 100.0,
            penalty_growth: 5.0,
            max_penalty: 1e10,
            inner_iterations: 150,
            lbfgs_memory: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    FeasibleOptimal,
    Feasible,
    Infeasible,
    Error,
}

impl SolveStatus {
    pub fn is_feasible(&self) -> bool {
        matches!(self, SolveStatus::FeasibleOptimal | SolveStatus::Feasible)
    }
}

/// Euclidean norms of one leg's defect, split by component type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegDefectNorms {
    pub position: f64,
    pub velocity: f64,
    pub mass: f64,
}

impl LegDefectNorms {
    fn from_defect(d: &[f64; 7]) -> Self {
        Self {
            position: (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt(),
            velocity: (d[3] * d[3] + d[4] * d[4] + d[5] * d[5]).sqrt(),
            mass: d[6].abs(),
        }
    }
}

/// Per-leg feasibility classification (closed tolerances: boundary passes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegFeasibility {
    pub norms: LegDefectNorms,
    pub pass: bool,
    /// Indices (0..7) of defect components beyond tolerance.
    pub failing_components: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub legs: Vec<LegFeasibility>,
    pub pass: bool,
}

/// Pure componentwise tolerance test on already-computed defects.
pub fn classify_defects(defects: &DefectVector, tolerances: &FeasibilityTolerances) -> FeasibilityReport {
    let legs: Vec<LegFeasibility> = defects
        .legs
        .iter()
        .map(|d| {
            let failing: Vec<usize> = (0..7)
                .filter(|&i| d[i].abs() > tolerances.component(i))
                .collect();
            LegFeasibility {
                norms: LegDefectNorms::from_defect(d),
                pass: failing.is_empty(),
                failing_components: failing,
            }
        })
        .collect();
    let pass = legs.iter().all(|l| l.pass);
    FeasibilityReport { legs, pass }
}

/// Evaluates `x` and classifies its defects against the tolerances.
pub fn check_feasibility(
    problem: &Problem,
    x: &DecisionVector,
    tolerances: &FeasibilityTolerances,
) -> Result<FeasibilityReport, TranscriptionError> {
    let evaluation = problem.evaluate(x)?;
    Ok(classify_defects(&evaluation.defects, tolerances))
}

/// One local-solve outcome. Identity fields (`id`, `strategy`, `seed_source`)
/// are filled by the search layer that owns the batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub id: String,
    pub scenario_id: String,
    /// Strategy tag, e.g. `S(1)` or `S(2|0)`.
    pub strategy: String,
    /// `"sampled"` or the id of the solution this seed was mapped from.
    pub seed_source: String,
    pub status: SolveStatus,
    /// Best iterate found (the projected start on error).
    pub x: DecisionVector,
    /// `-m_f` of the reference leg at the best iterate.
    pub objective: Option<f64>,
    pub defect_norms: Option<Vec<LegDefectNorms>>,
    /// `isp_g * ln(m0 / m_f)` from the reference leg (DU/TU).
    pub delta_v: Option<f64>,
    /// Wall seconds consumed by this solve (zero under a null clock).
    pub wall_time: f64,
    /// Outer iterations consumed.
    pub iterations: usize,
    pub error: Option<String>,
}

/// Diagnostic trace of the outer loop, for tests and tuning.
#[derive(Debug, Clone, Default)]
pub struct SolveTrace {
    pub outer: Vec<OuterIteration>,
}

#[derive(Debug, Clone, Copy)]
pub struct OuterIteration {
    pub penalty: f64,
    /// Merit at the start of the inner solve (current multipliers).
    pub merit_initial: f64,
    /// Merit at the end of the inner solve (same multipliers).
    pub merit_final: f64,
    pub defect_inf: f64,
    pub objective: f64,
}

struct MeritModel<'a> {
    problem: &'a Problem,
    lambda: Vec<f64>,
    penalty: f64,
    last_error: RefCell<Option<TranscriptionError>>,
}

impl<'a> MeritModel<'a> {
    fn merit_of(&self, eval: &Evaluation) -> f64 {
        let mut value = eval.objective;
        for (i, c) in eval.defects.flat().enumerate() {
            value += self.lambda[i] * c + 0.5 * self.penalty * c * c;
        }
        value
    }

    fn value(&self, x: &[f64], shape: &DecisionVector) -> Option<f64> {
        let xv = shape.with_same_shape(x.to_vec()).ok()?;
        match self.problem.evaluate(&xv) {
            Ok(eval) => Some(self.merit_of(&eval)),
            Err(e) => {
                *self.last_error.borrow_mut() = Some(e);
                None
            }
        }
    }

    fn value_and_grad(&self, x: &[f64], shape: &DecisionVector) -> Option<(f64, Vec<f64>)> {
        let xv = shape.with_same_shape(x.to_vec()).ok()?;
        match self.problem.evaluate_with_jacobian(&xv) {
            Ok((eval, jac)) => {
                let n_c = self.problem.constraint_rows();
                let mut grad = vec![0.0; self.problem.decision_len()];
                grad[self.problem.objective_col()] = -1.0;
                let weights: Vec<f64> = eval
                    .defects
                    .flat()
                    .enumerate()
                    .map(|(i, c)| self.lambda[i] + self.penalty * c)
                    .collect();
                jac.accumulate_transpose_product(&weights, n_c, 1.0, &mut grad);
                Some((self.merit_of(&eval), grad))
            }
            Err(e) => {
                *self.last_error.borrow_mut() = Some(e);
                None
            }
        }
    }
}

/// Least-squares multiplier estimate over the free (non-bound-active)
/// columns: solve `(J_f J_f^T) lambda = -J_f grad_f`. Bound-pinned columns
/// carry their own bound multipliers and must not pollute the estimate.
fn estimate_multipliers(problem: &Problem, x: &[f64], jac: &SparseMatrix) -> Option<Vec<f64>> {
    let bounds = problem.box_bounds();
    let free: Vec<bool> = x
        .iter()
        .enumerate()
        .map(|(i, &v)| v > bounds.lower[i] && v < bounds.upper[i])
        .collect();
    let n_c = problem.constraint_rows();
    let n = problem.decision_len();
    let mut rows = vec![vec![0.0; n]; n_c];
    for &(r, c, v) in &jac.entries {
        if r < n_c && free[c] {
            rows[r][c] = v;
        }
    }
    let mut grad_f = vec![0.0; n];
    if free[problem.objective_col()] {
        grad_f[problem.objective_col()] = -1.0;
    }
    let mut jjt = vec![vec![0.0; n_c]; n_c];
    let mut rhs = vec![0.0; n_c];
    for i in 0..n_c {
        for j in i..n_c {
            let dot: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
            jjt[i][j] = dot;
            jjt[j][i] = dot;
        }
        // Tikhonov guard for rank-deficient Jacobians far from feasibility.
        jjt[i][i] += 1e-10;
        rhs[i] = -rows[i].iter().zip(&grad_f).map(|(a, b)| a * b).sum::<f64>();
    }
    solve_dense(&jjt, &rhs)
}

/// Projected gradient norm of the Lagrangian at `(x, lambda)`.
fn kkt_residual(
    problem: &Problem,
    x: &[f64],
    jac: &SparseMatrix,
    lambda: &[f64],
) -> f64 {
    let bounds = problem.box_bounds();
    let mut grad = vec![0.0; problem.decision_len()];
    grad[problem.objective_col()] = -1.0;
    jac.accumulate_transpose_product(lambda, problem.constraint_rows(), 1.0, &mut grad);
    projected_gradient_norm(x, &grad, &bounds)
}

struct BestIterate {
    x: Vec<f64>,
    evaluation: Evaluation,
    report: FeasibilityReport,
    kkt: Option<f64>,
}

/// Local solve from `x0` (projected into bounds if outside).
pub fn solve(
    problem: &Problem,
    x0: &DecisionVector,
    config: &SolverConfig,
    clock: &dyn Clock,
) -> SolveRecord {
    solve_traced(problem, x0, config, clock).0
}

pub fn solve_traced(
    problem: &Problem,
    x0: &DecisionVector,
    config: &SolverConfig,
    clock: &dyn Clock,
) -> (SolveRecord, SolveTrace) {
    let t_start = clock.now();
    let mut trace = SolveTrace::default();
    let shape = problem.zero_vector();
    let bounds = problem.box_bounds();
    let mut x = x0.values().to_vec();
    if x.len() != problem.decision_len() {
        let record = error_record(problem, x0.clone(), "decision vector shape mismatch", 0.0, 0);
        return (record, trace);
    }
    bounds.project_in_place(&mut x);

    let make_vector = |x: &[f64]| {
        shape
            .with_same_shape(x.to_vec())
            .expect("projected iterate keeps the problem shape")
    };

    // Entry evaluation; an unevaluable start is a hard error.
    let (eval0, jac0) = match problem.evaluate_with_jacobian(&make_vector(&x)) {
        Ok(pair) => pair,
        Err(e) => {
            let wall = clock.now() - t_start;
            let record = error_record(problem, make_vector(&x), &e.to_string(), wall, 0);
            return (record, trace);
        }
    };

    let n_c = problem.constraint_rows();
    let mut lambda = estimate_multipliers(problem, &x, &jac0).unwrap_or_else(|| vec![0.0; n_c]);

    // Immediate exit for a feasible, first-order-stationary start.
    let report0 = classify_defects(&eval0.defects, &config.feasibility);
    if report0.pass {
        let kkt = kkt_residual(problem, &x, &jac0, &lambda);
        if kkt <= config.optimality_tolerance {
            let record = finish_record(
                problem,
                BestIterate {
                    x,
                    evaluation: eval0,
                    report: report0,
                    kkt: Some(kkt),
                },
                config,
                clock.now() - t_start,
                0,
                None,
            );
            return (record, trace);
        }
    }

    let mut best = BestIterate {
        x: x.clone(),
        evaluation: eval0.clone(),
        report: report0,
        kkt: None,
    };
    let mut penalty = config.initial_penalty;
    // Feasibility target schedule: multipliers update when the defect meets
    // the target, the penalty grows when it does not.
    let feas_floor = config
        .feasibility
        .position
        .min(config.feasibility.velocity)
        .min(config.feasibility.mass);
    let mut eta = (0.1 * eval0.defects.norm_inf()).max(feas_floor);
    let mut stagnation_best = f64::INFINITY;
    let mut stagnation_count = 0usize;
    let mut feasible_stall = 0usize;
    let mut iterations = 0usize;
    let mut soft_error: Option<String> = None;

    for outer in 1..=config.max_iterations {
        iterations = outer;
        let model = MeritModel {
            problem,
            lambda: lambda.clone(),
            penalty,
            last_error: RefCell::new(None),
        };
        let inner_options = InnerOptions {
            max_iterations: config.inner_iterations,
            tolerance: config.optimality_tolerance,
            relative_tolerance: 1e-6,
            memory: config.lbfgs_memory,
            max_line_search_steps: 30,
        };
        let merit_at_start = model.value(&x, &shape).unwrap_or(f64::INFINITY);
        let inner = minimize_box(
            x.clone(),
            &bounds,
            &inner_options,
            |trial| model.value(trial, &shape),
            |trial| model.value_and_grad(trial, &shape),
        );
        let Some(inner) = inner else {
            soft_error = model
                .last_error
                .borrow()
                .as_ref()
                .map(|e| e.to_string());
            break;
        };

        x = inner.x;
        let vector = make_vector(&x);
        let (evaluation, jac) = match problem.evaluate_with_jacobian(&vector) {
            Ok(pair) => pair,
            Err(e) => {
                soft_error = Some(e.to_string());
                break;
            }
        };
        let defect_inf = evaluation.defects.norm_inf();
        let report = classify_defects(&evaluation.defects, &config.feasibility);

        trace.outer.push(OuterIteration {
            penalty,
            merit_initial: merit_at_start,
            merit_final: inner.value,
            defect_inf,
            objective: evaluation.objective,
        });

        // Track the best iterate: any feasible beats any infeasible;
        // among feasible the lower objective wins; among infeasible the
        // smaller defect wins.
        let improves = if report.pass {
            !best.report.pass || evaluation.objective < best.evaluation.objective - 1e-15
        } else {
            !best.report.pass && defect_inf < best.evaluation.defects.norm_inf()
        };
        if improves {
            best = BestIterate {
                x: x.clone(),
                evaluation: evaluation.clone(),
                report: report.clone(),
                kkt: None,
            };
            feasible_stall = 0;
        } else if report.pass || best.report.pass {
            feasible_stall += 1;
        }

        if defect_inf <= eta {
            let residuals: Vec<f64> = evaluation.defects.flat().collect();
            for (l, c) in lambda.iter_mut().zip(&residuals) {
                *l += penalty * c;
            }
            eta = (0.2 * eta).max(1e-14);
        } else {
            penalty = (penalty * config.penalty_growth).min(config.max_penalty);
        }

        // Convergence: feasible and first-order stationary.
        if report.pass {
            let kkt = kkt_residual(problem, &x, &jac, &lambda);
            if kkt <= config.optimality_tolerance {
                best = BestIterate {
                    x: x.clone(),
                    evaluation,
                    report,
                    kkt: Some(kkt),
                };
                break;
            }
        }

        // A feasible incumbent that many successive outer iterations fail
        // to improve is accepted as converged-enough.
        if best.report.pass && feasible_stall >= 12 {
            break;
        }

        // Infeasible stagnation: defect norm reduction below 1e-12 for 20
        // consecutive outer iterations terminates decisively.
        if defect_inf < stagnation_best - 1e-12 {
            stagnation_best = defect_inf;
            stagnation_count = 0;
        } else {
            stagnation_count += 1;
            if stagnation_count >= 20 && !best.report.pass {
                break;
            }
        }

        if clock.now() - t_start > config.max_wall_time {
            break;
        }
    }

    let wall = clock.now() - t_start;
    let record = finish_record(problem, best, config, wall, iterations, soft_error);
    (record, trace)
}

fn error_record(
    problem: &Problem,
    x: DecisionVector,
    message: &str,
    wall: f64,
    iterations: usize,
) -> SolveRecord {
    SolveRecord {
        id: String::new(),
        scenario_id: problem.scenario.id(),
        strategy: String::new(),
        seed_source: "sampled".to_string(),
        status: SolveStatus::Error,
        x,
        objective: None,
        defect_norms: None,
        delta_v: None,
        wall_time: wall,
        iterations,
        error: Some(message.to_string()),
    }
}

fn finish_record(
    problem: &Problem,
    best: BestIterate,
    config: &SolverConfig,
    wall: f64,
    iterations: usize,
    soft_error: Option<String>,
) -> SolveRecord {
    let vector = problem
        .zero_vector()
        .with_same_shape(best.x.clone())
        .expect("best iterate keeps the problem shape");
    let status = if best.report.pass {
        let optimal = match best.kkt {
            Some(kkt) => kkt <= config.optimality_tolerance,
            None => problem
                .evaluate_with_jacobian(&vector)
                .ok()
                .and_then(|(_, jac)| {
                    estimate_multipliers(problem, &best.x, &jac)
                        .map(|lambda| kkt_residual(problem, &best.x, &jac, &lambda))
                })
                .is_some_and(|kkt| kkt <= config.optimality_tolerance),
        };
        if optimal {
            SolveStatus::FeasibleOptimal
        } else {
            SolveStatus::Feasible
        }
    } else if soft_error.is_some() {
        SolveStatus::Error
    } else {
        SolveStatus::Infeasible
    };

    let m_f = vector.leg(0).m_f();
    let delta_v = if m_f > 0.0 {
        Some(problem.params.isp_g * (problem.boundary.m0 / m_f).ln())
    } else {
        None
    };
    let norms: Vec<LegDefectNorms> = best.report.legs.iter().map(|l| l.norms).collect();

    SolveRecord {
        id: String::new(),
        scenario_id: problem.scenario.id(),
        strategy: String::new(),
        seed_source: "sampled".to_string(),
        status,
        x: vector,
        objective: Some(best.evaluation.objective),
        defect_norms: Some(norms),
        delta_v,
        wall_time: wall,
        iterations,
        error: soft_error,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_conversion_uses_unit_scales() {
        let params = DynamicsParams {
            mu: 0.0121505856,
            t_max: 0.05,
            isp_g: 1.5,
            length_unit: 384_400.0,
            time_unit: 375_190.25,
            mass_unit: 1000.0,
        };
        let tol = FeasibilityTolerances::from_physical(1.0, 0.1, 1.0, &params);
        assert!((tol.position - 1.0 / 384_400.0).abs() < 1e-18);
        let vu = 384_400.0 / 375_190.25;
        assert!((tol.velocity - 0.1 / vu).abs() < 1e-15);
        assert!((tol.mass - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn boundary_defects_pass_the_closed_test() {
        let tol = FeasibilityTolerances {
            position: 1e-3,
            velocity: 2e-3,
            mass: 5e-4,
        };
        let defects = DefectVector {
            legs: alloc::vec![[1e-3, -1e-3, 0.0, 2e-3, 0.0, -2e-3, 5e-4]],
        };
        let report = classify_defects(&defects, &tol);
        assert!(report.pass);

        let mut above = defects.clone();
        above.legs[0][4] = 2.2e-3; // one component 10% above tolerance
        let report = classify_defects(&above, &tol);
        assert!(!report.pass);
        assert_eq!(report.legs[0].failing_components, alloc::vec![4]);
    }

    #[test]
    fn zero_defects_pass() {
        let tol = FeasibilityTolerances {
            position: 1e-6,
            velocity: 1e-6,
            mass: 1e-6,
        };
        let report = classify_defects(
            &DefectVector {
                legs: alloc::vec![[0.0; 7], [0.0; 7]],
            },
            &tol,
        );
        assert!(report.pass);
        assert_eq!(report.legs.len(), 2);
    }
}
