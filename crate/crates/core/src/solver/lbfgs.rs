//! Bound-constrained limited-memory quasi-Newton inner solver.
//!
//! Minimizes a smooth merit function over a box by L-BFGS directions with
//! projected backtracking line searches. Convergence is measured on the
//! projected gradient `||P(x - g) - x||_inf`, which vanishes exactly at
//! bound-constrained stationary points. Merit evaluations that fail (e.g.
//! propellant depletion during a wild trial step) are treated as infinite,
//! so the line search simply backs off.

use crate::transcription::BoxBounds;
use alloc::collections::VecDeque;
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

pub struct InnerOptions {
    pub max_iterations: usize,
    /// Projected-gradient infinity-norm target.
    pub tolerance: f64,
    /// Additional target relative to the initial projected gradient; the
    /// effective tolerance is `max(tolerance, relative_tolerance * pg0)`.
    pub relative_tolerance: f64,
    pub memory: usize,
    pub max_line_search_steps: usize,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-9,
            relative_tolerance: 0.0,
            memory: 10,
            max_line_search_steps: 30,
        }
    }
}

pub struct InnerResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub projected_gradient_norm: f64,
    pub iterations: usize,
    /// True when the final iterate satisfied the tolerance.
    pub converged: bool,
}

pub fn projected_gradient_norm(x: &[f64], gradient: &[f64], bounds: &BoxBounds) -> f64 {
    let mut norm: f64 = 0.0;
    for i in 0..x.len() {
        let stepped = (x[i] - gradient[i]).clamp(bounds.lower[i], bounds.upper[i]);
        norm = norm.max((stepped - x[i]).abs());
    }
    norm
}

struct Memory {
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>, // (s, y, 1/s'y)
    capacity: usize,
}

impl Memory {
    fn new(capacity: usize) -> Self {
        Self {
            pairs: VecDeque::new(),
            capacity,
        }
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let s_norm: f64 = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let y_norm: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if sy > 1e-12 * s_norm * y_norm {
            if self.pairs.len() == self.capacity {
                self.pairs.pop_front();
            }
            self.pairs.push_back((s, y, 1.0 / sy));
        }
    }

    fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Two-loop recursion: `d = -H g`.
    fn direction(&self, gradient: &[f64]) -> Vec<f64> {
        let n = gradient.len();
        let mut q: Vec<f64> = gradient.to_vec();
        let mut alphas = vec![0.0; self.pairs.len()];
        for (idx, (s, y, rho)) in self.pairs.iter().enumerate().rev() {
            let alpha = rho * s.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>();
            alphas[idx] = alpha;
            for i in 0..n {
                q[i] -= alpha * y[i];
            }
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let sy: f64 = s.iter().zip(y).map(|(a, b)| a * b).sum();
            let yy: f64 = y.iter().map(|v| v * v).sum();
            if yy > 0.0 {
                let gamma = sy / yy;
                for v in q.iter_mut() {
                    *v *= gamma;
                }
            }
        }
        for (idx, (s, y, rho)) in self.pairs.iter().enumerate() {
            let beta = rho * y.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>();
            for i in 0..n {
                q[i] += (alphas[idx] - beta) * s[i];
            }
        }
        for v in q.iter_mut() {
            *v = -*v;
        }
        q
    }
}

/// Minimizes `merit` over the box starting from `x0` (assumed in-box).
///
/// `value` evaluates the merit alone; `value_and_grad` also returns its
/// gradient. Both return `None` on evaluation failure.
pub fn minimize_box(
    x0: Vec<f64>,
    bounds: &BoxBounds,
    options: &InnerOptions,
    mut value: impl FnMut(&[f64]) -> Option<f64>,
    mut value_and_grad: impl FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
) -> Option<InnerResult> {
    let n = x0.len();
    let mut x = x0;
    bounds.project_in_place(&mut x);
    let (mut fx, mut gx) = value_and_grad(&x)?;
    let mut memory = Memory::new(options.memory);
    let mut iterations = 0;
    let pg0 = projected_gradient_norm(&x, &gx, bounds);
    let target = options
        .tolerance
        .max(options.relative_tolerance * pg0);

    loop {
        let pg = projected_gradient_norm(&x, &gx, bounds);
        if pg <= target || iterations >= options.max_iterations {
            return Some(InnerResult {
                projected_gradient_norm: pg,
                converged: pg <= target,
                x,
                value: fx,
                gradient: gx,
                iterations,
            });
        }
        iterations += 1;

        let mut direction = memory.direction(&gx);
        let descent: f64 = direction.iter().zip(&gx).map(|(d, g)| d * g).sum();
        if !descent.is_finite() || descent >= 0.0 {
            memory.clear();
            for i in 0..n {
                direction[i] = -gx[i];
            }
        }

        // Projected backtracking: trial = P(x + alpha d), Armijo on the
        // actual projected displacement.
        let mut alpha = 1.0;
        let mut accepted: Option<(Vec<f64>, f64)> = None;
        for _ in 0..options.max_line_search_steps {
            let mut trial = vec![0.0; n];
            for i in 0..n {
                trial[i] =
                    (x[i] + alpha * direction[i]).clamp(bounds.lower[i], bounds.upper[i]);
            }
            let displacement_dot_g: f64 =
                (0..n).map(|i| (trial[i] - x[i]) * gx[i]).sum();
            if displacement_dot_g >= 0.0 {
                // Projection annihilated the descent direction; shrink.
                alpha *= 0.5;
                continue;
            }
            if let Some(f_trial) = value(&trial) {
                if f_trial <= fx + 1e-4 * displacement_dot_g {
                    accepted = Some((trial, f_trial));
                    break;
                }
            }
            alpha *= 0.5;
        }

        let Some((x_new, f_new)) = accepted else {
            // No acceptable step along this direction; report the current
            // iterate as stalled.
            let pg = projected_gradient_norm(&x, &gx, bounds);
            return Some(InnerResult {
                projected_gradient_norm: pg,
                converged: pg <= target,
                x,
                value: fx,
                gradient: gx,
                iterations,
            });
        };

        let Some((f_check, g_new)) = value_and_grad(&x_new) else {
            return Some(InnerResult {
                projected_gradient_norm: projected_gradient_norm(&x, &gx, bounds),
                converged: false,
                x,
                value: fx,
                gradient: gx,
                iterations,
            });
        };

        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_new[i] - gx[i]).collect();
        memory.push(s, y);
        x = x_new;
        fx = f_check.min(f_new);
        gx = g_new;
    }
}
