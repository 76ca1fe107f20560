//! Target periodic orbit, stored as states sampled over one period and
//! interpolated with a periodic cubic spline. The spline makes the terminal
//! anchor a smooth function of arrival epoch, so coast times double as
//! phasing variables with well-defined derivatives.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

/// Position/velocity sample (no mass; the arrival mass is a decision variable).
pub type OrbitState = [f64; 6];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrbitError {
    #[error("orbit table needs at least 4 samples")]
    TooFewSamples,
    #[error("orbit sample times must be strictly increasing")]
    NonMonotonicTimes,
    #[error("orbit table is not closed: first and last states differ beyond 1e-9")]
    NotClosed,
    #[error("orbit table contains non-finite values")]
    NonFinite,
}

/// Solves the cyclic tridiagonal system arising from periodic cubic spline
/// conditions via the Sherman-Morrison correction of two Thomas solves.
fn solve_cyclic_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    corner_top: f64,
    corner_bottom: f64,
    rhs: &[f64],
) -> Vec<f64> {
    let n = diag.len();
    debug_assert!(n >= 3);
    let gamma = -diag[0];
    let mut b = diag.to_vec();
    b[0] -= gamma;
    b[n - 1] -= corner_top * corner_bottom / gamma;

    let thomas = |b: &[f64], d: &[f64]| -> Vec<f64> {
        let mut c_star = vec![0.0; n];
        let mut d_star = vec![0.0; n];
        c_star[0] = upper[0] / b[0];
        d_star[0] = d[0] / b[0];
        for i in 1..n {
            let m = b[i] - lower[i] * c_star[i - 1];
            c_star[i] = if i < n - 1 { upper[i] / m } else { 0.0 };
            d_star[i] = (d[i] - lower[i] * d_star[i - 1]) / m;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = d_star[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = d_star[i] - c_star[i] * x[i + 1];
        }
        x
    };

    let y = thomas(&b, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = corner_bottom;
    let q = thomas(&b, &u);

    // v = (1, 0, ..., 0, corner_top / gamma)
    let vy = y[0] + corner_top / gamma * y[n - 1];
    let vq = q[0] + corner_top / gamma * q[n - 1];
    let factor = vy / (1.0 + vq);
    (0..n).map(|i| y[i] - factor * q[i]).collect()
}

/// Periodic cubic spline over one scalar channel.
#[derive(Debug, Clone)]
struct PeriodicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    /// Second derivatives at the knots (wraps: m[n] = m[0]).
    second: Vec<f64>,
}

impl PeriodicSpline {
    /// `knots` has n+1 entries with values[n] == values[0].
    fn fit(knots: &[f64], values: &[f64]) -> Self {
        let n = knots.len() - 1;
        let h: Vec<f64> = (0..n).map(|i| knots[i + 1] - knots[i]).collect();
        let y = values;

        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let h_prev = h[(i + n - 1) % n];
            let h_next = h[i];
            lower[i] = h_prev / 6.0;
            diag[i] = (h_prev + h_next) / 3.0;
            upper[i] = h_next / 6.0;
            let y_prev = y[(i + n - 1) % n];
            let y_next = y[(i + 1) % n];
            rhs[i] = (y_next - y[i]) / h_next - (y[i] - y_prev) / h_prev;
        }
        let corner_top = lower[0];
        let corner_bottom = upper[n - 1];
        let mut second = solve_cyclic_tridiagonal(
            &lower,
            &diag,
            &upper,
            corner_top,
            corner_bottom,
            &rhs,
        );
        second.push(second[0]);

        Self {
            knots: knots.to_vec(),
            values: values.to_vec(),
            second,
        }
    }

    /// Value and first derivative at `t` within `[knots[0], knots[n]]`.
    fn eval(&self, t: f64) -> (f64, f64) {
        let n = self.knots.len() - 1;
        // Binary search for the interval containing t.
        let mut lo = 0;
        let mut hi = n;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.knots[mid] <= t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let i = lo;
        let h = self.knots[i + 1] - self.knots[i];
        let a = self.knots[i + 1] - t;
        let b = t - self.knots[i];
        let (mi, mi1) = (self.second[i], self.second[i + 1]);
        let (yi, yi1) = (self.values[i], self.values[i + 1]);
        let value = mi * a * a * a / (6.0 * h)
            + mi1 * b * b * b / (6.0 * h)
            + (yi / h - mi * h / 6.0) * a
            + (yi1 / h - mi1 * h / 6.0) * b;
        let deriv = -mi * a * a / (2.0 * h) + mi1 * b * b / (2.0 * h) - (yi / h - mi * h / 6.0)
            + (yi1 / h - mi1 * h / 6.0);
        (value, deriv)
    }
}

/// Closed periodic-orbit table: the terminal boundary set sampled over one
/// period, with spline interpolation in epoch.
#[derive(Debug, Clone)]
pub struct OrbitTable {
    times: Vec<f64>,
    states: Vec<OrbitState>,
    splines: Vec<PeriodicSpline>,
}

impl OrbitTable {
    /// Validates closure and ordering, then fits the component splines.
    pub fn new(times: Vec<f64>, states: Vec<OrbitState>) -> Result<Self, OrbitError> {
        if times.len() < 4 || times.len() != states.len() {
            return Err(OrbitError::TooFewSamples);
        }
        if times.iter().any(|t| !t.is_finite())
            || states.iter().flatten().any(|x| !x.is_finite())
        {
            return Err(OrbitError::NonFinite);
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(OrbitError::NonMonotonicTimes);
        }
        let first = states.first().unwrap();
        let last = states.last().unwrap();
        if (0..6).any(|i| (first[i] - last[i]).abs() > 1e-9) {
            return Err(OrbitError::NotClosed);
        }

        let splines = (0..6)
            .map(|c| {
                let mut channel: Vec<f64> = states.iter().map(|s| s[c]).collect();
                // Enforce exact closure so the periodic system is consistent.
                let n = channel.len();
                channel[n - 1] = channel[0];
                PeriodicSpline::fit(&times, &channel)
            })
            .collect();
        Ok(Self {
            times,
            states,
            splines,
        })
    }

    pub fn period(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }

    pub fn samples(&self) -> (&[f64], &[OrbitState]) {
        (&self.times, &self.states)
    }

    /// Anchor state and its epoch derivative at arrival time `t` (TU).
    /// The epoch is wrapped onto one period, so any real `t` is valid.
    pub fn state_at_epoch(&self, t: f64) -> (OrbitState, OrbitState) {
        let p = self.period();
        let t0 = self.times[0];
        let mut phase = (t - t0) % p;
        if phase < 0.0 {
            phase += p;
        }
        let tq = t0 + phase;
        let mut value = [0.0; 6];
        let mut deriv = [0.0; 6];
        for c in 0..6 {
            let (v, d) = self.splines[c].eval(tq);
            value[c] = v;
            deriv[c] = d;
        }
        (value, deriv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::TAU;

    fn circle_table(n: usize) -> OrbitTable {
        let times: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64 * TAU).collect();
        let states: Vec<OrbitState> = times
            .iter()
            .map(|&t| [t.cos(), t.sin(), 0.0, -t.sin(), t.cos(), 0.0])
            .collect();
        OrbitTable::new(times, states).unwrap()
    }

    #[test]
    fn interpolates_a_circle_accurately() {
        let table = circle_table(64);
        for k in 0..200 {
            let t = k as f64 * 0.137;
            let (s, ds) = table.state_at_epoch(t);
            assert!((s[0] - t.cos()).abs() < 1e-6);
            assert!((s[1] - t.sin()).abs() < 1e-6);
            assert!((ds[0] + t.sin()).abs() < 1e-4);
            assert!((ds[1] - t.cos()).abs() < 1e-4);
        }
    }

    #[test]
    fn wraps_negative_and_large_epochs() {
        let table = circle_table(32);
        let (a, _) = table.state_at_epoch(-0.3);
        let (b, _) = table.state_at_epoch(-0.3 + 5.0 * TAU);
        for i in 0..6 {
            assert!((a[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_open_tables() {
        let times = vec![0.0, 1.0, 2.0, 3.0];
        let mut states = vec![[0.0; 6]; 4];
        states[3][0] = 0.5;
        assert_eq!(
            OrbitTable::new(times, states).unwrap_err(),
            OrbitError::NotClosed
        );
    }

    #[test]
    fn rejects_unordered_times() {
        let times = vec![0.0, 2.0, 1.0, 3.0];
        let states = vec![[0.0; 6]; 4];
        assert_eq!(
            OrbitTable::new(times, states).unwrap_err(),
            OrbitError::NonMonotonicTimes
        );
    }
}
