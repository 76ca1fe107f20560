//! Wall-clock abstraction.
//!
//! Solver and search budgets are wall-time limited, but the crate itself is
//! `no_std`. Callers inject a monotonic clock; the `mtkit` companion crate
//! wraps `std::time::Instant`, while tests and embedded use can pass
//! [`NullClock`] to disable time limits entirely.

/// Monotonic wall clock read in seconds from an arbitrary fixed origin.
pub trait Clock: Sync {
    fn now(&self) -> f64;
}

/// Clock that always reads zero. Elapsed times are zero and wall-time
/// budgets never expire, which keeps unit tests deterministic.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullClock;

impl Clock for NullClock {
    fn now(&self) -> f64 {
        0.0
    }
}

impl<C: Clock + ?Sized> Clock for &C {
    fn now(&self) -> f64 {
        (**self).now()
    }
}
