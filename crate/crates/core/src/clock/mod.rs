//! One-shot and recurring timers behind a small clock-model interface.
//!
//! [`RealClock`] fires on its own dedicated timer thread. [`FakeClock`]
//! implements the same contract in virtual time: nothing fires until a test
//! calls [`FakeClock::advance`], and then every due firing is delivered
//! synchronously on the caller's thread.
//!
//! The public API counts whole seconds; both clocks work in milliseconds
//! internally.

mod fake;
mod real;

use std::sync::{Arc, Weak};

pub use fake::FakeClock;
pub use real::RealClock;

/// Receives clock events.
pub trait ClockListener: Send + Sync {
    fn on_tick(&self);
    fn on_timeout(&self);
}

/// Control surface of a clock holding at most one recurring and one one-shot
/// registration.
pub trait ClockModel: Send + Sync {
    fn set_clock_listener(&self, listener: Arc<dyn ClockListener>);

    /// Starts the recurring tick; the first tick comes one full period after
    /// the call.
    fn start_tick(&self, period_secs: u32) -> Result<(), ClockError>;

    /// Cancels the recurring tick. A no-op when none is active.
    fn stop_tick(&self);

    /// Cancels any pending timeout and arms a new one `delay_secs` from now.
    fn restart_timeout(&self, delay_secs: u32) -> Result<(), ClockError>;
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ClockError {
    #[error("a recurring tick is already active")]
    AlreadyTicking,
    #[error("timer period must be at least one second")]
    ZeroPeriod,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FiringKind {
    Tick,
    Timeout,
}

/// One delivered firing, stamped with virtual (fake) or elapsed (real) milliseconds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Firing {
    pub at_ms: u64,
    pub kind: FiringKind,
}

/// Forwards to a listener only while it is still alive, so a clock can point
/// back at the object that owns it without a reference cycle.
pub struct WeakListener<T: ClockListener>(pub Weak<T>);

impl<T: ClockListener> ClockListener for WeakListener<T> {
    fn on_tick(&self) {
        if let Some(l) = self.0.upgrade() {
            l.on_tick();
        }
    }

    fn on_timeout(&self) {
        if let Some(l) = self.0.upgrade() {
            l.on_timeout();
        }
    }
}

pub(crate) fn secs_to_ms(secs: u32) -> Result<u64, ClockError> {
    if secs == 0 {
        Err(ClockError::ZeroPeriod)
    } else {
        Ok(u64::from(secs) * 1000)
    }
}
