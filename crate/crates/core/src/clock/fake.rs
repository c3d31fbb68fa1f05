use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, ThreadId};

use super::{secs_to_ms, ClockError, ClockListener, ClockModel, Firing, FiringKind};

#[derive(Clone, Copy)]
struct Scheduled {
    due: u64,
    period: u64,
    order: u64,
}

#[derive(Default)]
struct FakeState {
    now: u64,
    listener: Option<Arc<dyn ClockListener>>,
    recurring: Option<Scheduled>,
    one_shot: Option<Scheduled>,
    next_order: u64,
    trace: Vec<Firing>,
}

/// A clock that only moves when told to.
///
/// When several firings share a due time, ticks go before timeouts and then
/// earlier registrations before later ones. Listeners run on the thread
/// calling [`advance`](FakeClock::advance) and may call back into the clock.
#[derive(Default)]
pub struct FakeClock {
    state: Mutex<FakeState>,
    advancing: Mutex<Option<ThreadId>>,
}

struct AdvanceGuard<'a>(&'a Mutex<Option<ThreadId>>);

impl Drop for AdvanceGuard<'_> {
    fn drop(&mut self) {
        *self.0.lock().unwrap_or_else(|p| p.into_inner()) = None;
    }
}

impl FakeClock {
    pub fn new() -> Self {
        Self::default()
    }

    fn state(&self) -> MutexGuard<'_, FakeState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn now_ms(&self) -> u64 {
        self.state().now
    }

    pub fn is_ticking(&self) -> bool {
        self.state().recurring.is_some()
    }

    /// Due time of the pending timeout, if one is armed.
    pub fn timeout_due(&self) -> Option<u64> {
        self.state().one_shot.map(|s| s.due)
    }

    /// Every firing delivered so far, in delivery order.
    pub fn trace(&self) -> Vec<Firing> {
        self.state().trace.clone()
    }

    /// Moves virtual time forward by `delta_ms`, delivering every firing that
    /// falls due on the way. Returns the number of firings delivered.
    ///
    /// # Panics
    ///
    /// If called concurrently from two threads, or from inside one of this
    /// clock's own listener callbacks.
    pub fn advance(&self, delta_ms: u64) -> usize {
        let _guard = {
            let mut who = self.advancing.lock().unwrap_or_else(|p| p.into_inner());
            match *who {
                Some(id) if id == thread::current().id() => panic!("FakeClock::advance re-entered from a listener"),
                Some(_) => panic!("FakeClock::advance called concurrently from two threads"),
                None => *who = Some(thread::current().id()),
            }
            AdvanceGuard(&self.advancing)
        };

        let target = self.state().now + delta_ms;
        let mut delivered = 0;
        loop {
            let (kind, listener) = {
                let mut st = self.state();
                let tick = st.recurring.filter(|s| s.due <= target);
                let timeout = st.one_shot.filter(|s| s.due <= target);
                let kind = match (tick, timeout) {
                    (None, None) => break,
                    (Some(_), None) => FiringKind::Tick,
                    (None, Some(_)) => FiringKind::Timeout,
                    (Some(t), Some(o)) => {
                        if (t.due, FiringKind::Tick, t.order) <= (o.due, FiringKind::Timeout, o.order) {
                            FiringKind::Tick
                        } else {
                            FiringKind::Timeout
                        }
                    }
                };
                let due = match kind {
                    FiringKind::Tick => {
                        let r = st.recurring.as_mut().expect("tick scheduled");
                        let due = r.due;
                        r.due += r.period;
                        due
                    }
                    FiringKind::Timeout => st.one_shot.take().expect("timeout scheduled").due,
                };
                st.now = due;
                st.trace.push(Firing { at_ms: due, kind });
                (kind, st.listener.clone())
            };
            if let Some(l) = listener {
                match kind {
                    FiringKind::Tick => l.on_tick(),
                    FiringKind::Timeout => l.on_timeout(),
                }
            }
            delivered += 1;
        }
        self.state().now = target;
        delivered
    }
}

impl ClockModel for FakeClock {
    fn set_clock_listener(&self, listener: Arc<dyn ClockListener>) {
        self.state().listener = Some(listener);
    }

    fn start_tick(&self, period_secs: u32) -> Result<(), ClockError> {
        let period = secs_to_ms(period_secs)?;
        let mut st = self.state();
        if st.recurring.is_some() {
            return Err(ClockError::AlreadyTicking);
        }
        let order = st.next_order;
        st.next_order += 1;
        st.recurring = Some(Scheduled {
            due: st.now + period,
            period,
            order,
        });
        Ok(())
    }

    fn stop_tick(&self) {
        self.state().recurring = None;
    }

    fn restart_timeout(&self, delay_secs: u32) -> Result<(), ClockError> {
        let delay = secs_to_ms(delay_secs)?;
        let mut st = self.state();
        let order = st.next_order;
        st.next_order += 1;
        st.one_shot = Some(Scheduled {
            due: st.now + delay,
            period: 0,
            order,
        });
        Ok(())
    }
}
