use std::panic::{self, AssertUnwindSafe};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle, ThreadId};
use std::time::{Duration, Instant};

use super::{secs_to_ms, ClockError, ClockListener, ClockModel, Firing, FiringKind};
use crate::reactor::panic_message;

struct Recurring {
    period: Duration,
    next: Instant,
    generation: u64,
}

struct State {
    listener: Option<Arc<dyn ClockListener>>,
    recurring: Option<Recurring>,
    one_shot: Option<Instant>,
    generation: u64,
    delivering: bool,
    shutdown: bool,
    trace: Vec<Firing>,
}

struct Inner {
    state: Mutex<State>,
    changed: Condvar,
    idle: Condvar,
    epoch: Instant,
}

impl Inner {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }
}

/// A clock with its own timer thread. Listener callbacks run on that thread.
///
/// Recurring ticks are fixed-delay: the next tick is due one period after the
/// previous delivery returned.
pub struct RealClock {
    inner: Arc<Inner>,
    timer_thread: ThreadId,
    join: Option<JoinHandle<()>>,
}

impl RealClock {
    pub fn new() -> Self {
        let inner = Arc::new(Inner {
            state: Mutex::new(State {
                listener: None,
                recurring: None,
                one_shot: None,
                generation: 0,
                delivering: false,
                shutdown: false,
                trace: Vec::new(),
            }),
            changed: Condvar::new(),
            idle: Condvar::new(),
            epoch: Instant::now(),
        });
        let worker = inner.clone();
        let join = thread::Builder::new()
            .name("clock-timer".into())
            .spawn(move || timer_loop(&worker))
            .expect("failed to spawn clock timer thread");
        RealClock {
            timer_thread: join.thread().id(),
            inner,
            join: Some(join),
        }
    }

    pub fn timer_thread(&self) -> ThreadId {
        self.timer_thread
    }

    /// Waits until no listener callback is in flight. Returns immediately when
    /// called from the timer thread itself.
    ///
    /// `stop_tick` never blocks, so a tick taken just before the stop may
    /// still be running when it returns; once `quiesce` returns after a
    /// `stop_tick`, no further tick is delivered.
    pub fn quiesce(&self) {
        if thread::current().id() == self.timer_thread {
            return;
        }
        let mut st = self.inner.lock();
        while st.delivering {
            st = self.inner.idle.wait(st).unwrap_or_else(|p| p.into_inner());
        }
    }

    /// Firings delivered so far, stamped with milliseconds since the clock was created.
    pub fn trace(&self) -> Vec<Firing> {
        self.inner.lock().trace.clone()
    }
}

impl Default for RealClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Drop for RealClock {
    fn drop(&mut self) {
        self.inner.lock().shutdown = true;
        self.inner.changed.notify_all();
        if let Some(join) = self.join.take() {
            if thread::current().id() != self.timer_thread {
                let _ = join.join();
            }
        }
    }
}

impl ClockModel for RealClock {
    fn set_clock_listener(&self, listener: Arc<dyn ClockListener>) {
        self.inner.lock().listener = Some(listener);
    }

    fn start_tick(&self, period_secs: u32) -> Result<(), ClockError> {
        let period = Duration::from_millis(secs_to_ms(period_secs)?);
        let mut st = self.inner.lock();
        if st.recurring.is_some() {
            return Err(ClockError::AlreadyTicking);
        }
        st.generation += 1;
        st.recurring = Some(Recurring {
            period,
            next: Instant::now() + period,
            generation: st.generation,
        });
        drop(st);
        self.inner.changed.notify_all();
        Ok(())
    }

    fn stop_tick(&self) {
        let mut st = self.inner.lock();
        st.recurring = None;
        st.generation += 1;
        drop(st);
        self.inner.changed.notify_all();
    }

    fn restart_timeout(&self, delay_secs: u32) -> Result<(), ClockError> {
        let delay = Duration::from_millis(secs_to_ms(delay_secs)?);
        self.inner.lock().one_shot = Some(Instant::now() + delay);
        self.inner.changed.notify_all();
        Ok(())
    }
}

fn timer_loop(inner: &Inner) {
    let mut st = inner.lock();
    loop {
        if st.shutdown {
            return;
        }
        let now = Instant::now();
        let tick_due = st.recurring.as_ref().map(|r| r.next);
        let timeout_due = st.one_shot;
        let earliest = match (tick_due, timeout_due) {
            (Some(t), Some(o)) => Some(t.min(o)),
            (t, o) => t.or(o),
        };
        let Some(earliest) = earliest else {
            st = inner.changed.wait(st).unwrap_or_else(|p| p.into_inner());
            continue;
        };
        if earliest > now {
            st = inner
                .changed
                .wait_timeout(st, earliest - now)
                .unwrap_or_else(|p| p.into_inner())
                .0;
            continue;
        }
        // Ticks win ties with timeouts.
        let kind = if tick_due.is_some_and(|t| t <= now && timeout_due.is_none_or(|o| t <= o)) {
            FiringKind::Tick
        } else {
            FiringKind::Timeout
        };
        let generation = match kind {
            FiringKind::Tick => st.recurring.as_ref().map(|r| r.generation),
            FiringKind::Timeout => {
                st.one_shot = None;
                None
            }
        };
        let listener = st.listener.clone();
        let at_ms = inner.epoch.elapsed().as_millis() as u64;
        st.trace.push(Firing { at_ms, kind });
        st.delivering = true;
        drop(st);

        if let Some(listener) = listener {
            let outcome = panic::catch_unwind(AssertUnwindSafe(|| match kind {
                FiringKind::Tick => listener.on_tick(),
                FiringKind::Timeout => listener.on_timeout(),
            }));
            if let Err(p) = outcome {
                log::error!("clock listener failed on {kind:?}: {}", panic_message(p));
            }
        }

        st = inner.lock();
        st.delivering = false;
        inner.idle.notify_all();
        if let (Some(generation), Some(r)) = (generation, st.recurring.as_mut()) {
            if r.generation == generation {
                r.next = Instant::now() + r.period;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::clock::test_support::Counting;

    #[test]
    fn zero_period_is_rejected() {
        let clock = RealClock::new();
        assert_eq!(clock.start_tick(0), Err(ClockError::ZeroPeriod));
        assert_eq!(clock.restart_timeout(0), Err(ClockError::ZeroPeriod));
    }

    #[test]
    fn double_start_is_rejected() {
        let clock = RealClock::new();
        clock.start_tick(1).unwrap();
        assert_eq!(clock.start_tick(1), Err(ClockError::AlreadyTicking));
        clock.stop_tick();
        clock.start_tick(1).unwrap();
    }

    #[test]
    fn stop_after_two_and_a_half_periods() {
        let clock = RealClock::new();
        let c = Arc::new(Counting::default());
        clock.set_clock_listener(c.clone());
        clock.start_tick(1).unwrap();
        thread::sleep(Duration::from_millis(2500));
        clock.stop_tick();
        clock.quiesce();
        let at_stop = c.ticks();
        assert!((1..=3).contains(&at_stop), "{at_stop} ticks");
        thread::sleep(Duration::from_millis(1200));
        assert_eq!(c.ticks(), at_stop);
    }

    #[test]
    fn timeout_fires_once_on_the_timer_thread() {
        struct Probe(Mutex<Vec<ThreadId>>);
        impl ClockListener for Probe {
            fn on_tick(&self) {}
            fn on_timeout(&self) {
                self.0.lock().unwrap().push(thread::current().id());
            }
        }
        let clock = RealClock::new();
        let p = Arc::new(Probe(Mutex::new(Vec::new())));
        clock.set_clock_listener(p.clone());
        clock.restart_timeout(1).unwrap();
        thread::sleep(Duration::from_millis(2300));
        assert_eq!(*p.0.lock().unwrap(), vec![clock.timer_thread()]);
    }

    #[test]
    fn panicking_listener_does_not_kill_the_timer() {
        struct Flaky(AtomicUsize);
        impl ClockListener for Flaky {
            fn on_tick(&self) {}
            fn on_timeout(&self) {
                if self.0.fetch_add(1, Ordering::SeqCst) == 0 {
                    panic!("first timeout fails");
                }
            }
        }
        let clock = RealClock::new();
        let f = Arc::new(Flaky(AtomicUsize::new(0)));
        clock.set_clock_listener(f.clone());
        clock.restart_timeout(1).unwrap();
        thread::sleep(Duration::from_millis(1200));
        clock.restart_timeout(1).unwrap();
        thread::sleep(Duration::from_millis(1200));
        assert_eq!(f.0.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn drop_joins_the_timer_thread() {
        let clock = RealClock::new();
        clock.start_tick(1).unwrap();
        let start = Instant::now();
        drop(clock);
        assert!(start.elapsed() < Duration::from_millis(500));
    }
}
