use std::sync::{Arc, Mutex, MutexGuard};

use crate::apps::timer::{TimeModel, TimerConfig, TimerStateId, TimerStateMachine, TimerUIUpdateListener, MAX_TIME};
use crate::clock::{ClockError, ClockListener, ClockModel};

#[derive(Debug)]
struct MockState {
    time_value: i64,
    state_id: Option<TimerStateId>,
    running_time: i64,
    idle_time: i64,
    started: bool,
    ringing: bool,
}

/// One object standing in for all three timer dependencies: the time model,
/// the clock and the UI listener.
///
/// Clock events are not generated; the test calls the state machine's
/// `on_tick`/`on_timeout` directly. Registering a clock listener is rejected.
#[derive(Debug)]
pub struct UnifiedMock {
    state: Mutex<MockState>,
}

impl Default for UnifiedMock {
    fn default() -> Self {
        UnifiedMock {
            state: Mutex::new(MockState {
                time_value: -1,
                state_id: None,
                running_time: -1,
                idle_time: -1,
                started: false,
                ringing: false,
            }),
        }
    }
}

impl UnifiedMock {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    fn lock(&self) -> MutexGuard<'_, MockState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// A started state machine wired to this mock for all three roles.
    pub fn machine(self: &Arc<Self>) -> TimerStateMachine {
        let sm = TimerStateMachine::new(self.clone(), self.clone(), self.clone(), TimerConfig::default());
        sm.start();
        sm
    }

    /// Last displayed time, `-1` before any update.
    pub fn time(&self) -> i64 {
        self.lock().time_value
    }

    pub fn state(&self) -> Option<TimerStateId> {
        self.lock().state_id
    }

    pub fn is_started(&self) -> bool {
        self.lock().started
    }

    pub fn is_ringing(&self) -> bool {
        self.lock().ringing
    }

    /// Delay passed to the last `restart_timeout`, `-1` if none.
    pub fn idle_time(&self) -> i64 {
        self.lock().idle_time
    }
}

impl TimerUIUpdateListener for UnifiedMock {
    fn update_time(&self, seconds: u32) {
        self.lock().time_value = i64::from(seconds);
    }

    fn update_state(&self, state: TimerStateId) {
        self.lock().state_id = Some(state);
    }

    fn ring_alarm(&self, on: bool) {
        self.lock().ringing = on;
    }
}

impl ClockModel for UnifiedMock {
    fn set_clock_listener(&self, _listener: Arc<dyn ClockListener>) {
        panic!("UnifiedMock does not support set_clock_listener");
    }

    fn start_tick(&self, _period_secs: u32) -> Result<(), ClockError> {
        self.lock().started = true;
        Ok(())
    }

    fn stop_tick(&self) {
        self.lock().started = false;
    }

    fn restart_timeout(&self, delay_secs: u32) -> Result<(), ClockError> {
        self.lock().idle_time = i64::from(delay_secs);
        Ok(())
    }
}

impl TimeModel for UnifiedMock {
    fn reset(&self) {
        self.lock().running_time = 0;
    }

    fn inc(&self) {
        let mut s = self.lock();
        if s.running_time != i64::from(MAX_TIME) {
            s.running_time += 1;
        }
    }

    fn dec(&self) {
        let mut s = self.lock();
        if s.running_time != 0 {
            s.running_time -= 1;
        }
    }

    fn get(&self) -> u32 {
        self.lock().running_time.max(0) as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn starts_unset() {
        let m = UnifiedMock::new();
        assert_eq!(m.time(), -1);
        assert_eq!(m.state(), None);
        assert!(!m.is_started() && !m.is_ringing());
    }

    #[test]
    fn running_time_is_clamped() {
        let m = UnifiedMock::new();
        m.reset();
        m.dec();
        assert_eq!(m.get(), 0);
        for _ in 0..150 {
            m.inc();
        }
        assert_eq!(m.get(), 99);
    }

    #[test]
    #[should_panic(expected = "does not support")]
    fn clock_listener_is_rejected() {
        let m = UnifiedMock::new();
        struct Nop;
        impl ClockListener for Nop {
            fn on_tick(&self) {}
            fn on_timeout(&self) {}
        }
        m.set_clock_listener(Arc::new(Nop));
    }

    #[test]
    fn tick_flag_follows_start_and_stop() {
        let m = UnifiedMock::new();
        m.start_tick(1).unwrap();
        assert!(m.is_started());
        m.stop_tick();
        assert!(!m.is_started());
    }
}
