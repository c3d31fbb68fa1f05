//! Countdown timer.
//!
//! [`TimerStateMachine`] is a Monitor Object: its three entry points
//! (button press, tick, timeout) may arrive from the loop thread and from
//! clock threads, and one lock serializes them. Behavior per state is factored
//! into State-pattern objects with entry and exit actions.
//!
//! The machine talks to its collaborators only through [`TimeModel`],
//! [`ClockModel`] and [`TimerUIUpdateListener`], so tests can substitute a
//! single mock for all three.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use crate::clock::{ClockListener, ClockModel, WeakListener};
use crate::reactor::{ConfinedCell, LoopHandle};

pub const MAX_TIME: u32 = 99;
pub const DEFAULT_IDLE_TIMEOUT_S: u32 = 3;
pub const DEFAULT_TICK_PERIOD_S: u32 = 1;

/// Remaining running time in whole seconds.
pub trait TimeModel: Send + Sync {
    fn reset(&self);
    /// No-op at the maximum.
    fn inc(&self);
    /// No-op at zero.
    fn dec(&self);
    fn get(&self) -> u32;
}

#[derive(Debug)]
pub struct BoundedTime {
    value: AtomicU32,
    max: u32,
}

impl BoundedTime {
    pub fn new(max: u32) -> Self {
        BoundedTime {
            value: AtomicU32::new(0),
            max,
        }
    }

    pub fn max(&self) -> u32 {
        self.max
    }
}

impl Default for BoundedTime {
    fn default() -> Self {
        Self::new(MAX_TIME)
    }
}

impl TimeModel for BoundedTime {
    fn reset(&self) {
        self.value.store(0, Ordering::SeqCst);
    }

    fn inc(&self) {
        let _ = self
            .value
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |v| (v < self.max).then_some(v + 1));
    }

    fn dec(&self) {
        let _ = self
            .value
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |v| v.checked_sub(1));
    }

    fn get(&self) -> u32 {
        self.value.load(Ordering::SeqCst)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TimerStateId {
    Stopped,
    Running,
    Ringing,
}

impl TimerStateId {
    pub fn label(self) -> &'static str {
        match self {
            TimerStateId::Stopped => "stopped",
            TimerStateId::Running => "running",
            TimerStateId::Ringing => "ringing",
        }
    }

    /// What the multifunction button does in this state.
    pub fn button_label(self) -> &'static str {
        match self {
            TimerStateId::Stopped => "increment",
            TimerStateId::Running => "cancel",
            TimerStateId::Ringing => "stop",
        }
    }
}

impl fmt::Display for TimerStateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TimerStateId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "stopped" => Ok(TimerStateId::Stopped),
            "running" => Ok(TimerStateId::Running),
            "ringing" => Ok(TimerStateId::Ringing),
            _ => Err(format!("unknown timer state {s:?}")),
        }
    }
}

/// Outbound UI updates from the state machine.
pub trait TimerUIUpdateListener: Send + Sync {
    fn update_time(&self, seconds: u32);
    fn update_state(&self, state: TimerStateId);
    fn ring_alarm(&self, on: bool);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimerConfig {
    pub idle_timeout_s: u32,
    pub tick_period_s: u32,
}

impl Default for TimerConfig {
    fn default() -> Self {
        TimerConfig {
            idle_timeout_s: DEFAULT_IDLE_TIMEOUT_S,
            tick_period_s: DEFAULT_TICK_PERIOD_S,
        }
    }
}

struct Machine {
    state: &'static dyn TimerState,
    time: Arc<dyn TimeModel>,
    clock: Arc<dyn ClockModel>,
    ui: Arc<dyn TimerUIUpdateListener>,
    config: TimerConfig,
}

impl Machine {
    fn set_state(&mut self, next: &'static dyn TimerState) {
        let current = self.state;
        current.on_exit(self);
        self.state = next;
        self.ui.update_state(next.id().expect("transition into the initial pseudo-state"));
        next.on_entry(self);
    }

    fn update_ui_runtime(&self) {
        self.ui.update_time(self.time.get());
    }
}

trait TimerState: Sync {
    fn id(&self) -> Option<TimerStateId>;
    fn on_entry(&self, _m: &mut Machine) {}
    fn on_exit(&self, _m: &mut Machine) {}
    fn on_button_press(&self, _m: &mut Machine) {}
    fn on_tick(&self, _m: &mut Machine) {}
    fn on_timeout(&self, _m: &mut Machine) {}
}

struct Initial;
struct Stopped;
struct Running;
struct Ringing;

static INITIAL: Initial = Initial;
static STOPPED: Stopped = Stopped;
static RUNNING: Running = Running;
static RINGING: Ringing = Ringing;

impl TimerState for Initial {
    fn id(&self) -> Option<TimerStateId> {
        None
    }
}

impl TimerState for Stopped {
    fn id(&self) -> Option<TimerStateId> {
        Some(TimerStateId::Stopped)
    }

    fn on_entry(&self, m: &mut Machine) {
        m.time.reset();
        m.update_ui_runtime();
    }

    fn on_button_press(&self, m: &mut Machine) {
        if let Err(e) = m.clock.restart_timeout(m.config.idle_timeout_s) {
            log::error!("cannot arm idle timeout: {e}");
        }
        m.time.inc();
        m.update_ui_runtime();
    }

    fn on_timeout(&self, m: &mut Machine) {
        if m.time.get() > 0 {
            m.set_state(&RUNNING);
        } else {
            log::debug!("timeout with zero time ignored");
        }
    }
}

impl TimerState for Running {
    fn id(&self) -> Option<TimerStateId> {
        Some(TimerStateId::Running)
    }

    fn on_entry(&self, m: &mut Machine) {
        if let Err(e) = m.clock.start_tick(m.config.tick_period_s) {
            log::error!("cannot start tick: {e}");
        }
    }

    fn on_exit(&self, m: &mut Machine) {
        m.clock.stop_tick();
    }

    fn on_button_press(&self, m: &mut Machine) {
        m.set_state(&STOPPED);
    }

    fn on_tick(&self, m: &mut Machine) {
        m.time.dec();
        m.update_ui_runtime();
        if m.time.get() == 0 {
            m.set_state(&RINGING);
        }
    }
}

impl TimerState for Ringing {
    fn id(&self) -> Option<TimerStateId> {
        Some(TimerStateId::Ringing)
    }

    fn on_entry(&self, m: &mut Machine) {
        m.ui.ring_alarm(true);
    }

    fn on_exit(&self, m: &mut Machine) {
        m.ui.ring_alarm(false);
    }

    fn on_button_press(&self, m: &mut Machine) {
        m.set_state(&STOPPED);
    }
}

/// The timer's state machine. Clock events reach it through its
/// [`ClockListener`] implementation.
pub struct TimerStateMachine {
    inner: Mutex<Machine>,
}

impl TimerStateMachine {
    /// Created in the initial pseudo-state; call [`start`](Self::start) to
    /// enter `Stopped`.
    pub fn new(
        time: Arc<dyn TimeModel>,
        clock: Arc<dyn ClockModel>,
        ui: Arc<dyn TimerUIUpdateListener>,
        config: TimerConfig,
    ) -> Self {
        TimerStateMachine {
            inner: Mutex::new(Machine {
                state: &INITIAL,
                time,
                clock,
                ui,
                config,
            }),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Machine> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Registers this machine as the clock's listener through a weak
    /// reference.
    pub fn listen_to_clock(self: &Arc<Self>) {
        let clock = self.lock().clock.clone();
        clock.set_clock_listener(Arc::new(WeakListener(Arc::downgrade(self))));
    }

    /// Transitions from the initial pseudo-state into `Stopped`, running its
    /// entry actions. Later calls do nothing.
    pub fn start(&self) {
        let mut m = self.lock();
        if m.state.id().is_none() {
            m.set_state(&STOPPED);
        }
    }

    pub fn on_button_press(&self) {
        let mut m = self.lock();
        let s = m.state;
        s.on_button_press(&mut m);
    }

    /// `None` before [`start`](Self::start).
    pub fn state(&self) -> Option<TimerStateId> {
        self.lock().state.id()
    }

    pub fn time(&self) -> u32 {
        self.lock().time.get()
    }

    /// State and time read under one lock acquisition.
    pub fn snapshot(&self) -> (Option<TimerStateId>, u32) {
        let m = self.lock();
        (m.state.id(), m.time.get())
    }
}

impl ClockListener for TimerStateMachine {
    fn on_tick(&self) {
        let mut m = self.lock();
        let s = m.state;
        s.on_tick(&mut m);
    }

    fn on_timeout(&self) {
        let mut m = self.lock();
        let s = m.state;
        s.on_timeout(&mut m);
    }
}

impl fmt::Debug for TimerStateMachine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (state, time) = self.snapshot();
        f.debug_struct("TimerStateMachine")
            .field("state", &state)
            .field("time", &time)
            .finish()
    }
}

/// Two-digit display text, tens digit then ones digit.
pub fn format_display(seconds: u32) -> String {
    format!("{}{}", seconds / 10 % 10, seconds % 10)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimerViewState {
    pub time: u32,
    pub state: TimerStateId,
    pub ringing: bool,
}

impl TimerViewState {
    pub fn display(&self) -> String {
        format_display(self.time)
    }

    pub fn button_label(&self) -> &'static str {
        self.state.button_label()
    }
}

impl Default for TimerViewState {
    fn default() -> Self {
        TimerViewState {
            time: 0,
            state: TimerStateId::Stopped,
            ringing: false,
        }
    }
}

type TimerSink = Box<dyn FnMut(&TimerViewState) + Send>;

/// UI adapter that reschedules every update onto the loop thread, applies it
/// to loop-confined view state, then hands the new view to a sink.
pub struct LoopTimerUi {
    loop_handle: LoopHandle,
    view: Arc<ConfinedCell<TimerViewState>>,
    sink: Arc<Mutex<TimerSink>>,
}

impl LoopTimerUi {
    pub fn new(loop_handle: &LoopHandle, sink: impl FnMut(&TimerViewState) + Send + 'static) -> Self {
        LoopTimerUi {
            loop_handle: loop_handle.clone(),
            view: Arc::new(ConfinedCell::new(loop_handle, TimerViewState::default())),
            sink: Arc::new(Mutex::new(Box::new(sink))),
        }
    }

    pub fn view(&self) -> Arc<ConfinedCell<TimerViewState>> {
        self.view.clone()
    }

    fn apply(&self, update: impl FnOnce(&mut TimerViewState) + Send + 'static) {
        let view = self.view.clone();
        let sink = self.sink.clone();
        let posted = self.loop_handle.post(move || {
            let snapshot = view
                .with_mut(|v| {
                    update(v);
                    v.clone()
                })
                .expect("posted action runs on the loop thread");
            (sink.lock().unwrap_or_else(|p| p.into_inner()))(&snapshot);
        });
        if let Err(e) = posted {
            log::debug!("timer view update dropped: {e}");
        }
    }
}

impl TimerUIUpdateListener for LoopTimerUi {
    fn update_time(&self, seconds: u32) {
        self.apply(move |v| v.time = seconds);
    }

    fn update_state(&self, state: TimerStateId) {
        self.apply(move |v| v.state = state);
    }

    fn ring_alarm(&self, on: bool) {
        self.apply(move |v| v.ringing = on);
    }
}

#[cfg(test)]
mod tests {
    use std::thread;

    use super::*;
    use crate::clock::FakeClock;
    use crate::reactor::EventLoop;

    #[derive(Default)]
    struct Recorder(Mutex<Vec<String>>);

    impl Recorder {
        fn take(&self) -> Vec<String> {
            std::mem::take(&mut *self.0.lock().unwrap())
        }
        fn push(&self, s: String) {
            self.0.lock().unwrap().push(s);
        }
    }

    impl TimerUIUpdateListener for Recorder {
        fn update_time(&self, s: u32) {
            self.push(format!("time({s})"));
        }
        fn update_state(&self, s: TimerStateId) {
            self.push(format!("state({s})"));
        }
        fn ring_alarm(&self, on: bool) {
            self.push(format!("ring({on})"));
        }
    }

    impl ClockModel for Recorder {
        fn set_clock_listener(&self, _: Arc<dyn ClockListener>) {}
        fn start_tick(&self, p: u32) -> Result<(), crate::clock::ClockError> {
            self.push(format!("start_tick({p})"));
            Ok(())
        }
        fn stop_tick(&self) {
            self.push("stop_tick".into());
        }
        fn restart_timeout(&self, d: u32) -> Result<(), crate::clock::ClockError> {
            self.push(format!("restart_timeout({d})"));
            Ok(())
        }
    }

    fn recorded() -> (TimerStateMachine, Arc<Recorder>) {
        let r = Arc::new(Recorder::default());
        let sm = TimerStateMachine::new(Arc::new(BoundedTime::default()), r.clone(), r.clone(), TimerConfig::default());
        sm.start();
        (sm, r)
    }

    #[test]
    fn start_enters_stopped_once() {
        let (sm, r) = recorded();
        assert_eq!(r.take(), vec!["state(stopped)", "time(0)"]);
        sm.start();
        assert!(r.take().is_empty());
    }

    #[test]
    fn press_in_stopped_increments_and_arms_timeout() {
        let (sm, r) = recorded();
        r.take();
        sm.on_button_press();
        assert_eq!(r.take(), vec!["restart_timeout(3)", "time(1)"]);
        assert_eq!(sm.snapshot(), (Some(TimerStateId::Stopped), 1));
    }

    #[test]
    fn transition_actions_run_in_order() {
        let (sm, r) = recorded();
        sm.on_button_press();
        r.take();
        sm.on_timeout();
        assert_eq!(r.take(), vec!["state(running)", "start_tick(1)"]);
        sm.on_tick();
        assert_eq!(r.take(), vec!["time(0)", "stop_tick", "state(ringing)", "ring(true)"]);
        sm.on_button_press();
        assert_eq!(r.take(), vec!["ring(false)", "state(stopped)", "time(0)"]);
    }

    #[test]
    fn cancel_while_running_resets_time() {
        let (sm, r) = recorded();
        for _ in 0..5 {
            sm.on_button_press();
        }
        sm.on_timeout();
        r.take();
        sm.on_button_press();
        assert_eq!(r.take(), vec!["stop_tick", "state(stopped)", "time(0)"]);
        assert_eq!(sm.time(), 0);
    }

    #[test]
    fn stray_events_are_ignored() {
        let (sm, r) = recorded();
        sm.on_timeout();
        sm.on_tick();
        assert_eq!(sm.snapshot(), (Some(TimerStateId::Stopped), 0));
        sm.on_button_press();
        sm.on_timeout();
        sm.on_tick();
        assert_eq!(sm.state(), Some(TimerStateId::Ringing));
        r.take();
        sm.on_timeout();
        for _ in 0..3 {
            sm.on_tick();
        }
        assert!(r.take().is_empty());
        assert_eq!(sm.state(), Some(TimerStateId::Ringing));
    }

    #[test]
    fn time_saturates_at_both_ends() {
        let t = BoundedTime::default();
        t.dec();
        assert_eq!(t.get(), 0);
        for _ in 0..198 {
            t.inc();
        }
        assert_eq!(t.get(), 99);
    }

    #[test]
    fn display_is_two_digits() {
        assert_eq!(format_display(0), "00");
        assert_eq!(format_display(5), "05");
        assert_eq!(format_display(42), "42");
        assert_eq!(format_display(99), "99");
    }

    #[test]
    fn state_names_parse() {
        for s in [TimerStateId::Stopped, TimerStateId::Running, TimerStateId::Ringing] {
            assert_eq!(s.label().parse::<TimerStateId>(), Ok(s));
        }
    }

    #[test]
    fn fake_clock_drives_the_machine() {
        let clock = Arc::new(FakeClock::new());
        let r = Arc::new(Recorder::default());
        let sm = Arc::new(TimerStateMachine::new(
            Arc::new(BoundedTime::default()),
            clock.clone(),
            r.clone(),
            TimerConfig::default(),
        ));
        sm.listen_to_clock();
        sm.start();
        for _ in 0..3 {
            sm.on_button_press();
        }
        clock.advance(2999);
        assert_eq!(sm.state(), Some(TimerStateId::Stopped));
        clock.advance(1);
        assert_eq!(sm.snapshot(), (Some(TimerStateId::Running), 3));
        clock.advance(3000);
        assert_eq!(sm.snapshot(), (Some(TimerStateId::Ringing), 0));
        assert!(!clock.is_ticking());
        clock.advance(10_000);
        assert_eq!(sm.state(), Some(TimerStateId::Ringing));
    }

    #[test]
    fn loop_adapter_posts_updates_to_the_loop() {
        let ev = EventLoop::new();
        let views = Arc::new(Mutex::new(Vec::new()));
        let v = views.clone();
        let ui = Arc::new(LoopTimerUi::new(&ev.handle(), move |s: &TimerViewState| {
            v.lock().unwrap().push((s.display(), s.state, thread::current().id()));
        }));
        let sm = Arc::new(TimerStateMachine::new(
            Arc::new(BoundedTime::default()),
            Arc::new(FakeClock::new()),
            ui.clone(),
            TimerConfig::default(),
        ));
        let s = sm.clone();
        thread::spawn(move || {
            s.start();
            s.on_button_press();
        })
        .join()
        .unwrap();
        assert!(views.lock().unwrap().is_empty());
        assert_eq!(ev.run_until_idle().unwrap(), 3);
        let views = views.lock().unwrap();
        assert_eq!(views.last().unwrap().0, "01");
        assert!(views.iter().all(|(_, _, t)| *t == thread::current().id()));
    }
}
