use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex, MutexGuard};

use super::counter::{project_view, BoundedCounter, CounterAdapter, CounterError, CounterEvent, CounterViewState};
use super::prime::{parse_number, PrimeApp, PrimeRunMode, SlotState};
use super::timer::{BoundedTime, LoopTimerUi, TimerConfig, TimerStateMachine, TimerViewState};
use crate::clock::ClockModel;
use crate::reactor::{ConfinedCell, Event, LoopHandle};
use crate::task::Executor;

/// Event kind used for every user-facing control.
pub const CLICK: &str = "click";

/// Component ids accepting [`CLICK`] events, spelled `<app>.<event>`.
pub mod ids {
    pub const COUNTER_INCREMENT: &str = "counter.increment";
    pub const COUNTER_DECREMENT: &str = "counter.decrement";
    pub const COUNTER_RESET: &str = "counter.reset";
    pub const TIMER_BUTTON: &str = "timer.button_press";
    pub const PRIME_CHECK: &str = "prime.check";
    pub const PRIME_CANCEL: &str = "prime.cancel_all";

    pub const ALL: [&str; 6] = [
        COUNTER_INCREMENT,
        COUNTER_DECREMENT,
        COUNTER_RESET,
        TIMER_BUTTON,
        PRIME_CHECK,
        PRIME_CANCEL,
    ];
}

pub const APPS: [&str; 3] = ["counter", "timer", "prime"];

/// Arguments carried by a click, e.g. `n` and `mode` for `prime.check`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClickArgs(pub BTreeMap<String, String>);

impl ClickArgs {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for ClickArgs {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        ClickArgs(iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AppConfig {
    pub counter_min: i64,
    pub counter_max: i64,
    pub timer_max_time: u32,
    pub idle_timeout_s: u32,
    pub tick_period_s: u32,
    pub pool_size: usize,
    pub chunk_budget: usize,
    pub slots: usize,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            counter_min: super::counter::DEFAULT_MIN,
            counter_max: super::counter::DEFAULT_MAX,
            timer_max_time: super::timer::MAX_TIME,
            idle_timeout_s: super::timer::DEFAULT_IDLE_TIMEOUT_S,
            tick_period_s: super::timer::DEFAULT_TICK_PERIOD_S,
            pool_size: crate::task::DEFAULT_POOL_SIZE,
            chunk_budget: crate::task::DEFAULT_CHUNK_BUDGET,
            slots: super::prime::DEFAULT_SLOTS,
        }
    }
}

impl AppConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.counter_min > self.counter_max {
            return Err(format!("counter.min {} exceeds counter.max {}", self.counter_min, self.counter_max));
        }
        let positive = [
            ("timer.max_time", self.timer_max_time as usize),
            ("timer.idle_timeout_s", self.idle_timeout_s as usize),
            ("timer.tick_period_s", self.tick_period_s as usize),
            ("prime.pool_size", self.pool_size),
            ("prime.chunk_budget", self.chunk_budget),
            ("prime.slots", self.slots),
        ];
        match positive.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(format!("{name} must be positive")),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AppView {
    Counter(CounterViewState),
    Timer(TimerViewState),
    Prime(Vec<SlotState>),
}

impl AppView {
    pub fn app(&self) -> &'static str {
        match self {
            AppView::Counter(_) => "counter",
            AppView::Timer(_) => "timer",
            AppView::Prime(_) => "prime",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AppOutput {
    View(AppView),
    Error { app: String, message: String },
}

pub type OutputSink = Arc<dyn Fn(&AppOutput) + Send + Sync>;

struct Latest {
    counter: CounterViewState,
    timer: TimerViewState,
    prime: Vec<SlotState>,
}

#[derive(Clone)]
struct Emitter {
    latest: Arc<Mutex<Latest>>,
    sink: OutputSink,
}

impl Emitter {
    fn latest(&self) -> MutexGuard<'_, Latest> {
        self.latest.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn view(&self, view: AppView) {
        {
            let mut l = self.latest();
            match &view {
                AppView::Counter(v) => l.counter = *v,
                AppView::Timer(v) => l.timer = v.clone(),
                AppView::Prime(v) => l.prime = v.clone(),
            }
        }
        (self.sink)(&AppOutput::View(view));
    }

    fn error(&self, app: &str, message: impl Into<String>) {
        (self.sink)(&AppOutput::Error {
            app: app.to_owned(),
            message: message.into(),
        });
    }
}

/// The counter, timer and prime apps assembled on one loop.
///
/// Each control is a loop listener registered under one of the [`ids`] with
/// kind [`CLICK`]; injecting a click event is the only way to drive the apps.
/// Every view change and every rejected click is reported to the output sink
/// on the loop thread.
pub struct Workbench {
    loop_handle: LoopHandle,
    config: AppConfig,
    clock: Arc<dyn ClockModel>,
    executor: Arc<Executor>,
    timer: Arc<TimerStateMachine>,
    timer_ui: Arc<LoopTimerUi>,
    emitter: Emitter,
}

impl Workbench {
    pub fn new(
        loop_handle: &LoopHandle,
        clock: Arc<dyn ClockModel>,
        config: AppConfig,
        sink: OutputSink,
    ) -> Result<Self, CounterError> {
        let model = BoundedCounter::new(config.counter_min, config.counter_max)?;
        let emitter = Emitter {
            latest: Arc::new(Mutex::new(Latest {
                counter: project_view(&model),
                timer: TimerViewState::default(),
                prime: vec![SlotState::default(); config.slots],
            })),
            sink,
        };

        let e = emitter.clone();
        let counter = Arc::new(ConfinedCell::new(
            loop_handle,
            CounterAdapter::new(model, move |v| e.view(AppView::Counter(*v))),
        ));

        let e = emitter.clone();
        let timer_ui = Arc::new(LoopTimerUi::new(loop_handle, move |v| e.view(AppView::Timer(v.clone()))));
        let timer = Arc::new(TimerStateMachine::new(
            Arc::new(BoundedTime::new(config.timer_max_time)),
            clock.clone(),
            timer_ui.clone(),
            TimerConfig {
                idle_timeout_s: config.idle_timeout_s,
                tick_period_s: config.tick_period_s,
            },
        ));
        timer.listen_to_clock();

        let executor = Arc::new(Executor::pool(config.pool_size));
        let e = emitter.clone();
        let prime = Arc::new(ConfinedCell::new(
            loop_handle,
            PrimeApp::new(loop_handle, executor.clone(), config.slots, config.chunk_budget, move |s| {
                e.view(AppView::Prime(s.to_vec()))
            }),
        ));

        for (id, event) in [
            (ids::COUNTER_INCREMENT, CounterEvent::Increment),
            (ids::COUNTER_DECREMENT, CounterEvent::Decrement),
            (ids::COUNTER_RESET, CounterEvent::Reset),
        ] {
            let counter = counter.clone();
            loop_handle.set_listener(id, CLICK, move |_| {
                counter.with_mut(|a| a.on_event(event)).expect("listener runs on the loop thread");
            });
        }

        let t = timer.clone();
        loop_handle.set_listener(ids::TIMER_BUTTON, CLICK, move |_| t.on_button_press());

        let (p, e) = (prime.clone(), emitter.clone());
        loop_handle.set_listener(ids::PRIME_CHECK, CLICK, move |ev: &Event| {
            let args = ev.payload::<ClickArgs>().cloned().unwrap_or_default();
            let result = p
                .with_mut(|app| {
                    let n = parse_number(args.get("n").unwrap_or(""))?;
                    let mode = PrimeRunMode::parse(args.get("mode").unwrap_or("async"), app.chunk_budget())?;
                    app.check(n, mode)
                })
                .expect("listener runs on the loop thread");
            if let Err(err) = result {
                e.error("prime", err.to_string());
            }
        });

        let p = prime.clone();
        loop_handle.set_listener(ids::PRIME_CANCEL, CLICK, move |_| {
            p.with_mut(|app| {
                app.cancel_all();
                app.emit_view();
            })
            .expect("listener runs on the loop thread");
        });

        timer.start();

        Ok(Workbench {
            loop_handle: loop_handle.clone(),
            config,
            clock,
            executor,
            timer,
            timer_ui,
            emitter,
        })
    }

    pub fn loop_handle(&self) -> &LoopHandle {
        &self.loop_handle
    }

    pub fn config(&self) -> &AppConfig {
        &self.config
    }

    pub fn timer(&self) -> &Arc<TimerStateMachine> {
        &self.timer
    }

    pub fn timer_view(&self) -> Arc<ConfinedCell<TimerViewState>> {
        self.timer_ui.view()
    }

    pub fn executor(&self) -> &Arc<Executor> {
        &self.executor
    }

    /// Latest view of each app, in `counter`, `timer`, `prime` order.
    pub fn snapshot(&self) -> Vec<AppView> {
        let l = self.emitter.latest();
        vec![
            AppView::Counter(l.counter),
            AppView::Timer(l.timer.clone()),
            AppView::Prime(l.prime.clone()),
        ]
    }

    /// Reports an error through the output sink, as the apps do.
    pub fn report_error(&self, app: &str, message: impl Into<String>) {
        self.emitter.error(app, message);
    }

    /// Stops the timer tick, cancels queued prime tasks and unregisters the
    /// controls.
    pub fn shutdown(&self) {
        self.clock.stop_tick();
        self.executor.shutdown();
        for id in ids::ALL {
            self.loop_handle.remove_listener(id, CLICK);
        }
    }
}

impl fmt::Debug for Workbench {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Workbench")
            .field("config", &self.config)
            .field("timer", &self.timer)
            .finish()
    }
}
