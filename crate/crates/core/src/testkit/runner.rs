use std::fmt;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crate::apps::{AppConfig, AppOutput, AppView, Workbench};
use crate::clock::{ClockModel, FakeClock, RealClock};

use super::script::{ScenarioScript, Step};
use super::{perform_click, LoopPump};

/// How `advance` steps move time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeMode {
    /// Virtual time on a [`FakeClock`]; runs are exact and repeatable.
    Fake,
    /// Wall-clock sleeps on a [`RealClock`]; numeric timer checks allow one
    /// second of drift.
    Real,
}

/// Ordered lines: each executed step prefixed `> `, each app output `< `.
pub type Trace = Vec<String>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioFailure {
    pub line: usize,
    pub step: String,
    pub message: String,
    pub trace: Trace,
}

impl fmt::Display for ScenarioFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: `{}`: {}", self.line, self.step, self.message)
    }
}

impl std::error::Error for ScenarioFailure {}

/// One trace line for an app output.
pub fn describe(output: &AppOutput) -> String {
    match output {
        AppOutput::View(AppView::Counter(v)) => format!(
            "counter value={} inc={} dec={} reset={}",
            v.displayed, v.inc_enabled, v.dec_enabled, v.reset_enabled
        ),
        AppOutput::View(AppView::Timer(v)) => format!(
            "timer display={} state={} ringing={} button={}",
            v.display(),
            v.state.label(),
            v.ringing,
            v.button_label()
        ),
        AppOutput::View(AppView::Prime(slots)) => {
            let cells: Vec<String> = slots
                .iter()
                .map(|s| match s.n {
                    Some(n) => format!("{n}:{}:{}", s.status.label(), s.percent),
                    None => format!("-:{}:{}", s.status.label(), s.percent),
                })
                .collect();
            format!("prime {}", cells.join(" "))
        }
        AppOutput::Error { app, message } => format!("error {app}: {message}"),
    }
}

/// Reads one value out of app views.
///
/// Keys: `counter.value|inc|dec|reset`, `timer.display|time|state|ringing|button`,
/// `prime.<slot>.status|percent|n`.
pub fn lookup(views: &[AppView], key: &str) -> Option<String> {
    let parts: Vec<&str> = key.split('.').collect();
    views.iter().find_map(|view| match (view, parts.as_slice()) {
        (AppView::Counter(v), ["counter", field]) => match *field {
            "value" => Some(v.displayed.to_string()),
            "inc" => Some(v.inc_enabled.to_string()),
            "dec" => Some(v.dec_enabled.to_string()),
            "reset" => Some(v.reset_enabled.to_string()),
            _ => None,
        },
        (AppView::Timer(v), ["timer", field]) => match *field {
            "display" => Some(v.display()),
            "time" => Some(v.time.to_string()),
            "state" => Some(v.state.label().to_owned()),
            "ringing" => Some(v.ringing.to_string()),
            "button" => Some(v.button_label().to_owned()),
            _ => None,
        },
        (AppView::Prime(slots), ["prime", idx, field]) => {
            let slot = slots.get(idx.parse::<usize>().ok()?)?;
            match *field {
                "status" => Some(slot.status.label().to_owned()),
                "percent" => Some(slot.percent.to_string()),
                "n" => Some(slot.n.map_or_else(|| "-".to_owned(), |n| n.to_string())),
                _ => None,
            }
        }
        _ => None,
    })
}

fn matches(mode: TimeMode, key: &str, expected: &str, actual: &str) -> bool {
    if expected == actual {
        return true;
    }
    if mode == TimeMode::Real && (key == "timer.display" || key == "timer.time") {
        if let (Ok(e), Ok(a)) = (expected.parse::<i64>(), actual.parse::<i64>()) {
            return (e - a).abs() <= 1;
        }
    }
    false
}

/// A workbench on an unspawned loop, driven by script steps from the calling
/// thread.
pub struct ScenarioRunner {
    pump: LoopPump,
    mode: TimeMode,
    fake: Option<Arc<FakeClock>>,
    real: Option<Arc<RealClock>>,
    bench: Workbench,
    outputs: Arc<Mutex<Vec<AppOutput>>>,
    trace: Trace,
}

impl ScenarioRunner {
    pub fn new(mode: TimeMode, config: AppConfig) -> Result<Self, String> {
        config.validate()?;
        let pump = LoopPump::new();
        let (fake, real, clock): (_, _, Arc<dyn ClockModel>) = match mode {
            TimeMode::Fake => {
                let c = Arc::new(FakeClock::new());
                (Some(c.clone()), None, c)
            }
            TimeMode::Real => {
                let c = Arc::new(RealClock::new());
                (None, Some(c.clone()), c)
            }
        };
        let outputs = Arc::new(Mutex::new(Vec::new()));
        let sink = outputs.clone();
        let bench = Workbench::new(
            &pump.handle(),
            clock,
            config,
            Arc::new(move |o: &AppOutput| sink.lock().unwrap_or_else(|p| p.into_inner()).push(o.clone())),
        )
        .map_err(|e| e.to_string())?;
        let mut runner = ScenarioRunner {
            pump,
            mode,
            fake,
            real,
            bench,
            outputs,
            trace: Vec::new(),
        };
        runner.pump.pump();
        runner.drain();
        Ok(runner)
    }

    pub fn workbench(&self) -> &Workbench {
        &self.bench
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    fn drain(&mut self) -> Vec<AppOutput> {
        std::mem::take(&mut *self.outputs.lock().unwrap_or_else(|p| p.into_inner()))
    }

    fn settle(&mut self) {
        self.pump.pump();
        let outputs = self.drain();
        self.trace.extend(outputs.iter().map(|o| format!("< {}", describe(o))));
    }

    fn value(&self, key: &str) -> Option<String> {
        lookup(&self.bench.snapshot(), key)
    }

    /// Executes one step, returning a failure message if it did not hold.
    pub fn step(&mut self, step: &Step) -> Result<(), String> {
        self.trace.push(format!("> {step}"));
        match step {
            Step::Click { target, repeat, args } => {
                for _ in 0..*repeat {
                    perform_click(target, &self.pump.handle(), args.clone()).map_err(|e| e.to_string())?;
                    self.settle();
                }
            }
            Step::Advance(ms) => {
                match (self.fake.clone(), self.real.is_some()) {
                    (Some(fake), _) => {
                        // Pump after every firing so UI updates land in order.
                        for _ in 0..*ms {
                            fake.advance(1);
                            self.settle();
                        }
                    }
                    (None, true) => thread::sleep(Duration::from_millis(*ms)),
                    (None, false) => unreachable!("runner always owns a clock"),
                }
                self.settle();
            }
            Step::Expect { key, value } => {
                self.settle();
                let actual = self.value(key).ok_or_else(|| format!("unknown key {key:?}"))?;
                if !matches(self.mode, key, value, &actual) {
                    return Err(format!("expected {key}={value}, got {actual}"));
                }
            }
            Step::Await { key, value, timeout_ms } => {
                let deadline = Instant::now() + Duration::from_millis(*timeout_ms);
                loop {
                    self.settle();
                    let actual = self.value(key).ok_or_else(|| format!("unknown key {key:?}"))?;
                    if matches(self.mode, key, value, &actual) {
                        break;
                    }
                    if Instant::now() >= deadline {
                        return Err(format!("timed out waiting for {key}={value}, last {actual}"));
                    }
                    thread::sleep(Duration::from_millis(2));
                }
            }
        }
        Ok(())
    }

    pub fn run(mut self, script: &ScenarioScript) -> Result<Trace, ScenarioFailure> {
        for (line, step) in script.steps() {
            if let Err(message) = self.step(step) {
                self.bench.shutdown();
                return Err(ScenarioFailure {
                    line: *line,
                    step: step.to_string(),
                    message,
                    trace: self.trace.clone(),
                });
            }
        }
        self.bench.shutdown();
        if let Some(real) = &self.real {
            real.quiesce();
        }
        Ok(self.trace)
    }
}

impl fmt::Debug for ScenarioRunner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScenarioRunner")
            .field("mode", &self.mode)
            .field("trace_lines", &self.trace.len())
            .finish()
    }
}

/// Runs `script` against a fresh workbench with default configuration.
pub fn run_scenario(script: &ScenarioScript, mode: TimeMode) -> Result<Trace, ScenarioFailure> {
    run_scenario_with(script, mode, AppConfig::default())
}

pub fn run_scenario_with(script: &ScenarioScript, mode: TimeMode, config: AppConfig) -> Result<Trace, ScenarioFailure> {
    let runner = ScenarioRunner::new(mode, config).map_err(|message| ScenarioFailure {
        line: 0,
        step: String::new(),
        message,
        trace: Vec::new(),
    })?;
    runner.run(script)
}
