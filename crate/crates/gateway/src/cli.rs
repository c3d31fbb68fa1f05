use std::io::{self, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use reactorkit::apps::prime::SlotStatus;
use reactorkit::apps::{AppConfig, AppView};
use reactorkit::lab::{enumerate_interleavings, race_histogram, DelayHook, IncrementKind, StepProgram};
use reactorkit::testkit::{run_scenario_with, ScenarioScript, Step, TimeMode};

use crate::config::{RuntimeConfig, PORT_ENV};
use crate::hub::{ClockChoice, Runtime};
use crate::protocol::Inbound;
use crate::stdio::run_stdio;
use crate::ws;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "reactorkit", version, about = "Event-loop demo apps: counter, timer and prime checker")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve the apps over WebSocket on /ws, or over stdin/stdout with --stdio.
    Serve(ServeArgs),
    /// Run a counter scenario script.
    Counter(ScriptArgs),
    /// Run a timer scenario script.
    Timer(ScriptArgs),
    /// Run a scenario script touching any of the apps.
    Demo(ScriptArgs),
    /// Check one number for primality.
    Prime(PrimeArgs),
    /// Race-condition experiments on a shared counter.
    #[command(subcommand)]
    Lab(LabCommand),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub port: Option<u16>,
    /// Flat key = value file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory served over plain HTTP next to /ws.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    /// Speak the protocol on stdin/stdout instead of a socket.
    #[arg(long)]
    pub stdio: bool,
    #[arg(long, value_enum, default_value_t = ClockChoice::Real)]
    pub clock: ClockChoice,
}

#[derive(Debug, Args)]
pub struct ScriptArgs {
    #[arg(long)]
    pub script: PathBuf,
    /// Use wall-clock time; timer display checks allow one second of drift.
    #[arg(long)]
    pub real_time: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Foreground,
    Chunked,
    Async,
}

impl ModeArg {
    fn name(self) -> &'static str {
        match self {
            ModeArg::Foreground => "foreground",
            ModeArg::Chunked => "chunked",
            ModeArg::Async => "async",
        }
    }
}

#[derive(Debug, Args)]
pub struct PrimeArgs {
    #[arg(long)]
    pub n: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Async)]
    pub mode: ModeArg,
    /// Press cancel this many milliseconds after starting.
    #[arg(long)]
    pub cancel_after: Option<u64>,
    /// Iterations per loop turn in chunked mode.
    #[arg(long, default_value_t = reactorkit::task::DEFAULT_CHUNK_BUDGET)]
    pub chunk_budget: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Unsafe,
    Safe,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DelayArg {
    None,
    Yield,
    Sleep,
}

#[derive(Debug, Subcommand)]
pub enum LabCommand {
    /// Histogram of counter deltas over repeated concurrent increments.
    Race {
        #[arg(long, default_value_t = 2)]
        threads: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, value_enum, default_value_t = KindArg::Unsafe)]
        kind: KindArg,
        #[arg(long, value_enum, default_value_t = DelayArg::Yield)]
        delay: DelayArg,
    },
    /// Every interleaving of two single fetch/set increments.
    Enumerate,
}

/// Runs a parsed command, writing human output to `out`. Returns the exit code.
pub fn run(cli: Cli, out: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::Serve(a) => serve(a, out),
        Command::Counter(a) => script(a, Some("counter"), out),
        Command::Timer(a) => script(a, Some("timer"), out),
        Command::Demo(a) => script(a, None, out),
        Command::Prime(a) => prime(a, out),
        Command::Lab(c) => lab(c, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(io::stderr(), "error: {e}");
            EXIT_USAGE
        }
    }
}

type CliResult = Result<i32, String>;

fn load_config(path: Option<&Path>) -> Result<RuntimeConfig, String> {
    match path {
        Some(p) => RuntimeConfig::load(p).map_err(|e| e.to_string()),
        None => Ok(RuntimeConfig::default()),
    }
}

fn serve(a: ServeArgs, out: &mut dyn Write) -> CliResult {
    let mut cfg = load_config(a.config.as_deref())?;
    cfg.apply_env(|k| std::env::var(k).ok()).map_err(|e| e.to_string())?;
    if let Some(p) = a.port {
        cfg.port = p;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    let runtime = Runtime::start(cfg.apps, a.clock).map_err(|e| e.to_string())?;
    if a.stdio {
        let stdin = io::stdin();
        run_stdio(&runtime, stdin.lock(), out).map_err(|e| e.to_string())?;
        runtime.shutdown();
        return Ok(EXIT_OK);
    }
    let listener = TcpListener::bind(("0.0.0.0", cfg.port)).map_err(|e| format!("cannot bind port {}: {e}", cfg.port))?;
    log::info!("listening on {} (override with --port or {PORT_ENV})", cfg.port);
    let _ = writeln!(out, "listening on ws://127.0.0.1:{}{}", cfg.port, ws::WS_PATH);
    let _ = out.flush();
    ws::serve(listener, Arc::new(runtime), a.static_dir).map_err(|e| e.to_string())?;
    Ok(EXIT_OK)
}

fn step_app(step: &Step) -> Option<&str> {
    let key = match step {
        Step::Click { target, .. } => target,
        Step::Expect { key, .. } | Step::Await { key, .. } => key,
        Step::Advance(_) => return None,
    };
    key.split('.').next()
}

fn script(a: ScriptArgs, app: Option<&str>, out: &mut dyn Write) -> CliResult {
    let text = std::fs::read_to_string(&a.script).map_err(|e| format!("cannot read {}: {e}", a.script.display()))?;
    let script = ScenarioScript::parse(&text).map_err(|e| format!("{}: {e}", a.script.display()))?;
    if let Some(app) = app {
        if let Some((line, step)) = script.steps().iter().find(|(_, s)| step_app(s).is_some_and(|a| a != app)) {
            return Err(format!("line {line}: `{step}` is not a {app} step; use `demo` for mixed scripts"));
        }
    }
    let cfg = load_config(a.config.as_deref())?;
    let mode = if a.real_time { TimeMode::Real } else { TimeMode::Fake };
    let (trace, failure) = match run_scenario_with(&script, mode, cfg.apps) {
        Ok(t) => (t, None),
        Err(f) => (f.trace.clone(), Some(f)),
    };
    for line in &trace {
        writeln!(out, "{line}").map_err(|e| e.to_string())?;
    }
    Ok(match failure {
        None => {
            let _ = writeln!(out, "ok: {} steps", script.steps().len());
            EXIT_OK
        }
        Some(f) => {
            let _ = writeln!(out, "FAILED {f}");
            EXIT_FAILED
        }
    })
}

fn slot_zero(rt: &Runtime) -> Option<(SlotStatus, u8)> {
    rt.hub().latest().into_iter().find_map(|v| match v {
        AppView::Prime(slots) => slots.first().map(|s| (s.status, s.percent)),
        _ => None,
    })
}

fn prime(a: PrimeArgs, out: &mut dyn Write) -> CliResult {
    let apps = AppConfig {
        chunk_budget: a.chunk_budget,
        ..AppConfig::default()
    };
    let rt = Runtime::start(apps, ClockChoice::Fake).map_err(|e| e.to_string())?;
    let outbox = rt.hub().subscribe();
    outbox.drain();
    let started = Instant::now();
    let check = Inbound {
        app: "prime".into(),
        event: "check".into(),
        args: [("n", a.n.to_string()), ("mode", a.mode.name().to_owned())].into_iter().collect(),
    };
    rt.inject(&check, &outbox);
    if let Some(ms) = a.cancel_after {
        std::thread::sleep(Duration::from_millis(ms));
        let cancel = Inbound {
            app: "prime".into(),
            event: "cancel_all".into(),
            args: Default::default(),
        };
        rt.inject(&cancel, &outbox);
    }
    let settled = rt.settle(Duration::from_secs(3600));
    let elapsed = started.elapsed();
    for line in outbox.drain() {
        writeln!(out, "{line}").map_err(|e| e.to_string())?;
    }
    let (status, percent) = slot_zero(&rt).ok_or("prime view missing")?;
    let verdict = match status {
        SlotStatus::Neutral => "cancelled",
        other => other.label(),
    };
    let _ = writeln!(
        out,
        "n={} mode={} verdict={verdict} percent={percent} elapsed_ms={}",
        a.n,
        a.mode.name(),
        elapsed.as_millis()
    );
    rt.shutdown();
    Ok(if settled && status != SlotStatus::Checking { EXIT_OK } else { EXIT_FAILED })
}

fn lab(c: LabCommand, out: &mut dyn Write) -> CliResult {
    match c {
        LabCommand::Race {
            threads,
            trials,
            kind,
            delay,
        } => {
            let kind = match kind {
                KindArg::Unsafe => IncrementKind::Unsafe,
                KindArg::Safe => IncrementKind::Safe,
            };
            let delay = match delay {
                DelayArg::None => DelayHook::None,
                DelayArg::Yield => DelayHook::Yield,
                DelayArg::Sleep => DelayHook::Sleep(Duration::from_millis(1)),
            };
            let hist = race_histogram(kind, threads, trials, delay).map_err(|e| e.to_string())?;
            let _ = writeln!(out, "{kind:?} increment, {threads} threads, {trials} trials");
            for (delta, count) in hist {
                let _ = writeln!(out, "delta {delta}: {count}");
            }
        }
        LabCommand::Enumerate => {
            let results = enumerate_interleavings(&StepProgram::increment(1), &StepProgram::increment(2))
                .map_err(|e| e.to_string())?;
            for r in &results {
                let _ = writeln!(out, "{}  delta {}", r.schedule_string(), r.final_delta);
            }
            let lost = results.iter().filter(|r| r.final_delta < 2).count();
            let _ = writeln!(out, "{} schedules, {} lose an update", results.len(), lost);
        }
    }
    Ok(EXIT_OK)
}
