use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard, Weak};
use std::time::{Duration, Instant};

use reactorkit::apps::prime::SlotStatus;
use reactorkit::apps::{AppConfig, AppOutput, AppView, ClickArgs, Workbench, CLICK};
use reactorkit::clock::{ClockModel, FakeClock, RealClock};
use reactorkit::reactor::{EventLoop, LoopError, LoopHandle, LoopThread, Payload};

use crate::protocol::{Inbound, Outbound, GATEWAY_APP};

/// Queue length above which pending view messages are coalesced per app.
pub const COALESCE_AT: usize = 256;

const STARTUP_TIMEOUT: Duration = Duration::from_secs(5);

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

#[derive(Default)]
struct OutboxState {
    queue: VecDeque<Outbound>,
    closed: bool,
}

/// Outbound queue of one connection. Numbers messages as they leave.
#[derive(Default)]
pub struct Outbox {
    state: Mutex<OutboxState>,
    ready: Condvar,
    next_seq: AtomicU64,
}

impl Outbox {
    pub fn new() -> Arc<Self> {
        Arc::new(Outbox {
            next_seq: AtomicU64::new(1),
            ..Default::default()
        })
    }

    /// Queues `msg`. When the queue is long, an older view of the same app
    /// still waiting is dropped; views are full snapshots so only the latest
    /// matters. Errors and info messages are never dropped.
    pub fn push(&self, msg: Outbound) {
        let mut s = lock(&self.state);
        if s.closed {
            return;
        }
        if msg.is_view() && s.queue.len() >= COALESCE_AT {
            if let Some(i) = s.queue.iter().position(|m| m.is_view() && m.app == msg.app) {
                s.queue.remove(i);
            }
        }
        s.queue.push_back(msg);
        self.ready.notify_all();
    }

    pub fn len(&self) -> usize {
        lock(&self.state).queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn close(&self) {
        lock(&self.state).closed = true;
        self.ready.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        lock(&self.state).closed
    }

    fn number(&self, msg: Outbound) -> String {
        msg.to_json(self.next_seq.fetch_add(1, Ordering::SeqCst))
    }

    /// Everything queued, serialized with fresh sequence numbers.
    pub fn drain(&self) -> Vec<String> {
        let msgs: Vec<Outbound> = lock(&self.state).queue.drain(..).collect();
        msgs.into_iter().map(|m| self.number(m)).collect()
    }

    /// Waits up to `timeout` for one message.
    pub fn pop_timeout(&self, timeout: Duration) -> Option<String> {
        let deadline = Instant::now() + timeout;
        let mut s = lock(&self.state);
        loop {
            if let Some(m) = s.queue.pop_front() {
                drop(s);
                return Some(self.number(m));
            }
            let now = Instant::now();
            if s.closed || now >= deadline {
                return None;
            }
            s = self.ready.wait_timeout(s, deadline - now).unwrap_or_else(|p| p.into_inner()).0;
        }
    }
}

struct HubState {
    latest: Vec<AppView>,
    subscribers: Vec<Weak<Outbox>>,
}

/// Fans app outputs out to every connected outbox and remembers the latest
/// view of each app for new subscribers.
pub struct Hub {
    state: Mutex<HubState>,
}

impl Hub {
    fn new() -> Arc<Self> {
        Arc::new(Hub {
            state: Mutex::new(HubState {
                latest: Vec::new(),
                subscribers: Vec::new(),
            }),
        })
    }

    fn record(latest: &mut Vec<AppView>, view: &AppView) {
        match latest.iter_mut().find(|v| v.app() == view.app()) {
            Some(slot) => *slot = view.clone(),
            None => latest.push(view.clone()),
        }
    }

    fn publish(&self, output: &AppOutput) {
        let msg = Outbound::from_output(output);
        let mut s = lock(&self.state);
        if let AppOutput::View(v) = output {
            Self::record(&mut s.latest, v);
        }
        s.subscribers.retain(|w| match w.upgrade() {
            Some(outbox) if !outbox.is_closed() => {
                outbox.push(msg.clone());
                true
            }
            _ => false,
        });
    }

    /// A new outbox holding the current view of every app, registered for
    /// all later updates. No update can fall between the two.
    pub fn subscribe(&self) -> Arc<Outbox> {
        let outbox = Outbox::new();
        let mut s = lock(&self.state);
        for v in &s.latest {
            outbox.push(Outbound::view(v));
        }
        s.subscribers.push(Arc::downgrade(&outbox));
        outbox
    }

    pub fn latest(&self) -> Vec<AppView> {
        lock(&self.state).latest.clone()
    }

    pub fn subscriber_count(&self) -> usize {
        lock(&self.state).subscribers.iter().filter(|w| w.strong_count() > 0).count()
    }

    pub fn broadcast(&self, msg: Outbound) {
        for w in &lock(&self.state).subscribers {
            if let Some(o) = w.upgrade() {
                o.push(msg.clone());
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum ClockChoice {
    /// Wall-clock timers.
    #[default]
    Real,
    /// Virtual time that never advances on its own; the timer only moves on
    /// button presses.
    Fake,
}

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot start loop thread: {0}")]
    Spawn(#[from] std::io::Error),
    #[error(transparent)]
    Loop(#[from] LoopError),
}

/// One loop thread running the three apps, shared by every connection.
pub struct Runtime {
    loop_thread: Mutex<Option<LoopThread>>,
    handle: LoopHandle,
    hub: Arc<Hub>,
    bench: Workbench,
    real_clock: Option<Arc<RealClock>>,
}

impl Runtime {
    pub fn start(config: AppConfig, clock: ClockChoice) -> Result<Self, RuntimeError> {
        config.validate().map_err(RuntimeError::Config)?;
        let event_loop = EventLoop::new();
        let handle = event_loop.handle();
        let hub = Hub::new();
        let (real_clock, clock_model): (_, Arc<dyn ClockModel>) = match clock {
            ClockChoice::Real => {
                let c = Arc::new(RealClock::new());
                (Some(c.clone()), c)
            }
            ClockChoice::Fake => (None, Arc::new(FakeClock::new())),
        };
        let sink_hub = hub.clone();
        let bench = Workbench::new(&handle, clock_model, config, Arc::new(move |o: &AppOutput| sink_hub.publish(o)))
            .map_err(|e| RuntimeError::Config(e.to_string()))?;
        {
            let mut s = lock(&hub.state);
            for v in bench.snapshot() {
                Hub::record(&mut s.latest, &v);
            }
        }
        let loop_thread = event_loop.spawn()?;
        let runtime = Runtime {
            loop_thread: Mutex::new(Some(loop_thread)),
            handle,
            hub,
            bench,
            real_clock,
        };
        runtime.settle(STARTUP_TIMEOUT);
        Ok(runtime)
    }

    pub fn hub(&self) -> &Arc<Hub> {
        &self.hub
    }

    pub fn loop_handle(&self) -> &LoopHandle {
        &self.handle
    }

    pub fn workbench(&self) -> &Workbench {
        &self.bench
    }

    /// Handles one inbound text message for the connection owning `reply`.
    /// App work is queued on the loop; protocol errors go to `reply` only.
    pub fn inject_text(&self, text: &str, reply: &Outbox) {
        match Inbound::parse(text) {
            Ok(msg) => self.inject(&msg, reply),
            Err(e) => reply.push(Outbound::error(GATEWAY_APP, e.to_string())),
        }
    }

    pub fn inject(&self, msg: &Inbound, reply: &Outbox) {
        let target = match msg.target() {
            Ok(t) => t,
            Err(e) => return reply.push(Outbound::error(&msg.app, e.to_string())),
        };
        let args: ClickArgs = msg.args.clone();
        if let Err(e) = self.handle.enqueue(target, CLICK, Payload::new(args)) {
            reply.push(Outbound::error(GATEWAY_APP, e.to_string()));
        }
    }

    fn barrier(&self, timeout: Duration) -> bool {
        let done = Arc::new((Mutex::new(false), Condvar::new()));
        let d = done.clone();
        let posted = self.handle.post(move || {
            *lock(&d.0) = true;
            d.1.notify_all();
        });
        if posted.is_err() {
            return false;
        }
        let guard = lock(&done.0);
        let (guard, _) = done
            .1
            .wait_timeout_while(guard, timeout, |flag| !*flag)
            .unwrap_or_else(|p| p.into_inner());
        *guard
    }

    /// Waits until the loop has run everything queued and no prime slot is
    /// still checking. Returns false on timeout.
    pub fn settle(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            if !self.barrier(left) {
                return false;
            }
            let busy = self.hub.latest().iter().any(|v| match v {
                AppView::Prime(slots) => slots.iter().any(|s| s.status == SlotStatus::Checking),
                _ => false,
            });
            if !busy && self.handle.pending() == 0 {
                return true;
            }
            if Instant::now() >= deadline {
                return false;
            }
            std::thread::sleep(Duration::from_millis(1));
        }
    }

    /// Stops the apps and the loop thread. Idempotent.
    pub fn shutdown(&self) {
        let Some(t) = lock(&self.loop_thread).take() else {
            return;
        };
        self.hub.broadcast(Outbound::info(GATEWAY_APP, "shutting down"));
        self.bench.shutdown();
        if let Some(c) = &self.real_clock {
            c.quiesce();
        }
        if let Err(e) = t.shutdown_and_join() {
            log::warn!("loop thread ended with {e}");
        }
    }
}

impl Drop for Runtime {
    fn drop(&mut self) {
        self.shutdown();
    }
}
