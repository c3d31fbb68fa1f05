//! The event loop: a fully synchronized FIFO queue drained by exactly one
//! loop thread.
//!
//! Any thread may enqueue events or post deferred actions through a
//! [`LoopHandle`]. The loop thread takes one item at a time and runs it to
//! completion before taking the next, so handler activations never overlap
//! and dispatch order equals enqueue order.
//!
//! Events are routed to listeners keyed by `(source, kind)`. Each key holds at
//! most one listener; installing a new one replaces the old.
//!
//! A loop is bound to a thread the first time it dispatches (via
//! [`EventLoop::run`] or one of the manual pumping methods). Before that, the
//! thread that created the loop is treated as the owner, so setup code can
//! initialize confined state before handing the loop to its thread.

mod confine;
mod event;

use std::borrow::Cow;
use std::collections::{HashMap, VecDeque};
use std::io;
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle, ThreadId};

pub use confine::{ConfinedCell, ConfinementViolation};
pub use event::{Event, Payload, SourceId};

/// Deferred action executed on the loop thread.
pub type Action = Box<dyn FnOnce() + Send + 'static>;

/// Receives `(event seq, description)` whenever a handler panics.
pub type ErrorHook = Arc<dyn Fn(u64, &str) + Send + Sync + 'static>;

/// Decides whether an incoming event supersedes a pending one with the same
/// source and kind. Arguments are `(pending, incoming)`.
pub type CoalesceFn = Arc<dyn Fn(&Event, &Event) -> bool + Send + Sync + 'static>;

type ListenerFn = Box<dyn FnMut(&Event) + Send + 'static>;

pub const DEFAULT_WARN_THRESHOLD: usize = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum LoopError {
    #[error("event queue is closed")]
    EnqueueOnClosed,
    #[error("event loop is already bound to thread {0:?}")]
    AlreadyBound(ThreadId),
    #[error("event loop dispatch entered re-entrantly from a handler")]
    Reentrant,
    #[error(transparent)]
    Confinement(#[from] ConfinementViolation),
}

/// Construction options for an [`EventLoop`].
#[derive(Clone)]
pub struct LoopConfig {
    /// Queue length at which a single warning is logged. The queue itself is unbounded.
    pub warn_threshold: usize,
    pub coalesce: Option<CoalesceFn>,
    pub error_hook: Option<ErrorHook>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            warn_threshold: DEFAULT_WARN_THRESHOLD,
            coalesce: None,
            error_hook: None,
        }
    }
}

impl LoopConfig {
    pub fn warn_threshold(mut self, threshold: usize) -> Self {
        self.warn_threshold = threshold;
        self
    }

    pub fn coalesce(mut self, f: impl Fn(&Event, &Event) -> bool + Send + Sync + 'static) -> Self {
        self.coalesce = Some(Arc::new(f));
        self
    }

    pub fn error_hook(mut self, f: impl Fn(u64, &str) + Send + Sync + 'static) -> Self {
        self.error_hook = Some(Arc::new(f));
        self
    }
}

enum Item {
    Event(Event),
    Action(Action),
}

struct Envelope {
    seq: u64,
    item: Item,
}

#[derive(Default)]
struct QueueState {
    pending: VecDeque<Envelope>,
    next_seq: u64,
    closed: bool,
    warned: bool,
}

struct Owner {
    thread: ThreadId,
    bound: bool,
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct ListenerKey {
    source: SourceId,
    kind: Cow<'static, str>,
}

struct ListenerSlot {
    generation: u64,
    callback: Option<ListenerFn>,
}

struct Shared {
    queue: Mutex<QueueState>,
    ready: Condvar,
    owner: Mutex<Owner>,
    listeners: Mutex<HashMap<ListenerKey, ListenerSlot>>,
    listener_generation: AtomicU64,
    dispatching: AtomicBool,
    dispatched: AtomicU64,
    failures: AtomicU64,
    config: LoopConfig,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

pub(crate) fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_owned()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "handler panicked".to_owned()
    }
}

/// The consuming side of the event architecture. Owns dispatch.
pub struct EventLoop {
    shared: Arc<Shared>,
}

/// Cloneable, thread-safe capability to feed the loop and check confinement.
#[derive(Clone)]
pub struct LoopHandle {
    shared: Arc<Shared>,
}

impl Default for EventLoop {
    fn default() -> Self {
        Self::new()
    }
}

impl EventLoop {
    pub fn new() -> Self {
        Self::with_config(LoopConfig::default())
    }

    pub fn with_config(config: LoopConfig) -> Self {
        EventLoop {
            shared: Arc::new(Shared {
                queue: Mutex::new(QueueState::default()),
                ready: Condvar::new(),
                owner: Mutex::new(Owner {
                    thread: thread::current().id(),
                    bound: false,
                }),
                listeners: Mutex::new(HashMap::new()),
                listener_generation: AtomicU64::new(0),
                dispatching: AtomicBool::new(false),
                dispatched: AtomicU64::new(0),
                failures: AtomicU64::new(0),
                config,
            }),
        }
    }

    pub fn handle(&self) -> LoopHandle {
        LoopHandle {
            shared: self.shared.clone(),
        }
    }

    /// Binds the loop to the calling thread and dispatches until shutdown.
    ///
    /// Blocks without spinning while the queue is empty. After shutdown is
    /// signalled the loop returns once the current handler finishes; anything
    /// still queued is dropped undispatched.
    pub fn run(&self) -> Result<(), LoopError> {
        let _guard = self.enter()?;
        loop {
            let next = {
                let mut q = lock(&self.shared.queue);
                loop {
                    if q.closed {
                        q.pending.clear();
                        return Ok(());
                    }
                    if let Some(env) = q.pending.pop_front() {
                        break env;
                    }
                    q = self.shared.ready.wait(q).unwrap_or_else(|p| p.into_inner());
                }
            };
            self.shared.dispatch(next);
        }
    }

    /// Dispatches at most one queued item on the calling thread. Returns
    /// whether anything ran.
    pub fn run_one(&self) -> Result<bool, LoopError> {
        let _guard = self.enter()?;
        Ok(self.shared.dispatch_next())
    }

    /// Dispatches on the calling thread until the queue is empty, including
    /// items enqueued by the handlers themselves. Returns how many ran.
    pub fn run_until_idle(&self) -> Result<usize, LoopError> {
        let _guard = self.enter()?;
        let mut count = 0;
        while self.shared.dispatch_next() {
            count += 1;
        }
        Ok(count)
    }

    /// Moves the loop onto a new thread named `ui-loop` and runs it there.
    pub fn spawn(self) -> io::Result<LoopThread> {
        let handle = self.handle();
        let (bound_tx, bound_rx) = std::sync::mpsc::channel();
        let join = thread::Builder::new().name("ui-loop".into()).spawn(move || {
            let bound = self.shared.bind_current();
            let _ = bound_tx.send(());
            bound?;
            self.run()
        })?;
        // Ownership moves to the new thread before the caller can observe it.
        let _ = bound_rx.recv();
        Ok(LoopThread { handle, join })
    }

    fn enter(&self) -> Result<DispatchGuard<'_>, LoopError> {
        self.shared.bind_current()?;
        if self.shared.dispatching.swap(true, Ordering::AcqRel) {
            return Err(LoopError::Reentrant);
        }
        Ok(DispatchGuard(&self.shared))
    }
}

struct DispatchGuard<'a>(&'a Shared);

impl Drop for DispatchGuard<'_> {
    fn drop(&mut self) {
        self.0.dispatching.store(false, Ordering::Release);
    }
}

impl Shared {
    fn bind_current(&self) -> Result<(), LoopError> {
        let me = thread::current().id();
        let mut owner = lock(&self.owner);
        if owner.bound && owner.thread != me {
            return Err(LoopError::AlreadyBound(owner.thread));
        }
        owner.thread = me;
        owner.bound = true;
        Ok(())
    }

    fn dispatch_next(&self) -> bool {
        let next = {
            let mut q = lock(&self.queue);
            if q.closed {
                q.pending.clear();
                return false;
            }
            q.pending.pop_front()
        };
        match next {
            Some(env) => {
                self.dispatch(env);
                true
            }
            None => false,
        }
    }

    fn dispatch(&self, env: Envelope) {
        let seq = env.seq;
        let outcome = match env.item {
            Item::Action(action) => panic::catch_unwind(AssertUnwindSafe(action)).map_err(panic_message),
            Item::Event(event) => self.deliver(&event),
        };
        self.dispatched.fetch_add(1, Ordering::Relaxed);
        if let Err(msg) = outcome {
            self.failures.fetch_add(1, Ordering::Relaxed);
            match &self.config.error_hook {
                Some(hook) => hook(seq, &msg),
                None => log::error!("handler for event #{seq} failed: {msg}"),
            }
        }
    }

    fn deliver(&self, event: &Event) -> Result<(), String> {
        let key = ListenerKey {
            source: event.source.clone(),
            kind: event.kind.clone(),
        };
        // Take the listener out so it can run without the registry lock and
        // may itself install or remove listeners.
        let taken = {
            let mut map = lock(&self.listeners);
            map.get_mut(&key)
                .and_then(|slot| slot.callback.take().map(|cb| (cb, slot.generation)))
        };
        let Some((mut callback, generation)) = taken else {
            log::debug!("no listener for {}/{}; event #{} dropped", event.source, event.kind, event.seq);
            return Ok(());
        };
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| callback(event))).map_err(panic_message);
        let mut map = lock(&self.listeners);
        if let Some(slot) = map.get_mut(&key) {
            if slot.generation == generation && slot.callback.is_none() {
                slot.callback = Some(callback);
            }
        }
        outcome
    }

    fn push(&self, item: Item) -> Result<u64, LoopError> {
        let mut q = lock(&self.queue);
        if q.closed {
            return Err(LoopError::EnqueueOnClosed);
        }
        let seq = q.next_seq;
        q.next_seq += 1;
        let mut item = item;
        if let (Item::Event(incoming), Some(coalesce)) = (&mut item, &self.config.coalesce) {
            incoming.seq = seq;
            let superseded = q.pending.iter().rposition(|env| match &env.item {
                Item::Event(p) => p.source == incoming.source && p.kind == incoming.kind,
                Item::Action(_) => false,
            });
            if let Some(idx) = superseded {
                let drop_it = match &q.pending[idx].item {
                    Item::Event(pending) => coalesce(pending, incoming),
                    Item::Action(_) => false,
                };
                if drop_it {
                    q.pending.remove(idx);
                }
            }
        } else if let Item::Event(e) = &mut item {
            e.seq = seq;
        }
        q.pending.push_back(Envelope { seq, item });
        if q.pending.len() > self.config.warn_threshold && !q.warned {
            q.warned = true;
            log::warn!(
                "event queue holds {} items (warning threshold {})",
                q.pending.len(),
                self.config.warn_threshold
            );
        }
        drop(q);
        self.ready.notify_one();
        Ok(seq)
    }
}

impl LoopHandle {
    /// Appends an event for `(source, kind)` and returns its sequence number.
    pub fn enqueue(
        &self,
        source: impl Into<SourceId>,
        kind: impl Into<Cow<'static, str>>,
        payload: Payload,
    ) -> Result<u64, LoopError> {
        self.shared.push(Item::Event(Event {
            seq: 0,
            source: source.into(),
            kind: kind.into(),
            payload,
        }))
    }

    /// Schedules `action` to run on the loop thread after everything already
    /// queued. Callable from any thread, including the loop thread.
    pub fn post(&self, action: impl FnOnce() + Send + 'static) -> Result<u64, LoopError> {
        self.shared.push(Item::Action(Box::new(action)))
    }

    /// Installs the listener for `(source, kind)`, returning whether one was
    /// replaced.
    pub fn set_listener(
        &self,
        source: impl Into<SourceId>,
        kind: impl Into<Cow<'static, str>>,
        listener: impl FnMut(&Event) + Send + 'static,
    ) -> bool {
        let key = ListenerKey {
            source: source.into(),
            kind: kind.into(),
        };
        let generation = self.shared.listener_generation.fetch_add(1, Ordering::Relaxed) + 1;
        lock(&self.shared.listeners)
            .insert(
                key,
                ListenerSlot {
                    generation,
                    callback: Some(Box::new(listener)),
                },
            )
            .is_some()
    }

    pub fn remove_listener(&self, source: impl Into<SourceId>, kind: impl Into<Cow<'static, str>>) -> bool {
        let key = ListenerKey {
            source: source.into(),
            kind: kind.into(),
        };
        lock(&self.shared.listeners).remove(&key).is_some()
    }

    pub fn has_listener(&self, source: impl Into<SourceId>, kind: impl Into<Cow<'static, str>>) -> bool {
        let key = ListenerKey {
            source: source.into(),
            kind: kind.into(),
        };
        lock(&self.shared.listeners).contains_key(&key)
    }

    /// Thread currently owning the loop (the creator until the loop binds).
    pub fn loop_thread(&self) -> ThreadId {
        lock(&self.shared.owner).thread
    }

    pub fn is_bound(&self) -> bool {
        lock(&self.shared.owner).bound
    }

    pub fn is_loop_thread(&self) -> bool {
        self.loop_thread() == thread::current().id()
    }

    pub fn assert_on_loop(&self) -> Result<(), ConfinementViolation> {
        let owner = self.loop_thread();
        if owner == thread::current().id() {
            Ok(())
        } else {
            Err(ConfinementViolation::current(owner))
        }
    }

    /// Closes the queue and wakes the loop. Further enqueues fail.
    pub fn shutdown(&self) {
        lock(&self.shared.queue).closed = true;
        self.shared.ready.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        lock(&self.shared.queue).closed
    }

    pub fn pending(&self) -> usize {
        lock(&self.shared.queue).pending.len()
    }

    /// Number of items dispatched so far, including ones whose handler failed.
    pub fn dispatched(&self) -> u64 {
        self.shared.dispatched.load(Ordering::Relaxed)
    }

    pub fn failures(&self) -> u64 {
        self.shared.failures.load(Ordering::Relaxed)
    }
}

impl std::fmt::Debug for LoopHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LoopHandle")
            .field("loop_thread", &self.loop_thread())
            .field("pending", &self.pending())
            .finish()
    }
}

/// A loop running on its own thread.
pub struct LoopThread {
    handle: LoopHandle,
    join: JoinHandle<Result<(), LoopError>>,
}

impl LoopThread {
    pub fn handle(&self) -> &LoopHandle {
        &self.handle
    }

    pub fn shutdown_and_join(self) -> Result<(), LoopError> {
        self.handle.shutdown();
        match self.join.join() {
            Ok(r) => r,
            Err(p) => panic::resume_unwind(p),
        }
    }
}
