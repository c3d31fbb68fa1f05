//! Asynchronous tasks controlled from the loop thread.
//!
//! An [`AsyncTaskSpec`] bundles a background body with four loop-side
//! callbacks. Running it goes through a fixed lifecycle:
//!
//! 1. `on_pre` runs synchronously on the loop thread inside
//!    [`AsyncTask::execute_on`], before the body is handed to the executor.
//! 2. The body runs on an executor worker. It may call
//!    [`TaskContext::publish_progress`] and poll [`TaskContext::is_cancelled`].
//! 3. Every publication is posted to the loop and reaches `on_progress` in
//!    publication order.
//! 4. Exactly one terminal callback runs on the loop: `on_post(result)` if the
//!    task completed uncancelled, otherwise `on_cancelled(result)`.
//!
//! Cancellation is cooperative: [`TaskHandle::cancel`] only raises a flag.
//!
//! [`run_chunked`] is the single-threaded alternative: the work is split into
//! short units, each dispatched as its own loop event.

mod chunked;
mod executor;

use std::fmt;
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

pub use chunked::{run_chunked, Step, WorkChunker, DEFAULT_CHUNK_BUDGET};
pub use executor::{Executor, ExecutorKind, ExecutorStats, DEFAULT_POOL_SIZE};

use crate::reactor::{panic_message, ConfinementViolation, LoopError, LoopHandle};

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("tasks must be started from the loop thread: {0}")]
    NotOnLoop(#[from] ConfinementViolation),
    #[error("task was already executed")]
    AlreadyExecuted,
    #[error("executor is shut down")]
    ExecutorShutDown,
    #[error(transparent)]
    Loop(#[from] LoopError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskState {
    Pending,
    Running,
    Done,
    Cancelled,
}

impl TaskState {
    pub fn is_terminal(self) -> bool {
        matches!(self, TaskState::Done | TaskState::Cancelled)
    }
}

type Hook = Box<dyn FnOnce() + Send + 'static>;

struct Lifecycle {
    state: TaskState,
    // Posts `on_cancelled(None)` when a task is cancelled before its body starts.
    cancel_before_start: Option<Hook>,
}

struct TaskShared {
    id: u64,
    lifecycle: Mutex<Lifecycle>,
    changed: Condvar,
    cancel_requested: AtomicBool,
}

static NEXT_TASK_ID: AtomicU64 = AtomicU64::new(1);

/// Shared view of one task's state and its cancellation flag.
#[derive(Clone)]
pub struct TaskHandle {
    shared: Arc<TaskShared>,
}

impl TaskHandle {
    pub(crate) fn new(state: TaskState) -> Self {
        TaskHandle {
            shared: Arc::new(TaskShared {
                id: NEXT_TASK_ID.fetch_add(1, Ordering::Relaxed),
                lifecycle: Mutex::new(Lifecycle {
                    state,
                    cancel_before_start: None,
                }),
                changed: Condvar::new(),
                cancel_requested: AtomicBool::new(false),
            }),
        }
    }

    fn lifecycle(&self) -> MutexGuard<'_, Lifecycle> {
        self.shared.lifecycle.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn id(&self) -> u64 {
        self.shared.id
    }

    pub fn state(&self) -> TaskState {
        self.lifecycle().state
    }

    pub fn is_cancelled(&self) -> bool {
        self.shared.cancel_requested.load(Ordering::Acquire)
    }

    /// Requests cancellation. Returns `false` once the task is already
    /// terminal. A task whose body has not started goes straight to
    /// `Cancelled` and its body never runs.
    pub fn cancel(&self) -> bool {
        let hook = {
            let mut lc = self.lifecycle();
            match lc.state {
                TaskState::Done | TaskState::Cancelled => return false,
                TaskState::Running => {
                    self.shared.cancel_requested.store(true, Ordering::Release);
                    return true;
                }
                TaskState::Pending => {
                    self.shared.cancel_requested.store(true, Ordering::Release);
                    lc.state = TaskState::Cancelled;
                    lc.cancel_before_start.take()
                }
            }
        };
        // Waiters wake only after the terminal callback has been posted.
        let lc = self.lifecycle();
        if let Some(hook) = hook {
            hook();
        }
        self.shared.changed.notify_all();
        drop(lc);
        true
    }

    /// Blocks until the task reaches a terminal state or the timeout passes.
    pub fn wait(&self, timeout: Duration) -> Option<TaskState> {
        let deadline = Instant::now() + timeout;
        let mut lc = self.lifecycle();
        while !lc.state.is_terminal() {
            let now = Instant::now();
            if now >= deadline {
                return None;
            }
            lc = self
                .shared
                .changed
                .wait_timeout(lc, deadline - now)
                .unwrap_or_else(|p| p.into_inner())
                .0;
        }
        Some(lc.state)
    }

    /// Pending → Running, unless the task was cancelled while queued.
    pub(crate) fn begin(&self) -> bool {
        let mut lc = self.lifecycle();
        if lc.state != TaskState::Pending {
            return false;
        }
        lc.state = TaskState::Running;
        lc.cancel_before_start = None;
        self.shared.changed.notify_all();
        true
    }

    /// Running → Done or Cancelled, decided atomically against `cancel`.
    /// `post_terminal` runs before waiters are woken.
    pub(crate) fn finish(&self, post_terminal: impl FnOnce(TaskState)) -> TaskState {
        let mut lc = self.lifecycle();
        lc.state = if self.is_cancelled() {
            TaskState::Cancelled
        } else {
            TaskState::Done
        };
        post_terminal(lc.state);
        self.shared.changed.notify_all();
        lc.state
    }

    fn arm(&self, hook: Hook) {
        self.lifecycle().cancel_before_start = Some(hook);
    }
}

impl fmt::Debug for TaskHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TaskHandle")
            .field("id", &self.id())
            .field("state", &self.state())
            .field("cancel_requested", &self.is_cancelled())
            .finish()
    }
}

type Body<P, G, R> = Box<dyn FnOnce(P, &TaskContext<G>) -> R + Send + 'static>;

struct Callbacks<G, R> {
    on_pre: Option<Box<dyn FnOnce() + Send>>,
    on_progress: Option<Box<dyn FnMut(G) + Send>>,
    on_post: Option<Box<dyn FnOnce(R) + Send>>,
    on_cancelled: Option<Box<dyn FnOnce(Option<R>) + Send>>,
}

/// Background body plus the loop-side lifecycle callbacks.
///
/// `P` is the parameter type, `G` the progress type and `R` the result type.
pub struct AsyncTaskSpec<P, G, R> {
    body: Body<P, G, R>,
    callbacks: Callbacks<G, R>,
    coalesce_progress: bool,
}

impl<P, G, R> AsyncTaskSpec<P, G, R>
where
    P: Send + 'static,
    G: Send + 'static,
    R: Send + 'static,
{
    pub fn new(body: impl FnOnce(P, &TaskContext<G>) -> R + Send + 'static) -> Self {
        AsyncTaskSpec {
            body: Box::new(body),
            callbacks: Callbacks {
                on_pre: None,
                on_progress: None,
                on_post: None,
                on_cancelled: None,
            },
            coalesce_progress: false,
        }
    }

    pub fn on_pre(mut self, f: impl FnOnce() + Send + 'static) -> Self {
        self.callbacks.on_pre = Some(Box::new(f));
        self
    }

    pub fn on_progress(mut self, f: impl FnMut(G) + Send + 'static) -> Self {
        self.callbacks.on_progress = Some(Box::new(f));
        self
    }

    pub fn on_post(mut self, f: impl FnOnce(R) + Send + 'static) -> Self {
        self.callbacks.on_post = Some(Box::new(f));
        self
    }

    pub fn on_cancelled(mut self, f: impl FnOnce(Option<R>) + Send + 'static) -> Self {
        self.callbacks.on_cancelled = Some(Box::new(f));
        self
    }

    /// When set, progress values still waiting on the loop are replaced by
    /// newer ones so only the latest is delivered. Off by default.
    pub fn coalesce_progress(mut self, on: bool) -> Self {
        self.coalesce_progress = on;
        self
    }
}

type ProgressFn<G> = Box<dyn FnMut(G) + Send>;

/// What the background body sees of its task.
pub struct TaskContext<G> {
    handle: TaskHandle,
    inner: Arc<ContextInner<G>>,
}

struct ContextInner<G> {
    loop_handle: LoopHandle,
    on_progress: Mutex<Option<ProgressFn<G>>>,
    coalesce: Option<Mutex<CoalesceSlot<G>>>,
}

struct CoalesceSlot<G> {
    latest: Option<G>,
    scheduled: bool,
}

impl<G: Send + 'static> TaskContext<G> {
    pub fn is_cancelled(&self) -> bool {
        self.handle.is_cancelled()
    }

    pub fn handle(&self) -> &TaskHandle {
        &self.handle
    }

    /// Posts `value` to the loop for `on_progress`. Dropped once cancellation
    /// has been requested.
    pub fn publish_progress(&self, value: G) {
        if self.is_cancelled() {
            return;
        }
        let inner = self.inner.clone();
        let post = match &self.inner.coalesce {
            None => self.inner.loop_handle.post(move || inner.deliver(value)),
            Some(slot) => {
                let mut slot = slot.lock().unwrap_or_else(|p| p.into_inner());
                slot.latest = Some(value);
                if slot.scheduled {
                    return;
                }
                slot.scheduled = true;
                self.inner.loop_handle.post(move || {
                    let latest = {
                        let mut slot = inner.coalesce.as_ref().expect("coalescing").lock().unwrap_or_else(|p| p.into_inner());
                        slot.scheduled = false;
                        slot.latest.take()
                    };
                    if let Some(v) = latest {
                        inner.deliver(v);
                    }
                })
            }
        };
        if let Err(e) = post {
            log::warn!("progress for task {} dropped: {e}", self.handle.id());
        }
    }
}

impl<G> ContextInner<G> {
    fn deliver(&self, value: G) {
        let mut slot = self.on_progress.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(f) = slot.as_mut() {
            f(value);
        }
    }
}

/// One executable instance of a spec. Can be executed once.
pub struct AsyncTask<P, G, R> {
    spec: Option<AsyncTaskSpec<P, G, R>>,
    handle: TaskHandle,
}

impl<P, G, R> AsyncTask<P, G, R>
where
    P: Send + 'static,
    G: Send + 'static,
    R: Send + 'static,
{
    pub fn new(spec: AsyncTaskSpec<P, G, R>) -> Self {
        AsyncTask {
            spec: Some(spec),
            handle: TaskHandle::new(TaskState::Pending),
        }
    }

    pub fn handle(&self) -> TaskHandle {
        self.handle.clone()
    }

    /// Runs `on_pre` here on the loop thread, then queues the body on
    /// `executor`.
    pub fn execute_on(&mut self, executor: &Executor, params: P, loop_handle: &LoopHandle) -> Result<TaskHandle, TaskError> {
        loop_handle.assert_on_loop()?;
        if executor.is_shut_down() {
            return Err(TaskError::ExecutorShutDown);
        }
        let spec = self.spec.take().ok_or(TaskError::AlreadyExecuted)?;
        let AsyncTaskSpec {
            body,
            mut callbacks,
            coalesce_progress,
        } = spec;
        let handle = self.handle.clone();

        let on_pre = callbacks.on_pre.take();
        let inner = Arc::new(ContextInner {
            loop_handle: loop_handle.clone(),
            on_progress: Mutex::new(callbacks.on_progress.take()),
            coalesce: coalesce_progress.then(|| {
                Mutex::new(CoalesceSlot {
                    latest: None,
                    scheduled: false,
                })
            }),
        });
        let terminals = Arc::new(Mutex::new(Terminals {
            on_post: callbacks.on_post.take(),
            on_cancelled: callbacks.on_cancelled.take(),
        }));

        if handle.state() == TaskState::Cancelled {
            post_cancelled::<R>(loop_handle, &terminals, None);
            return Ok(handle);
        }

        if let Some(f) = on_pre {
            f();
        }

        {
            let (lh, t) = (loop_handle.clone(), terminals.clone());
            handle.arm(Box::new(move || post_cancelled::<R>(&lh, &t, None)));
        }

        let ctx = TaskContext {
            handle: handle.clone(),
            inner,
        };
        let job = Box::new(TaskJob {
            params,
            body,
            ctx,
            terminals,
        });
        if executor.submit(job).is_err() {
            handle.cancel();
        }
        Ok(handle)
    }
}

struct Terminals<R> {
    on_post: Option<Box<dyn FnOnce(R) + Send>>,
    on_cancelled: Option<Box<dyn FnOnce(Option<R>) + Send>>,
}

fn post_cancelled<R: Send + 'static>(loop_handle: &LoopHandle, terminals: &Arc<Mutex<Terminals<R>>>, result: Option<R>) {
    let t = terminals.clone();
    let posted = loop_handle.post(move || {
        let f = t.lock().unwrap_or_else(|p| p.into_inner()).on_cancelled.take();
        if let Some(f) = f {
            f(result);
        }
    });
    if let Err(e) = posted {
        log::warn!("on_cancelled could not be scheduled: {e}");
    }
}

fn post_done<R: Send + 'static>(loop_handle: &LoopHandle, terminals: &Arc<Mutex<Terminals<R>>>, result: R) {
    let t = terminals.clone();
    let posted = loop_handle.post(move || {
        let f = t.lock().unwrap_or_else(|p| p.into_inner()).on_post.take();
        if let Some(f) = f {
            f(result);
        }
    });
    if let Err(e) = posted {
        log::warn!("on_post could not be scheduled: {e}");
    }
}

/// A unit of executor work.
pub(crate) trait Job: Send {
    fn run(self: Box<Self>);
    /// Called instead of `run` when the executor shuts down first.
    fn abort(self: Box<Self>);
}

struct TaskJob<P, G, R> {
    params: P,
    body: Body<P, G, R>,
    ctx: TaskContext<G>,
    terminals: Arc<Mutex<Terminals<R>>>,
}

impl<P, G, R> Job for TaskJob<P, G, R>
where
    P: Send + 'static,
    G: Send + 'static,
    R: Send + 'static,
{
    fn run(self: Box<Self>) {
        let TaskJob {
            params,
            body,
            ctx,
            terminals,
        } = *self;
        if !ctx.handle.begin() {
            return;
        }
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| body(params, &ctx)));
        let lh = &ctx.inner.loop_handle;
        ctx.handle.finish(|state| match (outcome, state) {
            (Ok(r), TaskState::Done) => post_done(lh, &terminals, r),
            (Ok(r), _) => post_cancelled(lh, &terminals, Some(r)),
            (Err(p), _) => {
                log::error!("task {} body panicked: {}", ctx.handle.id(), panic_message(p));
                post_cancelled(lh, &terminals, None);
            }
        });
    }

    fn abort(self: Box<Self>) {
        self.ctx.handle.cancel();
    }
}

/// Convenience for `AsyncTask::new(spec).execute_on(...)`.
pub fn execute_on<P, G, R>(
    spec: AsyncTaskSpec<P, G, R>,
    executor: &Executor,
    params: P,
    loop_handle: &LoopHandle,
) -> Result<TaskHandle, TaskError>
where
    P: Send + 'static,
    G: Send + 'static,
    R: Send + 'static,
{
    AsyncTask::new(spec).execute_on(executor, params, loop_handle)
}
