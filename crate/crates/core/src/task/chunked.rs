use std::sync::{Arc, Mutex};

use super::{TaskError, TaskHandle, TaskState};
use crate::reactor::LoopHandle;

/// Inner iterations per unit when none is configured.
pub const DEFAULT_CHUNK_BUDGET: usize = 1000;

/// Outcome of one unit of chunked work.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step<R> {
    Continue,
    Done(R),
}

type Unit<R> = Box<dyn FnMut(usize) -> Step<R> + Send>;

/// A long computation split into short units that each run as their own loop
/// event. The unit receives the iteration budget it may spend.
pub struct WorkChunker<R> {
    unit: Unit<R>,
    budget: usize,
    on_done: Option<Box<dyn FnOnce(R) + Send>>,
    on_cancelled: Option<Box<dyn FnOnce() + Send>>,
}

impl<R: Send + 'static> WorkChunker<R> {
    pub fn new(unit: impl FnMut(usize) -> Step<R> + Send + 'static) -> Self {
        WorkChunker {
            unit: Box::new(unit),
            budget: DEFAULT_CHUNK_BUDGET,
            on_done: None,
            on_cancelled: None,
        }
    }

    /// # Panics
    ///
    /// If `budget` is zero.
    pub fn budget(mut self, budget: usize) -> Self {
        assert!(budget > 0, "chunk budget must be positive");
        self.budget = budget;
        self
    }

    pub fn on_done(mut self, f: impl FnOnce(R) + Send + 'static) -> Self {
        self.on_done = Some(Box::new(f));
        self
    }

    pub fn on_cancelled(mut self, f: impl FnOnce() + Send + 'static) -> Self {
        self.on_cancelled = Some(Box::new(f));
        self
    }
}

/// Enqueues the first unit. Each unit checks for cancellation, runs, then
/// posts either its successor or the terminal callback.
pub fn run_chunked<R: Send + 'static>(chunker: WorkChunker<R>, loop_handle: &LoopHandle) -> Result<TaskHandle, TaskError> {
    loop_handle.assert_on_loop()?;
    let handle = TaskHandle::new(TaskState::Running);
    let job = Arc::new(Mutex::new(chunker));
    schedule(job, handle.clone(), loop_handle.clone())?;
    Ok(handle)
}

fn schedule<R: Send + 'static>(
    job: Arc<Mutex<WorkChunker<R>>>,
    handle: TaskHandle,
    loop_handle: LoopHandle,
) -> Result<u64, TaskError> {
    let lh = loop_handle.clone();
    let h = handle.clone();
    loop_handle
        .post(move || run_unit(job, h, lh))
        .map_err(|e| {
            handle.cancel();
            handle.finish(|_| ());
            TaskError::from(e)
        })
}

fn run_unit<R: Send + 'static>(job: Arc<Mutex<WorkChunker<R>>>, handle: TaskHandle, loop_handle: LoopHandle) {
    let mut chunker = job.lock().unwrap_or_else(|p| p.into_inner());
    if handle.is_cancelled() {
        handle.finish(|_| ());
        if let Some(f) = chunker.on_cancelled.take() {
            f();
        }
        return;
    }
    let budget = chunker.budget;
    match (chunker.unit)(budget) {
        Step::Continue => {
            drop(chunker);
            if let Err(e) = schedule(job, handle.clone(), loop_handle) {
                log::warn!("chunked task {} stopped: {e}", handle.id());
            }
        }
        Step::Done(r) => {
            handle.finish(|_| ());
            if let Some(f) = chunker.on_done.take() {
                f(r);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::reactor::{EventLoop, Payload};

    fn counting_job(units: usize, ran: &Arc<AtomicUsize>) -> WorkChunker<usize> {
        let ran = ran.clone();
        WorkChunker::new(move |_| {
            let n = ran.fetch_add(1, Ordering::SeqCst) + 1;
            if n == units {
                Step::Done(n)
            } else {
                Step::Continue
            }
        })
    }

    #[test]
    fn ten_units_then_terminal() {
        let ev = EventLoop::new();
        let ran = Arc::new(AtomicUsize::new(0));
        let result = Arc::new(Mutex::new(None));
        let r = result.clone();
        let h = run_chunked(
            counting_job(10, &ran).on_done(move |n| *r.lock().unwrap() = Some(n)),
            &ev.handle(),
        )
        .unwrap();
        assert_eq!(ev.run_until_idle().unwrap(), 10);
        assert_eq!(ran.load(Ordering::SeqCst), 10);
        assert_eq!(*result.lock().unwrap(), Some(10));
        assert_eq!(h.state(), TaskState::Done);
    }

    #[test]
    fn cancel_after_third_unit_stops_the_rest() {
        let ev = EventLoop::new();
        let lh = ev.handle();
        let ran = Arc::new(AtomicUsize::new(0));
        let cancelled = Arc::new(AtomicUsize::new(0));
        let handle_slot: Arc<Mutex<Option<TaskHandle>>> = Arc::default();

        let slot = handle_slot.clone();
        lh.set_listener("test", "cancel", move |_| {
            slot.lock().unwrap().as_ref().unwrap().cancel();
        });

        let (r, lh2, c) = (ran.clone(), lh.clone(), cancelled.clone());
        let chunker = WorkChunker::new(move |_| {
            if r.fetch_add(1, Ordering::SeqCst) + 1 == 3 {
                lh2.enqueue("test", "cancel", Payload::none()).unwrap();
            }
            Step::<()>::Continue
        })
        .on_cancelled(move || {
            c.fetch_add(1, Ordering::SeqCst);
        });
        *handle_slot.lock().unwrap() = Some(run_chunked(chunker, &lh).unwrap());
        ev.run_until_idle().unwrap();
        assert_eq!(ran.load(Ordering::SeqCst), 3);
        assert_eq!(cancelled.load(Ordering::SeqCst), 1);
        assert_eq!(handle_slot.lock().unwrap().as_ref().unwrap().state(), TaskState::Cancelled);
    }

    #[test]
    fn probe_event_interleaves_with_units() {
        let ev = EventLoop::new();
        let lh = ev.handle();
        let order = Arc::new(Mutex::new(Vec::new()));
        let o = order.clone();
        lh.set_listener("probe", "ping", move |_| o.lock().unwrap().push("probe".to_owned()));
        let (o, mut n) = (order.clone(), 0);
        run_chunked(
            WorkChunker::new(move |_| {
                n += 1;
                o.lock().unwrap().push(format!("unit{n}"));
                if n == 5 {
                    Step::Done(())
                } else {
                    Step::Continue
                }
            }),
            &lh,
        )
        .unwrap();
        ev.run_one().unwrap();
        lh.enqueue("probe", "ping", Payload::none()).unwrap();
        ev.run_until_idle().unwrap();
        let order = order.lock().unwrap();
        let probe_at = order.iter().position(|s| s == "probe").unwrap();
        assert!(probe_at < order.len() - 1, "{order:?}");
        assert_eq!(probe_at, 2);
    }

    #[test]
    fn unit_receives_configured_budget() {
        let ev = EventLoop::new();
        let seen = Arc::new(AtomicUsize::new(0));
        let s = seen.clone();
        run_chunked(
            WorkChunker::new(move |b| {
                s.store(b, Ordering::SeqCst);
                Step::Done(())
            })
            .budget(37),
            &ev.handle(),
        )
        .unwrap();
        ev.run_until_idle().unwrap();
        assert_eq!(seen.load(Ordering::SeqCst), 37);
    }
}
