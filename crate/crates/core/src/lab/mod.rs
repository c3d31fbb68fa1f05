//! Thread-safety fundamentals: the lost-update race on a shared counter, the
//! locked fix, a harness that runs an action on several threads at once, and
//! an exhaustive enumerator of two-thread fetch/set interleavings.

mod interleave;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::{Arc, Barrier, Mutex};
use std::thread;
use std::time::Duration;

pub use interleave::{enumerate_interleavings, InterleavingResult, Step, StepLabel, StepProgram, MAX_COMBINED_STEPS};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum LabError {
    #[error("thread count must be at least 1")]
    NoThreads,
    #[error("interrupted during join: {0}")]
    JoinInterrupted(String),
    #[error("set without a preceding fetch at step {0}")]
    SetBeforeFetch(usize),
    #[error("programs have {0} steps combined; at most {MAX_COMBINED_STEPS} can be enumerated")]
    TooManySteps(usize),
}

/// What runs between the fetch and the set of an unsafe increment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DelayHook {
    None,
    /// Give up the rest of the time slice, like `Thread.sleep(0)`.
    #[default]
    Yield,
    Sleep(Duration),
}

impl DelayHook {
    fn pause(self) {
        match self {
            DelayHook::None => {}
            DelayHook::Yield => thread::yield_now(),
            DelayHook::Sleep(d) => thread::sleep(d),
        }
    }
}

/// An integer shared between threads, with a racy and a locked increment.
///
/// The value is an atomic so the racy variant is a genuine read-then-write
/// race without undefined behavior: fetch and set are each atomic, their
/// combination is not.
#[derive(Debug, Default)]
pub struct SharedCounter {
    shared: AtomicI64,
    lock: Mutex<()>,
    delay: DelayHook,
}

impl SharedCounter {
    pub fn new(delay: DelayHook) -> Self {
        SharedCounter {
            shared: AtomicI64::new(0),
            lock: Mutex::new(()),
            delay,
        }
    }

    pub fn get(&self) -> i64 {
        self.shared.load(Ordering::SeqCst)
    }

    pub fn increment_unsafe(&self) {
        let local = self.shared.load(Ordering::SeqCst);
        self.delay.pause();
        self.shared.store(local + 1, Ordering::SeqCst);
    }

    pub fn increment_safe(&self) {
        let _held = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        let local = self.shared.load(Ordering::SeqCst);
        self.delay.pause();
        self.shared.store(local + 1, Ordering::SeqCst);
    }
}

/// Runs `action` once on each of `thread_count` fresh threads and joins them
/// all before returning. Threads wait at a common start gate so their bodies
/// overlap as much as the scheduler allows.
pub fn run_concurrently<F>(action: F, thread_count: usize) -> Result<(), LabError>
where
    F: Fn() + Send + Sync + 'static,
{
    if thread_count == 0 {
        return Err(LabError::NoThreads);
    }
    let action = Arc::new(action);
    let gate = Arc::new(Barrier::new(thread_count));
    let threads: Vec<_> = (0..thread_count)
        .map(|_| {
            let action = action.clone();
            let gate = gate.clone();
            thread::spawn(move || {
                gate.wait();
                action();
            })
        })
        .collect();
    let mut failure = None;
    for t in threads {
        if let Err(p) = t.join() {
            failure.get_or_insert_with(|| crate::reactor::panic_message(p));
        }
    }
    match failure {
        Some(msg) => Err(LabError::JoinInterrupted(msg)),
        None => Ok(()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IncrementKind {
    Unsafe,
    Safe,
}

/// Repeats a fresh `threads`-way concurrent increment `trials` times and
/// counts how often each final delta occurred.
pub fn race_histogram(
    kind: IncrementKind,
    threads: usize,
    trials: usize,
    delay: DelayHook,
) -> Result<BTreeMap<i64, usize>, LabError> {
    let mut histogram = BTreeMap::new();
    for _ in 0..trials {
        let counter = Arc::new(SharedCounter::new(delay));
        let c = counter.clone();
        let before = counter.get();
        match kind {
            IncrementKind::Unsafe => run_concurrently(move || c.increment_unsafe(), threads)?,
            IncrementKind::Safe => run_concurrently(move || c.increment_safe(), threads)?,
        }
        *histogram.entry(counter.get() - before).or_insert(0) += 1;
    }
    Ok(histogram)
}
