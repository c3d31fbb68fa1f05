use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};

use super::{Job, TaskError};

/// Pool size used when none is configured.
pub const DEFAULT_POOL_SIZE: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecutorKind {
    Serial,
    Pool(usize),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ExecutorStats {
    pub completed: usize,
    pub running: usize,
    /// Largest number of bodies seen running at once.
    pub high_water: usize,
}

struct Queue {
    jobs: VecDeque<Box<dyn Job>>,
    shut_down: bool,
}

struct Inner {
    queue: Mutex<Queue>,
    available: Condvar,
    running: AtomicUsize,
    high_water: AtomicUsize,
    completed: AtomicUsize,
}

impl Inner {
    fn lock(&self) -> MutexGuard<'_, Queue> {
        self.queue.lock().unwrap_or_else(|p| p.into_inner())
    }
}

/// Worker threads running task bodies from a FIFO queue.
///
/// `Serial` has one worker, so bodies run one at a time in submission order.
/// `Pool(n)` has `n` workers. Dropping the executor shuts it down and joins
/// the workers.
pub struct Executor {
    kind: ExecutorKind,
    inner: Arc<Inner>,
    workers: Mutex<Vec<JoinHandle<()>>>,
}

impl Executor {
    pub fn serial() -> Self {
        Self::new(ExecutorKind::Serial)
    }

    /// # Panics
    ///
    /// If `size` is zero.
    pub fn pool(size: usize) -> Self {
        Self::new(ExecutorKind::Pool(size))
    }

    pub fn new(kind: ExecutorKind) -> Self {
        let (size, prefix) = match kind {
            ExecutorKind::Serial => (1, "task-serial"),
            ExecutorKind::Pool(n) => {
                assert!(n > 0, "pool size must be positive");
                (n, "task-pool")
            }
        };
        let inner = Arc::new(Inner {
            queue: Mutex::new(Queue {
                jobs: VecDeque::new(),
                shut_down: false,
            }),
            available: Condvar::new(),
            running: AtomicUsize::new(0),
            high_water: AtomicUsize::new(0),
            completed: AtomicUsize::new(0),
        });
        let workers = (0..size)
            .map(|i| {
                let inner = inner.clone();
                thread::Builder::new()
                    .name(format!("{prefix}-{i}"))
                    .spawn(move || worker(&inner))
                    .expect("failed to spawn executor worker")
            })
            .collect();
        Executor {
            kind,
            inner,
            workers: Mutex::new(workers),
        }
    }

    pub fn kind(&self) -> ExecutorKind {
        self.kind
    }

    pub fn is_shut_down(&self) -> bool {
        self.inner.lock().shut_down
    }

    pub fn queued(&self) -> usize {
        self.inner.lock().jobs.len()
    }

    pub fn stats(&self) -> ExecutorStats {
        ExecutorStats {
            completed: self.inner.completed.load(Ordering::SeqCst),
            running: self.inner.running.load(Ordering::SeqCst),
            high_water: self.inner.high_water.load(Ordering::SeqCst),
        }
    }

    pub(crate) fn submit(&self, job: Box<dyn Job>) -> Result<(), TaskError> {
        let mut q = self.inner.lock();
        if q.shut_down {
            return Err(TaskError::ExecutorShutDown);
        }
        q.jobs.push_back(job);
        drop(q);
        self.inner.available.notify_one();
        Ok(())
    }

    /// Stops accepting work. Queued tasks are cancelled without running;
    /// bodies already running finish normally. Does not wait for them.
    pub fn shutdown(&self) {
        let pending: Vec<Box<dyn Job>> = {
            let mut q = self.inner.lock();
            q.shut_down = true;
            q.jobs.drain(..).collect()
        };
        self.inner.available.notify_all();
        for job in pending {
            job.abort();
        }
    }

    /// Shuts down and waits for the workers to exit.
    pub fn shutdown_and_join(&self) {
        self.shutdown();
        let workers = std::mem::take(&mut *self.workers.lock().unwrap_or_else(|p| p.into_inner()));
        let me = thread::current().id();
        for w in workers {
            if w.thread().id() != me {
                let _ = w.join();
            }
        }
    }
}

impl Drop for Executor {
    fn drop(&mut self) {
        self.shutdown_and_join();
    }
}

fn worker(inner: &Inner) {
    loop {
        let job = {
            let mut q = inner.lock();
            loop {
                if let Some(job) = q.jobs.pop_front() {
                    break job;
                }
                if q.shut_down {
                    return;
                }
                q = inner.available.wait(q).unwrap_or_else(|p| p.into_inner());
            }
        };
        let now = inner.running.fetch_add(1, Ordering::SeqCst) + 1;
        inner.high_water.fetch_max(now, Ordering::SeqCst);
        job.run();
        inner.running.fetch_sub(1, Ordering::SeqCst);
        inner.completed.fetch_add(1, Ordering::SeqCst);
    }
}
