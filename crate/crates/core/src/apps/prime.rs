//! Brute-force prime checker with progress and cancellation, runnable in the
//! foreground, as chunked loop work, or as an asynchronous task.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use crate::reactor::{ConfinedCell, LoopHandle};
use crate::task::{self, AsyncTaskSpec, Executor, Step, TaskError, TaskHandle, TaskState, WorkChunker};

pub const DEFAULT_SLOTS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PrimeOutcome {
    Prime,
    NotPrime,
    Cancelled,
}

/// One primality check, resumable in slices.
///
/// Divisors `k = 2..=n/2` are tried in order. Before each one the cancel
/// probe is consulted. After each non-dividing `k` the percentage
/// `k * 100 / half` is published, but only when it differs from the last one
/// published.
#[derive(Clone, Debug)]
pub struct PrimeCheck {
    n: u64,
    half: u64,
    next_k: u64,
    iterations: u64,
    last_percent: Option<u8>,
    outcome: Option<PrimeOutcome>,
}

impl PrimeCheck {
    pub fn new(n: u64) -> Self {
        PrimeCheck {
            n,
            half: n / 2,
            next_k: 2,
            iterations: 0,
            last_percent: None,
            outcome: (n < 2).then_some(PrimeOutcome::NotPrime),
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn half(&self) -> u64 {
        self.half
    }

    /// Divisors tried so far.
    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    pub fn last_percent(&self) -> Option<u8> {
        self.last_percent
    }

    pub fn outcome(&self) -> Option<PrimeOutcome> {
        self.outcome
    }

    /// Tries at most `budget` divisors. Returns the outcome once decided.
    pub fn step(
        &mut self,
        budget: u64,
        is_cancelled: &mut dyn FnMut() -> bool,
        progress: &mut dyn FnMut(u8),
    ) -> Option<PrimeOutcome> {
        if self.outcome.is_some() {
            return self.outcome;
        }
        let mut spent = 0;
        while self.next_k <= self.half {
            if spent == budget {
                return None;
            }
            if is_cancelled() {
                self.outcome = Some(PrimeOutcome::Cancelled);
                return self.outcome;
            }
            let k = self.next_k;
            self.iterations += 1;
            if self.n.is_multiple_of(k) {
                self.outcome = Some(PrimeOutcome::NotPrime);
                return self.outcome;
            }
            let percent = (u128::from(k) * 100 / u128::from(self.half)) as u8;
            if self.last_percent != Some(percent) {
                self.last_percent = Some(percent);
                progress(percent);
            }
            self.next_k += 1;
            spent += 1;
        }
        self.outcome = Some(PrimeOutcome::Prime);
        self.outcome
    }

    pub fn run(&mut self, is_cancelled: &mut dyn FnMut() -> bool, progress: &mut dyn FnMut(u8)) -> PrimeOutcome {
        loop {
            if let Some(outcome) = self.step(u64::MAX, is_cancelled, progress) {
                return outcome;
            }
        }
    }
}

pub fn is_prime(n: u64, mut is_cancelled: impl FnMut() -> bool, mut progress: impl FnMut(u8)) -> PrimeOutcome {
    PrimeCheck::new(n).run(&mut is_cancelled, &mut progress)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PrimeRunMode {
    /// Inline in the current loop event.
    Foreground,
    /// One loop event per slice of the given number of divisors.
    Chunked(usize),
    /// On the app's executor.
    Async,
}

impl PrimeRunMode {
    pub fn name(self) -> &'static str {
        match self {
            PrimeRunMode::Foreground => "foreground",
            PrimeRunMode::Chunked(_) => "chunked",
            PrimeRunMode::Async => "async",
        }
    }

    /// Parses `foreground`, `chunked` or `async`; chunked uses `chunk_budget`.
    pub fn parse(s: &str, chunk_budget: usize) -> Result<Self, PrimeError> {
        match s.trim() {
            "foreground" => Ok(PrimeRunMode::Foreground),
            "chunked" => Ok(PrimeRunMode::Chunked(chunk_budget)),
            "async" => Ok(PrimeRunMode::Async),
            other => Err(PrimeError::InvalidMode(other.to_owned())),
        }
    }
}

impl fmt::Display for PrimeRunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PrimeError {
    #[error("invalid number {0:?}")]
    InvalidNumber(String),
    #[error("invalid mode {0:?}")]
    InvalidMode(String),
    #[error("all {0} slots are busy")]
    AllSlotsBusy(usize),
    #[error(transparent)]
    Task(#[from] TaskError),
}

pub fn parse_number(input: &str) -> Result<u64, PrimeError> {
    input
        .trim()
        .parse::<u64>()
        .map_err(|_| PrimeError::InvalidNumber(input.to_owned()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum SlotStatus {
    #[default]
    Neutral,
    Checking,
    Prime,
    Composite,
}

impl SlotStatus {
    pub fn label(self) -> &'static str {
        match self {
            SlotStatus::Neutral => "neutral",
            SlotStatus::Checking => "checking",
            SlotStatus::Prime => "prime",
            SlotStatus::Composite => "composite",
        }
    }
}

impl fmt::Display for SlotStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SlotStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [SlotStatus::Neutral, SlotStatus::Checking, SlotStatus::Prime, SlotStatus::Composite]
            .into_iter()
            .find(|st| st.label() == s)
            .ok_or_else(|| format!("unknown slot status {s:?}"))
    }
}

/// One progress bar plus its input mark.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SlotState {
    pub n: Option<u64>,
    pub percent: u8,
    pub status: SlotStatus,
    /// Bumped for each check placed in the slot; updates from older checks are dropped.
    pub run: u64,
}

/// Loop-side effects of one check.
pub trait SlotView: Send + Sync + 'static {
    fn checking(&self, n: u64);
    fn progress(&self, percent: u8);
    fn verdict(&self, prime: bool);
    fn neutral(&self);
}

/// Task spec wiring an asynchronous check to `view`.
pub fn lifecycle_bindings<V: SlotView>(n: u64, view: V) -> AsyncTaskSpec<u64, u8, PrimeOutcome> {
    let view = Arc::new(view);
    let (pre, prog, post, cancelled) = (view.clone(), view.clone(), view.clone(), view);
    AsyncTaskSpec::new(|n: u64, ctx: &task::TaskContext<u8>| {
        PrimeCheck::new(n).run(&mut || ctx.is_cancelled(), &mut |p| ctx.publish_progress(p))
    })
    .on_pre(move || pre.checking(n))
    .on_progress(move |p| prog.progress(p))
    .on_post(move |outcome| match outcome {
        PrimeOutcome::Prime => post.verdict(true),
        PrimeOutcome::NotPrime => post.verdict(false),
        PrimeOutcome::Cancelled => post.neutral(),
    })
    .on_cancelled(move |_| cancelled.neutral())
}

type BoardSink = Box<dyn FnMut(&[SlotState]) + Send>;

#[derive(Clone)]
struct BoardSlot {
    board: Arc<ConfinedCell<Vec<SlotState>>>,
    sink: Arc<Mutex<BoardSink>>,
    index: usize,
    run: u64,
}

impl BoardSlot {
    fn update(&self, f: impl FnOnce(&mut SlotState)) {
        let snapshot = self
            .board
            .with_mut(|slots| {
                let slot = &mut slots[self.index];
                if slot.run != self.run {
                    return None;
                }
                f(slot);
                Some(slots.clone())
            })
            .expect("slot updates run on the loop thread");
        if let Some(slots) = snapshot {
            (self.sink.lock().unwrap_or_else(|p| p.into_inner()))(&slots);
        }
    }
}

impl SlotView for BoardSlot {
    fn checking(&self, n: u64) {
        self.update(|s| {
            s.n = Some(n);
            s.percent = 0;
            s.status = SlotStatus::Checking;
        });
    }

    fn progress(&self, percent: u8) {
        self.update(|s| s.percent = percent);
    }

    fn verdict(&self, prime: bool) {
        self.update(|s| s.status = if prime { SlotStatus::Prime } else { SlotStatus::Composite });
    }

    fn neutral(&self) {
        self.update(|s| s.status = SlotStatus::Neutral);
    }
}

/// The prime checker's controller. Lives on the loop thread.
pub struct PrimeApp {
    loop_handle: LoopHandle,
    executor: Arc<Executor>,
    chunk_budget: usize,
    board: Arc<ConfinedCell<Vec<SlotState>>>,
    sink: Arc<Mutex<BoardSink>>,
    active: Vec<Option<TaskHandle>>,
}

/// Where a check was placed and how to cancel it.
#[derive(Clone, Debug)]
pub struct PrimeRun {
    pub slot: usize,
    pub handle: TaskHandle,
}

impl PrimeApp {
    /// # Panics
    ///
    /// If `slots` is zero.
    pub fn new(
        loop_handle: &LoopHandle,
        executor: Arc<Executor>,
        slots: usize,
        chunk_budget: usize,
        sink: impl FnMut(&[SlotState]) + Send + 'static,
    ) -> Self {
        assert!(slots > 0, "need at least one slot");
        PrimeApp {
            loop_handle: loop_handle.clone(),
            executor,
            chunk_budget,
            board: Arc::new(ConfinedCell::new(loop_handle, vec![SlotState::default(); slots])),
            sink: Arc::new(Mutex::new(Box::new(sink))),
            active: vec![None; slots],
        }
    }

    pub fn chunk_budget(&self) -> usize {
        self.chunk_budget
    }

    /// Current slots. Must be called on the loop thread.
    pub fn slots(&self) -> Vec<SlotState> {
        self.board.get().expect("prime board is read on the loop thread")
    }

    pub fn emit_view(&self) {
        let slots = self.slots();
        (self.sink.lock().unwrap_or_else(|p| p.into_inner()))(&slots);
    }

    fn claim_slot(&mut self, n: u64) -> Result<BoardSlot, PrimeError> {
        let board = self.board.clone();
        let index = board
            .with(|slots| slots.iter().position(|s| s.status != SlotStatus::Checking))
            .map_err(TaskError::from)?
            .ok_or(PrimeError::AllSlotsBusy(self.active.len()))?;
        let run = board.with_mut(|slots| {
            let slot = &mut slots[index];
            slot.run += 1;
            slot.n = Some(n);
            slot.run
        })
        .map_err(TaskError::from)?;
        Ok(BoardSlot {
            board,
            sink: self.sink.clone(),
            index,
            run,
        })
    }

    /// Starts checking `n` in the first free slot. In foreground mode the
    /// check completes before this returns.
    pub fn check(&mut self, n: u64, mode: PrimeRunMode) -> Result<PrimeRun, PrimeError> {
        self.loop_handle.assert_on_loop().map_err(TaskError::from)?;
        let slot = self.claim_slot(n)?;
        let index = slot.index;
        let handle = match mode {
            PrimeRunMode::Foreground => self.run_foreground(n, slot),
            PrimeRunMode::Chunked(budget) => {
                slot.checking(n);
                let mut check = PrimeCheck::new(n);
                let (unit_slot, done_slot, cancel_slot) = (slot.clone(), slot.clone(), slot);
                let chunker = WorkChunker::new(move |budget| {
                    match check.step(budget as u64, &mut || false, &mut |p| unit_slot.progress(p)) {
                        Some(outcome) => Step::Done(outcome),
                        None => Step::Continue,
                    }
                })
                .budget(budget.max(1))
                .on_done(move |outcome| match outcome {
                    PrimeOutcome::Prime => done_slot.verdict(true),
                    PrimeOutcome::NotPrime => done_slot.verdict(false),
                    PrimeOutcome::Cancelled => done_slot.neutral(),
                })
                .on_cancelled(move || cancel_slot.neutral());
                task::run_chunked(chunker, &self.loop_handle)?
            }
            PrimeRunMode::Async => {
                task::execute_on(lifecycle_bindings(n, slot), &self.executor, n, &self.loop_handle)?
            }
        };
        self.active[index] = Some(handle.clone());
        Ok(PrimeRun { slot: index, handle })
    }

    fn run_foreground(&self, n: u64, slot: BoardSlot) -> TaskHandle {
        let handle = TaskHandle::new(TaskState::Running);
        slot.checking(n);
        let lh = self.loop_handle.clone();
        let outcome = PrimeCheck::new(n).run(&mut || handle.is_cancelled(), &mut |p| {
            let s = slot.clone();
            if let Err(e) = lh.post(move || s.progress(p)) {
                log::debug!("progress dropped: {e}");
            }
        });
        handle.finish(|_| ());
        match outcome {
            PrimeOutcome::Prime => slot.verdict(true),
            PrimeOutcome::NotPrime => slot.verdict(false),
            PrimeOutcome::Cancelled => slot.neutral(),
        }
        handle
    }

    /// Requests cancellation of every check still in progress. Returns how
    /// many requests were accepted.
    pub fn cancel_all(&mut self) -> usize {
        self.active
            .iter_mut()
            .filter_map(Option::take)
            .filter(|h| h.cancel())
            .count()
    }
}

impl fmt::Debug for PrimeApp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PrimeApp")
            .field("slots", &self.active.len())
            .field("chunk_budget", &self.chunk_budget)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use proptest::prelude::*;

    use super::*;
    use crate::reactor::EventLoop;

    fn sieve(limit: usize) -> Vec<bool> {
        let mut p = vec![true; limit + 1];
        p[0] = false;
        if limit >= 1 {
            p[1] = false;
        }
        let mut i = 2;
        while i * i <= limit {
            if p[i] {
                let mut j = i * i;
                while j <= limit {
                    p[j] = false;
                    j += i;
                }
            }
            i += 1;
        }
        p
    }

    fn trial_division(n: u64) -> bool {
        n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
    }

    fn never() -> impl FnMut() -> bool {
        || false
    }

    #[test]
    fn small_inputs() {
        assert_eq!(is_prime(0, never(), |_| {}), PrimeOutcome::NotPrime);
        assert_eq!(is_prime(1, never(), |_| {}), PrimeOutcome::NotPrime);
        assert_eq!(is_prime(2, never(), |_| {}), PrimeOutcome::Prime);
        assert_eq!(is_prime(4, never(), |_| {}), PrimeOutcome::NotPrime);
        assert_eq!(is_prime(1013, never(), |_| {}), PrimeOutcome::Prime);
    }

    #[test]
    fn eleven_publishes_forty_to_hundred() {
        let mut seen = Vec::new();
        assert_eq!(is_prime(11, never(), |p| seen.push(p)), PrimeOutcome::Prime);
        // half = 5; floor(k * 100 / 5) for k = 2..=5
        let expected: Vec<u8> = (2u64..=5).map(|k| (k * 100 / 5) as u8).collect();
        assert_eq!(seen, expected);
        assert_eq!(seen, vec![40, 60, 80, 100]);
    }

    #[test]
    fn progress_is_throttled_to_changes() {
        let mut seen = Vec::new();
        is_prime(100_003, never(), |p| seen.push(p));
        assert!(seen.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(seen.last(), Some(&100));
        assert!(seen.len() <= 101);
    }

    #[test]
    fn agrees_with_sieve_up_to_ten_thousand() {
        let oracle = sieve(10_000);
        for n in 0..=10_000u64 {
            let got = is_prime(n, never(), |_| {}) == PrimeOutcome::Prime;
            assert_eq!(got, oracle[n as usize], "n={n}");
        }
    }

    #[test]
    fn prime_iterations_are_half_minus_one() {
        for n in [5u64, 11, 1013, 10_007, 100_003] {
            let mut c = PrimeCheck::new(n);
            assert_eq!(c.run(&mut never(), &mut |_| {}), PrimeOutcome::Prime);
            assert_eq!(c.iterations(), n / 2 - 1);
            assert!(trial_division(n));
        }
    }

    #[test]
    fn cancel_probe_stops_the_loop() {
        let mut polls = 0;
        let mut c = PrimeCheck::new(1_000_003);
        let outcome = c.run(
            &mut || {
                polls += 1;
                polls > 10
            },
            &mut |_| {},
        );
        assert_eq!(outcome, PrimeOutcome::Cancelled);
        assert_eq!(c.iterations(), 10);
    }

    #[test]
    fn slices_resume_where_they_left_off() {
        let mut whole = Vec::new();
        is_prime(10_007, never(), |p| whole.push(p));
        let mut sliced = Vec::new();
        let mut c = PrimeCheck::new(10_007);
        let mut slices = 0;
        while c.step(37, &mut never(), &mut |p| sliced.push(p)).is_none() {
            slices += 1;
        }
        assert_eq!(sliced, whole);
        assert_eq!(c.outcome(), Some(PrimeOutcome::Prime));
        assert_eq!(slices, (10_007 / 2 - 1) / 37);
    }

    proptest! {
        #[test]
        fn verdict_matches_trial_division(n in 0u64..200_000) {
            let got = PrimeCheck::new(n).step(u64::MAX, &mut || false, &mut |_| {});
            prop_assert_eq!(got == Some(PrimeOutcome::Prime), trial_division(n));
        }
    }

    #[derive(Default)]
    struct Marks(Mutex<Vec<String>>);

    impl SlotView for Arc<Marks> {
        fn checking(&self, n: u64) {
            self.0.lock().unwrap().push(format!("checking({n})"));
        }
        fn progress(&self, p: u8) {
            self.0.lock().unwrap().push(format!("{p}"));
        }
        fn verdict(&self, prime: bool) {
            self.0.lock().unwrap().push(if prime { "prime" } else { "composite" }.into());
        }
        fn neutral(&self) {
            self.0.lock().unwrap().push("neutral".into());
        }
    }

    #[test]
    fn lifecycle_bindings_mark_the_slot() {
        let ev = EventLoop::new();
        let exec = Executor::serial();
        for (n, last) in [(11u64, "prime"), (12, "composite")] {
            let marks = Arc::new(Marks::default());
            let h = task::execute_on(lifecycle_bindings(n, marks.clone()), &exec, n, &ev.handle()).unwrap();
            h.wait(Duration::from_secs(5)).unwrap();
            ev.run_until_idle().unwrap();
            let m = marks.0.lock().unwrap();
            assert_eq!(m.first().unwrap(), &format!("checking({n})"));
            assert_eq!(m.last().unwrap(), last);
        }
        let marks = Arc::new(Marks::default());
        let mut t = task::AsyncTask::new(lifecycle_bindings(11, marks.clone()));
        t.handle().cancel();
        t.execute_on(&exec, 11, &ev.handle()).unwrap();
        ev.run_until_idle().unwrap();
        assert_eq!(*marks.0.lock().unwrap(), vec!["neutral"]);
    }

    fn app(ev: &EventLoop, slots: usize) -> (PrimeApp, Arc<Mutex<Vec<Vec<SlotState>>>>) {
        let views = Arc::new(Mutex::new(Vec::new()));
        let v = views.clone();
        let app = PrimeApp::new(&ev.handle(), Arc::new(Executor::pool(2)), slots, 1000, move |s: &[SlotState]| {
            v.lock().unwrap().push(s.to_vec())
        });
        (app, views)
    }

    #[test]
    fn modes_agree() {
        for n in [97u64, 1013, 1015, 10_007] {
            let mut finals = Vec::new();
            for mode in [PrimeRunMode::Foreground, PrimeRunMode::Chunked(100), PrimeRunMode::Async] {
                let ev = EventLoop::new();
                let (mut a, _) = app(&ev, 1);
                let run = a.check(n, mode).unwrap();
                let deadline = std::time::Instant::now() + Duration::from_secs(10);
                while !run.handle.state().is_terminal() {
                    ev.run_until_idle().unwrap();
                    assert!(std::time::Instant::now() < deadline);
                    std::thread::yield_now();
                }
                ev.run_until_idle().unwrap();
                let s = a.slots().remove(0);
                finals.push((s.status, s.percent));
            }
            assert!(finals.windows(2).all(|w| w[0] == w[1]), "n={n}: {finals:?}");
        }
    }

    #[test]
    fn busy_slots_are_reported() {
        let ev = EventLoop::new();
        let (mut a, _) = app(&ev, 1);
        a.check(1_000_003, PrimeRunMode::Chunked(10)).unwrap();
        assert!(matches!(a.check(7, PrimeRunMode::Async), Err(PrimeError::AllSlotsBusy(1))));
        assert_eq!(a.cancel_all(), 1);
        ev.run_until_idle().unwrap();
        assert_eq!(a.slots()[0].status, SlotStatus::Neutral);
        a.check(7, PrimeRunMode::Foreground).unwrap();
        assert_eq!(a.slots()[0].status, SlotStatus::Prime);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_number("abc"), Err(PrimeError::InvalidNumber(_))));
        assert!(matches!(parse_number("-5"), Err(PrimeError::InvalidNumber(_))));
        assert_eq!(parse_number(" 1013 ").unwrap(), 1013);
        assert!(matches!(PrimeRunMode::parse("turbo", 10), Err(PrimeError::InvalidMode(_))));
        assert_eq!(PrimeRunMode::parse("chunked", 10).unwrap(), PrimeRunMode::Chunked(10));
    }
}
