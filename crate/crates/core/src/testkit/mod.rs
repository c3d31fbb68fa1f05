//! Deterministic test support: a manually pumped loop, synthetic clicks, a
//! single mock for the timer's three dependencies and a small scenario
//! language run in virtual or wall-clock time.

mod mock;
mod runner;
mod script;

pub use mock::UnifiedMock;
pub use runner::{describe, lookup, run_scenario, run_scenario_with, ScenarioFailure, ScenarioRunner, TimeMode, Trace};
pub use script::{ScenarioScript, ScriptError, Step, DEFAULT_AWAIT_MS};

use crate::apps::{ClickArgs, CLICK};
use crate::reactor::{EventLoop, LoopHandle, Payload};

/// Bundled scenario scripts.
pub mod corpus {
    pub const COUNTER: &str = include_str!("../../scenarios/counter.txt");
    pub const TIMER_FAKE: &str = include_str!("../../scenarios/timer_fake.txt");
    pub const TIMER_REALTIME: &str = include_str!("../../scenarios/timer_realtime.txt");
    pub const PRIME: &str = include_str!("../../scenarios/prime.txt");
}

/// An event loop that only runs when told to. Posted work stays queued until
/// [`LoopPump::pump`].
pub struct LoopPump {
    event_loop: EventLoop,
}

impl Default for LoopPump {
    fn default() -> Self {
        Self::new()
    }
}

impl LoopPump {
    pub fn new() -> Self {
        LoopPump {
            event_loop: EventLoop::new(),
        }
    }

    pub fn handle(&self) -> LoopHandle {
        self.event_loop.handle()
    }

    /// Runs everything queued, including work queued meanwhile, and returns
    /// how many items ran.
    pub fn pump(&self) -> usize {
        self.event_loop.run_until_idle().expect("pump runs on the thread that created the loop")
    }

    pub fn event_loop(&self) -> &EventLoop {
        &self.event_loop
    }
}

impl std::fmt::Debug for LoopPump {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LoopPump").field("pending", &self.handle().pending()).finish()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unknown component {0:?}")]
pub struct UnknownComponent(pub String);

/// Queues a click on `target`. Fails if nothing listens for it. A click on a
/// disabled control is accepted; the app decides to ignore it.
pub fn perform_click(target: &str, loop_handle: &LoopHandle, args: ClickArgs) -> Result<bool, UnknownComponent> {
    if !loop_handle.has_listener(target.to_owned(), CLICK) {
        return Err(UnknownComponent(target.to_owned()));
    }
    loop_handle
        .enqueue(target.to_owned(), CLICK, Payload::new(args))
        .map(|_| true)
        .map_err(|_| UnknownComponent(target.to_owned()))
}
