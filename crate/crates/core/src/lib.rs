//! A single-threaded event loop runtime ("UI thread") with timers,
//! asynchronous tasks and thread-confinement checks, plus three small
//! interactive reference apps and a deterministic test kit.

pub mod apps;
pub mod clock;
pub mod lab;
pub mod reactor;
pub mod task;
pub mod testkit;

pub use reactor::{ConfinedCell, ConfinementViolation, Event, EventLoop, LoopHandle, Payload, SourceId};
