//! The three reference apps: a bounded click counter, a countdown timer and a
//! prime checker, plus [`Workbench`], which assembles them on one loop.

pub mod counter;
pub mod prime;
pub mod timer;
mod workbench;

pub use workbench::{ids, AppConfig, AppOutput, AppView, ClickArgs, OutputSink, Workbench, APPS, CLICK};
