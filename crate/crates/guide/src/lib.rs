//! Compiles every chapter of the book as documentation so that `cargo test`
//! runs its Rust snippets.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/event-loop.md")]
pub mod event_loop {}
#[doc = include_str!("../../../book/src/confinement.md")]
pub mod confinement {}
#[doc = include_str!("../../../book/src/races.md")]
pub mod races {}
#[doc = include_str!("../../../book/src/clocks.md")]
pub mod clocks {}
#[doc = include_str!("../../../book/src/tasks.md")]
pub mod tasks {}
#[doc = include_str!("../../../book/src/counter.md")]
pub mod counter {}
#[doc = include_str!("../../../book/src/timer.md")]
pub mod timer {}
#[doc = include_str!("../../../book/src/prime.md")]
pub mod prime {}
#[doc = include_str!("../../../book/src/testing.md")]
pub mod testing {}
#[doc = include_str!("../../../book/src/gateway.md")]
pub mod gateway {}
