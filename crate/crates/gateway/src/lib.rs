//! Gateway for the reactorkit demo apps: one shared event loop running the
//! counter, timer and prime checker, exposed over a JSON message protocol on
//! WebSocket or stdin/stdout, plus a command-line front end.
//!
//! Inbound messages look like `{"app":"counter","event":"increment"}`.
//! Outbound messages are `{"app", "body", "seq", "type"}` with `type` one of
//! `view`, `error` or `info`, serialized with sorted keys.

pub mod cli;
pub mod config;
pub mod hub;
pub mod protocol;
pub mod stdio;
pub mod ws;

pub use config::RuntimeConfig;
pub use hub::{ClockChoice, Hub, Outbox, Runtime};
pub use protocol::{Inbound, OutKind, Outbound, ProtocolError};
