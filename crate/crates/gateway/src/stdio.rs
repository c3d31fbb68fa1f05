use std::io::{self, BufRead, Write};
use std::time::Duration;

use crate::hub::Runtime;

/// Longest wait for the apps to go quiet after one inbound line.
pub const SETTLE_TIMEOUT: Duration = Duration::from_secs(60);

/// Runs the wire protocol over line streams: one JSON message per line in,
/// one per line out. After each inbound line the apps are allowed to settle
/// so the output is a deterministic function of the input.
pub fn run_stdio(runtime: &Runtime, input: impl BufRead, mut output: impl Write) -> io::Result<()> {
    let outbox = runtime.hub().subscribe();
    let flush = |output: &mut dyn Write| -> io::Result<()> {
        for line in outbox.drain() {
            writeln!(output, "{line}")?;
        }
        output.flush()
    };
    runtime.settle(SETTLE_TIMEOUT);
    flush(&mut output)?;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        runtime.inject_text(&line, &outbox);
        if !runtime.settle(SETTLE_TIMEOUT) {
            log::warn!("apps still busy after {SETTLE_TIMEOUT:?}");
        }
        flush(&mut output)?;
    }
    Ok(())
}
