use std::fmt;
use std::str::FromStr;

use crate::apps::ClickArgs;

/// One scenario step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    /// `click <id> [xN] [key=value ...]`
    Click { target: String, repeat: usize, args: ClickArgs },
    /// `advance <ms>`
    Advance(u64),
    /// `expect <key>=<value>`
    Expect { key: String, value: String },
    /// `await <key>=<value> [<timeout ms>]`: pump until the view matches.
    Await { key: String, value: String, timeout_ms: u64 },
}

pub const DEFAULT_AWAIT_MS: u64 = 10_000;

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::Click { target, repeat, args } => {
                write!(f, "click {target}")?;
                if *repeat != 1 {
                    write!(f, " x{repeat}")?;
                }
                for (k, v) in &args.0 {
                    write!(f, " {k}={v}")?;
                }
                Ok(())
            }
            Step::Advance(ms) => write!(f, "advance {ms}"),
            Step::Expect { key, value } => write!(f, "expect {key}={value}"),
            Step::Await { key, value, timeout_ms } => write!(f, "await {key}={value} {timeout_ms}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

/// A line-oriented scenario. Blank lines and lines starting with `#` are
/// skipped.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ScenarioScript {
    steps: Vec<(usize, Step)>,
}

impl ScenarioScript {
    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let mut steps = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| ScriptError { line: i + 1, message };
            steps.push((i + 1, parse_step(line).map_err(err)?));
        }
        Ok(ScenarioScript { steps })
    }

    pub fn from_steps(steps: impl IntoIterator<Item = Step>) -> Self {
        ScenarioScript {
            steps: steps.into_iter().enumerate().map(|(i, s)| (i + 1, s)).collect(),
        }
    }

    /// Steps paired with their source line numbers.
    pub fn steps(&self) -> &[(usize, Step)] {
        &self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

impl FromStr for ScenarioScript {
    type Err = ScriptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl fmt::Display for ScenarioScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (_, step) in &self.steps {
            writeln!(f, "{step}")?;
        }
        Ok(())
    }
}

fn split_pair(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_owned(), v.to_owned())),
        _ => Err(format!("expected key=value, got {s:?}")),
    }
}

fn parse_step(line: &str) -> Result<Step, String> {
    let mut words = line.split_whitespace();
    let verb = words.next().unwrap_or_default();
    let rest: Vec<&str> = words.collect();
    match verb {
        "click" => {
            let (target, tail) = rest.split_first().ok_or("click needs a component id")?;
            let mut repeat = 1;
            let mut args = ClickArgs::default();
            for w in tail {
                if let Some(n) = w.strip_prefix('x').and_then(|n| n.parse::<usize>().ok()) {
                    repeat = n;
                } else {
                    let (k, v) = split_pair(w)?;
                    args.0.insert(k, v);
                }
            }
            Ok(Step::Click {
                target: (*target).to_owned(),
                repeat,
                args,
            })
        }
        "advance" => match rest.as_slice() {
            [ms] => ms.parse().map(Step::Advance).map_err(|_| format!("bad duration {ms:?}")),
            _ => Err("advance takes one argument in milliseconds".into()),
        },
        "expect" => match rest.as_slice() {
            [pair] => split_pair(pair).map(|(key, value)| Step::Expect { key, value }),
            _ => Err("expect takes one key=value".into()),
        },
        "await" => {
            let (pair, timeout) = match rest.as_slice() {
                [pair] => (*pair, DEFAULT_AWAIT_MS),
                [pair, ms] => (*pair, ms.parse().map_err(|_| format!("bad timeout {ms:?}"))?),
                _ => return Err("await takes key=value and an optional timeout".into()),
            };
            let (key, value) = split_pair(pair)?;
            Ok(Step::Await {
                key,
                value,
                timeout_ms: timeout,
            })
        }
        other => Err(format!("unknown step {other:?}")),
    }
}
