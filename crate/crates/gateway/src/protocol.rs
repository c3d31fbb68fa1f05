use std::collections::BTreeMap;

use reactorkit::apps::{ids, AppOutput, AppView, ClickArgs};
use serde::Deserialize;
use serde_json::{json, Map, Value};

/// Component-id prefix used for errors about the connection itself.
pub const GATEWAY_APP: &str = "gateway";

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unknown event {0}")]
    UnknownEvent(String),
}

/// `{"app": .., "event": .., "args": {..}}`. Argument values may be strings,
/// numbers or booleans; they reach the app as text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Inbound {
    pub app: String,
    pub event: String,
    pub args: ClickArgs,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInbound {
    app: String,
    event: String,
    #[serde(default)]
    args: BTreeMap<String, Value>,
}

impl Inbound {
    pub fn parse(line: &str) -> Result<Self, ProtocolError> {
        let raw: RawInbound = serde_json::from_str(line).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        let mut args = ClickArgs::default();
        for (k, v) in raw.args {
            let text = match v {
                Value::String(s) => s,
                Value::Number(n) => n.to_string(),
                Value::Bool(b) => b.to_string(),
                other => return Err(ProtocolError::Malformed(format!("argument {k:?} must be a scalar, got {other}"))),
            };
            args.0.insert(k, text);
        }
        Ok(Inbound {
            app: raw.app,
            event: raw.event,
            args,
        })
    }

    /// The loop component id this message clicks.
    pub fn target(&self) -> Result<&'static str, ProtocolError> {
        let id = format!("{}.{}", self.app, self.event);
        ids::ALL
            .iter()
            .copied()
            .find(|known| *known == id)
            .ok_or(ProtocolError::UnknownEvent(id))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutKind {
    View,
    Error,
    Info,
}

impl OutKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OutKind::View => "view",
            OutKind::Error => "error",
            OutKind::Info => "info",
        }
    }
}

/// An outbound message before its per-connection sequence number is assigned.
#[derive(Clone, Debug, PartialEq)]
pub struct Outbound {
    pub app: String,
    pub kind: OutKind,
    pub body: Value,
}

impl Outbound {
    pub fn error(app: &str, message: impl Into<String>) -> Self {
        Outbound {
            app: app.to_owned(),
            kind: OutKind::Error,
            body: json!({ "message": message.into() }),
        }
    }

    pub fn info(app: &str, message: impl Into<String>) -> Self {
        Outbound {
            app: app.to_owned(),
            kind: OutKind::Info,
            body: json!({ "message": message.into() }),
        }
    }

    pub fn view(view: &AppView) -> Self {
        Outbound {
            app: view.app().to_owned(),
            kind: OutKind::View,
            body: view_body(view),
        }
    }

    pub fn from_output(output: &AppOutput) -> Self {
        match output {
            AppOutput::View(v) => Self::view(v),
            AppOutput::Error { app, message } => Self::error(app, message.clone()),
        }
    }

    pub fn is_view(&self) -> bool {
        self.kind == OutKind::View
    }

    /// Compact JSON with keys in sorted order.
    pub fn to_json(&self, seq: u64) -> String {
        let mut m = Map::new();
        m.insert("app".into(), Value::String(self.app.clone()));
        m.insert("body".into(), self.body.clone());
        m.insert("seq".into(), Value::from(seq));
        m.insert("type".into(), Value::String(self.kind.as_str().into()));
        Value::Object(m).to_string()
    }
}

pub fn view_body(view: &AppView) -> Value {
    match view {
        AppView::Counter(v) => json!({
            "value": v.displayed,
            "inc": v.inc_enabled,
            "dec": v.dec_enabled,
            "reset": v.reset_enabled,
        }),
        AppView::Timer(v) => json!({
            "display": v.display(),
            "time": v.time,
            "state": v.state.label(),
            "ringing": v.ringing,
            "button": v.button_label(),
        }),
        AppView::Prime(slots) => json!({
            "slots": slots
                .iter()
                .map(|s| json!({ "n": s.n, "percent": s.percent, "status": s.status.label() }))
                .collect::<Vec<_>>(),
        }),
    }
}
