use std::path::Path;

use reactorkit::apps::AppConfig;

pub const DEFAULT_PORT: u16 = 8080;
pub const PORT_ENV: &str = "REACTORKIT_PORT";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// Port plus app settings. Defaults are the reference values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RuntimeConfig {
    pub port: u16,
    pub apps: AppConfig,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            port: DEFAULT_PORT,
            apps: AppConfig::default(),
        }
    }
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("{key}: not a valid number: {value:?}"))
}

impl RuntimeConfig {
    /// Parses flat `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RuntimeConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |message: String| ConfigError::Syntax { line: i + 1, message };
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| syntax(format!("expected key = value, got {line:?}")))?;
            cfg.set(key, value).map_err(syntax)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let a = &mut self.apps;
        match key {
            "port" => self.port = number(key, value)?,
            "counter.min" => a.counter_min = number(key, value)?,
            "counter.max" => a.counter_max = number(key, value)?,
            "timer.max_time" => a.timer_max_time = number(key, value)?,
            "timer.idle_timeout_s" => a.idle_timeout_s = number(key, value)?,
            "timer.tick_period_s" => a.tick_period_s = number(key, value)?,
            "prime.pool_size" => a.pool_size = number(key, value)?,
            "prime.chunk_budget" => a.chunk_budget = number(key, value)?,
            "prime.slots" => a.slots = number(key, value)?,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Applies `REACTORKIT_PORT` if it is set.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(port) = lookup(PORT_ENV) {
            self.port = number(PORT_ENV, port.trim()).map_err(ConfigError::Invalid)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.port == 0 {
            return Err(ConfigError::Invalid("port must be positive".into()));
        }
        self.apps.validate().map_err(ConfigError::Invalid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RuntimeConfig::default();
        assert_eq!(c.port, 8080);
        assert_eq!((c.apps.counter_min, c.apps.counter_max), (0, 10));
        assert_eq!((c.apps.timer_max_time, c.apps.idle_timeout_s, c.apps.tick_period_s), (99, 3, 1));
        assert_eq!((c.apps.pool_size, c.apps.chunk_budget, c.apps.slots), (2, 1000, 4));
    }

    #[test]
    fn parses_overrides_and_comments() {
        let c = RuntimeConfig::parse("# demo\nport = 9000\ncounter.max=5 # small\n\nprime.slots = 2\n").unwrap();
        assert_eq!(c.port, 9000);
        assert_eq!(c.apps.counter_max, 5);
        assert_eq!(c.apps.slots, 2);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(RuntimeConfig::parse("port"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(RuntimeConfig::parse("colour = red"), Err(ConfigError::Syntax { .. })));
        assert!(matches!(RuntimeConfig::parse("prime.slots = 0"), Err(ConfigError::Invalid(_))));
        assert!(matches!(RuntimeConfig::parse("counter.min = 4\ncounter.max = 3"), Err(ConfigError::Invalid(_))));
        assert!(RuntimeConfig::parse("port = -1").is_err());
    }

    #[test]
    fn env_overrides_port() {
        let mut c = RuntimeConfig::parse("port = 9000").unwrap();
        c.apply_env(|k| (k == PORT_ENV).then(|| "9100".to_owned())).unwrap();
        assert_eq!(c.port, 9100);
        assert!(c.apply_env(|_| Some("many".into())).is_err());
    }
}
