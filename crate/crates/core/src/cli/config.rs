//! TOML run configuration. Keys may sit at the top level or inside a table
//! named after the subcommand; the table wins, and command-line flags win
//! over both. Keys are spelled like the flags (`lambda-max`), with `_`
//! accepted in place of `-`.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct Config {
    table: toml::Table,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            let line = e.span().map_or(0, |s| text[..s.start.min(text.len())].lines().count().max(1));
            Error::Parse { line, message: e.message().to_string() }
        })?;
        Ok(Config { table })
    }

    fn lookup(&self, command: &str, key: &str) -> Option<&toml::Value> {
        let alt = key.replace('-', "_");
        if let Some(toml::Value::Table(t)) = self.table.get(command) {
            if let Some(v) = t.get(key).or_else(|| t.get(&alt)) {
                return Some(v);
            }
        }
        self.table.get(key).or_else(|| self.table.get(&alt)).filter(|v| !v.is_table())
    }

    pub fn get<T: DeserializeOwned>(&self, command: &str, key: &str) -> Result<Option<T>> {
        match self.lookup(command, key) {
            None => Ok(None),
            Some(v) => v
                .clone()
                .try_into()
                .map(Some)
                .map_err(|e| Error::Input(format!("config key '{key}': {e}"))),
        }
    }
}

/// Resolves parameters for one command and remembers what was used.
pub struct Resolver<'a> {
    config: &'a Config,
    command: &'a str,
    echo: Map<String, Value>,
}

impl<'a> Resolver<'a> {
    pub fn new(config: &'a Config, command: &'a str) -> Self {
        Resolver { config, command, echo: Map::new() }
    }

    /// Flag, then config, then nothing.
    pub fn optional<T: DeserializeOwned + Serialize>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        let v = match flag {
            Some(v) => Some(v),
            None => self.config.get(self.command, key)?,
        };
        if let Some(v) = &v {
            self.record(key, v);
        }
        Ok(v)
    }

    /// Flag, then config, then `default`.
    pub fn value<T: DeserializeOwned + Serialize>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        let v = self.optional(key, flag)?.unwrap_or(default);
        self.record(key, &v);
        Ok(v)
    }

    pub fn record<T: Serialize + ?Sized>(&mut self, key: &str, v: &T) {
        self.echo.insert(key.to_string(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    pub fn echo(self) -> Value {
        Value::Object(self.echo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_beats_top_level() {
        let c = Config::parse("seed = 3\nlambda_max = 10.0\n[weyl]\nlambda-max = 20.0\n").unwrap();
        assert_eq!(c.get::<f64>("weyl", "lambda-max").unwrap(), Some(20.0));
        assert_eq!(c.get::<f64>("spectrum", "lambda-max").unwrap(), Some(10.0));
        assert_eq!(c.get::<u64>("eig", "seed").unwrap(), Some(3));
        assert!(c.get::<u64>("eig", "weyl").unwrap().is_none());
        assert!(c.get::<u64>("weyl", "lambda-max").is_err());
    }

    #[test]
    fn flags_win() {
        let c = Config::parse("[qvar]\neps = [0.2, 0.1]\n").unwrap();
        let mut r = Resolver::new(&c, "qvar");
        assert_eq!(r.value("eps", None, vec![1.0]).unwrap(), vec![0.2, 0.1]);
        assert_eq!(r.value("dim", Some(3usize), 2).unwrap(), 3);
        let echo = r.echo();
        assert_eq!(echo["dim"], 3);
    }

    #[test]
    fn bad_toml_has_a_line() {
        match Config::parse("a = 1\nb = [\n") {
            Err(Error::Parse { line, .. }) => assert!(line >= 1),
            other => panic!("{other:?}"),
        }
    }
}
