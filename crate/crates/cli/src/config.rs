//! Run configuration: a JSON document merged with command-line overrides.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};
use vcarleson::Exponent;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Sharpness,
    Decompose,
    Lepingle,
    Mpz,
    Nlft,
    Selftest,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Sharpness => "sharpness",
            Experiment::Decompose => "decompose",
            Experiment::Lepingle => "lepingle",
            Experiment::Mpz => "mpz",
            Experiment::Nlft => "nlft",
            Experiment::Selftest => "selftest",
        }
    }

    pub fn parse(s: &str) -> Result<Experiment, CliError> {
        Ok(match s {
            "sharpness" => Experiment::Sharpness,
            "decompose" => Experiment::Decompose,
            "lepingle" => Experiment::Lepingle,
            "mpz" => Experiment::Mpz,
            "nlft" => Experiment::Nlft,
            "selftest" | "varnorm-selftest" => Experiment::Selftest,
            other => return Err(CliError::config(format!("unknown experiment {other:?}"))),
        })
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A fully resolved run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub threads: usize,
    pub parameters: Map<String, Value>,
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    /// `key=value` pairs; values parse as JSON, otherwise as strings.
    pub params: Vec<String>,
}

impl RunConfig {
    pub fn resolve(experiment: Experiment, ov: &Overrides) -> Result<RunConfig, CliError> {
        let file = match &ov.config {
            Some(path) => read_config(path)?,
            None => Map::new(),
        };
        for key in file.keys() {
            if !matches!(key.as_str(), "experiment" | "seed" | "output_dir" | "threads" | "parameters") {
                return Err(CliError::config(format!("unknown config key {key:?}")));
            }
        }
        if let Some(v) = file.get("experiment") {
            let named = v.as_str().ok_or_else(|| CliError::config("\"experiment\" must be a string"))?;
            if Experiment::parse(named)? != experiment {
                return Err(CliError::config(format!("config is for {named:?}, not {experiment}")));
            }
        }
        let seed = match (ov.seed, file.get("seed")) {
            (Some(s), _) => s,
            (None, Some(v)) => v.as_u64().ok_or_else(|| CliError::config("\"seed\" must be a non-negative integer"))?,
            (None, None) => 0,
        };
        let threads = match (ov.threads, file.get("threads")) {
            (Some(t), _) => t,
            (None, Some(v)) => v.as_u64().ok_or_else(|| CliError::config("\"threads\" must be a positive integer"))? as usize,
            (None, None) => 1,
        };
        if threads == 0 || threads > 256 {
            return Err(CliError::config("threads must be in 1..=256"));
        }
        let output_dir = match (&ov.output_dir, file.get("output_dir")) {
            (Some(p), _) => p.clone(),
            (None, Some(v)) => PathBuf::from(v.as_str().ok_or_else(|| CliError::config("\"output_dir\" must be a string"))?),
            (None, None) => PathBuf::from(format!("out/{experiment}")),
        };
        let mut parameters = match file.get("parameters") {
            Some(Value::Object(m)) => m.clone(),
            Some(_) => return Err(CliError::config("\"parameters\" must be an object")),
            None => Map::new(),
        };
        for kv in &ov.params {
            let (k, v) = kv.split_once('=').ok_or_else(|| CliError::config(format!("expected key=value, got {kv:?}")))?;
            let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
            parameters.insert(k.trim().to_string(), value);
        }
        Ok(RunConfig { experiment, seed, output_dir, threads, parameters })
    }
}

fn read_config(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(CliError::config("config must be a JSON object")),
        Err(e) => Err(CliError::config(format!("{}: {e}", path.display()))),
    }
}

/// Typed access to the parameter map. Every lookup records the value actually used,
/// defaults included, and [`Params::finish`] rejects keys nobody asked for.
pub struct Params {
    map: Map<String, Value>,
    seen: RefCell<BTreeSet<String>>,
    resolved: RefCell<BTreeMap<String, Value>>,
}

impl Params {
    pub fn new(map: Map<String, Value>) -> Params {
        Params { map, seen: RefCell::default(), resolved: RefCell::default() }
    }

    fn take(&self, key: &str) -> Option<&Value> {
        self.seen.borrow_mut().insert(key.to_string());
        self.map.get(key).filter(|v| !v.is_null())
    }

    fn record(&self, key: &str, v: Value) {
        self.resolved.borrow_mut().insert(key.to_string(), v);
    }

    pub fn f64(&self, key: &str, default: f64) -> Result<f64, CliError> {
        let v = match self.take(key) {
            Some(v) => v.as_f64().ok_or_else(|| bad(key, "a number"))?,
            None => default,
        };
        self.record(key, Value::from(v));
        Ok(v)
    }

    /// A number, or one of `"inf"`, `"infinity"`, `"∞"`.
    pub fn exponent(&self, key: &str, default: Exponent) -> Result<Exponent, CliError> {
        let e = match self.take(key) {
            Some(Value::String(s)) if matches!(s.to_ascii_lowercase().as_str(), "inf" | "infinity" | "∞") => Exponent::Infinite,
            Some(v) => Exponent::from_f64(v.as_f64().ok_or_else(|| bad(key, "a number or \"inf\""))?),
            None => default,
        };
        self.record(key, exponent_json(e));
        Ok(e)
    }

    pub fn usize(&self, key: &str, default: usize) -> Result<usize, CliError> {
        let v = match self.take(key) {
            Some(v) => v.as_u64().ok_or_else(|| bad(key, "a non-negative integer"))? as usize,
            None => default,
        };
        self.record(key, Value::from(v));
        Ok(v)
    }

    pub fn i64(&self, key: &str, default: i64) -> Result<i64, CliError> {
        let v = match self.take(key) {
            Some(v) => v.as_i64().ok_or_else(|| bad(key, "an integer"))?,
            None => default,
        };
        self.record(key, Value::from(v));
        Ok(v)
    }

    pub fn bool(&self, key: &str, default: bool) -> Result<bool, CliError> {
        let v = match self.take(key) {
            Some(v) => v.as_bool().ok_or_else(|| bad(key, "true or false"))?,
            None => default,
        };
        self.record(key, Value::from(v));
        Ok(v)
    }

    pub fn usize_list(&self, key: &str, default: &[usize]) -> Result<Vec<usize>, CliError> {
        let v = match self.take(key) {
            Some(Value::Array(xs)) => {
                xs.iter().map(|x| x.as_u64().map(|u| u as usize).ok_or_else(|| bad(key, "a list of integers"))).collect::<Result<_, _>>()?
            }
            Some(_) => return Err(bad(key, "a list of integers")),
            None => default.to_vec(),
        };
        self.record(key, Value::from(v.clone()));
        Ok(v)
    }

    pub fn f64_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, CliError> {
        let v = match self.take(key) {
            Some(Value::Array(xs)) => {
                xs.iter().map(|x| x.as_f64().ok_or_else(|| bad(key, "a list of numbers"))).collect::<Result<_, _>>()?
            }
            Some(_) => return Err(bad(key, "a list of numbers")),
            None => default.to_vec(),
        };
        self.record(key, Value::from(v.clone()));
        Ok(v)
    }

    pub fn exponent_list(&self, key: &str, default: &[Exponent]) -> Result<Vec<Exponent>, CliError> {
        let v = match self.take(key) {
            Some(Value::Array(xs)) => xs
                .iter()
                .map(|x| match x {
                    Value::String(s) if matches!(s.to_ascii_lowercase().as_str(), "inf" | "infinity" | "∞") => Ok(Exponent::Infinite),
                    _ => x.as_f64().map(Exponent::from_f64).ok_or_else(|| bad(key, "a list of numbers or \"inf\"")),
                })
                .collect::<Result<_, _>>()?,
            Some(_) => return Err(bad(key, "a list of numbers or \"inf\"")),
            None => default.to_vec(),
        };
        self.record(key, Value::Array(v.iter().map(|e| exponent_json(*e)).collect()));
        Ok(v)
    }

    pub fn string(&self, key: &str) -> Result<Option<String>, CliError> {
        let v = match self.take(key) {
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => return Err(bad(key, "a string")),
            None => None,
        };
        if let Some(s) = &v {
            self.record(key, Value::from(s.clone()));
        }
        Ok(v)
    }

    pub fn finish(&self) -> Result<(), CliError> {
        let seen = self.seen.borrow();
        match self.map.keys().find(|k| !seen.contains(*k)) {
            Some(k) => Err(CliError::config(format!("unknown parameter {k:?}"))),
            None => Ok(()),
        }
    }

    pub fn resolved(&self) -> Map<String, Value> {
        self.resolved.borrow().iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }
}

fn exponent_json(e: Exponent) -> Value {
    match e {
        Exponent::Finite(x) => Value::from(x),
        Exponent::Infinite => Value::from("inf"),
    }
}

fn bad(key: &str, what: &str) -> CliError {
    CliError::config(format!("parameter {key:?} must be {what}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_echoed_and_unknown_keys_rejected() {
        let mut m = Map::new();
        m.insert("p".into(), Value::from(1.5));
        m.insert("typo".into(), Value::from(1));
        let p = Params::new(m);
        assert_eq!(p.f64("p", 1.2).unwrap(), 1.5);
        assert_eq!(p.exponent("s", Exponent::Infinite).unwrap(), Exponent::Infinite);
        assert!(p.finish().is_err());
        assert_eq!(p.resolved()["s"], Value::from("inf"));
    }
}
