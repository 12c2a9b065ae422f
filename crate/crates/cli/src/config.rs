//! JSON configuration with dot-path overrides.
//!
//! Without a config file the built-in defaults of the subcommand apply as they
//! are. With a file, keys listed as required must come from the file or from an
//! override; everything else still falls back to the defaults.

use std::path::Path;

use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    root: Value,
}

fn invalid(field: &str, reason: impl Into<String>) -> CliError {
    CliError::ConfigInvalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

fn remove_path(root: &mut Value, path: &str) {
    let mut parts: Vec<&str> = path.split('.').collect();
    let last = parts.pop().expect("non-empty path");
    let mut cur = root;
    for p in parts {
        match cur.get_mut(p) {
            Some(next) => cur = next,
            None => return,
        }
    }
    if let Value::Object(m) = cur {
        m.remove(last);
    }
}

/// Parses `a.b.c=value`; the value is read as JSON when possible, else as a string.
pub fn parse_override(s: &str) -> Result<(String, Value), CliError> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| invalid(s, "override must look like key.path=value"))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(invalid(key, "empty path segment"));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    Ok((key.to_string(), value))
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        let Value::Object(m) = cur else {
            return Err(invalid(path, format!("`{}` is not an object", parts[..i].join("."))));
        };
        if i + 1 == parts.len() {
            m.insert(p.to_string(), value);
            return Ok(());
        }
        cur = m.entry(p.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

impl Config {
    pub fn from_value(root: Value) -> Self {
        Self { root }
    }

    /// Defaults, then the file (which must supply `required` keys), then overrides.
    pub fn load(
        defaults: Value,
        required: &[&str],
        file: Option<&Path>,
        overrides: &[(String, Value)],
    ) -> Result<Self, CliError> {
        let mut root = defaults;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            let parsed: Value =
                serde_json::from_str(&text).map_err(|e| invalid("<file>", format!("{}: {e}", path.display())))?;
            if !parsed.is_object() {
                return Err(invalid("<file>", "top level must be an object"));
            }
            for key in required {
                remove_path(&mut root, key);
            }
            merge(&mut root, parsed);
        }
        for (k, v) in overrides {
            set_path(&mut root, k, v.clone())?;
        }
        let cfg = Self { root };
        for key in required {
            cfg.get(key)?;
        }
        Ok(cfg)
    }

    pub fn snapshot(&self) -> &Value {
        &self.root
    }

    pub fn has(&self, path: &str) -> bool {
        self.lookup(path).is_some_and(|v| !v.is_null())
    }

    fn lookup(&self, path: &str) -> Option<&Value> {
        path.split('.').try_fold(&self.root, |cur, p| cur.get(p))
    }

    pub fn get(&self, path: &str) -> Result<&Value, CliError> {
        match self.lookup(path) {
            Some(v) if !v.is_null() => Ok(v),
            _ => Err(invalid(path, "missing")),
        }
    }

    pub fn f64(&self, path: &str) -> Result<f64, CliError> {
        let v = self.get(path)?;
        v.as_f64()
            .filter(|x| x.is_finite())
            .ok_or_else(|| invalid(path, format!("expected a finite number, got {v}")))
    }

    pub fn positive(&self, path: &str) -> Result<f64, CliError> {
        let x = self.f64(path)?;
        if x > 0.0 {
            Ok(x)
        } else {
            Err(invalid(path, format!("must be positive, got {x}")))
        }
    }

    pub fn non_negative(&self, path: &str) -> Result<f64, CliError> {
        let x = self.f64(path)?;
        if x >= 0.0 {
            Ok(x)
        } else {
            Err(invalid(path, format!("must be non-negative, got {x}")))
        }
    }

    pub fn u64(&self, path: &str) -> Result<u64, CliError> {
        let v = self.get(path)?;
        v.as_u64().ok_or_else(|| invalid(path, format!("expected a non-negative integer, got {v}")))
    }

    pub fn usize(&self, path: &str) -> Result<usize, CliError> {
        Ok(self.u64(path)? as usize)
    }

    pub fn count(&self, path: &str) -> Result<usize, CliError> {
        match self.usize(path)? {
            0 => Err(invalid(path, "must be at least 1")),
            n => Ok(n),
        }
    }

    pub fn bool(&self, path: &str) -> Result<bool, CliError> {
        let v = self.get(path)?;
        v.as_bool().ok_or_else(|| invalid(path, format!("expected true or false, got {v}")))
    }

    pub fn str(&self, path: &str) -> Result<&str, CliError> {
        let v = self.get(path)?;
        v.as_str().ok_or_else(|| invalid(path, format!("expected a string, got {v}")))
    }

    pub fn f64_list(&self, path: &str) -> Result<Vec<f64>, CliError> {
        let v = self.get(path)?;
        let arr = v.as_array().ok_or_else(|| invalid(path, "expected an array of numbers"))?;
        arr.iter()
            .map(|x| x.as_f64().filter(|x| x.is_finite()).ok_or_else(|| invalid(path, format!("bad entry {x}"))))
            .collect()
    }

    pub fn usize_list(&self, path: &str) -> Result<Vec<usize>, CliError> {
        let v = self.get(path)?;
        let arr = v.as_array().ok_or_else(|| invalid(path, "expected an array of integers"))?;
        arr.iter()
            .map(|x| x.as_u64().map(|n| n as usize).ok_or_else(|| invalid(path, format!("bad entry {x}"))))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn defaults() -> Value {
        json!({"flux": {"j": 1.0}, "grid": {"h": 0.01, "r_max": 4.0}, "t": 1.0})
    }

    #[test]
    fn overrides_are_dot_paths() {
        let o = vec![parse_override("grid.h=0.02").unwrap(), parse_override("name=abc").unwrap()];
        let c = Config::load(defaults(), &["flux.j"], None, &o).unwrap();
        assert_eq!(c.f64("grid.h").unwrap(), 0.02);
        assert_eq!(c.f64("grid.r_max").unwrap(), 4.0);
        assert_eq!(c.str("name").unwrap(), "abc");
    }

    #[test]
    fn file_without_required_key_names_it() {
        let dir = std::env::temp_dir().join(format!("fbplab-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.json");
        std::fs::write(&path, r#"{"grid": {"h": 0.005}}"#).unwrap();
        let err = Config::load(defaults(), &["flux.j"], Some(&path), &[]).unwrap_err();
        assert!(err.to_string().contains("flux.j"), "{err}");
        let o = vec![parse_override("flux.j=2").unwrap()];
        let c = Config::load(defaults(), &["flux.j"], Some(&path), &o).unwrap();
        assert_eq!(c.f64("flux.j").unwrap(), 2.0);
        assert_eq!(c.f64("grid.h").unwrap(), 0.005);
        assert_eq!(c.f64("t").unwrap(), 1.0);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn type_errors_name_the_field() {
        let c = Config::from_value(json!({"flux": {"j": -1.0}, "n": "x"}));
        assert!(c.positive("flux.j").unwrap_err().to_string().contains("flux.j"));
        assert!(c.usize("n").unwrap_err().to_string().contains("`n`"));
        assert!(parse_override("novalue").is_err());
    }
}
