//! Flat `key = value` config files. Command-line flags take precedence.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, (String, usize)>,
}

/// Every key a config file may set: the long flag names plus `name`.
pub const KNOWN_KEYS: &[&str] = &[
    "name",
    "kind",
    "n",
    "seed",
    "count",
    "out",
    "profile",
    "trainer",
    "baseline",
    "alpha",
    "lr",
    "batch",
    "traj-per-instance",
    "epochs",
    "steps-per-epoch",
    "validation-size",
    "grad-clip",
    "weight-decay",
    "entropy-in-reward",
    "resume",
    "alphas",
    "lrs",
    "checkpoint",
    "instances",
    "mode",
    "two-opt",
    "baselines",
];

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Settings::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Settings::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
            }
        }
    }

    /// Lines are `key = value`; `#` starts a comment; blank lines are skipped.
    /// Unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(format!("line {}: expected 'key = value'", i + 1));
            };
            let key = normalize(k);
            if key.is_empty() {
                return Err(format!("line {}: empty key", i + 1));
            }
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(format!("line {}: unknown key '{key}'", i + 1));
            }
            if values.insert(key.clone(), (v.trim().to_string(), i + 1)).is_some() {
                return Err(format!("line {}: duplicate key '{key}'", i + 1));
            }
        }
        Ok(Settings { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(&normalize(key)).map(|(v, _)| v.as_str())
    }

    /// The flag value if given, else the parsed config value.
    pub fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|e| {
                let line = self.values[&normalize(key)].1;
                CliError::Usage(format!("config line {line}: bad value '{v}' for {key}: {e}"))
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(flag, key)?.unwrap_or(default))
    }

    /// Boolean switch: set by the flag, or by `key = true|false` in the file.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool, CliError> {
        Ok(flag || self.get::<bool>(None, key)?.unwrap_or(false))
    }
}

/// Comma-separated list; an empty string is an empty list.
pub fn parse_list<T: FromStr>(text: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| CliError::Usage(format!("bad list item '{s}': {e}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_prefers_flags() {
        let s = Settings::parse("# run\nalpha = 0.5\ntraj_per_instance=4  # N\n\nkind = cvrp\n").unwrap();
        assert_eq!(s.get::<f64>(None, "alpha").unwrap(), Some(0.5));
        assert_eq!(s.get(Some(0.9), "alpha").unwrap(), Some(0.9));
        assert_eq!(s.get::<usize>(None, "traj-per-instance").unwrap(), Some(4));
        assert_eq!(s.raw("kind"), Some("cvrp"));
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(Settings::parse("alpha 0.3").is_err());
        assert!(Settings::parse("n = 1\nn = 2").is_err());
        assert!(Settings::parse("alhpa = 0.3").is_err());
        let s = Settings::parse("n = twenty").unwrap();
        assert!(s.get::<usize>(None, "n").is_err());
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list::<f64>("0.5, 0.6").unwrap(), vec![0.5, 0.6]);
        assert!(parse_list::<f64>("").unwrap().is_empty());
        assert!(parse_list::<f64>("x").is_err());
    }
}
