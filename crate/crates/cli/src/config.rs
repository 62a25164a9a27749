//! `key = value` config files. Flags override the file, which overrides defaults.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, Context};

use crate::Failure;

#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("config: reading {}", path.display()))
            .map_err(Failure::usage)?;
        Self::parse(&text).map_err(Failure::usage)
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config: line {} is not `key = value`", n + 1))?;
            let key = k.trim().trim_start_matches("--").replace('_', "-");
            values.insert(key, v.trim().to_string());
        }
        Ok(Self { values })
    }

    /// Flag value if given, else the config entry `key`, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: Option<T>) -> Result<T, Failure>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        if let Some(raw) = self.values.get(key) {
            return raw
                .parse()
                .map_err(|e| Failure::usage(anyhow!("config: bad value for {key}: {e}")));
        }
        default.ok_or_else(|| Failure::usage(anyhow!("missing required --{key}")))
    }

    pub fn pick_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, Failure>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_none() && !self.values.contains_key(key) {
            return Ok(None);
        }
        self.pick(flag, key, None).map(Some)
    }
}
