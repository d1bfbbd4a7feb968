//! Config-file loading, command-line overlay, and the provenance header.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Failure;

const SECTIONS: [&str; 6] = ["moments", "fk-check", "landscape", "sgd", "pde", "toynet"];
const TOP_LEVEL: [&str; 2] = ["seed", "threads"];

#[derive(Debug, Default)]
pub struct FileConfig {
    pub table: toml::Table,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| Failure::config(format!("config {}: {e}", path.display())))?;
        for key in table.keys() {
            if !SECTIONS.contains(&key.as_str()) && !TOP_LEVEL.contains(&key.as_str()) {
                return Err(Failure::config(format!("unknown config key `{key}`")));
            }
        }
        Ok(Self { table })
    }

    fn integer(&self, key: &str) -> Result<Option<u64>, Failure> {
        match self.table.get(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(v) => Err(Failure::config(format!("`{key}` must be a non-negative integer, got {v}"))),
        }
    }

    pub fn seed(&self) -> Result<Option<u64>, Failure> {
        self.integer("seed")
    }

    pub fn threads(&self) -> Result<Option<usize>, Failure> {
        Ok(self.integer("threads")?.map(|t| t as usize))
    }

    /// The `[section]` table deserialized into `T` (all-unset when absent).
    pub fn section<T: DeserializeOwned + Default>(&self, name: &str) -> Result<T, Failure> {
        match self.table.get(name) {
            None => Ok(T::default()),
            Some(v) => v
                .clone()
                .try_into()
                .map_err(|e| Failure::config(format!("config section [{name}]: {e}"))),
        }
    }
}

/// Resolved settings that determine the data rows; threads and output
/// location are deliberately excluded.
#[derive(Serialize)]
struct Resolved<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    params: &'a T,
}

pub struct Provenance {
    pub command: &'static str,
    pub seed: u64,
    pub config_text: String,
    pub digest: String,
}

impl Provenance {
    pub fn new<T: Serialize>(command: &'static str, seed: u64, params: &T) -> Result<Self, Failure> {
        let config_text = toml::to_string(&Resolved { command, seed, params })
            .map_err(|e| Failure::config(format!("cannot serialize resolved config: {e}")))?;
        let digest = Sha256::digest(config_text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        Ok(Self { command, seed, config_text, digest })
    }

    /// Leading comment lines for every output file.
    pub fn meta(&self) -> Vec<(String, String)> {
        let mut m = vec![
            ("tool".to_string(), format!("viscoflow {}", env!("CARGO_PKG_VERSION"))),
            ("command".to_string(), self.command.to_string()),
            ("config_digest".to_string(), self.digest.clone()),
            ("seed".to_string(), self.seed.to_string()),
        ];
        for line in self.config_text.lines().filter(|l| !l.trim().is_empty()) {
            m.push(("config".to_string(), line.to_string()));
        }
        m
    }
}
