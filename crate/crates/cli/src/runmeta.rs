//! Reproducibility metadata: every command echoes its fully-resolved
//! configuration (defaults included) to `run.json` in its output directory,
//! and optional JSON config files fill in flags the user left at their
//! defaults (precedence: flags > config file > profile defaults).

use crate::Cli;
use clap::parser::ValueSource;
use clap::ArgMatches;
use framestab::error::{Error, Result};
use serde::de::DeserializeOwned;
use serde_json::{json, Map, Value};
use std::fs;
use std::path::Path;

pub struct ConfigFile {
    values: Map<String, Value>,
}

impl ConfigFile {
    pub fn load(cli: &Cli) -> Result<ConfigFile> {
        let values = match &cli.config {
            None => Map::new(),
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let parsed: Value = serde_json::from_str(&text)
                    .map_err(|e| Error::Format(format!("config {}: {e}", path.display())))?;
                match parsed {
                    Value::Object(map) => map,
                    _ => {
                        return Err(Error::Format(format!(
                            "config {} must be a JSON object",
                            path.display()
                        )))
                    }
                }
            }
        };
        Ok(ConfigFile { values })
    }

    /// Replaces `slot` with the config-file value for `key` when the flag was
    /// not given explicitly on the command line.
    pub fn apply<T: DeserializeOwned>(&self, matches: &ArgMatches, id: &str, key: &str, slot: &mut T) {
        if matches!(matches.value_source(id), Some(ValueSource::CommandLine)) {
            return;
        }
        if let Some(v) = self.values.get(key) {
            if let Ok(parsed) = serde_json::from_value::<T>(v.clone()) {
                *slot = parsed;
            }
        }
    }
}

pub fn write_run_json(out_dir: &Path, command: &str, cli: &Cli, resolved: Value) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let doc = json!({
        "command": command,
        "seed": cli.seed,
        "profile": cli.profile,
        "resolved": resolved,
    });
    let path = out_dir.join("run.json");
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::Format(format!("run.json encode: {e}")))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
