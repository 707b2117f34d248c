//! Settings precedence: command-line flags, then the `--config` JSON file,
//! then built-in defaults.
//!
//! The config file is one JSON object. `seed` and `workers` sit at the top
//! level; settings of a subcommand live in an object named after it, with
//! keys spelled like the long flags but with underscores:
//!
//! ```json
//! { "seed": 7, "gen": { "count": 20, "exposure_ms": 210 } }
//! ```

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

pub const SECTIONS: &[&str] = &["gen", "blur", "train", "eval", "fuse", "restore"];
const TOP_LEVEL: &[&str] = &["seed", "workers"];

/// Parsed config file.
#[derive(Clone, Debug, Default)]
pub struct ConfigFile {
    root: Map<String, Value>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let Value::Object(root) = serde_json::from_str(text)? else {
            bail!("the config must be a JSON object");
        };
        for (k, v) in &root {
            if SECTIONS.contains(&k.as_str()) {
                if !v.is_object() {
                    bail!("config section `{k}` must be an object");
                }
            } else if !TOP_LEVEL.contains(&k.as_str()) {
                bail!("unknown config key `{k}`");
            }
        }
        Ok(ConfigFile { root })
    }

    /// Top-level shared settings.
    pub fn common(&self) -> Map<String, Value> {
        self.root
            .iter()
            .filter(|(k, _)| TOP_LEVEL.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    pub fn section(&self, name: &str) -> Map<String, Value> {
        match self.root.get(name) {
            Some(Value::Object(m)) => m.clone(),
            _ => Map::new(),
        }
    }
}

/// Overlays the flags given on the command line onto `file`. A flag counts
/// as given when it is not `null` (absent option) or `false` (absent switch).
pub fn overlay<A: Serialize + DeserializeOwned>(cli: &A, mut file: Map<String, Value>) -> Result<A> {
    let Value::Object(flags) = serde_json::to_value(cli)? else {
        bail!("settings must serialize to an object");
    };
    for (k, v) in flags {
        if !(v.is_null() || v == Value::Bool(false)) {
            file.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(file)).context("invalid setting")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize, Deserialize, Default, Debug, PartialEq)]
    #[serde(default, deny_unknown_fields)]
    struct S {
        count: Option<usize>,
        lr: Option<f64>,
        raw: bool,
    }

    #[test]
    fn flags_override_file_which_overrides_defaults() {
        let f = ConfigFile::parse(r#"{"seed": 3, "gen": {"count": 5, "lr": 0.1, "raw": true}}"#).unwrap();
        let cli = S {
            count: Some(9),
            ..S::default()
        };
        let s: S = overlay(&cli, f.section("gen")).unwrap();
        assert_eq!(
            s,
            S {
                count: Some(9),
                lr: Some(0.1),
                raw: true
            }
        );
        let s: S = overlay(&S::default(), ConfigFile::default().section("gen")).unwrap();
        assert_eq!(s, S::default());
        assert_eq!(f.common().get("seed"), Some(&Value::from(3)));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ConfigFile::parse(r#"{"sede": 3}"#).is_err());
        assert!(ConfigFile::parse(r#"{"gen": 3}"#).is_err());
        let f = ConfigFile::parse(r#"{"gen": {"cuont": 3}}"#).unwrap();
        assert!(overlay(&S::default(), f.section("gen")).is_err());
    }
}
