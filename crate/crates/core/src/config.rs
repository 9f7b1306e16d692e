//! Run configuration: built-in defaults, an optional JSON file, dotted-key
//! overrides, then explicit flags, each layer taking precedence over the
//! previous one.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::data::{SyntheticConfig, Windowing, NUM_SAMPLES};
use crate::error::{Error, Result};
use crate::eval::{Architecture, GridPoint, LosoConfig};
use crate::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub architecture: Architecture,
    pub val_frac: f64,
    pub windowing: Option<Windowing>,
    /// Generator settings used with `--synth`.
    pub synth: SyntheticConfig,
    /// One-second samples kept per trial when loading recordings.
    pub samples: usize,
    /// Main-accuracy tolerance band for configuration selection.
    pub epsilon: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let loso = LosoConfig::default();
        Self {
            train: loso.train,
            architecture: loso.architecture,
            val_frac: loso.val_frac,
            windowing: loso.windowing,
            synth: SyntheticConfig::default(),
            samples: NUM_SAMPLES,
            epsilon: 0.01,
        }
    }
}

impl RunConfig {
    pub fn loso(&self) -> LosoConfig {
        LosoConfig {
            train: self.train,
            architecture: self.architecture,
            val_frac: self.val_frac,
            windowing: self.windowing,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.synth.validate()?;
        if !(0.0..1.0).contains(&self.val_frac) {
            return Err(Error::Validation(format!("val_frac must lie in [0, 1), got {}", self.val_frac)));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Validation(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if self.samples == 0 {
            return Err(Error::Validation("samples must be at least 1".into()));
        }
        Ok(())
    }

    /// Defaults, overlaid by `file` and then by `overrides` (`key=value`,
    /// dotted keys, value parsed as JSON or else taken as a string).
    pub fn layered(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = serde_json::to_value(RunConfig::default())?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let layer: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
                file: path.to_path_buf(),
                line: e.line(),
                msg: e.to_string(),
            })?;
            merge(&mut value, layer, "")?;
        }
        for o in overrides {
            set_dotted(&mut value, o)?;
        }
        let cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| Error::Validation(format!("invalid configuration: {e}")))?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn merge(base: &mut Value, layer: Value, prefix: &str) -> Result<()> {
    match (base, layer) {
        (Value::Object(b), Value::Object(l)) => {
            for (k, v) in l {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                let slot = b
                    .get_mut(&k)
                    .ok_or_else(|| Error::Validation(format!("unknown configuration key `{key}`")))?;
                merge(slot, v, &key)?;
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

fn set_dotted(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Validation(format!("override `{assignment}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut layer = value;
    for part in key.rsplit('.') {
        let mut m = serde_json::Map::new();
        m.insert(part.to_string(), layer);
        layer = Value::Object(m);
    }
    merge(root, layer, "")
}

/// `out/<hash>_seed<seed>`, the hash covering the configuration, the grid and
/// the data source so distinct runs never share a directory.
pub fn run_dir(out: &Path, config: &RunConfig, grid: &[GridPoint], data_source: &str) -> Result<PathBuf> {
    let mut h = Sha256::new();
    h.update(serde_json::to_string(config)?.as_bytes());
    h.update(serde_json::to_string(grid)?.as_bytes());
    h.update(data_source.as_bytes());
    let digest = h.finalize();
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    Ok(out.join(format!("{hex}_seed{}", config.train.seed)))
}
