//! Simulation configuration file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::isasoa::AlgorithmParams;
use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineParams {
    /// Bits added to every UAV cache per slot.
    pub sense_bits_per_slot: f64,
    /// Bits moved per unit of rate (bits/s/Hz) per slot.
    pub capacity_scale: f64,
}

impl Default for EngineParams {
    fn default() -> Self {
        Self {
            sense_bits_per_slot: 2.0,
            capacity_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub scenario: ScenarioConfig,
    pub channel: ChannelParams<f64>,
    pub algorithm: AlgorithmParams<f64>,
    pub engine: EngineParams,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.channel.validate()?;
        self.algorithm.validate()?;
        let e = &self.engine;
        if !(e.sense_bits_per_slot.is_finite() && e.sense_bits_per_slot >= 0.0) {
            return Err(Error::config("sense_bits_per_slot must be finite and >= 0"));
        }
        if !(e.capacity_scale.is_finite() && e.capacity_scale >= 0.0) {
            return Err(Error::config("capacity_scale must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}
