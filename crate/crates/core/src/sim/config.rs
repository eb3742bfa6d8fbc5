//! Structured text configuration for the simulator.
//!
//! All lengths are meters, angles radians, forces newtons. Key names match
//! the field names of [`HandModel`], [`PenShape`] and [`PhysParams`].

use super::{HandModel, PenShape, PhysParams};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub hand: HandModel,
    pub pen: PenShape,
    pub phys: PhysParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            hand: HandModel::default(),
            pen: PenShape::default(),
            phys: PhysParams::default(),
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(s: &str) -> Result<SimConfig, toml::de::Error> {
        toml::from_str(s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("simconfig serializes")
    }

    pub fn load(path: &Path) -> std::io::Result<SimConfig> {
        let text = std::fs::read_to_string(path)?;
        SimConfig::from_toml_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_toml_string())
    }
}
