//! Analysis settings shared by the reporting commands.

use std::path::Path;

use psibench_core::metrics::EnergyModel;
use psibench_core::stats::BootstrapConfig;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Settings {
    pub tmax: f64,
    pub energy: EnergyModel,
    pub bootstrap: BootstrapSettings,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapSettings {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            tmax: 1024.0,
            energy: EnergyModel::default(),
            bootstrap: BootstrapSettings::default(),
        }
    }
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        let d = BootstrapConfig::default();
        Self {
            resamples: d.resamples,
            level: d.level,
            seed: d.seed,
        }
    }
}

impl Settings {
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Self, CliError> {
        let mut s = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::from(e).context(p.display()))?;
                toml::from_str::<Settings>(&text).map_err(|e| CliError::from(e).context(p.display()))?
            }
            None => Settings::default(),
        };
        s.energy.validate()?;
        if let Some(seed) = seed {
            s.bootstrap.seed = seed;
        }
        Ok(s)
    }

    pub fn bootstrap(&self, resamples: Option<usize>) -> BootstrapConfig {
        BootstrapConfig {
            resamples: resamples.unwrap_or(self.bootstrap.resamples),
            level: self.bootstrap.level,
            seed: self.bootstrap.seed,
        }
    }
}
