//! Pipeline configuration file (TOML). Every field is optional; missing
//! fields take their defaults. The file is found via `--config`, then the
//! `FLIPSEG_CONFIG` environment variable; without either the defaults apply.

use std::path::{Path, PathBuf};

use flipseg_core::losses::LossConfig;
use flipseg_core::metrics::MetricsConfig;
use flipseg_core::phantom::PhantomPreset;
use flipseg_core::refine::RefinementConfig;
use flipseg_core::survival::SurvivalConfig;
use flipseg_core::uncertainty::{CertaintyFormula, DEFAULT_THRESHOLDS};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CONFIG_ENV: &str = "FLIPSEG_CONFIG";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintySettings {
    pub formula: CertaintyFormula,
    /// Certainty cut-offs (0–100) for the filtered-Dice curves.
    pub thresholds: Vec<f64>,
}

impl Default for UncertaintySettings {
    fn default() -> Self {
        Self {
            formula: CertaintyFormula::default(),
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSettings {
    pub preset: PhantomPreset,
    pub seed: u64,
}

impl Default for PhantomSettings {
    fn default() -> Self {
        Self {
            preset: PhantomPreset::HggLike,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub refinement: RefinementConfig,
    pub loss: LossConfig,
    pub uncertainty: UncertaintySettings,
    pub metrics: MetricsConfig,
    pub survival: SurvivalConfig,
    pub phantom: PhantomSettings,
}

impl Config {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|source| Error::Toml {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate().map_err(|e| Error::format(path, e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    /// Explicit path, else `FLIPSEG_CONFIG`, else defaults. Returns the path
    /// actually used.
    pub fn resolve(explicit: Option<&Path>) -> Result<(Self, Option<PathBuf>)> {
        let path = explicit
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from));
        match path {
            Some(p) => Ok((Self::load(&p)?, Some(p))),
            None => Ok((Self::default(), None)),
        }
    }

    pub fn validate(&self) -> flipseg_core::Result<()> {
        self.refinement.validate()?;
        self.loss.validate()?;
        self.survival.validate()?;
        let t = &self.uncertainty.thresholds;
        if t.is_empty() || t.windows(2).any(|w| w[0] >= w[1]) || t.iter().any(|v| !(0.0..=100.0).contains(v)) {
            return Err(flipseg_core::Error::InvalidConfig(
                "uncertainty thresholds must be strictly ascending within [0, 100]".into(),
            ));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration is always representable as TOML")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let text = Config::default().to_toml();
        for key in ["base_threshold", "fallback_threshold", "failsafe_min_voxels", "gamma", "lambda", "cap_days", "n_trees", "override_prob"] {
            assert!(text.contains(key), "{key} missing from\n{text}");
        }
        assert_eq!(Config::from_toml(&text, Path::new("x")).unwrap(), Config::default());
        assert_eq!(Config::from_toml("", Path::new("x")).unwrap(), Config::default());
    }

    #[test]
    fn partial_and_invalid_files() {
        let c = Config::from_toml("[refinement]\nmin_component_size = 4\n", Path::new("x")).unwrap();
        assert_eq!(c.refinement.min_component_size, 4);
        assert_eq!(c.refinement.base_threshold, 0.5);
        assert!(Config::from_toml("[refinement]\nbase_treshold = 0.4\n", Path::new("x")).is_err());
        assert!(Config::from_toml("[refinement]\nfallback_threshold = 0.7\n", Path::new("x")).is_err());
    }
}
