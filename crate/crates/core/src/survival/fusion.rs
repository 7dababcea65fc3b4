use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::forest::argmax;
use super::{fit_forest, fit_ols, ClassBins, Feature, ForestConfig, ForestModel, OlsModel, SurvivalClass, SurvivalRecord};
use crate::error::{Error, Result};

/// Survival time substituted when the forest overrides the linear model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverrideDays {
    pub short: f64,
    pub mid: f64,
    pub long: f64,
}

impl Default for OverrideDays {
    fn default() -> Self {
        Self {
            short: 299.0,
            mid: 375.0,
            long: 451.0,
        }
    }
}

impl OverrideDays {
    pub fn get(&self, c: SurvivalClass) -> f64 {
        match c {
            SurvivalClass::Short => self.short,
            SurvivalClass::Mid => self.mid,
            SurvivalClass::Long => self.long,
        }
    }
}

/// Everything needed to train the fused survival model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurvivalConfig {
    pub bins: ClassBins,
    /// Training targets above this are replaced by it; linear predictions
    /// are clamped to `[0, cap_days]`.
    pub cap_days: f64,
    pub ols_features: Vec<Feature>,
    pub forest: ForestConfig,
    /// Minimum forest probability for an override.
    pub override_prob: f64,
    pub override_days: OverrideDays,
    pub folds: usize,
}

impl Default for SurvivalConfig {
    fn default() -> Self {
        Self {
            bins: ClassBins::default(),
            cap_days: 1000.0,
            ols_features: vec![Feature::Age],
            forest: ForestConfig::default(),
            override_prob: 0.5,
            override_days: OverrideDays::default(),
            folds: 5,
        }
    }
}

impl SurvivalConfig {
    pub fn validate(&self) -> Result<()> {
        let b = &self.bins;
        if !(b.short_below_days.is_finite() && b.long_above_days.is_finite() && 0.0 < b.short_below_days)
            || b.short_below_days > b.long_above_days
        {
            return Err(Error::InvalidConfig("class bins must satisfy 0 < short <= long".into()));
        }
        if !(self.cap_days.is_finite() && self.cap_days > 0.0) {
            return Err(Error::InvalidConfig("cap_days must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.override_prob) {
            return Err(Error::InvalidConfig("override_prob must lie in [0, 1]".into()));
        }
        for c in SurvivalClass::ALL {
            let d = self.override_days.get(c);
            if !(d >= 0.0 && b.classify(d) == c) {
                return Err(Error::InvalidConfig(alloc::format!(
                    "override_days for {c:?} ({d}) must fall inside its own class"
                )));
            }
        }
        if self.folds < 2 {
            return Err(Error::InvalidConfig("cross-validation needs at least 2 folds".into()));
        }
        self.forest.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub config: SurvivalConfig,
    pub ols: OlsModel,
    pub forest: ForestModel,
}

/// The override rule on precomputed sub-model outputs.
///
/// The linear prediction is clamped to `[0, cap_days]`; if the forest's most
/// probable class differs from the class of that value and has probability
/// at least `override_prob`, the class's override time is returned instead.
pub fn fuse_survival(ols_days: f64, proba: &[f64; 3], cfg: &SurvivalConfig) -> f64 {
    let d = ols_days.clamp(0.0, cfg.cap_days);
    let linear_class = cfg.bins.classify(d);
    let (forest_class, p) = argmax(proba);
    if forest_class != linear_class && p >= cfg.override_prob {
        cfg.override_days.get(forest_class)
    } else {
        d
    }
}

pub fn predict_fused(model: &FusionModel, rec: &SurvivalRecord) -> f64 {
    fuse_survival(model.ols.predict(rec), &model.forest.predict_proba(rec), &model.config)
}

pub fn fit_fusion(train: &[SurvivalRecord], cfg: &SurvivalConfig) -> Result<FusionModel> {
    cfg.validate()?;
    let ols = fit_ols(train, &cfg.ols_features, cfg.cap_days)?;
    let forest = fit_forest(train, &cfg.forest, &cfg.bins)?;
    Ok(FusionModel {
        config: cfg.clone(),
        ols,
        forest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples() {
        let cfg = SurvivalConfig::default();
        assert_eq!(fuse_survival(400.0, &[0.6, 0.3, 0.1], &cfg), 299.0);
        assert_eq!(fuse_survival(200.0, &[0.9, 0.05, 0.05], &cfg), 200.0);
        assert_eq!(fuse_survival(400.0, &[0.2, 0.35, 0.45], &cfg), 400.0);
    }

    #[test]
    fn clamps_and_overrides_at_boundary() {
        let cfg = SurvivalConfig::default();
        assert_eq!(fuse_survival(1800.0, &[0.0, 0.0, 1.0], &cfg), 1000.0);
        assert_eq!(fuse_survival(-50.0, &[1.0, 0.0, 0.0], &cfg), 0.0);
        assert_eq!(fuse_survival(1800.0, &[0.0, 0.5, 0.5], &cfg), 375.0);
        assert_eq!(fuse_survival(100.0, &[0.0, 0.0, 0.5], &cfg), 451.0);
    }

    #[test]
    fn config_validation() {
        assert!(SurvivalConfig::default().validate().is_ok());
        let mut c = SurvivalConfig::default();
        c.override_days.short = 300.0;
        assert!(c.validate().is_err());
        let c = SurvivalConfig {
            folds: 1,
            ..SurvivalConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
