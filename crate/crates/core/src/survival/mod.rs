//! Survival prediction from age and segmentation-derived counts.
//!
//! Two features are read off the refined segmentation: the number of
//! disconnected whole-tumor regions and the number of disconnected tumor
//! cores. A linear model on capped survival times produces a number of days;
//! a shallow random forest classifies the case into short / mid / long
//! survivors, and overrides the linear prediction when it confidently
//! disagrees with the linear model's class.

mod eval;
mod forest;
mod fusion;
mod ols;

pub use eval::{
    cross_validate, evaluate_survival, fold_assignment, CvReport, FoldResult, SurvivalMetrics,
};
pub use forest::{fit_forest, DecisionTree, ForestConfig, ForestModel, Node};
pub use fusion::{fit_fusion, fuse_survival, predict_fused, FusionModel, OverrideDays, SurvivalConfig};
pub use ols::{fit_ols, OlsModel};

use alloc::string::String;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::refine::SegmentationSet;
use crate::volume::{connected_components, Connectivity};

/// One case: features plus (when known) the observed survival time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub case_id: String,
    /// Years.
    pub age: f64,
    /// Disconnected whole-tumor regions.
    pub n_tumors: u32,
    /// Disconnected tumor-core regions.
    pub n_cores: u32,
    pub survival_days: Option<f64>,
    pub resection_status: Option<String>,
}

impl SurvivalRecord {
    pub fn new(case_id: impl Into<String>, age: f64, n_tumors: u32, n_cores: u32) -> Self {
        Self {
            case_id: case_id.into(),
            age,
            n_tumors,
            n_cores,
            survival_days: None,
            resection_status: None,
        }
    }

    pub fn with_survival(mut self, days: f64) -> Self {
        self.survival_days = Some(days);
        self
    }

    pub(crate) fn validate(&self) -> crate::Result<()> {
        let bad = |reason| {
            Err(crate::Error::InvalidRecord {
                case_id: self.case_id.clone(),
                reason,
            })
        };
        if !(self.age.is_finite() && self.age > 0.0) {
            return bad("age must be positive");
        }
        if let Some(d) = self.survival_days {
            if !(d.is_finite() && d >= 0.0) {
                return bad("survival days must be non-negative");
            }
        }
        Ok(())
    }

    /// Order used to make fitting independent of input order.
    pub(crate) fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.case_id
            .cmp(&other.case_id)
            .then(self.age.total_cmp(&other.age))
            .then(self.n_tumors.cmp(&other.n_tumors))
            .then(self.n_cores.cmp(&other.n_cores))
            .then_with(|| {
                let a = self.survival_days.unwrap_or(f64::NEG_INFINITY);
                let b = other.survival_days.unwrap_or(f64::NEG_INFINITY);
                a.total_cmp(&b)
            })
    }
}

pub(crate) fn canonical_order(records: &[SurvivalRecord]) -> alloc::vec::Vec<&SurvivalRecord> {
    let mut v: alloc::vec::Vec<&SurvivalRecord> = records.iter().collect();
    v.sort_by(|a, b| a.canonical_cmp(b));
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurvivalClass {
    Short,
    Mid,
    Long,
}

impl SurvivalClass {
    pub const ALL: [SurvivalClass; 3] = [SurvivalClass::Short, SurvivalClass::Mid, SurvivalClass::Long];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }
}

/// Class boundaries in days. Short is `d < short_below_days`, long is
/// `d > long_above_days`, mid is the closed interval between. The defaults
/// are 10 and 15 months of 30 days.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassBins {
    pub short_below_days: f64,
    pub long_above_days: f64,
}

impl Default for ClassBins {
    fn default() -> Self {
        Self {
            short_below_days: 300.0,
            long_above_days: 450.0,
        }
    }
}

impl ClassBins {
    pub fn classify(&self, days: f64) -> SurvivalClass {
        if days < self.short_below_days {
            SurvivalClass::Short
        } else if days > self.long_above_days {
            SurvivalClass::Long
        } else {
            SurvivalClass::Mid
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Age,
    NCores,
    NTumors,
}

impl Feature {
    pub fn value(self, rec: &SurvivalRecord) -> f64 {
        match self {
            Feature::Age => rec.age,
            Feature::NTumors => rec.n_tumors as f64,
            Feature::NCores => rec.n_cores as f64,
        }
    }
}

/// Count the disconnected WT and TC regions of a segmentation.
pub fn extract_features(
    seg: &SegmentationSet,
    case_id: impl Into<String>,
    age: f64,
    connectivity: Connectivity,
) -> SurvivalRecord {
    let n_tumors = connected_components(&seg.whole_tumor, connectivity).component_count() as u32;
    let n_cores = connected_components(&seg.tumor_core, connectivity).component_count() as u32;
    SurvivalRecord::new(case_id, age, n_tumors, n_cores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Mask3D;
    use alloc::vec;

    #[test]
    fn bins_partition() {
        let b = ClassBins::default();
        assert_eq!(b.classify(0.0), SurvivalClass::Short);
        assert_eq!(b.classify(299.999), SurvivalClass::Short);
        assert_eq!(b.classify(300.0), SurvivalClass::Mid);
        assert_eq!(b.classify(450.0), SurvivalClass::Mid);
        assert_eq!(b.classify(450.001), SurvivalClass::Long);
    }

    #[test]
    fn feature_counts() {
        let dims = [10, 3, 3];
        let empty = Mask3D::filled(dims, false).unwrap();
        let none = SegmentationSet::new(empty.clone(), empty.clone(), empty.clone()).unwrap();
        let r = extract_features(&none, "a", 50.0, Connectivity::Corner26);
        assert_eq!((r.n_tumors, r.n_cores), (0, 0));

        // two WT blobs at x in 0..3 and 6..9, a core inside the first one
        let mut wt = vec![false; 90];
        let mut tc = vec![false; 90];
        for z in 0..3 {
            for y in 0..3 {
                for x in (0..3).chain(6..9) {
                    wt[x + 10 * (y + 3 * z)] = true;
                }
                tc[1 + 10 * (y + 3 * z)] = true;
            }
        }
        let seg = SegmentationSet::new(
            Mask3D::new(dims, wt).unwrap(),
            Mask3D::new(dims, tc).unwrap(),
            empty,
        )
        .unwrap();
        let r = extract_features(&seg, "b", 61.0, Connectivity::Corner26);
        assert_eq!((r.n_tumors, r.n_cores), (2, 1));
        assert_eq!(r.age, 61.0);
    }
}
