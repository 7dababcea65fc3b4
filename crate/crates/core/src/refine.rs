//! Uncertainty-driven refinement of WT / TC / ET segmentations.
//!
//! Per region: threshold the ensembled probability at `base_threshold`, drop
//! small components, and measure the mean probability inside what is left.
//! A low mean (or nothing left at all) means the model segmented the region
//! only vaguely; the region is then re-thresholded at `fallback_threshold`.
//! Across regions: an empty tumor core is replaced by the whole tumor, and an
//! empty whole tumor triggers the failsafe, which lowers the WT threshold
//! until enough voxels are found.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::ensemble::check_range;
use crate::error::{Error, Result};
use crate::stats;
use crate::volume::{remove_small_components, Connectivity, LabelMap, Mask3D, Volume3D};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionLabel {
    WholeTumor,
    TumorCore,
    EnhancingTumor,
}

impl RegionLabel {
    /// Order used for reports and result columns.
    pub const ALL: [RegionLabel; 3] = [
        RegionLabel::WholeTumor,
        RegionLabel::TumorCore,
        RegionLabel::EnhancingTumor,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            RegionLabel::WholeTumor => "WT",
            RegionLabel::TumorCore => "TC",
            RegionLabel::EnhancingTumor => "ET",
        }
    }
}

/// One mask per region, sharing geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationSet {
    pub whole_tumor: Mask3D,
    pub tumor_core: Mask3D,
    pub enhancing_tumor: Mask3D,
}

impl SegmentationSet {
    pub fn new(whole_tumor: Mask3D, tumor_core: Mask3D, enhancing_tumor: Mask3D) -> Result<Self> {
        whole_tumor.ensure_same_dims(&tumor_core)?;
        whole_tumor.ensure_same_dims(&enhancing_tumor)?;
        Ok(Self {
            whole_tumor,
            tumor_core,
            enhancing_tumor,
        })
    }

    pub fn get(&self, region: RegionLabel) -> &Mask3D {
        match region {
            RegionLabel::WholeTumor => &self.whole_tumor,
            RegionLabel::TumorCore => &self.tumor_core,
            RegionLabel::EnhancingTumor => &self.enhancing_tumor,
        }
    }

    /// `ET ⊆ TC ⊆ WT`.
    pub fn is_nested(&self) -> bool {
        self.enhancing_tumor.is_subset_of(&self.tumor_core)
            && self.tumor_core.is_subset_of(&self.whole_tumor)
    }
}

/// Mean-probability gate per region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfidenceGates {
    pub whole_tumor: f64,
    pub tumor_core: f64,
    pub enhancing_tumor: f64,
}

impl Default for ConfidenceGates {
    fn default() -> Self {
        Self {
            whole_tumor: 0.90,
            tumor_core: 0.75,
            enhancing_tumor: 0.8,
        }
    }
}

impl ConfidenceGates {
    pub fn get(&self, region: RegionLabel) -> f64 {
        match region {
            RegionLabel::WholeTumor => self.whole_tumor,
            RegionLabel::TumorCore => self.tumor_core,
            RegionLabel::EnhancingTumor => self.enhancing_tumor,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefinementConfig {
    pub base_threshold: f64,
    pub fallback_threshold: f64,
    pub confidence_gate: ConfidenceGates,
    /// Components with fewer voxels than this are deleted.
    pub min_component_size: usize,
    pub failsafe_min_voxels: usize,
    pub connectivity: Connectivity,
    /// Clip ET to TC and TC to WT after refinement.
    pub enforce_nesting: bool,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            base_threshold: 0.5,
            fallback_threshold: 0.05,
            confidence_gate: ConfidenceGates::default(),
            min_component_size: 10,
            failsafe_min_voxels: 1000,
            connectivity: Connectivity::Corner26,
            enforce_nesting: false,
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.fallback_threshold
            && self.fallback_threshold < self.base_threshold
            && self.base_threshold < 1.0)
        {
            return Err(Error::InvalidConfig(format!(
                "thresholds must satisfy 0 < fallback ({}) < base ({}) < 1",
                self.fallback_threshold, self.base_threshold
            )));
        }
        for region in RegionLabel::ALL {
            let g = self.confidence_gate.get(region);
            // 0 is allowed: it disables the gate for non-empty masks
            if !(0.0..1.0).contains(&g) {
                return Err(Error::InvalidConfig(format!(
                    "confidence gate for {} must lie in [0, 1), got {g}",
                    region.short_name()
                )));
            }
        }
        Ok(())
    }
}

/// Audit record of the decisions taken for one region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub region: RegionLabel,
    /// Mean probability inside the base mask; absent when it was empty.
    pub mean_confidence: Option<f64>,
    pub gate_triggered: bool,
    pub fallback_used: bool,
    /// TC only: the core was empty and replaced by the whole tumor.
    pub core_substituted: bool,
    /// WT only: nothing was detected and the failsafe cut was used.
    pub failsafe_triggered: bool,
    /// Threshold that produced the final mask. For the failsafe this is the
    /// inclusive cut value (`p >= final_threshold`).
    pub final_threshold: f64,
    pub voxels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub whole_tumor: RegionReport,
    pub tumor_core: RegionReport,
    pub enhancing_tumor: RegionReport,
}

impl RefinementReport {
    pub fn get(&self, region: RegionLabel) -> &RegionReport {
        match region {
            RegionLabel::WholeTumor => &self.whole_tumor,
            RegionLabel::TumorCore => &self.tumor_core,
            RegionLabel::EnhancingTumor => &self.enhancing_tumor,
        }
    }

    /// One human-readable line per region.
    pub fn summary_lines(&self) -> Vec<alloc::string::String> {
        RegionLabel::ALL
            .iter()
            .map(|&r| {
                let rep = self.get(r);
                let conf = match rep.mean_confidence {
                    Some(c) => format!("{c:.4}"),
                    None => "none".into(),
                };
                format!(
                    "{}: mean_confidence={} gate_triggered={} fallback_used={} core_substituted={} failsafe_triggered={} final_threshold={} voxels={}",
                    r.short_name(),
                    conf,
                    rep.gate_triggered,
                    rep.fallback_used,
                    rep.core_substituted,
                    rep.failsafe_triggered,
                    rep.final_threshold,
                    rep.voxels
                )
            })
            .collect()
    }
}

/// Foreground iff `p > t`.
pub fn threshold_mask(p: &Volume3D, t: f64) -> Mask3D {
    let data = p.data().iter().map(|&v| v > t).collect();
    Mask3D::from_raw(p.dims(), p.spacing(), data)
}

/// Mean of `p` over the foreground of `m`; `None` for an empty mask.
pub fn mean_region_confidence(p: &Volume3D, m: &Mask3D) -> Result<Option<f64>> {
    p.ensure_same_dims(m)?;
    let inside: Vec<f64> = p
        .data()
        .iter()
        .zip(m.data())
        .filter_map(|(&v, &b)| b.then_some(v))
        .collect();
    if inside.is_empty() {
        return Ok(None);
    }
    Ok(Some(stats::mean(&inside)))
}

/// Threshold, filter and confidence-gate a single region.
pub fn refine_region(
    p: &Volume3D,
    region: RegionLabel,
    cfg: &RefinementConfig,
) -> Result<(Mask3D, RegionReport)> {
    check_range(p, 0.0, 1.0)?;
    let base = remove_small_components(
        &threshold_mask(p, cfg.base_threshold),
        cfg.min_component_size,
        cfg.connectivity,
    );
    let mean_confidence = mean_region_confidence(p, &base)?;
    let gate_triggered = match mean_confidence {
        None => true,
        Some(c) => c < cfg.confidence_gate.get(region),
    };
    let (mask, final_threshold) = if gate_triggered {
        let fallback = remove_small_components(
            &threshold_mask(p, cfg.fallback_threshold),
            cfg.min_component_size,
            cfg.connectivity,
        );
        (fallback, cfg.fallback_threshold)
    } else {
        (base, cfg.base_threshold)
    };
    let report = RegionReport {
        region,
        mean_confidence,
        gate_triggered,
        fallback_used: gate_triggered,
        core_substituted: false,
        failsafe_triggered: false,
        final_threshold,
        voxels: mask.count(),
    };
    Ok((mask, report))
}

/// Lower the WT threshold until at least `cfg.failsafe_min_voxels` voxels
/// survive small-component removal.
///
/// Candidate cuts are the distinct values of `p`, and a cut `c` selects every
/// voxel with `p >= c` (ties included). The surviving voxel count only grows
/// as the cut decreases, so the highest sufficient cut is found by bisection,
/// starting from the order statistic at rank `failsafe_min_voxels`. If no cut
/// suffices (a volume smaller than the limits), the whole volume is
/// returned.
pub fn failsafe_mask(p: &Volume3D, cfg: &RefinementConfig) -> (Mask3D, f64) {
    let mut sorted: Vec<f64> = p.data().to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let need = cfg.failsafe_min_voxels.max(1);
    // No cut above the need-th largest value can select `need` voxels.
    let kth = sorted[need.min(sorted.len()) - 1];
    sorted.dedup();
    let start = sorted.iter().position(|&v| v == kth).unwrap_or(0);

    let select = |cut: f64| {
        let raw = Mask3D::from_raw(
            p.dims(),
            p.spacing(),
            p.data().iter().map(|&v| v >= cut).collect(),
        );
        remove_small_components(&raw, cfg.min_component_size, cfg.connectivity)
    };

    // smallest index in [start, len) whose cut is sufficient
    let (mut lo, mut hi) = (start, sorted.len());
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if select(sorted[mid]).count() >= need {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    if lo < sorted.len() {
        (select(sorted[lo]), sorted[lo])
    } else {
        let full = Mask3D::from_raw(p.dims(), p.spacing(), alloc::vec![true; p.len()]);
        (full, sorted[sorted.len() - 1])
    }
}

/// Full refinement of the three ensembled probability volumes.
pub fn refine_segmentation(
    p_wt: &Volume3D,
    p_tc: &Volume3D,
    p_et: &Volume3D,
    cfg: &RefinementConfig,
) -> Result<(SegmentationSet, RefinementReport)> {
    cfg.validate()?;
    p_wt.ensure_same_dims(p_tc)?;
    p_wt.ensure_same_dims(p_et)?;

    let (mut wt, mut wt_rep) = refine_region(p_wt, RegionLabel::WholeTumor, cfg)?;
    let (mut tc, mut tc_rep) = refine_region(p_tc, RegionLabel::TumorCore, cfg)?;
    let (mut et, mut et_rep) = refine_region(p_et, RegionLabel::EnhancingTumor, cfg)?;

    if !tc.any() {
        tc = wt.clone();
        tc_rep.core_substituted = true;
    }
    if !wt.any() {
        let (mask, cut) = failsafe_mask(p_wt, cfg);
        wt = mask;
        wt_rep.failsafe_triggered = true;
        wt_rep.final_threshold = cut;
        if !tc.any() {
            tc = wt.clone();
            tc_rep.core_substituted = true;
        }
    }
    if cfg.enforce_nesting {
        tc = tc.and(&wt)?;
        et = et.and(&tc)?;
    }
    wt_rep.voxels = wt.count();
    tc_rep.voxels = tc.count();
    et_rep.voxels = et.count();

    Ok((
        SegmentationSet::new(wt, tc, et)?,
        RefinementReport {
            whole_tumor: wt_rep,
            tumor_core: tc_rep,
            enhancing_tumor: et_rep,
        },
    ))
}

/// BraTS label encoding: 4 enhancing, 1 non-enhancing core, 2 edema, 0
/// background. Priority ET > TC > WT.
pub fn masks_to_brats_labels(s: &SegmentationSet) -> LabelMap {
    let data = s
        .whole_tumor
        .data()
        .iter()
        .zip(s.tumor_core.data())
        .zip(s.enhancing_tumor.data())
        .map(|((&wt, &tc), &et)| {
            if et {
                4
            } else if tc {
                1
            } else if wt {
                2
            } else {
                0
            }
        })
        .collect();
    LabelMap::from_raw(s.whole_tumor.dims(), s.whole_tumor.spacing(), data)
}

/// Inverse of [`masks_to_brats_labels`]: WT = {1, 2, 4}, TC = {1, 4},
/// ET = {4}. Other label values are background.
pub fn brats_labels_to_masks(labels: &LabelMap) -> SegmentationSet {
    let mk = |f: fn(u8) -> bool| {
        Mask3D::from_raw(
            labels.dims(),
            labels.spacing(),
            labels.data().iter().map(|&l| f(l)).collect(),
        )
    };
    SegmentationSet {
        whole_tumor: mk(|l| matches!(l, 1 | 2 | 4)),
        tumor_core: mk(|l| matches!(l, 1 | 4)),
        enhancing_tumor: mk(|l| l == 4),
    }
}
