//! Certainty maps on the 0–100 challenge scale (100 = most certain) and the
//! filtered-Dice evaluation protocol.
//!
//! Three scores are provided:
//!
//! * from the flip probability: `100 (1 - 2q)`;
//! * symmetric, for any sigmoid output `x`: the raw score
//!   `100 (1 - 2|0.5 - x|)`;
//! * negative-only: the raw score `200 max(0.5 - x, 0)`, which treats every
//!   positive prediction as certain.
//!
//! The two raw scores grow with the *uncertainty* of the prediction
//! (`x = 0.5` scores 100 symmetric, `x = 0` scores 100 negative-only). They
//! are exposed unchanged as [`raw_symmetric`] and [`raw_negative_only`]; the
//! certainty maps are `100 - raw`, so all three maps share the convention
//! that 100 is certain.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::ensemble::check_range;
use crate::error::{Error, Result};
use crate::metrics::dice_counts;
use crate::volume::{Mask3D, Volume3D};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertaintyFormula {
    /// From the flip-probability output `q`.
    Flip,
    /// Distance of the ensembled probability from 0.5.
    Symmetric,
    /// Positives are certain; negatives lose certainty towards 0.5.
    #[default]
    NegativeOnly,
}

#[inline]
pub fn certainty_from_q_value(q: f64) -> f64 {
    100.0 * (1.0 - 2.0 * q)
}

/// `100 (1 - 2|0.5 - x|)` (100 at `x = 0.5`), evaluated as
/// `100 - 200|0.5 - x|`, which rounds the decimal hand values exactly.
#[inline]
pub fn raw_symmetric(x: f64) -> f64 {
    100.0 - 200.0 * libm::fabs(0.5 - x)
}

/// `200 max(0.5 - x, 0)`.
#[inline]
pub fn raw_negative_only(x: f64) -> f64 {
    200.0 * f64::max(0.5 - x, 0.0)
}

#[inline]
pub fn certainty_symmetric_value(x: f64) -> f64 {
    100.0 - raw_symmetric(x)
}

/// 100 for positive predictions (`x > 0.5`), `100 - 200 (0.5 - x)` below.
#[inline]
pub fn certainty_negative_only_value(x: f64) -> f64 {
    100.0 - raw_negative_only(x)
}

/// `100 (1 - 2q)` per voxel; requires `q ∈ [0, 0.5]`.
pub fn certainty_from_q(q: &Volume3D) -> Result<Volume3D> {
    check_range(q, 0.0, 0.5)?;
    q.map(certainty_from_q_value)
}

/// Symmetric certainty per voxel; requires `x ∈ [0, 1]`.
pub fn certainty_symmetric(x: &Volume3D) -> Result<Volume3D> {
    check_range(x, 0.0, 1.0)?;
    x.map(certainty_symmetric_value)
}

/// Negative-only certainty per voxel; requires `x ∈ [0, 1]`.
pub fn certainty_negative_only(x: &Volume3D) -> Result<Volume3D> {
    check_range(x, 0.0, 1.0)?;
    x.map(certainty_negative_only_value)
}

/// Dispatch on `formula`. `input` is `q` for [`CertaintyFormula::Flip`] and
/// the ensembled probability otherwise.
pub fn certainty_map(formula: CertaintyFormula, input: &Volume3D) -> Result<Volume3D> {
    match formula {
        CertaintyFormula::Flip => certainty_from_q(input),
        CertaintyFormula::Symmetric => certainty_symmetric(input),
        CertaintyFormula::NegativeOnly => certainty_negative_only(input),
    }
}

pub const DEFAULT_THRESHOLDS: [f64; 5] = [0.0, 25.0, 50.0, 75.0, 100.0];

/// Filtered-Dice curves for one region of one case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyEvalCurve {
    pub thresholds: Vec<f64>,
    pub dice_at: Vec<f64>,
    /// Fraction of true positives filtered out.
    pub ftp_at: Vec<f64>,
    /// Fraction of true negatives filtered out.
    pub ftn_at: Vec<f64>,
    pub dice_auc: f64,
    pub ftp_auc: f64,
    pub ftn_auc: f64,
}

/// Trapezoidal area under `ys` over `xs / 100`.
fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]) / 100.0 * (y[0] + y[1]) / 2.0)
        .sum()
}

/// At each threshold `τ`, voxels with certainty `< τ` are excluded; Dice is
/// computed on the remaining voxels, and the filtered fractions of true
/// positives and true negatives are recorded.
pub fn evaluate_uncertainty(
    seg: &Mask3D,
    gt: &Mask3D,
    cert: &Volume3D,
    thresholds: &[f64],
) -> Result<UncertaintyEvalCurve> {
    seg.ensure_same_dims(gt)?;
    seg.ensure_same_dims(cert)?;
    if thresholds.is_empty() {
        return Err(Error::EmptyInput("uncertainty thresholds"));
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1])
        || thresholds.iter().any(|t| !(0.0..=100.0).contains(t))
    {
        return Err(Error::InvalidConfig(
            "uncertainty thresholds must be strictly ascending within [0, 100]".into(),
        ));
    }

    let tp_total = seg.data().iter().zip(gt.data()).filter(|(&s, &g)| s && g).count();
    let tn_total = seg.data().iter().zip(gt.data()).filter(|(&s, &g)| !s && !g).count();

    let mut dice_at = Vec::with_capacity(thresholds.len());
    let mut ftp_at = Vec::with_capacity(thresholds.len());
    let mut ftn_at = Vec::with_capacity(thresholds.len());
    for &tau in thresholds {
        let (mut tp, mut fp, mut fn_, mut tp_removed, mut tn_removed) = (0, 0, 0, 0, 0);
        for ((&s, &g), &c) in seg.data().iter().zip(gt.data()).zip(cert.data()) {
            let removed = c < tau;
            match (s, g, removed) {
                (true, true, false) => tp += 1,
                (true, true, true) => tp_removed += 1,
                (true, false, false) => fp += 1,
                (false, true, false) => fn_ += 1,
                (false, false, true) => tn_removed += 1,
                _ => {}
            }
        }
        dice_at.push(dice_counts(tp, fp, fn_));
        ftp_at.push(ratio(tp_removed, tp_total));
        ftn_at.push(ratio(tn_removed, tn_total));
    }

    Ok(UncertaintyEvalCurve {
        dice_auc: trapezoid(thresholds, &dice_at),
        ftp_auc: trapezoid(thresholds, &ftp_at),
        ftn_auc: trapezoid(thresholds, &ftn_at),
        thresholds: thresholds.to_vec(),
        dice_at,
        ftp_at,
        ftn_at,
    })
}

fn ratio(part: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        part as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn formula_values() {
        assert_eq!(certainty_from_q_value(0.0), 100.0);
        assert_eq!(certainty_from_q_value(0.5), 0.0);
        assert_eq!(certainty_from_q_value(0.1), 80.0);

        assert_eq!(raw_symmetric(0.9), 20.0);
        assert_eq!(raw_symmetric(0.5), 100.0);
        assert_eq!(certainty_symmetric_value(0.5), 0.0);
        assert_eq!(certainty_symmetric_value(0.0), 100.0);
        assert_eq!(certainty_symmetric_value(1.0), 100.0);

        assert_eq!(raw_negative_only(0.2), 60.0);
        assert_eq!(raw_negative_only(0.0), 100.0);
        assert_eq!(certainty_negative_only_value(0.0), 0.0);
        assert_eq!(certainty_negative_only_value(0.7), 100.0);
    }

    #[test]
    fn map_range_checks() {
        let bad = Volume3D::new([1, 1, 1], vec![0.7]).unwrap();
        assert!(certainty_from_q(&bad).is_err());
        assert!(certainty_map(CertaintyFormula::Symmetric, &bad).is_ok());
    }

    fn masks(seg: &[bool], gt: &[bool]) -> (Mask3D, Mask3D) {
        let d = [seg.len(), 1, 1];
        (Mask3D::new(d, seg.to_vec()).unwrap(), Mask3D::new(d, gt.to_vec()).unwrap())
    }

    #[test]
    fn three_voxel_case() {
        // TP kept, FP uncertain, TN certain
        let (seg, gt) = masks(&[true, true, false], &[true, false, false]);
        let cert = Volume3D::new([3, 1, 1], vec![100.0, 10.0, 100.0]).unwrap();
        let c = evaluate_uncertainty(&seg, &gt, &cert, &[0.0, 50.0]).unwrap();
        assert!((c.dice_at[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.dice_at[1], 1.0);
        assert_eq!(c.ftp_at, vec![0.0, 0.0]);
        assert_eq!(c.ftn_at, vec![0.0, 0.0]);
    }

    #[test]
    fn all_certain_map_is_flat() {
        let (seg, gt) = masks(&[true, true, false, false], &[true, false, true, false]);
        let cert = Volume3D::filled([4, 1, 1], 100.0).unwrap();
        let c = evaluate_uncertainty(&seg, &gt, &cert, &DEFAULT_THRESHOLDS).unwrap();
        assert!(c.dice_at.iter().all(|&d| d == 0.5));
        assert!(c.ftp_at.iter().chain(&c.ftn_at).all(|&v| v == 0.0));
        assert!((c.dice_auc - 0.5).abs() < 1e-15);
    }

    #[test]
    fn perfect_segmentation_scores_one() {
        let (seg, gt) = masks(&[true, false, true], &[true, false, true]);
        let cert = Volume3D::new([3, 1, 1], vec![20.0, 60.0, 90.0]).unwrap();
        let c = evaluate_uncertainty(&seg, &gt, &cert, &DEFAULT_THRESHOLDS).unwrap();
        assert!(c.dice_at.iter().all(|&d| d == 1.0));
        assert_eq!(c.ftp_at, vec![0.0, 0.5, 0.5, 0.5, 1.0]);
        assert_eq!(c.ftn_at, vec![0.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn threshold_validation() {
        let (seg, gt) = masks(&[true], &[true]);
        let cert = Volume3D::filled([1, 1, 1], 50.0).unwrap();
        assert!(evaluate_uncertainty(&seg, &gt, &cert, &[]).is_err());
        assert!(evaluate_uncertainty(&seg, &gt, &cert, &[50.0, 25.0]).is_err());
        assert!(evaluate_uncertainty(&seg, &gt, &cert, &[0.0, 120.0]).is_err());
    }
}
