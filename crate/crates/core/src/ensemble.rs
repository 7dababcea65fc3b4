//! Fusing `(p, q)` outputs from several models or views.
//!
//! Averaging `p` and `q` separately loses the joint opinion: two confident
//! models voting 0 and 1 average to `p = 0.5` with `q = 0`. Instead each pair
//! is first mapped to the probability that the true label is 1,
//! `f(p, q) = q` when `p <= 0.5` and `1 - q` when `p > 0.5`, and those values
//! are averaged.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::stats;
use crate::volume::{Axis, Volume3D};

/// Probability and flip-probability volumes for one tissue channel.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionPair {
    p: Volume3D,
    q: Volume3D,
}

impl PredictionPair {
    /// Checks shared dims, `p ∈ [0, 1]` and `q ∈ [0, 0.5]`.
    pub fn new(p: Volume3D, q: Volume3D) -> Result<Self> {
        p.ensure_same_dims(&q)?;
        check_range(&p, 0.0, 1.0)?;
        check_range(&q, 0.0, 0.5)?;
        Ok(Self { p, q })
    }

    pub fn p(&self) -> &Volume3D {
        &self.p
    }

    pub fn q(&self) -> &Volume3D {
        &self.q
    }

    pub fn flip(&self, axis: Axis) -> Self {
        Self {
            p: self.p.flip(axis),
            q: self.q.flip(axis),
        }
    }

    /// Voxelwise [`fuse_single`].
    pub fn fused(&self) -> Volume3D {
        let data = self
            .p
            .data()
            .iter()
            .zip(self.q.data())
            .map(|(&p, &q)| fuse_single(p, q))
            .collect();
        Volume3D::from_raw(self.p.dims(), self.p.spacing(), data)
    }
}

pub(crate) fn check_range(v: &Volume3D, min: f64, max: f64) -> Result<()> {
    match v.data().iter().position(|&x| !(min..=max).contains(&x)) {
        Some(index) => Err(Error::OutOfRange {
            index,
            value: v.data()[index],
            min,
            max,
        }),
        None => Ok(()),
    }
}

/// Probability that the true label is 1 given a prediction and its flip
/// probability. `p = 0.5` counts as a negative prediction.
#[inline]
pub fn fuse_single(p: f64, q: f64) -> f64 {
    if p > 0.5 {
        1.0 - q
    } else {
        q
    }
}

/// Voxelwise mean of fused volumes. Values at each voxel are summed in
/// sorted order, so the result is bit-identical under any permutation of the
/// inputs.
fn mean_of(volumes: &[Volume3D]) -> Result<Volume3D> {
    let first = volumes.first().ok_or(Error::EmptyEnsemble)?;
    for v in &volumes[1..] {
        first.ensure_same_dims(v)?;
    }
    let n = volumes.len() as f64;
    let mut buf = Vec::with_capacity(volumes.len());
    let data = (0..first.len())
        .map(|i| {
            buf.clear();
            buf.extend(volumes.iter().map(|v| v.data()[i]));
            buf.sort_by(f64::total_cmp);
            stats::sum(buf.iter().copied()) / n
        })
        .collect();
    Ok(Volume3D::from_raw(first.dims(), first.spacing(), data))
}

/// Mean of [`fuse_single`] over all pairs.
pub fn ensemble_mean(preds: &[PredictionPair]) -> Result<Volume3D> {
    let fused: Vec<Volume3D> = preds.iter().map(PredictionPair::fused).collect();
    mean_of(&fused)
}

/// A prediction computed by the upstream model on an input mirrored along
/// `flips` (applied in order).
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedPrediction {
    pub pair: PredictionPair,
    pub flips: Vec<Axis>,
}

impl AugmentedPrediction {
    /// Map the prediction back into the original orientation. Flips commute,
    /// so the order of `flips` does not matter.
    pub fn unflipped(&self) -> PredictionPair {
        self.flips.iter().fold(self.pair.clone(), |acc, &a| acc.flip(a))
    }
}

/// Ensemble predictions that were each computed on a (possibly) mirrored
/// input.
pub fn ensemble_augmented(preds: &[AugmentedPrediction]) -> Result<Volume3D> {
    let fused: Vec<Volume3D> = preds.iter().map(|a| a.unflipped().fused()).collect();
    mean_of(&fused)
}

/// Flip test-time augmentation in grouped layout: `preds` is a sequence of
/// groups of `1 + flip_axes.len()` pairs, each group holding the prediction
/// on the original input followed by the predictions on inputs mirrored
/// along `flip_axes[0]`, `flip_axes[1]`, .... Mirrored predictions are
/// un-flipped before averaging. With no axes this is [`ensemble_mean`].
pub fn ensemble_with_flips(preds: &[PredictionPair], flip_axes: &[Axis]) -> Result<Volume3D> {
    if preds.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let group = 1 + flip_axes.len();
    if !preds.len().is_multiple_of(group) {
        return Err(Error::RaggedFlipGroups {
            count: preds.len(),
            group,
        });
    }
    let augmented: Vec<AugmentedPrediction> = preds
        .iter()
        .enumerate()
        .map(|(i, pair)| AugmentedPrediction {
            pair: pair.clone(),
            flips: match i % group {
                0 => Vec::new(),
                k => alloc::vec![flip_axes[k - 1]],
            },
        })
        .collect();
    ensemble_augmented(&augmented)
}
