//! Heteroscedastic label-flip losses.
//!
//! For one voxel and one tissue channel the model emits a probability `p` and
//! a label-flip probability `q ∈ (0, 0.5)`: the chance that the thresholded
//! prediction disagrees with the reference label `x`. Two derived quantities
//! appear throughout:
//!
//! * the soft target `w = (1 - x) q + x (1 - q)`,
//! * the disagreement indicator `z = [(p > 0.5) != x]`.
//!
//! Every loss returns its value together with exact analytic partial
//! derivatives. Inputs are clamped to `[EPS, 1 - EPS]` (and `q` to
//! `[EPS, 0.5 - EPS]`) before any logarithm; a clamped input has zero
//! derivative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;
use crate::volume::{Mask3D, Volume3D};

/// Clamp margin applied before logarithms.
pub const EPS: f64 = 1e-7;

/// Which form of KL divergence to use inside the focal-KL term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlVariant {
    /// `w log(w / p)`: only the positive-class term. Can be negative.
    #[default]
    LiteralPositiveTerm,
    /// `w log(w / p) + (1 - w) log((1 - w) / (1 - p))`. Non-negative.
    FullBinary,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Focal exponent.
    pub gamma: f64,
    /// Weight of the plain focal term in [`combined_loss`].
    pub lambda: f64,
    pub kl_variant: KlVariant,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            lambda: 0.1,
            kl_variant: KlVariant::LiteralPositiveTerm,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!(
                "gamma must be finite and >= 0, got {}",
                self.gamma
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidConfig(alloc::format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// A loss of a prediction against a (soft) target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetLoss {
    pub value: f64,
    /// Derivative with respect to the prediction.
    pub d_pred: f64,
    /// Derivative with respect to the target.
    pub d_target: f64,
}

/// A per-voxel loss of a `(p, q)` output pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlipLoss {
    pub value: f64,
    pub d_p: f64,
    pub d_q: f64,
}

/// One voxel of one channel: prediction, flip probability and reference
/// label.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossInputs {
    pub p: f64,
    pub q: f64,
    pub x: bool,
}

impl LossInputs {
    pub fn new(p: f64, q: f64, x: bool) -> Self {
        Self { p, q, x }
    }

    /// `w = (1 - x) q + x (1 - q)`, using the clamped `q`.
    pub fn soft_target(&self) -> f64 {
        let (q, _) = clamp(self.q, EPS, 0.5 - EPS);
        if self.x {
            1.0 - q
        } else {
            q
        }
    }

    /// `z`: the prediction thresholded at 0.5 disagrees with `x`.
    pub fn disagreement(&self) -> f64 {
        if (self.p > 0.5) != self.x {
            1.0
        } else {
            0.0
        }
    }
}

/// Returns the clamped value and its derivative with respect to the input.
#[inline]
fn clamp(v: f64, lo: f64, hi: f64) -> (f64, f64) {
    if v < lo {
        (lo, 0.0)
    } else if v > hi {
        (hi, 0.0)
    } else {
        (v, 1.0)
    }
}

#[inline]
fn clamp_prob(v: f64) -> (f64, f64) {
    clamp(v, EPS, 1.0 - EPS)
}

/// Soft-target focal loss
/// `t (1 - p)^γ (-ln p) + (1 - t) p^γ (-ln(1 - p))`.
pub fn focal(p: f64, t: f64, gamma: f64) -> TargetLoss {
    let (p, dp_clamp) = clamp_prob(p);
    let lp = libm::log(p);
    let l1p = libm::log(1.0 - p);
    let pos = libm::pow(1.0 - p, gamma);
    let neg = libm::pow(p, gamma);
    let value = t * pos * (-lp) + (1.0 - t) * neg * (-l1p);

    // d/dp (1-p)^γ = -γ (1-p)^(γ-1); guard γ = 0 so 0 * inf never appears.
    let d_pos = if gamma == 0.0 {
        0.0
    } else {
        -gamma * libm::pow(1.0 - p, gamma - 1.0)
    };
    let d_neg = if gamma == 0.0 {
        0.0
    } else {
        gamma * libm::pow(p, gamma - 1.0)
    };
    let d_pred = t * (d_pos * (-lp) - pos / p) + (1.0 - t) * (d_neg * (-l1p) + neg / (1.0 - p));
    TargetLoss {
        value,
        d_pred: d_pred * dp_clamp,
        d_target: pos * (-lp) - neg * (-l1p),
    }
}

/// Binary cross-entropy `-t ln(pred) - (1 - t) ln(1 - pred)`.
pub fn bce(pred: f64, target: f64) -> TargetLoss {
    let (p, dp_clamp) = clamp_prob(pred);
    let lp = libm::log(p);
    let l1p = libm::log(1.0 - p);
    TargetLoss {
        value: -target * lp - (1.0 - target) * l1p,
        d_pred: (-target / p + (1.0 - target) / (1.0 - p)) * dp_clamp,
        d_target: l1p - lp,
    }
}

/// KL divergence of target `w` from prediction `p`; `d_target` is with
/// respect to `w`.
pub fn kl(w: f64, p: f64, variant: KlVariant) -> TargetLoss {
    let (w, dw_clamp) = clamp_prob(w);
    let (p, dp_clamp) = clamp_prob(p);
    let lw = libm::log(w);
    let lp = libm::log(p);
    let mut value = w * (lw - lp);
    let mut d_p = -w / p;
    let mut d_w = lw + 1.0 - lp;
    if variant == KlVariant::FullBinary {
        let l1w = libm::log(1.0 - w);
        let l1p = libm::log(1.0 - p);
        value += (1.0 - w) * (l1w - l1p);
        d_p += (1.0 - w) / (1.0 - p);
        d_w += -l1w - 1.0 + l1p;
    }
    TargetLoss {
        value,
        d_pred: d_p * dp_clamp,
        d_target: d_w * dw_clamp,
    }
}

/// Focal KL divergence `(p - w)^2 KL(w ‖ p)`. Vanishes when `p = w`, so
/// genuinely ambiguous voxels are not pushed away from the decision
/// boundary.
pub fn focal_kl(w: f64, p: f64, variant: KlVariant) -> TargetLoss {
    let (wc, dw_clamp) = clamp_prob(w);
    let (pc, dp_clamp) = clamp_prob(p);
    let k = kl(wc, pc, variant);
    let diff = pc - wc;
    let sq = diff * diff;
    TargetLoss {
        value: sq * k.value,
        d_pred: (2.0 * diff * k.value + sq * k.d_pred) * dp_clamp,
        d_target: (-2.0 * diff * k.value + sq * k.d_target) * dw_clamp,
    }
}

/// Flip-probability clamp and the chain factor `dw/dq = 1 - 2x`.
fn flip_parts(inputs: &LossInputs) -> (f64, f64, f64, f64) {
    let (q, dq_clamp) = clamp(inputs.q, EPS, 0.5 - EPS);
    let w = inputs.soft_target();
    let dw_dq = if inputs.x { -1.0 } else { 1.0 };
    (q, dq_clamp, w, dw_dq)
}

/// The earlier label-flip loss: `Focal(p, w) + BCE(q, z)`.
pub fn label_flip_loss(inputs: &LossInputs, cfg: &LossConfig) -> FlipLoss {
    let (q, dq_clamp, w, dw_dq) = flip_parts(inputs);
    let z = inputs.disagreement();
    let f = focal(inputs.p, w, cfg.gamma);
    let b = bce(q, z);
    FlipLoss {
        value: f.value + b.value,
        d_p: f.d_pred,
        d_q: (f.d_target * dw_dq + b.d_pred) * dq_clamp,
    }
}

/// The combined loss
/// `λ Focal(p, x) + (1 - λ) FocalKL(w ‖ p) + (1 - λ) BCE(q, z)`.
pub fn combined_loss(inputs: &LossInputs, cfg: &LossConfig) -> FlipLoss {
    let (q, dq_clamp, w, dw_dq) = flip_parts(inputs);
    let z = inputs.disagreement();
    let x = if inputs.x { 1.0 } else { 0.0 };
    let lambda = cfg.lambda;
    let f = focal(inputs.p, x, cfg.gamma);
    let fk = focal_kl(w, inputs.p, cfg.kl_variant);
    let b = bce(q, z);
    FlipLoss {
        value: lambda * f.value + (1.0 - lambda) * fk.value + (1.0 - lambda) * b.value,
        d_p: lambda * f.d_pred + (1.0 - lambda) * fk.d_pred,
        d_q: (1.0 - lambda) * (fk.d_target * dw_dq + b.d_pred) * dq_clamp,
    }
}

/// Mean [`combined_loss`] over every voxel of a volume.
pub fn batch_loss(p: &Volume3D, q: &Volume3D, gt: &Mask3D, cfg: &LossConfig) -> Result<f64> {
    p.ensure_same_dims(q)?;
    p.ensure_same_dims(gt)?;
    let total = stats::sum(
        p.data()
            .iter()
            .zip(q.data())
            .zip(gt.data())
            .map(|((&p, &q), &x)| combined_loss(&LossInputs::new(p, q, x), cfg).value),
    );
    Ok(total / p.len() as f64)
}
