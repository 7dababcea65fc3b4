//! Seeded nested-sphere tumor phantoms.
//!
//! Each region is a sphere whose probability is `level · σ((R - r) / s)`,
//! with `s = falloff / 8` so the transition from level to ~0 spans
//! `falloff` voxels centred on the sphere surface (`falloff = 0` is a hard
//! step). Interior values are perturbed by uniform multiplicative noise
//! `p · (1 + noise · u)`, `u ∈ [-1, 1]`, and clipped to `[0, 1]`. The ground
//! truth is the set of voxel centres strictly inside each sphere.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::refine::{RegionLabel, SegmentationSet};
use crate::volume::{Mask3D, Volume3D};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionSpec {
    /// Voxels; 0 gives an empty region.
    pub radius: f64,
    /// Probability deep inside the sphere.
    pub level: f64,
    /// Width of the boundary transition in voxels.
    pub falloff: f64,
    /// Relative amplitude of the multiplicative noise.
    pub noise: f64,
    /// Displacement of this sphere's centre from the phantom centre.
    pub offset: [f64; 3],
}

impl Default for RegionSpec {
    fn default() -> Self {
        Self {
            radius: 0.0,
            level: 0.97,
            falloff: 2.0,
            noise: 0.03,
            offset: [0.0; 3],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhantomPreset {
    /// Confidently segmented core and enhancing region.
    HggLike,
    /// Confident whole tumor around a faint, noisy core; no enhancement.
    DiffuseLggLike,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Voxel coordinates; the volume centre when absent.
    pub center: Option<[f64; 3]>,
    /// The centre is shifted by up to this many voxels along each axis.
    pub center_jitter: f64,
    pub whole_tumor: RegionSpec,
    pub tumor_core: RegionSpec,
    pub enhancing_tumor: RegionSpec,
    /// Flip probability inside / outside each region's sphere.
    pub q_inside: f64,
    pub q_outside: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self::preset(PhantomPreset::HggLike, 0)
    }
}

impl PhantomSpec {
    pub fn preset(preset: PhantomPreset, seed: u64) -> Self {
        let whole_tumor = RegionSpec {
            radius: 14.0,
            ..RegionSpec::default()
        };
        let (tumor_core, enhancing_tumor) = match preset {
            PhantomPreset::HggLike => (
                RegionSpec {
                    radius: 9.0,
                    ..RegionSpec::default()
                },
                RegionSpec {
                    radius: 5.0,
                    level: 0.95,
                    ..RegionSpec::default()
                },
            ),
            PhantomPreset::DiffuseLggLike => (
                RegionSpec {
                    radius: 9.0,
                    level: 0.6,
                    falloff: 2.0,
                    noise: 0.33,
                    ..RegionSpec::default()
                },
                RegionSpec {
                    radius: 0.0,
                    ..RegionSpec::default()
                },
            ),
        };
        Self {
            dims: [40, 40, 40],
            spacing: [1.0; 3],
            center: None,
            center_jitter: 2.0,
            whole_tumor,
            tumor_core,
            enhancing_tumor,
            q_inside: 0.05,
            q_outside: 0.01,
            seed,
        }
    }

    pub fn region(&self, r: RegionLabel) -> &RegionSpec {
        match r {
            RegionLabel::WholeTumor => &self.whole_tumor,
            RegionLabel::TumorCore => &self.tumor_core,
            RegionLabel::EnhancingTumor => &self.enhancing_tumor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.dims.contains(&0) {
            return Err(Error::InvalidDims(self.dims));
        }
        for r in RegionLabel::ALL {
            let s = self.region(r);
            let name = r.short_name();
            if !(s.radius.is_finite() && s.radius >= 0.0) {
                return bad(&alloc::format!("{name} radius must be non-negative"));
            }
            if !(0.0..=1.0).contains(&s.level) {
                return bad(&alloc::format!("{name} level must lie in [0, 1]"));
            }
            if !(s.falloff.is_finite() && s.falloff >= 0.0 && s.noise.is_finite() && s.noise >= 0.0) {
                return bad(&alloc::format!("{name} falloff and noise must be non-negative"));
            }
            if s.offset.iter().any(|o| !o.is_finite()) {
                return bad(&alloc::format!("{name} offset must be finite"));
            }
        }
        if !((0.0..=0.5).contains(&self.q_inside) && (0.0..=0.5).contains(&self.q_outside)) {
            return bad("q levels must lie in [0, 0.5]");
        }
        if !(self.center_jitter.is_finite() && self.center_jitter >= 0.0) {
            return bad("center_jitter must be non-negative");
        }
        let nested = |inner: &RegionSpec, outer: &RegionSpec| {
            inner.radius == 0.0 || distance(inner.offset, outer.offset) + inner.radius <= outer.radius
        };
        if !nested(&self.tumor_core, &self.whole_tumor) || !nested(&self.enhancing_tumor, &self.tumor_core) {
            return bad("regions must be nested: ET inside TC inside WT");
        }
        Ok(())
    }
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    libm::sqrt((0..3).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum())
}

/// Probability and flip-probability volumes for the three regions plus
/// their ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub p_wt: Volume3D,
    pub p_tc: Volume3D,
    pub p_et: Volume3D,
    pub q_wt: Volume3D,
    pub q_tc: Volume3D,
    pub q_et: Volume3D,
    pub truth: SegmentationSet,
    /// Phantom centre after jitter.
    pub center: [f64; 3],
}

impl Phantom {
    pub fn p(&self, r: RegionLabel) -> &Volume3D {
        match r {
            RegionLabel::WholeTumor => &self.p_wt,
            RegionLabel::TumorCore => &self.p_tc,
            RegionLabel::EnhancingTumor => &self.p_et,
        }
    }

    pub fn q(&self, r: RegionLabel) -> &Volume3D {
        match r {
            RegionLabel::WholeTumor => &self.q_wt,
            RegionLabel::TumorCore => &self.q_tc,
            RegionLabel::EnhancingTumor => &self.q_et,
        }
    }
}

fn radial(level: f64, radius: f64, falloff: f64, r: f64) -> f64 {
    if radius == 0.0 {
        0.0
    } else if falloff == 0.0 {
        if r < radius {
            level
        } else {
            0.0
        }
    } else {
        let s = falloff / 8.0;
        level / (1.0 + libm::exp(-(radius - r) / s))
    }
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base = spec
        .center
        .unwrap_or(spec.dims.map(|n| (n as f64 - 1.0) / 2.0));
    let mut center = base;
    for c in &mut center {
        if spec.center_jitter > 0.0 {
            *c += rng.gen_range(-spec.center_jitter..=spec.center_jitter);
        }
    }

    let [nx, ny, nz] = spec.dims;
    let n = nx * ny * nz;
    let mut p = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut q = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut gt = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    for (k, region) in RegionLabel::ALL.into_iter().enumerate() {
        let s = spec.region(region);
        let c = [0, 1, 2].map(|i| center[i] + s.offset[i]);
        if s.radius > 0.0 {
            for (&ci, &n) in c.iter().zip(&spec.dims) {
                if ci - s.radius < 0.0 || ci + s.radius > (n - 1) as f64 {
                    return Err(Error::PhantomOutOfBounds {
                        region: region.short_name(),
                    });
                }
            }
        }
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let r = distance([x as f64, y as f64, z as f64], c);
                    let inside = r < s.radius;
                    let mut v = radial(s.level, s.radius, s.falloff, r);
                    if s.noise > 0.0 {
                        // drawn for every voxel so the stream does not depend on v
                        let u: f64 = rng.gen_range(-1.0..=1.0);
                        v *= 1.0 + s.noise * u;
                    }
                    p[k].push(v.clamp(0.0, 1.0));
                    q[k].push(if inside { spec.q_inside } else { spec.q_outside });
                    gt[k].push(inside);
                }
            }
        }
    }

    let [p_wt, p_tc, p_et] = p.map(|d| Volume3D::from_raw(spec.dims, spec.spacing, d));
    let [q_wt, q_tc, q_et] = q.map(|d| Volume3D::from_raw(spec.dims, spec.spacing, d));
    let [g_wt, g_tc, g_et] = gt.map(|d| Mask3D::from_raw(spec.dims, spec.spacing, d));
    Ok(Phantom {
        p_wt,
        p_tc,
        p_et,
        q_wt,
        q_tc,
        q_et,
        truth: SegmentationSet::new(g_wt, g_tc, g_et)?,
        center,
    })
}
