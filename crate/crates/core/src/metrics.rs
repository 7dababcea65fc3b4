//! Dice overlap and 95th-percentile Hausdorff distance.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;
use crate::volume::Mask3D;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Value reported for HD95 when exactly one mask is empty. `None` makes
    /// that case an error.
    pub hd95_empty_sentinel: Option<f64>,
}

/// Dice and HD95 of one region of one case.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub dice: f64,
    /// Millimetres; `None` when one mask is empty and no sentinel is set.
    pub hd95: Option<f64>,
    pub both_empty: bool,
    pub one_empty: bool,
}

pub(crate) fn dice_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        1.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// `2|A ∩ B| / (|A| + |B|)`, defined as 1 when both masks are empty.
pub fn dice(a: &Mask3D, b: &Mask3D) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        match (x, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    Ok(dice_counts(tp, fp, fn_))
}

/// Foreground voxels with at least one background face neighbour. Voxels on
/// the volume border count as surface.
pub fn surface(m: &Mask3D) -> Mask3D {
    let [nx, ny, nz] = m.dims();
    let d = m.data();
    let mut out = Vec::with_capacity(d.len());
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = m.index(x, y, z);
                let is_surface = d[i]
                    && (x == 0
                        || x + 1 == nx
                        || y == 0
                        || y + 1 == ny
                        || z == 0
                        || z + 1 == nz
                        || !d[i - 1]
                        || !d[i + 1]
                        || !d[i - nx]
                        || !d[i + nx]
                        || !d[i - nx * ny]
                        || !d[i + nx * ny]);
                out.push(is_surface);
            }
        }
    }
    Mask3D::from_raw(m.dims(), m.spacing(), out)
}

/// Lower envelope of parabolas along one line (Felzenszwalb–Huttenlocher).
/// `f` holds squared distances (infinite where unknown); positions are
/// `i * step`.
fn edt_line(f: &[f64], step: f64, out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let Some(first) = f.iter().position(|x| x.is_finite()) else {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    };
    let pos = |i: usize| i as f64 * step;
    let mut k = 0usize;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + pos(q) * pos(q)) - (f[p] + pos(p) * pos(p))) / (2.0 * (pos(q) - pos(p)));
            if s <= z[k] {
                // z[0] is -inf, so k > 0 here
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < pos(q) {
            k += 1;
        }
        let d = pos(q) - pos(v[k]);
        *o = d * d + f[v[k]];
    }
}

/// Exact squared Euclidean distance (in physical units) from every voxel to
/// the nearest foreground voxel of `features`, in the grid's linear order.
/// Infinite when `features` is empty.
pub fn squared_distance_transform(features: &Mask3D) -> Vec<f64> {
    let dims = features.dims();
    let spacing = features.spacing();
    let mut d: Vec<f64> = features
        .data()
        .iter()
        .map(|&b| if b { 0.0 } else { f64::INFINITY })
        .collect();
    let max_n = dims.iter().copied().max().unwrap_or(1);
    let mut line = vec![0.0; max_n];
    let mut out = vec![0.0; max_n];
    let mut v = vec![0usize; max_n];
    let mut zb = vec![0.0; max_n + 1];
    let [nx, ny, nz] = dims;
    let strides = [1, nx, nx * ny];

    for axis in 0..3 {
        let n = dims[axis];
        let stride = strides[axis];
        // iterate over every line parallel to `axis`
        let (o1, o2) = match axis {
            0 => ((ny, nx), (nz, nx * ny)),
            1 => ((nx, 1), (nz, nx * ny)),
            _ => ((nx, 1), (ny, nx)),
        };
        for b in 0..o2.0 {
            for a in 0..o1.0 {
                let base = a * o1.1 + b * o2.1;
                for i in 0..n {
                    line[i] = d[base + i * stride];
                }
                edt_line(&line[..n], spacing[axis], &mut out[..n], &mut v, &mut zb);
                for i in 0..n {
                    d[base + i * stride] = out[i];
                }
            }
        }
    }
    d
}

fn directed_p95(from_surface: &Mask3D, to_dt: &[f64]) -> f64 {
    let mut dists: Vec<f64> = from_surface
        .data()
        .iter()
        .zip(to_dt)
        .filter(|(&s, _)| s)
        .map(|(_, &d2)| libm::sqrt(d2))
        .collect();
    dists.sort_by(f64::total_cmp);
    stats::percentile_sorted(&dists, 0.95)
}

/// Symmetric 95th-percentile surface distance in millimetres.
///
/// Both empty gives 0. Exactly one empty returns `sentinel` if given, else
/// [`Error::OneMaskEmpty`].
pub fn hausdorff95(a: &Mask3D, b: &Mask3D, sentinel: Option<f64>) -> Result<f64> {
    a.ensure_same_dims(b)?;
    match (a.any(), b.any()) {
        (false, false) => return Ok(0.0),
        (true, true) => {}
        _ => return sentinel.ok_or(Error::OneMaskEmpty),
    }
    let sa = surface(a);
    let sb = surface(b);
    let dta = squared_distance_transform(&sa);
    let dtb = squared_distance_transform(&sb);
    Ok(f64::max(directed_p95(&sa, &dtb), directed_p95(&sb, &dta)))
}

/// Dice and HD95 together, with empty-mask flags.
pub fn evaluate_masks(pred: &Mask3D, truth: &Mask3D, cfg: &MetricsConfig) -> Result<MetricResult> {
    let dice = dice(pred, truth)?;
    let (pa, ta) = (pred.any(), truth.any());
    let hd95 = match hausdorff95(pred, truth, cfg.hd95_empty_sentinel) {
        Ok(v) => Some(v),
        Err(Error::OneMaskEmpty) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricResult {
        dice,
        hd95,
        both_empty: !pa && !ta,
        one_empty: pa != ta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(dims: [usize; 3], on: &[[usize; 3]]) -> Mask3D {
        let mut m = vec![false; dims[0] * dims[1] * dims[2]];
        for &[x, y, z] in on {
            m[x + dims[0] * (y + dims[1] * z)] = true;
        }
        Mask3D::new(dims, m).unwrap()
    }

    fn cube(dims: [usize; 3], origin: [usize; 3], side: usize) -> Mask3D {
        let mut on = Vec::new();
        for z in 0..side {
            for y in 0..side {
                for x in 0..side {
                    on.push([origin[0] + x, origin[1] + y, origin[2] + z]);
                }
            }
        }
        mask_from(dims, &on)
    }

    #[test]
    fn dice_values() {
        let a = cube([6, 6, 6], [1, 1, 1], 2);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        let far = cube([6, 6, 6], [4, 4, 4], 2);
        assert_eq!(dice(&a, &far).unwrap(), 0.0);
        let shifted = cube([6, 6, 6], [2, 1, 1], 2);
        assert_eq!(dice(&a, &shifted).unwrap(), 0.5);
        let e = Mask3D::filled([6, 6, 6], false).unwrap();
        assert_eq!(dice(&e, &e).unwrap(), 1.0);
    }

    #[test]
    fn hd95_values() {
        let a = cube([8, 8, 8], [2, 2, 2], 3);
        assert_eq!(hausdorff95(&a, &a, None).unwrap(), 0.0);

        let p = mask_from([5, 1, 1], &[[0, 0, 0]]);
        let q = mask_from([5, 1, 1], &[[3, 0, 0]]);
        assert_eq!(hausdorff95(&p, &q, None).unwrap(), 3.0);

        let line: Vec<[usize; 3]> = (0..20).map(|x| [x, 1, 0]).collect();
        let shifted: Vec<[usize; 3]> = (0..20).map(|x| [x, 2, 0]).collect();
        let l1 = mask_from([20, 4, 1], &line);
        let l2 = mask_from([20, 4, 1], &shifted);
        assert_eq!(hausdorff95(&l1, &l2, None).unwrap(), 1.0);
    }

    #[test]
    fn hd95_empty_handling() {
        let a = cube([6, 6, 6], [1, 1, 1], 2);
        let e = Mask3D::filled([6, 6, 6], false).unwrap();
        assert_eq!(hausdorff95(&e, &e, None).unwrap(), 0.0);
        assert_eq!(hausdorff95(&a, &e, None), Err(Error::OneMaskEmpty));
        assert_eq!(hausdorff95(&e, &a, Some(373.13)).unwrap(), 373.13);
        let r = evaluate_masks(&a, &e, &MetricsConfig::default()).unwrap();
        assert!(r.one_empty && !r.both_empty && r.hd95.is_none() && r.dice == 0.0);
    }

    #[test]
    fn spacing_is_physical() {
        let p = mask_from([5, 1, 1], &[[0, 0, 0]]);
        let q = mask_from([5, 1, 1], &[[3, 0, 0]]);
        let p = p.with_spacing([2.5, 1.0, 1.0]).unwrap();
        let q = q.with_spacing([2.5, 1.0, 1.0]).unwrap();
        assert_eq!(hausdorff95(&p, &q, None).unwrap(), 7.5);
    }

    #[test]
    fn surface_of_solid_cube() {
        let a = cube([7, 7, 7], [1, 1, 1], 5);
        // 5^3 minus the 3^3 interior
        assert_eq!(surface(&a).count(), 125 - 27);
        let full = Mask3D::filled([3, 3, 3], true).unwrap();
        assert_eq!(surface(&full).count(), 26);
    }

    #[test]
    fn distance_transform_small() {
        let f = mask_from([4, 3, 1], &[[0, 0, 0]]);
        let d = squared_distance_transform(&f);
        assert_eq!(d[f.index(3, 2, 0)], 13.0);
        let none = Mask3D::filled([2, 2, 2], false).unwrap();
        assert!(squared_distance_transform(&none).iter().all(|v| v.is_infinite()));
    }
}
