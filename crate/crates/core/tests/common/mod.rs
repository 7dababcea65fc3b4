//! Brute-force reference implementations and random inputs shared by the
//! integration tests. Nothing here reuses the library's own algorithms.
#![allow(dead_code)]

use flipseg_core::losses::*;
use flipseg_core::{Connectivity, Mask3D};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub fn random_mask(rng: &mut ChaCha8Rng, dims: [usize; 3], density: f64) -> Mask3D {
    let n = dims[0] * dims[1] * dims[2];
    Mask3D::new(dims, (0..n).map(|_| rng.gen_bool(density)).collect()).unwrap()
}

fn max_nonzero_offsets(c: Connectivity) -> usize {
    match c {
        Connectivity::Face6 => 1,
        Connectivity::Edge18 => 2,
        Connectivity::Corner26 => 3,
    }
}

fn coords(i: usize, dims: [usize; 3]) -> [usize; 3] {
    [i % dims[0], (i / dims[0]) % dims[1], i / (dims[0] * dims[1])]
}

fn adjacent(a: [usize; 3], b: [usize; 3], c: Connectivity) -> bool {
    let d: Vec<usize> = (0..3).map(|k| a[k].abs_diff(b[k])).collect();
    let nz = d.iter().filter(|&&x| x != 0).count();
    d.iter().all(|&x| x <= 1) && nz >= 1 && nz <= max_nonzero_offsets(c)
}

/// Component id per voxel (0 for background) by depth-first flood fill over
/// an all-pairs adjacency test, numbered in order of first voxel.
pub fn flood_fill_labels(m: &Mask3D, c: Connectivity) -> Vec<u32> {
    let dims = m.dims();
    let fg: Vec<usize> = (0..m.len()).filter(|&i| m.data()[i]).collect();
    let mut label = vec![0u32; m.len()];
    let mut next = 0;
    for &seed in &fg {
        if label[seed] != 0 {
            continue;
        }
        next += 1;
        label[seed] = next;
        let mut stack = vec![seed];
        while let Some(v) = stack.pop() {
            for &u in &fg {
                if label[u] == 0 && adjacent(coords(v, dims), coords(u, dims), c) {
                    label[u] = next;
                    stack.push(u);
                }
            }
        }
    }
    label
}

/// Renumber labels by first occurrence so only the partition is compared.
pub fn canonical_labels(labels: &[u32]) -> Vec<u32> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            if l == 0 {
                0
            } else {
                let n = map.len() as u32 + 1;
                *map.entry(l).or_insert(n)
            }
        })
        .collect()
}

pub fn brute_dice(a: &Mask3D, b: &Mask3D) -> f64 {
    let inter = a.data().iter().zip(b.data()).filter(|(x, y)| **x && **y).count();
    let total = a.data().iter().filter(|x| **x).count() + b.data().iter().filter(|x| **x).count();
    if total == 0 {
        1.0
    } else {
        2.0 * inter as f64 / total as f64
    }
}

/// Foreground voxels touching background or the outside through a face.
pub fn brute_surface(m: &Mask3D) -> Vec<[usize; 3]> {
    let dims = m.dims();
    let on = |x: isize, y: isize, z: isize| {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < dims[0]
            && (y as usize) < dims[1]
            && (z as usize) < dims[2]
            && m.get(x as usize, y as usize, z as usize)
    };
    let mut out = Vec::new();
    for i in 0..m.len() {
        if !m.data()[i] {
            continue;
        }
        let [x, y, z] = coords(i, dims).map(|v| v as isize);
        let faces = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)];
        if faces.iter().any(|(dx, dy, dz)| !on(x + dx, y + dy, z + dz)) {
            out.push([x as usize, y as usize, z as usize]);
        }
    }
    out
}

/// Linear-interpolated percentile (rank `q (n - 1)`).
pub fn brute_percentile(mut v: Vec<f64>, q: f64) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = q * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (rank - lo as f64)
}

fn directed(from: &[[usize; 3]], to: &[[usize; 3]], spacing: [f64; 3]) -> f64 {
    let d: Vec<f64> = from
        .iter()
        .map(|a| {
            to.iter()
                .map(|b| {
                    (0..3)
                        .map(|k| {
                            let t = (a[k] as f64 - b[k] as f64) * spacing[k];
                            t * t
                        })
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    brute_percentile(d, 0.95)
}

/// All-pairs surface-distance HD95; `None` when exactly one mask is empty.
pub fn brute_hd95(a: &Mask3D, b: &Mask3D) -> Option<f64> {
    let (sa, sb) = (brute_surface(a), brute_surface(b));
    match (sa.is_empty(), sb.is_empty()) {
        (true, true) => Some(0.0),
        (false, false) => {
            let s = a.spacing();
            Some(directed(&sa, &sb, s).max(directed(&sb, &sa, s)))
        }
        _ => None,
    }
}

/// Central finite difference.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;

/// Below this magnitude the central difference at `FD_STEP` is itself less
/// accurate than `FD_REL_TOL` (its truncation error `h^2 f''' / 6` reaches
/// ~1e-9 for `p` near 0.01), so agreement is checked absolutely at
/// `FD_REL_TOL * FD_ABS_SCALE = 1e-8`.
pub const FD_ABS_SCALE: f64 = 1e-4;

pub fn fd_agrees(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= FD_REL_TOL * analytic.abs().max(numeric.abs()).max(FD_ABS_SCALE)
}

/// Probabilities away from the clamp limits and, for `p`, from the step of
/// the disagreement indicator at 0.5.
fn sample_p(r: &mut impl Rng) -> f64 {
    loop {
        let p = r.gen_range(0.01..0.99);
        if (p - 0.5f64).abs() > 0.01 {
            return p;
        }
    }
}

pub struct GradientSweep {
    pub tuples: usize,
    pub checks: usize,
    pub failures: Vec<String>,
}

/// Compare every analytic partial derivative of every loss with a central
/// difference on `tuples` random `(p, t, q, x, gamma, lambda, variant)`.
pub fn gradient_sweep(seed: u64, tuples: usize) -> GradientSweep {
    let mut r = rng(seed);
    let mut checks = 0;
    let mut failures = Vec::new();
    let mut check = |name: &str, a: f64, n: f64, at: &str| {
        checks += 1;
        if !fd_agrees(a, n) {
            failures.push(format!("{name} at {at}: analytic {a}, numeric {n}"));
        }
    };
    let h = FD_STEP;
    for _ in 0..tuples {
        let p = sample_p(&mut r);
        let t = r.gen_range(0.01..0.99);
        let q = r.gen_range(0.01..0.49);
        let x = r.gen_bool(0.5);
        let gamma = [0.0, 1.0, 2.0, 2.5][r.gen_range(0..4)];
        let variant = if r.gen_bool(0.5) { KlVariant::LiteralPositiveTerm } else { KlVariant::FullBinary };
        let cfg = LossConfig { gamma, lambda: r.gen_range(0.0..1.0), kl_variant: variant };
        let at = format!("p={p} t={t} q={q} x={x} {cfg:?}");

        let f = focal(p, t, gamma);
        check("focal d/dp", f.d_pred, central_diff(|v| focal(v, t, gamma).value, p, h), &at);
        check("focal d/dt", f.d_target, central_diff(|v| focal(p, v, gamma).value, t, h), &at);

        let b = bce(p, t);
        check("bce d/dp", b.d_pred, central_diff(|v| bce(v, t).value, p, h), &at);
        check("bce d/dt", b.d_target, central_diff(|v| bce(p, v).value, t, h), &at);

        let k = kl(t, p, variant);
        check("kl d/dp", k.d_pred, central_diff(|v| kl(t, v, variant).value, p, h), &at);
        check("kl d/dw", k.d_target, central_diff(|v| kl(v, p, variant).value, t, h), &at);

        let fk = focal_kl(t, p, variant);
        check("focal_kl d/dp", fk.d_pred, central_diff(|v| focal_kl(t, v, variant).value, p, h), &at);
        check("focal_kl d/dw", fk.d_target, central_diff(|v| focal_kl(v, p, variant).value, t, h), &at);

        let lf = label_flip_loss(&LossInputs::new(p, q, x), &cfg);
        let lf_at = |pp: f64, qq: f64| label_flip_loss(&LossInputs::new(pp, qq, x), &cfg).value;
        check("label_flip d/dp", lf.d_p, central_diff(|v| lf_at(v, q), p, h), &at);
        check("label_flip d/dq", lf.d_q, central_diff(|v| lf_at(p, v), q, h), &at);

        let c = combined_loss(&LossInputs::new(p, q, x), &cfg);
        let c_at = |pp: f64, qq: f64| combined_loss(&LossInputs::new(pp, qq, x), &cfg).value;
        check("combined d/dp", c.d_p, central_diff(|v| c_at(v, q), p, h), &at);
        check("combined d/dq", c.d_q, central_diff(|v| c_at(p, v), q, h), &at);
    }
    GradientSweep { tuples, checks, failures }
}
