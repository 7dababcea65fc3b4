//! Library metrics and labelling checked against brute-force references.

mod common;

use common::*;
use flipseg_core::metrics::{dice, hausdorff95, squared_distance_transform};
use flipseg_core::volume::connected_components;
use flipseg_core::{Connectivity, Mask3D};
use rand::Rng;

#[test]
fn components_match_flood_fill() {
    let mut r = rng(101);
    for c in [Connectivity::Face6, Connectivity::Edge18, Connectivity::Corner26] {
        for _ in 0..200 {
            let density = r.gen_range(0.05..0.6);
            let m = random_mask(&mut r, [8, 8, 8], density);
            let got = connected_components(&m, c);
            let want = flood_fill_labels(&m, c);
            assert_eq!(canonical_labels(&got.labels), canonical_labels(&want));
            let n = *want.iter().max().unwrap_or(&0) as usize;
            assert_eq!(got.component_count(), n);
            for k in 1..=n {
                let size = want.iter().filter(|&&l| l == k as u32).count();
                assert_eq!(got.sizes[k - 1], size);
            }
        }
    }
}

#[test]
fn dice_and_hd95_match_brute_force() {
    let mut r = rng(202);
    for i in 0..100 {
        let (da, db) = (r.gen_range(0.02..0.5), r.gen_range(0.02..0.5));
        let a = random_mask(&mut r, [8, 8, 8], da);
        let b = random_mask(&mut r, [8, 8, 8], db);
        let (a, b) = if i % 4 == 0 {
            let s = [r.gen_range(0.5..3.0), r.gen_range(0.5..3.0), r.gen_range(0.5..3.0)];
            (a.with_spacing(s).unwrap(), b.with_spacing(s).unwrap())
        } else {
            (a, b)
        };
        assert_eq!(dice(&a, &b).unwrap(), brute_dice(&a, &b));
        let want = brute_hd95(&a, &b).unwrap();
        let got = hausdorff95(&a, &b, None).unwrap();
        assert!((got - want).abs() <= 1e-9, "case {i}: {got} vs {want}");
    }
}

#[test]
fn distance_transform_matches_brute_force() {
    let mut r = rng(303);
    for _ in 0..30 {
        let dims = [r.gen_range(1..9), r.gen_range(1..9), r.gen_range(1..9)];
        let s = [r.gen_range(0.5..2.0), r.gen_range(0.5..2.0), r.gen_range(0.5..2.0)];
        let m = random_mask(&mut r, dims, 0.1).with_spacing(s).unwrap();
        let d = squared_distance_transform(&m);
        let fg: Vec<[usize; 3]> = (0..m.len()).filter(|&i| m.data()[i]).map(|i| m.coords(i)).collect();
        for (i, &got) in d.iter().enumerate() {
            let p = m.coords(i);
            let want = fg
                .iter()
                .map(|f| (0..3).map(|k| ((p[k] as f64 - f[k] as f64) * s[k]).powi(2)).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            if want.is_infinite() {
                assert!(got.is_infinite());
            } else {
                assert!((got - want).abs() <= 1e-9 * want.max(1.0));
            }
        }
    }
}

#[test]
fn hd95_empty_cases_agree() {
    let e = Mask3D::filled([4, 4, 4], false).unwrap();
    let mut r = rng(9);
    let a = random_mask(&mut r, [4, 4, 4], 0.5);
    assert_eq!(brute_hd95(&e, &e), Some(0.0));
    assert_eq!(hausdorff95(&e, &e, None).unwrap(), 0.0);
    assert_eq!(brute_hd95(&a, &e), None);
    assert!(hausdorff95(&a, &e, None).is_err());
}
