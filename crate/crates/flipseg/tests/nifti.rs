//! NIfTI round trips through the public reader and writers.

use flipseg::nifti::{read_labels, read_volume, write_i16, write_labels, write_volume};
use flipseg::Error;
use flipseg_core::{LabelMap, Volume3D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_volume(seed: u64, dims: [usize; 3], spacing: [f64; 3]) -> Volume3D {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n = dims.iter().product();
    // values exactly representable in float32
    let data = (0..n).map(|_| r.gen_range(-1e4f32..1e4) as f64).collect();
    Volume3D::from_parts(dims, spacing, data).unwrap()
}

#[test]
fn float32_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    for (i, dims) in [[7, 5, 3], [1, 1, 1], [16, 9, 4]].into_iter().enumerate() {
        let v = random_volume(i as u64, dims, [0.9, 1.25, 3.0]);
        for name in ["v.nii", "v.nii.gz"] {
            let p = dir.path().join(name);
            write_volume(&p, &v, None).unwrap();
            let (back, header) = read_volume(&p).unwrap();
            assert_eq!(back.dims(), dims);
            assert_eq!(header.datatype_code(), 16);
            let same_bits = back.data().iter().zip(v.data()).all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same_bits, "{name} data changed");
            for (a, b) in back.spacing().iter().zip(v.spacing()) {
                assert!((a - b).abs() <= 1e-6);
            }
        }
    }
}

#[test]
fn gzip_and_plain_decode_identically() {
    let dir = tempfile::tempdir().unwrap();
    let v = random_volume(9, [6, 6, 6], [1.0; 3]);
    let (plain, gz) = (dir.path().join("a.nii"), dir.path().join("a.nii.gz"));
    write_volume(&plain, &v, None).unwrap();
    write_volume(&gz, &v, None).unwrap();
    assert_eq!(read_volume(&plain).unwrap().0, read_volume(&gz).unwrap().0);
    // gzip is detected from the content, not the name
    let renamed = dir.path().join("b.nii");
    std::fs::copy(&gz, &renamed).unwrap();
    assert_eq!(read_volume(&renamed).unwrap().0, v);
}

#[test]
fn gzip_output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let v = random_volume(3, [5, 4, 3], [1.0; 3]);
    let (a, b) = (dir.path().join("a.nii.gz"), dir.path().join("b.nii.gz"));
    write_volume(&a, &v, None).unwrap();
    std::thread::sleep(std::time::Duration::from_millis(1100));
    write_volume(&b, &v, None).unwrap();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn int16_scaling_is_applied() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("scan.nii.gz");
    write_i16(&p, [2, 1, 1], [1.0; 3], &[3, -4], 2.0, 1.0).unwrap();
    let (v, h) = read_volume(&p).unwrap();
    assert_eq!(h.datatype_code(), 4);
    assert_eq!(v.data(), &[7.0, -7.0]);

    // a zero slope means "no scaling"
    write_i16(&p, [1, 1, 1], [1.0; 3], &[3], 0.0, 5.0).unwrap();
    assert_eq!(read_volume(&p).unwrap().0.data(), &[3.0]);
}

#[test]
fn label_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("seg.nii.gz");
    let values = vec![0, 1, 2, 4, 4, 2, 1, 0];
    let labels = LabelMap::from_parts([2, 2, 2], [1.0, 1.0, 2.5], values.clone()).unwrap();
    write_labels(&p, &labels, None).unwrap();
    let (back, h) = read_labels(&p, &[0, 1, 2, 4]).unwrap();
    assert_eq!(h.datatype_code(), 2);
    assert_eq!(back.data(), values.as_slice());
    assert_eq!(back.spacing(), [1.0, 1.0, 2.5]);

    let bad = LabelMap::from_parts([2, 1, 1], [1.0; 3], vec![0, 3]).unwrap();
    write_labels(&p, &bad, None).unwrap();
    let err = read_labels(&p, &[0, 1, 2, 4]).unwrap_err();
    assert!(err.to_string().contains("value 3"), "{err}");
}

#[test]
fn template_fields_are_carried_through() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src.nii");
    write_volume(&src, &random_volume(1, [4, 4, 4], [1.0; 3]), None).unwrap();
    // stamp qform/sform codes, an affine row and a description
    let mut bytes = std::fs::read(&src).unwrap();
    bytes[252..254].copy_from_slice(&1i16.to_le_bytes());
    bytes[254..256].copy_from_slice(&2i16.to_le_bytes());
    for (k, x) in [-1.0f32, 0.0, 0.0, 90.0].iter().enumerate() {
        bytes[280 + 4 * k..284 + 4 * k].copy_from_slice(&x.to_le_bytes());
    }
    bytes[148..156].copy_from_slice(b"phantom!");
    std::fs::write(&src, &bytes).unwrap();

    let (_, template) = read_volume(&src).unwrap();
    let out = dir.path().join("out.nii");
    let other = random_volume(2, [4, 4, 4], [1.0; 3]);
    write_volume(&out, &other, Some(&template)).unwrap();
    let written = std::fs::read(&out).unwrap();
    assert_eq!(written[148..156], bytes[148..156]);
    assert_eq!(written[252..348], bytes[252..348]);
    assert_eq!(read_volume(&out).unwrap().0, other);
}

#[test]
fn truncated_and_missing_files_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.nii");
    write_volume(&p, &random_volume(4, [8, 8, 8], [1.0; 3]), None).unwrap();
    let bytes = std::fs::read(&p).unwrap();
    std::fs::write(&p, &bytes[..bytes.len() - 10]).unwrap();
    assert!(matches!(read_volume(&p), Err(Error::Format { .. })));
    assert!(matches!(read_volume(dir.path().join("none.nii")), Err(Error::Io { .. })));
}
