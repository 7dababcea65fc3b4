//! Helpers shared by the command-line integration tests.
#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use flipseg_core::survival::SurvivalRecord;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn flipseg() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_flipseg"));
    c.env_remove("FLIPSEG_CONFIG").env_remove("RUST_LOG");
    c
}

/// Run the binary in `dir` with `args`.
pub fn run_in(dir: &Path, args: &[&str]) -> Output {
    flipseg().current_dir(dir).args(args).output().expect("binary runs")
}

/// Run and require exit status 0.
pub fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let out = run_in(dir, args);
    assert!(
        out.status.success(),
        "flipseg {args:?} exited with {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Cohort in which survival falls linearly with age, except for a
/// multifocal subgroup (3–5 tumours) that always survives less than 300
/// days regardless of age.
pub fn synthetic_cohort(n: usize, seed: u64) -> Vec<SurvivalRecord> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let age: f64 = r.gen_range(25.0..80.0);
            let (n_tumors, days) = if r.gen_bool(0.3) {
                (r.gen_range(3..=5), r.gen_range(60.0..280.0))
            } else {
                let noise: f64 = r.gen_range(-150.0..150.0);
                (r.gen_range(1..=2), f64::max(1100.0 - 11.0 * age + noise, 30.0))
            };
            let n_cores = r.gen_range(1..=n_tumors);
            SurvivalRecord::new(format!("case{i:04}"), age.round(), n_tumors, n_cores).with_survival(days.round())
        })
        .collect()
}
