use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use flipseg_core::ensemble::{ensemble_with_flips, PredictionPair};
use flipseg_core::phantom::{generate_phantom, PhantomSpec};
use flipseg_core::refine::{masks_to_brats_labels, refine_segmentation};
use flipseg_core::uncertainty::{certainty_map, CertaintyFormula};
use flipseg_core::volume::standardize_nonzero;
use flipseg_core::{Axis, Volume3D};
use rayon::prelude::*;
use serde::Serialize;

use super::{list_volumes, prepare_output, require_exists, usage, CmdResult, EnsembleArgs, PhantomArgs, RefineArgs, StandardizeArgs, UncertaintyArgs};
use crate::config::Config;
use crate::nifti;

fn standardize_one(input: &Path, output: &Path) -> anyhow::Result<()> {
    let (v, header) = nifti::read_volume(input)?;
    let s = standardize_nonzero(&v).with_context(|| input.display().to_string())?;
    if s.degenerate {
        log::warn!("{}: constant foreground, written as zeros", input.display());
    }
    nifti::write_volume(output, &s.volume, Some(&header))?;
    log::info!("{} -> {} (mean {}, sd {})", input.display(), output.display(), s.mean, s.std_dev);
    Ok(())
}

pub(super) fn standardize(a: &StandardizeArgs) -> CmdResult {
    require_exists([a.input.as_path()])?;
    if !a.input.is_dir() {
        prepare_output(&a.out)?;
        return Ok(standardize_one(&a.input, &a.out)?);
    }
    let inputs = list_volumes(&a.input)?;
    if inputs.is_empty() {
        return Err(usage(anyhow!("no .nii / .nii.gz files in {}", a.input.display())));
    }
    std::fs::create_dir_all(&a.out).map_err(|e| usage(anyhow!("cannot create {}: {e}", a.out.display())))?;
    let failures: Vec<String> = inputs
        .par_iter()
        .map(|p| standardize_one(p, &a.out.join(p.file_name().unwrap())))
        .zip(&inputs)
        .filter_map(|(r, p)| r.err().map(|e| format!("{}: {e:#}", p.display())))
        .collect();
    for f in &failures {
        log::error!("{f}");
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(anyhow!("{} of {} volumes failed:\n  {}", failures.len(), inputs.len(), failures.join("\n  ")).into())
    }
}

pub(super) fn ensemble(a: &EnsembleArgs) -> CmdResult {
    require_exists(a.pred.iter().map(PathBuf::as_path))?;
    let axes: Vec<Axis> = a.flips.iter().map(|&x| x.into()).collect();
    let group = 1 + axes.len();
    let n_pairs = a.pred.len() / 2;
    if !n_pairs.is_multiple_of(group) {
        return Err(usage(anyhow!(
            "{n_pairs} prediction pairs cannot be split into groups of {group} (original + one per flip axis)"
        )));
    }
    let loaded: Vec<anyhow::Result<(PredictionPair, nifti::NiftiHeader)>> = a
        .pred
        .par_chunks(2)
        .map(|pq| {
            let (p, header) = nifti::read_volume(&pq[0])?;
            let (q, _) = nifti::read_volume(&pq[1])?;
            let pair = PredictionPair::new(p, q)
                .with_context(|| format!("{} / {}", pq[0].display(), pq[1].display()))?;
            Ok((pair, header))
        })
        .collect();
    let mut pairs = Vec::with_capacity(loaded.len());
    let mut template = None;
    for r in loaded {
        let (pair, header) = r?;
        template.get_or_insert(header);
        pairs.push(pair);
    }
    let fused = ensemble_with_flips(&pairs, &axes)?;
    prepare_output(&a.out)?;
    nifti::write_volume(&a.out, &fused, template.as_ref())?;
    log::info!("fused {} pairs into {}", pairs.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct RefineReportFile<'a> {
    inputs: [&'a Path; 3],
    config: &'a flipseg_core::refine::RefinementConfig,
    report: &'a flipseg_core::refine::RefinementReport,
}

pub(super) fn refine(a: &RefineArgs, config: &Config) -> CmdResult {
    require_exists([a.prob_wt.as_path(), a.prob_tc.as_path(), a.prob_et.as_path()])?;
    let mut cfg = config.refinement;
    if let Some(m) = a.min_component_size {
        cfg.min_component_size = m;
    }
    cfg.enforce_nesting |= a.enforce_nesting;
    cfg.validate().map_err(usage)?;

    let (p_wt, header) = nifti::read_volume(&a.prob_wt)?;
    let (p_tc, _) = nifti::read_volume(&a.prob_tc)?;
    let (p_et, _) = nifti::read_volume(&a.prob_et)?;
    let (seg, report) = refine_segmentation(&p_wt, &p_tc, &p_et, &cfg)?;
    for line in report.summary_lines() {
        log::info!("{line}");
    }
    prepare_output(&a.out_labels)?;
    nifti::write_labels(&a.out_labels, &masks_to_brats_labels(&seg), Some(&header))?;
    if let Some(path) = &a.out_report {
        prepare_output(path)?;
        let file = RefineReportFile {
            inputs: [&a.prob_wt, &a.prob_tc, &a.prob_et],
            config: &cfg,
            report: &report,
        };
        let text = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, text + "\n").with_context(|| path.display().to_string())?;
    }
    Ok(())
}

/// Certainty scores rounded to the nearest integer.
pub(crate) fn certainty_to_u8(v: &f64) -> u8 {
    v.round().clamp(0.0, 100.0) as u8
}

pub(super) fn uncertainty(a: &UncertaintyArgs, config: &Config) -> CmdResult {
    let (input, from_q) = match (&a.prob, &a.q) {
        (Some(p), None) => (p, false),
        (None, Some(q)) => (q, true),
        _ => unreachable!("clap enforces exactly one source"),
    };
    require_exists([input.as_path()])?;
    let formula: CertaintyFormula = match a.formula {
        Some(f) => f.into(),
        None if from_q => CertaintyFormula::Flip,
        None => config.uncertainty.formula,
    };
    if (formula == CertaintyFormula::Flip) != from_q {
        return Err(usage(anyhow!(
            "formula {formula:?} needs {}",
            if from_q { "--prob" } else { "--q" }
        )));
    }
    let (v, header) = nifti::read_volume(input)?;
    let cert: Volume3D = certainty_map(formula, &v).with_context(|| input.display().to_string())?;
    prepare_output(&a.out)?;
    nifti::write_u8(&a.out, &cert, Some(&header), certainty_to_u8)?;
    Ok(())
}

pub(super) fn phantom(a: &PhantomArgs, config: &Config) -> CmdResult {
    let preset = a.preset.map(Into::into).unwrap_or(config.phantom.preset);
    let seed = a.seed.unwrap_or(config.phantom.seed);
    let ph = generate_phantom(&PhantomSpec::preset(preset, seed)).map_err(usage)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| usage(anyhow!("cannot create {}: {e}", a.out_dir.display())))?;
    let out = |suffix: &str| a.out_dir.join(format!("{}_{suffix}.nii.gz", a.prefix));
    for (name, v) in [
        ("p_wt", &ph.p_wt),
        ("p_tc", &ph.p_tc),
        ("p_et", &ph.p_et),
        ("q_wt", &ph.q_wt),
        ("q_tc", &ph.q_tc),
        ("q_et", &ph.q_et),
    ] {
        nifti::write_volume(out(name), v, None)?;
    }
    nifti::write_labels(out("gt"), &masks_to_brats_labels(&ph.truth), None)?;
    log::info!("{preset:?} phantom (seed {seed}) written to {}", a.out_dir.display());
    Ok(())
}
