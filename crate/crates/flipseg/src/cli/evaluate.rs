use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use flipseg_core::metrics::evaluate_masks;
use flipseg_core::refine::{brats_labels_to_masks, RefinementReport, RegionLabel};
use flipseg_core::uncertainty::{evaluate_uncertainty, UncertaintyEvalCurve};
use rayon::prelude::*;
use serde::Deserialize;

use super::{case_name, find_volume, list_volumes, prepare_output, require_exists, usage, CmdResult, EvaluateArgs};
use crate::config::Config;
use crate::nifti;
use crate::table::{cell, write_rows};

const BRATS_LABELS: [u8; 4] = [0, 1, 2, 4];

/// Certainty-map file suffix per region.
fn cert_suffix(r: RegionLabel) -> &'static str {
    match r {
        RegionLabel::WholeTumor => "unc_whole",
        RegionLabel::TumorCore => "unc_core",
        RegionLabel::EnhancingTumor => "unc_enhance",
    }
}

fn region_tag(r: RegionLabel) -> &'static str {
    match r {
        RegionLabel::WholeTumor => "wt",
        RegionLabel::TumorCore => "tc",
        RegionLabel::EnhancingTumor => "et",
    }
}

pub(crate) fn result_columns() -> Vec<String> {
    let mut cols = vec!["case_id".to_string()];
    for metric in ["dice", "hd95"] {
        cols.extend(RegionLabel::ALL.map(|r| format!("{metric}_{}", region_tag(r))));
    }
    cols.extend(RegionLabel::ALL.map(|r| format!("fallback_{}", region_tag(r))));
    cols.push("tc_substituted".into());
    cols.push("wt_failsafe".into());
    for r in RegionLabel::ALL {
        for metric in ["dice_auc", "ftp_auc", "ftn_auc"] {
            cols.push(format!("{metric}_{}", region_tag(r)));
        }
    }
    cols
}

struct CaseInputs {
    case: String,
    pred: PathBuf,
    gt: PathBuf,
    report: Option<PathBuf>,
    certs: Option<[PathBuf; 3]>,
}

#[derive(Deserialize)]
struct ReportFile {
    report: RefinementReport,
}

fn flag(b: bool) -> Option<f64> {
    Some(if b { 1.0 } else { 0.0 })
}

/// One row of numeric cells (after `case_id`), `None` for blanks.
fn evaluate_case(c: &CaseInputs, config: &Config) -> anyhow::Result<Vec<Option<f64>>> {
    let (pred, _) = nifti::read_labels(&c.pred, &BRATS_LABELS)?;
    let (gt, _) = nifti::read_labels(&c.gt, &BRATS_LABELS)?;
    pred.ensure_same_dims(&gt)
        .with_context(|| format!("{} vs {}", c.pred.display(), c.gt.display()))?;
    let pred = brats_labels_to_masks(&pred);
    let gt = brats_labels_to_masks(&gt);

    let mut dice = Vec::new();
    let mut hd95 = Vec::new();
    for r in RegionLabel::ALL {
        let m = evaluate_masks(pred.get(r), gt.get(r), &config.metrics)?;
        if m.one_empty && m.hd95.is_none() {
            log::warn!("{}: {} HD95 undefined (one mask empty)", c.case, r.short_name());
        }
        dice.push(Some(m.dice));
        hd95.push(m.hd95);
    }

    let mut report_cells = vec![None; 5];
    if let Some(path) = &c.report {
        let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
        let file: ReportFile = serde_json::from_str(&text).with_context(|| path.display().to_string())?;
        let rep = file.report;
        report_cells = vec![
            flag(rep.whole_tumor.fallback_used),
            flag(rep.tumor_core.fallback_used),
            flag(rep.enhancing_tumor.fallback_used),
            flag(rep.tumor_core.core_substituted),
            flag(rep.whole_tumor.failsafe_triggered),
        ];
    }

    let mut curve_cells = vec![None; 9];
    if let Some(certs) = &c.certs {
        curve_cells.clear();
        for (r, path) in RegionLabel::ALL.into_iter().zip(certs) {
            let (cert, _) = nifti::read_volume(path)?;
            let curve: UncertaintyEvalCurve =
                evaluate_uncertainty(pred.get(r), gt.get(r), &cert, &config.uncertainty.thresholds)
                    .with_context(|| path.display().to_string())?;
            curve_cells.extend([Some(curve.dice_auc), Some(curve.ftp_auc), Some(curve.ftn_auc)]);
        }
    }

    Ok(dice.into_iter().chain(hd95).chain(report_cells).chain(curve_cells).collect())
}

/// Mean and population standard deviation of the non-blank cells of each
/// column.
fn summary(rows: &[Vec<Option<f64>>]) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    let width = rows.first().map_or(0, Vec::len);
    (0..width)
        .map(|j| {
            let vals: Vec<f64> = rows.iter().filter_map(|r| r[j]).collect();
            if vals.is_empty() {
                return (None, None);
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            (Some(mean), Some(var.sqrt()))
        })
        .unzip()
}

fn gather(a: &EvaluateArgs) -> Result<Vec<CaseInputs>, super::Failure> {
    let mut dirs = vec![a.pred_dir.as_path(), a.gt_dir.as_path()];
    dirs.extend(a.cert_dir.as_deref());
    require_exists(dirs)?;
    let preds = list_volumes(&a.pred_dir)?;
    if preds.is_empty() {
        return Err(usage(anyhow!("no label maps in {}", a.pred_dir.display())));
    }
    let mut cases = Vec::new();
    for pred in preds {
        let case = case_name(&pred).unwrap();
        let gt = find_volume(&a.gt_dir, &case)
            .ok_or_else(|| usage(anyhow!("case '{case}' has no ground truth in {}", a.gt_dir.display())))?;
        let certs = match &a.cert_dir {
            None => None,
            Some(dir) => {
                let find = |r: RegionLabel| {
                    let stem = format!("{case}_{}", cert_suffix(r));
                    find_volume(dir, &stem).ok_or_else(|| {
                        usage(anyhow!("case '{case}' has no certainty map {stem}.nii.gz in {}", dir.display()))
                    })
                };
                Some([
                    find(RegionLabel::WholeTumor)?,
                    find(RegionLabel::TumorCore)?,
                    find(RegionLabel::EnhancingTumor)?,
                ])
            }
        };
        let report = Some(a.pred_dir.join(format!("{case}_report.json"))).filter(|p| p.is_file());
        cases.push(CaseInputs {
            case,
            pred,
            gt,
            report,
            certs,
        });
    }
    Ok(cases)
}

pub(super) fn evaluate(a: &EvaluateArgs, config: &Config) -> CmdResult {
    let cases = gather(a)?;
    prepare_output(&a.out_csv)?;
    let results: Vec<anyhow::Result<Vec<Option<f64>>>> =
        cases.par_iter().map(|c| evaluate_case(c, config)).collect();

    let mut rows = Vec::new();
    let mut ids = Vec::new();
    let mut failures = Vec::new();
    for (c, r) in cases.iter().zip(results) {
        match r {
            Ok(row) => {
                ids.push(c.case.clone());
                rows.push(row);
            }
            Err(e) => {
                log::error!("{}: {e:#}", c.case);
                failures.push(c.case.clone());
            }
        }
    }
    let (mean, std) = summary(&rows);
    let mut out: Vec<Vec<String>> = ids
        .iter()
        .zip(&rows)
        .map(|(id, r)| std::iter::once(id.clone()).chain(r.iter().map(|v| cell(*v))).collect())
        .collect();
    if !rows.is_empty() {
        for (label, vals) in [("mean", &mean), ("std", &std)] {
            out.push(std::iter::once(label.to_string()).chain(vals.iter().map(|v| cell(*v))).collect());
        }
    }
    let header = result_columns();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_rows(Path::new(&a.out_csv), &header, out)?;
    log::info!("{} cases evaluated, {} failed", rows.len(), failures.len());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(anyhow!("{} case(s) failed: {}", failures.len(), failures.join(", ")).into())
    }
}
