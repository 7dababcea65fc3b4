use std::path::Path;

use anyhow::{anyhow, Context};
use flipseg_core::refine::brats_labels_to_masks;
use flipseg_core::survival::{
    self, evaluate_survival, extract_features, fit_fusion, predict_fused, FusionModel, SurvivalRecord,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{find_volume, prepare_output, require_exists, usage, CmdResult, FeaturesArgs, SurvivalCvArgs, SurvivalPredictArgs, SurvivalTrainArgs};
use crate::config::Config;
use crate::nifti;
use crate::table::{read_survival_csv, write_predictions_csv, write_rows, write_survival_csv};

const MODEL_FORMAT: &str = "flipseg-survival-model";
const MODEL_VERSION: u32 = 1;

/// On-disk survival model: the fitted sub-models plus the configuration
/// (including the seed) that produced them.
#[derive(Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub model: FusionModel,
}

pub fn save_model(path: &Path, model: &FusionModel) -> anyhow::Result<()> {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        model: model.clone(),
    };
    let text = serde_json::to_string(&file)?;
    std::fs::write(path, text + "\n").with_context(|| path.display().to_string())
}

pub fn load_model(path: &Path) -> anyhow::Result<FusionModel> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
    let file: ModelFile = serde_json::from_str(&text).with_context(|| format!("{}: not a survival model", path.display()))?;
    if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
        return Err(anyhow!(
            "{}: unsupported model format {} v{}",
            path.display(),
            file.format,
            file.version
        ));
    }
    Ok(file.model)
}

fn read_clinical(path: &Path) -> anyhow::Result<Vec<SurvivalRecord>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| path.display().to_string())?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let id = col("case_id").ok_or_else(|| anyhow!("{}: missing required column 'case_id'", path.display()))?;
    let age = col("age").ok_or_else(|| anyhow!("{}: missing required column 'age'", path.display()))?;
    let days = col("survival_days");
    let resection = col("resection_status");
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let get = |i: usize| row.get(i).unwrap_or("").trim();
        let a: f64 = get(age)
            .parse()
            .ok()
            .filter(|a: &f64| a.is_finite() && *a > 0.0)
            .ok_or_else(|| anyhow!("{}: invalid age '{}' for case '{}'", path.display(), get(age), get(id)))?;
        let mut rec = SurvivalRecord::new(get(id), a, 0, 0);
        if let Some(d) = days.map(get).filter(|s| !s.is_empty()) {
            rec.survival_days = Some(d.parse().map_err(|_| anyhow!("{}: invalid survival_days '{d}'", path.display()))?);
        }
        rec.resection_status = resection.map(get).filter(|s| !s.is_empty()).map(String::from);
        out.push(rec);
    }
    out.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    Ok(out)
}

pub(super) fn features(a: &FeaturesArgs, config: &Config) -> CmdResult {
    require_exists([a.seg_dir.as_path(), a.clinical_csv.as_path()])?;
    let clinical = read_clinical(&a.clinical_csv).map_err(usage)?;
    let segs: Vec<_> = clinical
        .iter()
        .map(|r| {
            find_volume(&a.seg_dir, &r.case_id)
                .ok_or_else(|| usage(anyhow!("case '{}' has no segmentation in {}", r.case_id, a.seg_dir.display())))
        })
        .collect::<Result<_, _>>()?;
    prepare_output(&a.out_csv)?;
    let conn = config.refinement.connectivity;
    let results: Vec<anyhow::Result<SurvivalRecord>> = clinical
        .par_iter()
        .zip(&segs)
        .map(|(r, path)| {
            let (labels, _) = nifti::read_labels(path, &[0, 1, 2, 4])?;
            let mut rec = extract_features(&brats_labels_to_masks(&labels), r.case_id.clone(), r.age, conn);
            rec.survival_days = r.survival_days;
            rec.resection_status = r.resection_status.clone();
            Ok(rec)
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in clinical.iter().zip(results) {
        match res {
            Ok(rec) => records.push(rec),
            Err(e) => {
                log::error!("{}: {e:#}", r.case_id);
                failures.push(r.case_id.clone());
            }
        }
    }
    write_survival_csv(&a.out_csv, &records)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(anyhow!("{} case(s) failed: {}", failures.len(), failures.join(", ")).into())
    }
}

fn labeled(records: &[SurvivalRecord], path: &Path) -> Result<(), super::Failure> {
    if let Some(r) = records.iter().find(|r| r.survival_days.is_none()) {
        return Err(usage(anyhow!("{}: case '{}' has no survival_days", path.display(), r.case_id)));
    }
    Ok(())
}

pub(super) fn train(a: &SurvivalTrainArgs, config: &Config) -> CmdResult {
    require_exists([a.features_csv.as_path()])?;
    let records = read_survival_csv(&a.features_csv).map_err(usage)?;
    labeled(&records, &a.features_csv)?;
    let mut cfg = config.survival.clone();
    if let Some(seed) = a.seed {
        cfg.forest.seed = seed;
    }
    prepare_output(&a.model_out)?;
    let model = fit_fusion(&records, &cfg)?;
    save_model(&a.model_out, &model)?;
    log::info!(
        "trained on {} cases: OLS coefficients {:?}, {} trees",
        records.len(),
        model.ols.coefficients,
        model.forest.trees.len()
    );
    Ok(())
}

pub(super) fn predict(a: &SurvivalPredictArgs) -> CmdResult {
    require_exists([a.model.as_path(), a.features_csv.as_path()])?;
    let model = load_model(&a.model).map_err(usage)?;
    let records = read_survival_csv(&a.features_csv).map_err(usage)?;
    prepare_output(&a.out_csv)?;
    let preds: Vec<(String, f64)> = records
        .iter()
        .map(|r| (r.case_id.clone(), predict_fused(&model, r)))
        .collect();
    write_predictions_csv(&a.out_csv, &preds)?;
    let pairs: Vec<(f64, f64)> = records
        .iter()
        .zip(&preds)
        .filter_map(|(r, p)| r.survival_days.map(|d| (p.1, d)))
        .collect();
    if !pairs.is_empty() {
        let m = evaluate_survival(&pairs, &model.config.bins)?;
        log::info!(
            "{} labeled cases: accuracy {:.3}, MSE {:.1}, Spearman {:?}",
            pairs.len(),
            m.accuracy,
            m.mse,
            m.spearman_r
        );
    }
    Ok(())
}

pub(super) fn cross_validate(a: &SurvivalCvArgs, config: &Config) -> CmdResult {
    require_exists([a.features_csv.as_path()])?;
    let records = read_survival_csv(&a.features_csv).map_err(usage)?;
    labeled(&records, &a.features_csv)?;
    let mut cfg = config.survival.clone();
    if let Some(k) = a.folds {
        cfg.folds = k;
    }
    cfg.forest.seed = a.seed;
    cfg.validate().map_err(usage)?;
    let report = survival::cross_validate(&records, &cfg, a.seed)?;

    let mut rows: Vec<[String; 4]> = report
        .folds
        .iter()
        .map(|f| {
            [
                f.fold.to_string(),
                f.n_test.to_string(),
                f.fused_accuracy.to_string(),
                f.baseline_accuracy.to_string(),
            ]
        })
        .collect();
    rows.push([
        "mean".into(),
        String::new(),
        report.mean_fold_fused_accuracy.to_string(),
        report.mean_fold_baseline_accuracy.to_string(),
    ]);
    rows.push([
        "pooled".into(),
        records.len().to_string(),
        report.fused_accuracy.to_string(),
        report.baseline_accuracy.to_string(),
    ]);
    let header = ["fold", "n_test", "fused_accuracy", "age_only_accuracy"];
    match &a.out_csv {
        Some(path) => {
            prepare_output(path)?;
            write_rows(path, &header, rows)?;
        }
        None => {
            println!("{}", header.join(","));
            for r in rows {
                println!("{}", r.join(","));
            }
        }
    }
    log::info!(
        "{}-fold accuracy: fused {:.3}, age-only {:.3}",
        cfg.folds,
        report.fused_accuracy,
        report.baseline_accuracy
    );
    Ok(())
}
