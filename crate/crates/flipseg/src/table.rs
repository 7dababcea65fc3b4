//! CSV tables: survival features, predictions and per-case results.
//!
//! Rows are always written sorted by `case_id` and floats use Rust's
//! shortest round-trip formatting, so identical inputs give identical bytes.

use std::path::Path;

use flipseg_core::survival::SurvivalRecord;

use crate::error::{Error, Result};

pub const FEATURE_COLUMNS: [&str; 5] = ["case_id", "age", "n_tumors", "n_cores", "survival_days"];

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Header positions of `required` columns (error naming the first missing
/// one) and of `optional` ones.
fn locate(
    path: &Path,
    headers: &csv::StringRecord,
    required: &[&'static str],
    optional: &[&'static str],
) -> Result<(Vec<usize>, Vec<Option<usize>>)> {
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let req = required
        .iter()
        .map(|&c| {
            find(c).ok_or(Error::MissingColumn {
                path: path.to_path_buf(),
                column: c,
            })
        })
        .collect::<Result<_>>()?;
    Ok((req, optional.iter().map(|c| find(c)).collect()))
}

fn parse<T: std::str::FromStr>(path: &Path, line: u64, column: &str, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::format(path, format!("line {line}: cannot parse {column} value '{s}'")))
}

/// Read `case_id,age,n_tumors,n_cores[,survival_days][,resection_status]`.
/// A blank `survival_days` cell means unknown. Rows come back sorted by
/// `case_id`; duplicate ids are an error.
pub fn read_survival_csv(path: impl AsRef<Path>) -> Result<Vec<SurvivalRecord>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = rdr.headers().map_err(csv_err(path))?.clone();
    let (req, opt) = locate(path, &headers, &FEATURE_COLUMNS[..4], &["survival_days", "resection_status"])?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err(path))?;
        let line = row.position().map_or(0, |p| p.line());
        let cell = |i: usize| row.get(i).unwrap_or("");
        let optional = |k: usize| opt[k].map(cell).map(str::trim).filter(|s| !s.is_empty());
        let mut rec = SurvivalRecord::new(
            cell(req[0]).trim(),
            parse(path, line, "age", cell(req[1]))?,
            parse(path, line, "n_tumors", cell(req[2]))?,
            parse(path, line, "n_cores", cell(req[3]))?,
        );
        rec.survival_days = optional(0).map(|s| parse(path, line, "survival_days", s)).transpose()?;
        rec.resection_status = optional(1).map(String::from);
        if rec.case_id.is_empty() {
            return Err(Error::format(path, format!("line {line}: empty case_id")));
        }
        if !(rec.age.is_finite() && rec.age > 0.0) {
            return Err(Error::format(path, format!("line {line}: age must be positive")));
        }
        if rec.survival_days.is_some_and(|d| !(d.is_finite() && d >= 0.0)) {
            return Err(Error::format(path, format!("line {line}: survival_days must be non-negative")));
        }
        out.push(rec);
    }
    out.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    if let Some(w) = out.windows(2).find(|w| w[0].case_id == w[1].case_id) {
        return Err(Error::format(path, format!("duplicate case_id '{}'", w[0].case_id)));
    }
    Ok(out)
}

/// Write records as `case_id,age,n_tumors,n_cores,survival_days`, the
/// layout read back by [`read_survival_csv`] and convenient for scatter
/// plots of survival against each feature.
pub fn write_survival_csv(path: impl AsRef<Path>, records: &[SurvivalRecord]) -> Result<()> {
    let mut sorted: Vec<&SurvivalRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    let rows = sorted.iter().map(|r| {
        vec![
            r.case_id.clone(),
            r.age.to_string(),
            r.n_tumors.to_string(),
            r.n_cores.to_string(),
            r.survival_days.map(|d| d.to_string()).unwrap_or_default(),
        ]
    });
    write_rows(path.as_ref(), &FEATURE_COLUMNS, rows)
}

/// `case_id,predicted_days`, sorted by case.
pub fn write_predictions_csv(path: impl AsRef<Path>, preds: &[(String, f64)]) -> Result<()> {
    let mut sorted: Vec<&(String, f64)> = preds.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let rows = sorted.iter().map(|(id, d)| vec![id.clone(), d.to_string()]);
    write_rows(path.as_ref(), &["case_id", "predicted_days"], rows)
}

pub fn read_predictions_csv(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = rdr.headers().map_err(csv_err(path))?.clone();
    let (req, _) = locate(path, &headers, &["case_id", "predicted_days"], &[])?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err(path))?;
        let line = row.position().map_or(0, |p| p.line());
        let id = row.get(req[0]).unwrap_or("").trim().to_string();
        out.push((id, parse(path, line, "predicted_days", row.get(req[1]).unwrap_or(""))?));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// Write a header and rows in the given order; fields are quoted only when
/// needed.
pub fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Format an optional float; `None` is an empty cell.
pub fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
