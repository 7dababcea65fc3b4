use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{canonical_order, Feature, SurvivalRecord};
use crate::error::{Error, Result};
use crate::{linalg, stats};

/// Linear survival model on capped targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OlsModel {
    pub features: Vec<Feature>,
    /// Intercept followed by one slope per feature.
    pub coefficients: Vec<f64>,
    pub cap_days: f64,
}

impl OlsModel {
    /// Raw linear prediction in days (not clamped).
    pub fn predict(&self, rec: &SurvivalRecord) -> f64 {
        self.coefficients[0]
            + self
                .features
                .iter()
                .zip(&self.coefficients[1..])
                .map(|(f, b)| b * f.value(rec))
                .sum::<f64>()
    }

    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }
}

/// Least squares fit of `min(survival_days, cap_days)` on `features`.
///
/// Columns are centred before forming the normal equations; a singular
/// system (e.g. a constant feature) falls back to the minimum-norm solution.
pub fn fit_ols(train: &[SurvivalRecord], features: &[Feature], cap_days: f64) -> Result<OlsModel> {
    if !(cap_days.is_finite() && cap_days > 0.0) {
        return Err(Error::InvalidConfig("cap_days must be positive".into()));
    }
    let k = features.len();
    if train.len() < k + 1 {
        return Err(Error::InsufficientData {
            needed: k + 1,
            got: train.len(),
        });
    }
    let rows = canonical_order(train);
    let mut y = Vec::with_capacity(rows.len());
    for r in &rows {
        r.validate()?;
        let d = r.survival_days.ok_or_else(|| Error::MissingTarget(r.case_id.clone()))?;
        y.push(f64::min(d, cap_days));
    }
    let cols: Vec<Vec<f64>> = features
        .iter()
        .map(|f| rows.iter().map(|r| f.value(r)).collect())
        .collect();

    let y_mean = stats::mean(&y);
    let x_mean: Vec<f64> = cols.iter().map(|c| stats::mean(c)).collect();
    let mut gram = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    for i in 0..k {
        for j in 0..=i {
            let g = stats::sum(
                cols[i]
                    .iter()
                    .zip(&cols[j])
                    .map(|(a, b)| (a - x_mean[i]) * (b - x_mean[j])),
            );
            gram[i * k + j] = g;
            gram[j * k + i] = g;
        }
        rhs[i] = stats::sum(cols[i].iter().zip(&y).map(|(a, t)| (a - x_mean[i]) * (t - y_mean)));
    }
    let slopes = if k == 0 {
        Vec::new()
    } else {
        linalg::cholesky_solve(&gram, &rhs, k).unwrap_or_else(|| linalg::pinv_solve(&gram, &rhs, k))
    };
    let intercept = y_mean - stats::sum(slopes.iter().zip(&x_mean).map(|(b, m)| b * m));

    let mut coefficients = Vec::with_capacity(k + 1);
    coefficients.push(intercept);
    coefficients.extend(slopes);
    Ok(OlsModel {
        features: features.to_vec(),
        coefficients,
        cap_days,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;

    fn rec(i: usize, age: f64, days: f64) -> SurvivalRecord {
        SurvivalRecord::new(format!("c{i:03}"), age, 1, 1).with_survival(days)
    }

    #[test]
    fn recovers_planted_line() {
        let train: Vec<_> = (0..30)
            .map(|i| {
                let age = 20.0 + i as f64;
                rec(i, age, 2000.0 - 20.0 * age)
            })
            .collect();
        // targets run from 1600 down to 1020; raise the cap so none is clipped
        let m = fit_ols(&train, &[Feature::Age], 5000.0).unwrap();
        assert!((m.coefficients[0] - 2000.0).abs() / 2000.0 < 1e-9);
        assert!((m.coefficients[1] + 20.0).abs() / 20.0 < 1e-9);
    }

    #[test]
    fn caps_long_survivors() {
        let train = [rec(0, 40.0, 1500.0), rec(1, 50.0, 1500.0), rec(2, 60.0, 1500.0)];
        let m = fit_ols(&train, &[Feature::Age], 1000.0).unwrap();
        assert!((m.intercept() - 1000.0).abs() < 1e-9);
        assert!(m.coefficients[1].abs() < 1e-12);
    }

    #[test]
    fn constant_feature_falls_back() {
        // n_cores is 1 everywhere: singular Gram matrix
        let train: Vec<_> = (0..5).map(|i| rec(i, 30.0 + 5.0 * i as f64, 500.0 - i as f64)).collect();
        let m = fit_ols(&train, &[Feature::Age, Feature::NCores], 1000.0).unwrap();
        assert_eq!(m.coefficients.len(), 3);
        assert!(m.coefficients[2].abs() < 1e-9);
        assert!((m.coefficients[1] + 0.2).abs() < 1e-9);
    }

    #[test]
    fn errors() {
        let one = [rec(0, 40.0, 100.0)];
        assert_eq!(
            fit_ols(&one, &[Feature::Age], 1000.0),
            Err(Error::InsufficientData { needed: 2, got: 1 })
        );
        let unlabeled = [rec(0, 40.0, 100.0), SurvivalRecord::new("x", 50.0, 1, 1)];
        assert_eq!(
            fit_ols(&unlabeled, &[Feature::Age], 1000.0),
            Err(Error::MissingTarget("x".into()))
        );
        let bad_age = [rec(0, 40.0, 100.0), rec(1, -3.0, 100.0)];
        assert!(matches!(
            fit_ols(&bad_age, &[Feature::Age], 1000.0),
            Err(Error::InvalidRecord { .. })
        ));
    }
}
