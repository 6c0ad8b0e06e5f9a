//! Linear stacking over the regex and IR scorers plus text statistics.

use serde::{Deserialize, Serialize};

use super::tfidf::{tokenize, FieldWeights, IrIndex};
use super::{regex_criticality, EvalError, RegexRules, SceneRecord};

pub const FEATURE_NAMES: [&str; 5] = ["regex", "ir", "tokens", "hazards", "bias"];
const N_FEATURES: usize = FEATURE_NAMES.len();
const RIDGE: f64 = 1e-10;

const HAZARD_TERMS: &[&str] = &[
    "accident", "ambulance", "blocked", "blocking", "blocks", "brake", "brakes", "braking", "child", "children",
    "collision", "construction", "crash", "cyclist", "debris", "emergency", "obstacle", "pedestrian",
    "pedestrians", "stop", "stopped", "stops", "swerve", "swerves", "truck",
];

pub fn token_count(record: &SceneRecord) -> usize {
    tokenize(&record.action_text).len() + tokenize(&record.justification_text).len()
}

pub fn hazard_count(record: &SceneRecord) -> usize {
    tokenize(&record.text())
        .iter()
        .filter(|t| HAZARD_TERMS.binary_search(&t.as_str()).is_ok())
        .count()
}

/// First-layer scorers shared by the stack and the ensemble.
#[derive(Debug, Clone)]
pub struct BaseScorers {
    pub rules: RegexRules,
    pub ir: IrIndex<f64>,
    pub fields: FieldWeights<f64>,
}

impl BaseScorers {
    pub fn regex(&self, r: &SceneRecord) -> f64 {
        regex_criticality(r, &self.rules)
    }

    /// IR score and its fallback flag.
    pub fn ir(&self, r: &SceneRecord) -> Result<(f64, bool), EvalError> {
        let s = self.ir.score(r, &self.fields)?;
        Ok((s.score, s.fallback))
    }

    pub fn features(&self, r: &SceneRecord) -> Result<[f64; N_FEATURES], EvalError> {
        Ok([
            self.regex(r),
            self.ir(r)?.0,
            (token_count(r) as f64 / 50.0).min(1.0),
            (hazard_count(r) as f64 / 5.0).min(1.0),
            1.0,
        ])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StackingRegressor {
    coefficients: Option<Vec<f64>>,
}

impl StackingRegressor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn coefficients(&self) -> Option<&[f64]> {
        self.coefficients.as_deref()
    }

    pub fn is_trained(&self) -> bool {
        self.coefficients.is_some()
    }

    /// Least squares on feature rows against labels.
    pub fn fit_features(&mut self, rows: &[[f64; N_FEATURES]], labels: &[f64]) -> Result<(), EvalError> {
        if rows.len() != labels.len() {
            return Err(EvalError::LengthMismatch { left: rows.len(), right: labels.len() });
        }
        if rows.is_empty() {
            return Err(EvalError::TooFewAnnotated { need: 1, got: 0 });
        }
        let mut a = [[0.0; N_FEATURES]; N_FEATURES];
        let mut b = [0.0; N_FEATURES];
        for (x, &y) in rows.iter().zip(labels) {
            for i in 0..N_FEATURES {
                b[i] += x[i] * y;
                for j in 0..N_FEATURES {
                    a[i][j] += x[i] * x[j];
                }
            }
        }
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += RIDGE;
        }
        self.coefficients = Some(solve(a, b)?.to_vec());
        Ok(())
    }

    /// Fits on the annotated records; unannotated ones are ignored.
    pub fn fit(&mut self, records: &[SceneRecord], base: &BaseScorers) -> Result<(), EvalError> {
        let (rows, labels): (Vec<_>, Vec<_>) = records
            .iter()
            .filter_map(|r| r.human_label.map(|l| base.features(r).map(|f| (f, l))))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .unzip();
        if rows.is_empty() {
            return Err(EvalError::NoAnnotated);
        }
        self.fit_features(&rows, &labels)
    }

    pub fn predict_features(&self, x: &[f64; N_FEATURES]) -> Result<f64, EvalError> {
        let c = self.coefficients.as_ref().ok_or(EvalError::Untrained)?;
        let y: f64 = c.iter().zip(x).map(|(c, x)| c * x).sum();
        Ok(if y.is_nan() { 0.0 } else { y.clamp(0.0, 1.0) })
    }

    pub fn predict(&self, record: &SceneRecord, base: &BaseScorers) -> Result<f64, EvalError> {
        if !self.is_trained() {
            return Err(EvalError::Untrained);
        }
        self.predict_features(&base.features(record)?)
    }
}

fn solve(mut a: [[f64; N_FEATURES]; N_FEATURES], mut b: [f64; N_FEATURES]) -> Result<[f64; N_FEATURES], EvalError> {
    for col in 0..N_FEATURES {
        let pivot = (col..N_FEATURES)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if a[pivot][col].abs() < 1e-300 {
            return Err(EvalError::Invalid("singular normal equations".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..N_FEATURES {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for (x, p) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; N_FEATURES];
    for row in (0..N_FEATURES).rev() {
        let s: f64 = (row + 1..N_FEATURES).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Ok(x)
}

pub fn regressor_criticality(record: &SceneRecord, model: &StackingRegressor, base: &BaseScorers) -> Result<f64, EvalError> {
    model.predict(record, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hazard_terms_sorted() {
        assert!(HAZARD_TERMS.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn untrained_errors() {
        let m = StackingRegressor::new();
        assert!(matches!(m.predict_features(&[0.0; 5]), Err(EvalError::Untrained)));
    }

    #[test]
    fn recovers_exact_linear_target() {
        let rows: Vec<[f64; 5]> = (0..20)
            .map(|i| {
                let t = i as f64;
                [(t * 0.37).sin().abs(), (t * 0.11).cos().abs(), (t * 0.05) % 1.0, (t * 0.23).sin().powi(2), 1.0]
            })
            .collect();
        let labels: Vec<f64> = rows.iter().map(|r| 0.6 * r[0] + 0.3 * r[1] + 0.05).collect();
        let mut m = StackingRegressor::new();
        m.fit_features(&rows, &labels).unwrap();
        let c = m.coefficients().unwrap();
        for (got, want) in c.iter().zip([0.6, 0.3, 0.0, 0.0, 0.05]) {
            assert!((got - want).abs() < 1e-6, "{c:?}");
        }
    }
}
