//! Weighted ensemble, simplex grid search and losses.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::scalar::Scalar;

/// Positive-class threshold for binary metrics.
pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights<S> {
    pub w_regressor: S,
    pub w_ir: S,
    pub w_regex: S,
}

impl<S: Scalar> EnsembleWeights<S> {
    pub fn new(w_regressor: S, w_ir: S, w_regex: S) -> Result<Self, EvalError> {
        let w = EnsembleWeights { w_regressor, w_ir, w_regex };
        w.check()?;
        Ok(w)
    }

    pub fn check(&self) -> Result<(), EvalError> {
        let parts = [self.w_regressor, self.w_ir, self.w_regex];
        if parts.iter().any(|w| *w < S::zero()) {
            return Err(EvalError::InvalidWeights(format!("negative component in {parts:?}")));
        }
        let sum = self.w_regressor + self.w_ir + self.w_regex;
        if (sum - S::one()).abs() > S::simplex_tolerance() {
            return Err(EvalError::InvalidWeights(format!("{parts:?} sums to {sum:?}")));
        }
        Ok(())
    }

    pub fn to_f64(&self) -> EnsembleWeights<f64> {
        EnsembleWeights {
            w_regressor: self.w_regressor.to_f64_lossy(),
            w_ir: self.w_ir.to_f64_lossy(),
            w_regex: self.w_regex.to_f64_lossy(),
        }
    }

    pub fn as_tuple(&self) -> (S, S, S) {
        (self.w_regressor, self.w_ir, self.w_regex)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentScores<S> {
    pub regressor: S,
    pub ir: S,
    pub regex: S,
}

impl<S: Scalar> ComponentScores<S> {
    pub fn new(regressor: S, ir: S, regex: S) -> Self {
        ComponentScores { regressor, ir, regex }
    }

    fn check(&self) -> Result<(), EvalError> {
        let unit = |s: S| s >= S::zero() && s <= S::one();
        if unit(self.regressor) && unit(self.ir) && unit(self.regex) {
            Ok(())
        } else {
            Err(EvalError::Invalid(format!("component scores {self:?} outside [0, 1]")))
        }
    }
}

pub fn ensemble_score<S: Scalar>(scores: &ComponentScores<S>, weights: &EnsembleWeights<S>) -> Result<S, EvalError> {
    weights.check()?;
    scores.check()?;
    let s = weights.w_regressor * scores.regressor + weights.w_ir * scores.ir + weights.w_regex * scores.regex;
    Ok(if s > S::one() { S::one() } else { s })
}

pub fn l1_loss<S: Scalar>(predictions: &[S], labels: &[S]) -> Result<S, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch { left: predictions.len(), right: labels.len() });
    }
    if predictions.is_empty() {
        return Err(EvalError::Invalid("l1 loss of empty vectors".into()));
    }
    let sum = predictions.iter().zip(labels).fold(S::zero(), |acc, (p, l)| acc + (*p - *l).abs());
    Ok(sum / <S as Scalar>::from_usize(predictions.len()))
}

/// Number of grid intervals `n` with `step * n == 1`.
pub fn step_divisions(step: f64) -> Result<usize, EvalError> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(EvalError::Invalid(format!("grid step {step} outside (0, 1]")));
    }
    let n = (1.0 / step).round();
    if (n * step - 1.0).abs() > 1e-9 {
        return Err(EvalError::Invalid(format!("grid step {step} does not divide 1")));
    }
    Ok(n as usize)
}

/// All simplex points with components in {0, 1/n, ..., 1}, in lexicographic order.
pub fn grid_points<S: Scalar>(n: usize) -> Vec<EnsembleWeights<S>> {
    let d = <S as Scalar>::from_usize(n);
    let mut out = Vec::with_capacity((n + 1) * (n + 2) / 2);
    for i in 0..=n {
        for j in 0..=n - i {
            let k = n - i - j;
            out.push(EnsembleWeights {
                w_regressor: <S as Scalar>::from_usize(i) / d,
                w_ir: <S as Scalar>::from_usize(j) / d,
                w_regex: <S as Scalar>::from_usize(k) / d,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearch<S> {
    pub weights: EnsembleWeights<S>,
    pub loss: S,
    pub evaluated: usize,
}

/// Exhaustive L1 minimization; the lexicographically first minimizer wins ties.
pub fn grid_search_on_scores<S: Scalar>(
    scores: &[ComponentScores<S>],
    labels: &[S],
    n: usize,
) -> Result<GridSearch<S>, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch { left: scores.len(), right: labels.len() });
    }
    if scores.is_empty() {
        return Err(EvalError::TooFewAnnotated { need: 1, got: 0 });
    }
    if n == 0 {
        return Err(EvalError::Invalid("grid needs at least one interval".into()));
    }
    let mut best: Option<(EnsembleWeights<S>, S)> = None;
    let mut evaluated = 0;
    for w in grid_points::<S>(n) {
        let preds = scores.iter().map(|s| ensemble_score(s, &w)).collect::<Result<Vec<_>, _>>()?;
        let loss = l1_loss(&preds, labels)?;
        evaluated += 1;
        if best.as_ref().is_none_or(|(_, b)| loss < *b) {
            best = Some((w, loss));
        }
    }
    let (weights, loss) = best.expect("grid is non-empty");
    Ok(GridSearch { weights, loss, evaluated })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Thresholds both sides at [`THRESHOLD`]; empty precision/recall denominators give 0.
pub fn binary_metrics<S: Scalar>(predictions: &[S], labels: &[S]) -> Result<BinaryMetrics, EvalError> {
    let flags: Vec<bool> = predictions.iter().map(|p| p.to_f64_lossy() >= THRESHOLD).collect();
    let truth: Vec<bool> = labels.iter().map(|l| l.to_f64_lossy() >= THRESHOLD).collect();
    binary_metrics_from_flags(&flags, &truth)
}

pub(crate) fn binary_metrics_from_flags(pred: &[bool], truth: &[bool]) -> Result<BinaryMetrics, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch { left: pred.len(), right: truth.len() });
    }
    if pred.is_empty() {
        return Err(EvalError::Invalid("binary metrics of empty vectors".into()));
    }
    let mut m = BinaryMetrics::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => m.tp += 1,
            (true, false) => m.fp += 1,
            (false, false) => m.tn += 1,
            (false, true) => m.fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    m.accuracy = ratio(m.tp + m.tn, pred.len());
    m.precision = ratio(m.tp, m.tp + m.fp);
    m.recall = ratio(m.tp, m.tp + m.fn_);
    m.f1 = ratio(2 * m.tp, 2 * m.tp + m.fp + m.fn_);
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    fn r(n: i64, d: i64) -> Ratio<i64> {
        Ratio::new(n, d)
    }

    #[test]
    fn weighted_mean_examples() {
        let w = EnsembleWeights::new(0.3f64, 0.4, 0.3).unwrap();
        assert!((ensemble_score(&ComponentScores::new(1.0, 1.0, 1.0), &w).unwrap() - 1.0).abs() < 1e-12);
        assert!((ensemble_score(&ComponentScores::new(0.5, 1.0, 0.0), &w).unwrap() - 0.55).abs() < 1e-12);
        let bad = EnsembleWeights { w_regressor: 0.5, w_ir: 0.5, w_regex: 0.5 };
        assert!(matches!(
            ensemble_score(&ComponentScores::new(0.5, 0.5, 0.5), &bad),
            Err(EvalError::InvalidWeights(_))
        ));
    }

    #[test]
    fn exact_rational_weights() {
        let w = EnsembleWeights::new(r(3, 10), r(4, 10), r(3, 10)).unwrap();
        let s = ensemble_score(&ComponentScores::new(r(1, 2), r(1, 1), r(0, 1)), &w).unwrap();
        assert_eq!(s, r(55, 100));
        assert!(EnsembleWeights::new(r(1, 3), r(1, 3), r(1, 3) + r(1, 1_000_000)).is_err());
    }

    #[test]
    fn grid_counts() {
        assert_eq!(grid_points::<f64>(10).len(), 66);
        assert_eq!(grid_points::<Ratio<i64>>(4).len(), 15);
        assert_eq!(step_divisions(0.1).unwrap(), 10);
        assert_eq!(step_divisions(0.25).unwrap(), 4);
        assert!(step_divisions(0.3).is_err());
        assert!(step_divisions(0.0).is_err());
        for w in grid_points::<f64>(10) {
            w.check().unwrap();
        }
    }

    #[test]
    fn l1_examples() {
        assert_eq!(l1_loss(&[0.2, 0.7], &[0.2, 0.7]).unwrap(), 0.0);
        assert_eq!(l1_loss(&[0.0, 1.0], &[0.5, 0.5]).unwrap(), 0.5);
        assert!(l1_loss::<f64>(&[], &[]).is_err());
        assert!(l1_loss(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn binary_example() {
        let m = binary_metrics(&[0.9, 0.2, 0.6, 0.1], &[1.0, 0.0, 0.0, 0.8]).unwrap();
        assert_eq!((m.tp, m.fp, m.tn, m.fn_), (1, 1, 1, 1));
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.f1, 0.5);
    }
}
