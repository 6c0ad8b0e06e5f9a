//! End-to-end labeling evaluation over a corpus.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ensemble::binary_metrics_from_flags;
use super::{
    binary_metrics, ensemble_score, grid_search_on_scores, l1_loss, step_divisions, BaseScorers, BinaryMetrics,
    ComponentScores, EnsembleWeights, EvalError, Exemplar, FieldWeights, GridSearch, IrIndex, RegexRules,
    SceneRecord, StackingRegressor, THRESHOLD,
};
use crate::agents::Observation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub step: f64,
    pub seed: u64,
    /// Share of annotated records held out for the weight search.
    pub holdout_fraction: f64,
    pub fields: FieldWeights<f64>,
    pub temperature: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            step: 0.1,
            seed: 0,
            holdout_fraction: 0.5,
            fields: FieldWeights::default(),
            temperature: IrIndex::<f64>::DEFAULT_TEMPERATURE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Fit,
    Holdout,
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordScore {
    pub id: String,
    pub split: Split,
    pub label: Option<f64>,
    pub regex: f64,
    pub ir: f64,
    pub ir_fallback: bool,
    pub regressor: f64,
    pub ensemble: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentLosses {
    pub regressor: f64,
    pub ir: f64,
    pub regex: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub step: f64,
    pub n_records: usize,
    pub n_annotated: usize,
    pub n_fit: usize,
    pub n_holdout: usize,
    pub search_size: usize,
    pub weights: EnsembleWeights<f64>,
    pub holdout_l1: f64,
    pub holdout_binary: BinaryMetrics,
    pub threshold: f64,
    pub component_l1: ComponentLosses,
    pub regressor_coefficients: Vec<f64>,
    pub scores: Vec<RecordScore>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn scores_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "split", "label", "regex", "ir", "ir_fallback", "regressor", "ensemble"])
            .expect("in-memory csv");
        for s in &self.scores {
            let split = match s.split {
                Split::Fit => "fit",
                Split::Holdout => "holdout",
                Split::Unlabeled => "unlabeled",
            };
            w.write_record([
                s.id.clone(),
                split.to_string(),
                s.label.map(|l| l.to_string()).unwrap_or_default(),
                s.regex.to_string(),
                s.ir.to_string(),
                s.ir_fallback.to_string(),
                s.regressor.to_string(),
                s.ensemble.to_string(),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
    }
}

/// Seeded split, fit on one half, search weights on the other, score everything.
pub fn evaluate(records: &[SceneRecord], rules: &RegexRules, config: &EvalConfig) -> Result<EvalReport, EvalError> {
    records.iter().try_for_each(SceneRecord::check)?;
    config.fields.check()?;
    if !(config.holdout_fraction > 0.0 && config.holdout_fraction < 1.0) {
        return Err(EvalError::Invalid(format!("holdout fraction {} outside (0, 1)", config.holdout_fraction)));
    }
    let n = step_divisions(config.step)?;
    let mut annotated: Vec<usize> = (0..records.len()).filter(|&i| records[i].is_annotated()).collect();
    match annotated.len() {
        0 => return Err(EvalError::NoAnnotated),
        1 => return Err(EvalError::TooFewAnnotated { need: 2, got: 1 }),
        _ => {}
    }
    annotated.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let n_holdout = ((annotated.len() as f64 * config.holdout_fraction).round() as usize).clamp(1, annotated.len() - 1);
    let (holdout, fit) = annotated.split_at(n_holdout);
    let mut split = vec![Split::Unlabeled; records.len()];
    fit.iter().for_each(|&i| split[i] = Split::Fit);
    holdout.iter().for_each(|&i| split[i] = Split::Holdout);

    let exemplars: Vec<Exemplar<f64>> = fit.iter().filter_map(|&i| Exemplar::from_record(&records[i])).collect();
    let base = BaseScorers {
        rules: rules.clone(),
        ir: IrIndex::with_temperature(exemplars, config.temperature)?,
        fields: config.fields,
    };
    let fit_records: Vec<SceneRecord> = fit.iter().map(|&i| records[i].clone()).collect();
    let mut model = StackingRegressor::new();
    model.fit(&fit_records, &base)?;

    let components: Vec<(ComponentScores<f64>, bool)> = records
        .par_iter()
        .map(|r| {
            let (ir, fallback) = base.ir(r)?;
            Ok((ComponentScores::new(model.predict(r, &base)?, ir, base.regex(r)), fallback))
        })
        .collect::<Result<_, EvalError>>()?;

    let held_scores: Vec<ComponentScores<f64>> = holdout.iter().map(|&i| components[i].0).collect();
    let held_labels: Vec<f64> = holdout.iter().map(|&i| records[i].human_label.expect("annotated")).collect();
    let search: GridSearch<f64> = grid_search_on_scores(&held_scores, &held_labels, n)?;

    let scores: Vec<RecordScore> = records
        .par_iter()
        .zip(components.par_iter())
        .zip(split.par_iter())
        .map(|((r, (c, fallback)), s)| {
            Ok(RecordScore {
                id: r.id.clone(),
                split: *s,
                label: r.human_label,
                regex: c.regex,
                ir: c.ir,
                ir_fallback: *fallback,
                regressor: c.regressor,
                ensemble: ensemble_score(c, &search.weights)?,
            })
        })
        .collect::<Result<_, EvalError>>()?;

    let held_preds: Vec<f64> = holdout.iter().map(|&i| scores[i].ensemble).collect();
    let component = |f: fn(&ComponentScores<f64>) -> f64| {
        l1_loss(&held_scores.iter().map(f).collect::<Vec<_>>(), &held_labels)
    };
    Ok(EvalReport {
        seed: config.seed,
        step: config.step,
        n_records: records.len(),
        n_annotated: annotated.len(),
        n_fit: fit.len(),
        n_holdout: holdout.len(),
        search_size: search.evaluated,
        weights: search.weights,
        holdout_l1: search.loss,
        holdout_binary: binary_metrics(&held_preds, &held_labels)?,
        threshold: THRESHOLD,
        component_l1: ComponentLosses {
            regressor: component(|c| c.regressor)?,
            ir: component(|c| c.ir)?,
            regex: component(|c| c.regex)?,
        },
        regressor_coefficients: model.coefficients().unwrap_or_default().to_vec(),
        scores,
    })
}

/// Weight search over a seeded held-out split of the annotated records.
pub fn grid_search_weights(
    records: &[SceneRecord],
    rules: &RegexRules,
    step: f64,
    seed: u64,
) -> Result<GridSearch<f64>, EvalError> {
    let report = evaluate(records, rules, &EvalConfig { step, seed, ..EvalConfig::default() })?;
    Ok(GridSearch { weights: report.weights, loss: report.holdout_l1, evaluated: report.search_size })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorEval {
    pub n: usize,
    /// L1 between the criticality confidence and the labels.
    pub confidence_l1: f64,
    /// Criticality flag against labels thresholded at 0.5.
    pub kappa: BinaryMetrics,
}

/// Confidence is read as confidence in the flag, so a non-critical call maps to 1 - confidence.
pub fn descriptor_agreement(pairs: &[(Observation, f64)]) -> Result<DescriptorEval, EvalError> {
    let scores: Vec<f64> = pairs
        .iter()
        .map(|(o, _)| if o.is_critical { o.confidence } else { 1.0 - o.confidence })
        .collect();
    let labels: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let flags: Vec<bool> = pairs.iter().map(|(o, _)| o.is_critical).collect();
    let truth: Vec<bool> = labels.iter().map(|&l| l >= THRESHOLD).collect();
    Ok(DescriptorEval {
        n: pairs.len(),
        confidence_l1: l1_loss(&scores, &labels)?,
        kappa: binary_metrics_from_flags(&flags, &truth)?,
    })
}
