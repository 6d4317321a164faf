//! Scores every (model, test graph) pair and collects the results into reports.

use rayon::prelude::*;

use super::report::{Report, ReportRow, Scores};
use super::suite::SuiteEntry;
use crate::baselines::{atc_fit, atc_score, conf_score, entropy_score, threshold_score, AtcModel, AtcVariant, THRESHOLDS};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::lebed::{infer, retrain, EpsilonSpec, RetrainConfig, DEFAULT_EPSILON, DEFAULT_Q_MAX};
use crate::nn::{forward, OptimizerKind};
use crate::training::{accuracy_of, TrainedModel};

/// Fraction of misclassified nodes. Uses the labels, so only the harness calls it.
pub fn ground_truth_error(tm: &TrainedModel<f64>, g: &Graph<f64>) -> Result<f64> {
    let labels = g.require_labels()?;
    let (_, logits) = forward(&tm.config, &tm.theta_star, g)?;
    Ok(1.0 - accuracy_of(&logits.argmax_rows(), labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreSelection {
    pub lebed: bool,
    pub baselines: bool,
}

impl Default for ScoreSelection {
    fn default() -> Self {
        Self { lebed: true, baselines: true }
    }
}

/// How pseudo-label re-training is run for each model. Unset fields fall back
/// to the model's own training configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrainOptions {
    pub optimizer: Option<OptimizerKind>,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub q_max: usize,
}

impl Default for RetrainOptions {
    fn default() -> Self {
        Self { optimizer: None, lr: None, weight_decay: None, q_max: DEFAULT_Q_MAX }
    }
}

impl RetrainOptions {
    pub fn for_model(&self, tm: &TrainedModel<f64>) -> RetrainConfig {
        RetrainConfig {
            optimizer: self.optimizer.unwrap_or(tm.train_config.optimizer),
            lr: self.lr.unwrap_or(tm.train_config.lr),
            weight_decay: self.weight_decay.unwrap_or(tm.train_config.weight_decay),
            q_max: self.q_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub eps: EpsilonSpec,
    pub retrain: RetrainOptions,
    pub scores: ScoreSelection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            eps: EpsilonSpec::constant(DEFAULT_EPSILON),
            retrain: RetrainOptions::default(),
            scores: ScoreSelection::default(),
        }
    }
}

struct Calibration {
    mc: AtcModel,
    ne: AtcModel,
}

fn calibrate(tm: &TrainedModel<f64>, val: &Graph<f64>) -> Result<Calibration> {
    let labels = val.require_labels()?;
    let (_, logits) = forward(&tm.config, &tm.theta_star, val)?;
    Ok(Calibration { mc: atc_fit(&logits, labels, AtcVariant::Mc)?, ne: atc_fit(&logits, labels, AtcVariant::Ne)? })
}

fn score_entry(
    tm: &TrainedModel<f64>,
    cal: Option<&Calibration>,
    entry: &SuiteEntry,
    cfg: &ExperimentConfig,
    rc: &RetrainConfig,
) -> Result<ReportRow> {
    let labels = entry.graph.require_labels()?;
    // scorers only ever see this copy
    let blind = entry.graph.without_labels();
    let inference = infer(tm, &blind)?;
    let gt_error = 1.0 - accuracy_of(&inference.pseudo_labels, labels);

    let mut scores = Scores::default();
    if let Some(cal) = cal {
        let l = &inference.logits;
        scores.confscore = Some(conf_score(l));
        scores.entropy = Some(entropy_score(l));
        scores.atc_mc = Some(atc_score(&cal.mc, l));
        scores.atc_ne = Some(atc_score(&cal.ne, l));
        for (slot, tau) in scores.thres.iter_mut().zip(THRESHOLDS) {
            *slot = Some(threshold_score(l, tau));
        }
    }
    let mut error = None;
    if cfg.scores.lebed {
        match retrain(tm, &blind, &inference, &cfg.eps, rc) {
            Ok(res) => {
                scores.lebed = Some(res.score);
                scores.lebed_stop_iter = Some(res.stop_iteration);
            }
            Err(e) => error = Some(e.to_string()),
        }
    }
    Ok(ReportRow {
        graph_id: entry.id.clone(),
        shift_kind: entry.shift_kind.clone(),
        magnitude: entry.magnitude,
        gt_error,
        scores,
        error,
    })
}

fn failed_row(entry: &SuiteEntry, e: &Error) -> ReportRow {
    ReportRow {
        graph_id: entry.id.clone(),
        shift_kind: entry.shift_kind.clone(),
        magnitude: entry.magnitude,
        gt_error: f64::NAN,
        scores: Scores::default(),
        error: Some(e.to_string()),
    }
}

/// One report per model, sorted by model name, rows sorted by graph id.
///
/// `val` is the labeled validation graph used to calibrate ATC; it is required
/// when baselines are selected. Rows are scored in parallel. A row whose
/// ground truth cannot be computed keeps a NaN error and is excluded from
/// summaries.
pub fn run_experiment(
    models: &[TrainedModel<f64>],
    val: Option<&Graph<f64>>,
    suite: &[SuiteEntry],
    cfg: &ExperimentConfig,
) -> Result<Vec<Report>> {
    cfg.eps.validate()?;
    if cfg.retrain.q_max == 0 {
        return Err(Error::Invalid("q_max must be at least 1".into()));
    }
    let mut names: Vec<&str> = models.iter().map(|m| m.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Invalid("model names must be unique".into()));
    }
    let mut ids: Vec<&str> = suite.iter().map(|e| e.id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Invalid("suite graph ids must be unique".into()));
    }

    let mut order: Vec<&SuiteEntry> = suite.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    let mut sorted_models: Vec<&TrainedModel<f64>> = models.iter().collect();
    sorted_models.sort_by(|a, b| a.name.cmp(&b.name));

    let mut reports = Vec::with_capacity(models.len());
    for tm in sorted_models {
        let cal = if cfg.scores.baselines {
            let val = val.ok_or_else(|| Error::Invalid("baselines need a labeled validation graph".into()))?;
            Some(calibrate(tm, val)?)
        } else {
            None
        };
        let rc = cfg.retrain.for_model(tm);
        let rows: Vec<ReportRow> = order
            .par_iter()
            .map(|e| score_entry(tm, cal.as_ref(), e, cfg, &rc).unwrap_or_else(|err| failed_row(e, &err)))
            .collect();
        reports.push(Report { model: tm.name.clone(), rows });
    }
    Ok(reports)
}
