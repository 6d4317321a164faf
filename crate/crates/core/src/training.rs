//! Well-training on a labeled graph with validation-based model selection.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nn::{forward_pass, init_params, GraphContext, ModelConfig, OptimizerKind, OptimizerState, ParamSet};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { optimizer: OptimizerKind::Adam, lr: 1e-3, weight_decay: 5e-4, max_epochs: 300, patience: 50, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Invalid(format!("weight decay must be >= 0, got {}", self.weight_decay)));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Invalid(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

/// A well-trained model: its initialization, its selected weights and how it got there.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel<T> {
    pub name: String,
    pub config: ModelConfig,
    pub train_config: TrainConfig,
    pub theta0: ParamSet<T>,
    pub theta_star: ParamSet<T>,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Fraction of nodes whose argmax prediction equals the label.
pub fn evaluate_accuracy<T: Scalar>(params: &ParamSet<T>, config: &ModelConfig, g: &Graph<T>) -> Result<f64> {
    let labels = g.require_labels()?;
    let ctx = GraphContext::new(config, g)?;
    let fp = forward_pass(config, params, &ctx)?;
    Ok(accuracy_of(&fp.logits.argmax_rows(), labels))
}

pub(crate) fn accuracy_of(pred: &[usize], labels: &[usize]) -> f64 {
    let correct = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
    correct as f64 / labels.len() as f64
}

/// Full-batch training. Keeps the parameters of the epoch with the highest
/// validation accuracy (earliest on ties) and stops once `patience` epochs
/// pass without improvement.
pub fn train_model<T: Scalar>(
    config: &ModelConfig,
    tc: &TrainConfig,
    train_g: &Graph<T>,
    val_g: &Graph<T>,
) -> Result<TrainedModel<T>> {
    tc.validate()?;
    let train_labels = train_g.require_labels()?;
    let val_labels = val_g.require_labels()?;
    let train_ctx = GraphContext::new(config, train_g)?;
    let val_ctx = GraphContext::new(config, val_g)?;

    let theta0 = init_params::<T>(config, tc.seed);
    let mut theta = theta0.clone();
    let mut opt = OptimizerState::new(tc.optimizer, tc.lr, tc.weight_decay);
    let mut best = theta0.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut history = Vec::new();

    for epoch in 1..=tc.max_epochs {
        let (loss, grads) = forward_pass(config, &theta, &train_ctx)?.backward(config, &theta, &train_ctx, train_labels)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite { stage: "epoch", index: epoch });
        }
        opt.step(&mut theta, &grads)?;
        let val_pred = forward_pass(config, &theta, &val_ctx)?.logits.argmax_rows();
        let val_accuracy = accuracy_of(&val_pred, val_labels);
        history.push(EpochRecord { epoch, train_loss: loss.as_f64(), val_accuracy });
        if val_accuracy > best_acc {
            best_acc = val_accuracy;
            best = theta.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= tc.patience.max(1) {
                break;
            }
        }
    }

    Ok(TrainedModel {
        name: config.architecture.to_string(),
        config: config.clone(),
        train_config: tc.clone(),
        theta0,
        theta_star: best,
        best_epoch,
        history,
    })
}

#[derive(Serialize, Deserialize)]
struct ModelDirConfig {
    name: String,
    model: ModelConfig,
    train: TrainConfig,
    best_epoch: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dataset: Option<String>,
}

impl<T: Scalar> TrainedModel<T> {
    pub fn best_val_accuracy(&self) -> Option<f64> {
        self.history.iter().find(|r| r.epoch == self.best_epoch).map(|r| r.val_accuracy)
    }

    /// Writes `config.json`, `theta0.json`, `theta_star.json` and `history.csv`.
    pub fn save(&self, dir: impl AsRef<Path>, dataset: Option<&Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let cfg = ModelDirConfig {
            name: self.name.clone(),
            model: self.config.clone(),
            train: self.train_config.clone(),
            best_epoch: self.best_epoch,
            dataset: dataset.map(|p| p.display().to_string()),
        };
        let write = |file: &str, text: String| {
            let p = dir.join(file);
            fs::write(&p, text).map_err(|e| Error::io(p, e))
        };
        write("config.json", serde_json::to_string_pretty(&cfg).expect("config serializes"))?;
        write("theta0.json", self.theta0.to_json(&self.config))?;
        write("theta_star.json", self.theta_star.to_json(&self.config))?;
        let mut hist = String::from("epoch,train_loss,val_accuracy\n");
        for r in &self.history {
            hist.push_str(&format!("{},{:?},{:?}\n", r.epoch, r.train_loss, r.val_accuracy));
        }
        write("history.csv", hist)
    }

    /// Inverse of [`TrainedModel::save`]; also returns the recorded dataset path.
    pub fn load(dir: impl AsRef<Path>) -> Result<(Self, Option<String>)> {
        let dir = dir.as_ref();
        let read = |file: &str| {
            let p = dir.join(file);
            fs::read_to_string(&p).map_err(|e| Error::io(p, e))
        };
        let cfg: ModelDirConfig =
            serde_json::from_str(&read("config.json")?).map_err(|e| Error::parse(dir.join("config.json"), e))?;
        let (c0, theta0) = ParamSet::<T>::from_json(&read("theta0.json")?)?;
        let (c1, theta_star) = ParamSet::<T>::from_json(&read("theta_star.json")?)?;
        if c0 != cfg.model || c1 != cfg.model {
            return Err(Error::Invariant(format!("parameter files in {} disagree with config.json", dir.display())));
        }
        let mut history = Vec::new();
        let hist_path = dir.join("history.csv");
        let mut rdr = csv::Reader::from_path(&hist_path).map_err(|e| Error::parse(&hist_path, e))?;
        for rec in rdr.deserialize() {
            history.push(rec.map_err(|e| Error::parse(&hist_path, e))?);
        }
        Ok((
            Self {
                name: cfg.name,
                config: cfg.model,
                train_config: cfg.train,
                theta0,
                theta_star,
                best_epoch: cfg.best_epoch,
                history,
            },
            cfg.dataset,
        ))
    }
}
