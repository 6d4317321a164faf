use serde::{Deserialize, Serialize};

use super::{Matrix, ParamSet};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Invalid(format!("unknown optimizer {other:?}"))),
        }
    }
}

/// Full-batch optimizer. Weight decay enters as `g + wd·θ` for every tensor.
#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    kind: OptimizerKind,
    lr: T,
    weight_decay: T,
    first: Vec<Matrix<T>>,
    second: Vec<Matrix<T>>,
    steps: u64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64) -> Self {
        Self {
            kind,
            lr: T::lit(lr),
            weight_decay: T::lit(weight_decay),
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &ParamSet<T>) -> Result<()> {
        if !params.same_layout(grads) {
            return Err(Error::Dimension("gradient layout differs from parameters".into()));
        }
        self.steps += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads.iter()) {
                    for (w, &d) in p.value.as_mut_slice().iter_mut().zip(g.value.as_slice()) {
                        *w -= self.lr * (d + self.weight_decay * *w);
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.first.is_empty() {
                    self.first = grads.iter().map(|g| Matrix::zeros(g.value.rows(), g.value.cols())).collect();
                    self.second = self.first.clone();
                }
                let (b1, b2) = (T::lit(ADAM_BETA1), T::lit(ADAM_BETA2));
                let t = i32::try_from(self.steps).unwrap_or(i32::MAX);
                let c1 = T::one() - b1.powi(t);
                let c2 = T::one() - b2.powi(t);
                let eps = T::lit(ADAM_EPS);
                for (k, (p, g)) in params.iter_mut().zip(grads.iter()).enumerate() {
                    let m = self.first[k].as_mut_slice();
                    let v = self.second[k].as_mut_slice();
                    let w = p.value.as_mut_slice();
                    for (i, &d) in g.value.as_slice().iter().enumerate() {
                        let d = d + self.weight_decay * w[i];
                        m[i] = b1 * m[i] + (T::one() - b1) * d;
                        v[i] = b2 * v[i] + (T::one() - b2) * d * d;
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        w[i] -= self.lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
