//! Named, ordered parameter tensors and their bit-exact JSON form.

use serde::{Deserialize, Serialize};

use super::{Matrix, ModelConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Matrix<T>,
}

/// Trainable tensors of one model in registration order.
///
/// The order is fixed per architecture, so two sets built from the same
/// [`ModelConfig`] flatten to index-aligned vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new(params: Vec<Param<T>>) -> Result<Self> {
        for (i, p) in params.iter().enumerate() {
            if params[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::Invariant(format!("duplicate parameter name {}", p.name)));
            }
        }
        Ok(Self { params })
    }

    /// All-zero tensors laid out for `config`.
    pub fn zeros(config: &ModelConfig) -> Self {
        Self {
            params: config
                .layout()
                .into_iter()
                .map(|(name, r, c)| Param { name, value: Matrix::zeros(r, c) })
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            params: self
                .params
                .iter()
                .map(|p| Param { name: p.name.clone(), value: Matrix::zeros(p.value.rows(), p.value.cols()) })
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    /// Number of tensors.
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    #[inline]
    pub fn tensor(&self, idx: usize) -> &Matrix<T> {
        &self.params[idx].value
    }

    #[inline]
    pub fn tensor_mut(&mut self, idx: usize) -> &mut Matrix<T> {
        &mut self.params[idx].value
    }

    pub fn get(&self, name: &str) -> Option<&Matrix<T>> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.name == b.name && a.value.shape() == b.value.shape())
    }

    pub fn matches_config(&self, config: &ModelConfig) -> bool {
        let layout = config.layout();
        layout.len() == self.params.len()
            && layout
                .iter()
                .zip(&self.params)
                .all(|((n, r, c), p)| *n == p.name && (*r, *c) == p.value.shape())
    }

    /// Concatenation in registration order, row-major within each tensor.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for p in &self.params {
            out.extend_from_slice(p.value.as_slice());
        }
        out
    }

    pub fn unflatten(values: &[T], config: &ModelConfig) -> Result<Self> {
        let layout = config.layout();
        let total: usize = layout.iter().map(|(_, r, c)| r * c).sum();
        if values.len() != total {
            return Err(Error::Dimension(format!(
                "flat vector has {} entries, config needs {total}",
                values.len()
            )));
        }
        let mut off = 0;
        let params = layout
            .into_iter()
            .map(|(name, r, c)| {
                let value = Matrix::from_vec(r, c, values[off..off + r * c].to_vec())
                    .expect("slice length matches");
                off += r * c;
                Param { name, value }
            })
            .collect();
        Ok(Self { params })
    }

    /// Euclidean distance between the flattened vectors.
    pub fn distance(&self, other: &Self) -> Result<T> {
        if !self.same_layout(other) {
            return Err(Error::Dimension("parameter sets have different layouts".into()));
        }
        let mut acc = T::zero();
        for (a, b) in self.params.iter().zip(&other.params) {
            for (&x, &y) in a.value.as_slice().iter().zip(b.value.as_slice()) {
                let d = x - y;
                acc += d * d;
            }
        }
        Ok(acc.sqrt())
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            params: self
                .params
                .iter()
                .map(|p| Param { name: p.name.clone(), value: p.value.cast() })
                .collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TensorJson {
    name: String,
    rows: usize,
    cols: usize,
    /// IEEE-754 binary64 bit patterns as 16 hex digits.
    data: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ParamFileJson {
    config: ModelConfig,
    tensors: Vec<TensorJson>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn to_json(&self, config: &ModelConfig) -> String {
        let file = ParamFileJson {
            config: config.clone(),
            tensors: self
                .params
                .iter()
                .map(|p| TensorJson {
                    name: p.name.clone(),
                    rows: p.value.rows(),
                    cols: p.value.cols(),
                    data: p.value.as_slice().iter().map(|v| format!("{:016x}", v.as_f64().to_bits())).collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("params serialize")
    }

    pub fn from_json(text: &str) -> Result<(ModelConfig, Self)> {
        let file: ParamFileJson = serde_json::from_str(text).map_err(|e| Error::parse("<params>", e))?;
        let mut params = Vec::with_capacity(file.tensors.len());
        for t in file.tensors {
            let data = t
                .data
                .iter()
                .map(|h| {
                    u64::from_str_radix(h, 16)
                        .map(|bits| T::lit(f64::from_bits(bits)))
                        .map_err(|e| Error::parse("<params>", format!("tensor {}: {e}", t.name)))
                })
                .collect::<Result<Vec<T>>>()?;
            params.push(Param { name: t.name, value: Matrix::from_vec(t.rows, t.cols, data)? });
        }
        let set = Self::new(params)?;
        if !set.matches_config(&file.config) {
            return Err(Error::Invariant("stored tensors do not match the stored config".into()));
        }
        Ok((file.config, set))
    }
}
