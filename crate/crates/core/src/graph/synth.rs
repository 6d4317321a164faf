//! Contextual stochastic block model standing in for a citation network.
//!
//! Nodes get a class, features are a class prototype plus isotropic noise, and
//! edges are homophilous. One "world" seed fixes the prototypes so that
//! training, validation and environment-shifted test graphs share classes.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitationSbm {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub num_features: usize,
    /// Target number of undirected edges.
    pub num_edges: usize,
    /// Probability that an edge joins two nodes of the same class.
    pub homophily: f64,
    /// Scale of the class prototypes relative to unit feature noise.
    pub signal: f64,
}

impl CitationSbm {
    /// 2,703 nodes, 5,278 edges and 10 classes.
    pub fn cora_scale() -> Self {
        Self {
            num_nodes: 2703,
            num_classes: 10,
            num_features: 64,
            num_edges: 5278,
            homophily: 0.8,
            signal: 0.35,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_nodes < 2 || self.num_classes == 0 || self.num_features == 0 {
            return Err(Error::Invalid("generator needs >= 2 nodes, classes and features".into()));
        }
        if !(0.0..=1.0).contains(&self.homophily) {
            return Err(Error::Invalid(format!("homophily {} outside [0, 1]", self.homophily)));
        }
        let max_edges = self.num_nodes * (self.num_nodes - 1) / 2;
        if self.num_edges > max_edges / 2 {
            return Err(Error::Invalid("too many edges requested for the node count".into()));
        }
        Ok(())
    }

    fn prototypes(&self, world_seed: u64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(world_seed);
        Matrix::from_fn(self.num_classes, self.num_features, |_, _| {
            self.signal * rng.sample::<f64, _>(StandardNormal)
        })
    }

    /// Draws one graph. `environment` perturbs the prototypes of this sample:
    /// each class mean moves by `environment.drift` times a fresh Gaussian
    /// direction, and edges use `environment.homophily` when set.
    pub fn sample(&self, world_seed: u64, sample_seed: u64, environment: &Environment) -> Result<Graph<f64>> {
        self.validate()?;
        let (n, c, d) = (self.num_nodes, self.num_classes, self.num_features);
        let mut proto = self.prototypes(world_seed);
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
        if environment.drift > 0.0 {
            for v in proto.as_mut_slice() {
                *v += environment.drift * self.signal * rng.sample::<f64, _>(StandardNormal);
            }
        }

        let mut labels: Vec<usize> = (0..n).map(|i| i % c).collect();
        labels.shuffle(&mut rng);
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
        for (i, &y) in labels.iter().enumerate() {
            by_class[y].push(i);
        }

        let features = Matrix::from_fn(n, d, |i, j| proto[(labels[i], j)] + rng.sample::<f64, _>(StandardNormal));

        let homophily = environment.homophily.unwrap_or(self.homophily);
        let mut seen = std::collections::HashSet::with_capacity(self.num_edges * 2);
        let mut edges = Vec::with_capacity(self.num_edges);
        while edges.len() < self.num_edges {
            let u = rng.random_range(0..n);
            let v = if c > 1 && rng.random::<f64>() >= homophily {
                let other = (labels[u] + rng.random_range(1..c)) % c;
                by_class[other][rng.random_range(0..by_class[other].len())]
            } else {
                let same = &by_class[labels[u]];
                same[rng.random_range(0..same.len())]
            };
            if u == v {
                continue;
            }
            let key = (u.min(v), u.max(v));
            if seen.insert(key) {
                edges.push(key);
            }
        }
        Graph::from_edges(c, features, &edges, Some(labels))
    }
}

/// Per-sample distortion of the generating process.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub drift: f64,
    pub homophily: Option<f64>,
}

impl Environment {
    pub fn none() -> Self {
        Self::default()
    }
}
