//! Online estimation of a graph neural network's test error on unlabeled,
//! distribution-shifted graphs.
//!
//! A deployed model is re-trained from its initial weights on its own
//! pseudo-labels for a test graph, stopping once its embeddings reconstruct
//! the graph structure as well as the deployed model's embeddings did. The
//! distance between the deployed and re-trained weights is the score: the
//! further the re-trained model drifts, the larger the expected test error.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`.

pub mod baselines;
pub mod error;
pub mod eval;
pub mod graph;
pub mod lebed;
pub mod nn;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Graph = graph::Graph<f64>;
pub type Matrix = nn::Matrix<f64>;
pub type ParamSet = nn::ParamSet<f64>;
pub type TrainedModel = training::TrainedModel<f64>;
pub type LebedResult = lebed::LebedResult<f64>;
pub type Inference = lebed::Inference<f64>;
