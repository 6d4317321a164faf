//! Dense linear algebra, the two-layer model zoo, loss and optimizers.

mod loss;
mod matrix;
mod model;
mod optim;
mod params;

pub use loss::{cross_entropy, cross_entropy_with_grad, log_sum_exp, softmax_rows};
pub use matrix::Matrix;
pub use model::{
    backward, forward, forward_pass, init_params, Architecture, ForwardPass, GraphContext, ModelConfig,
};
pub use optim::{OptimizerKind, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use params::{Param, ParamSet};
