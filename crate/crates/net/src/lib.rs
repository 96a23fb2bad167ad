//! Relighting network: autodiff engine, attention U-Net, losses and training.

pub mod attention;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod gradsuite;
pub mod graph;
pub mod loss;
pub mod model;
pub mod optim;
pub mod real;
pub mod tensor;
pub mod train;

pub use error::{NetError, NetResult};
pub use graph::{Graph, Var};
pub use real::Real;
pub use tensor::Tensor;
pub use model::{forward, init_params, RelightNetConfig, RelightNetParams};
pub use train::{evaluate, train, EvalReport, Experiment, TrainConfig, TrainSet, TrainState};
