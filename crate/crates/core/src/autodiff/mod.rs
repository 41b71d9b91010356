//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Forward passes record onto a [`Graph`]; trainable tensors live in a
//! [`ParamStore`] owned by each network. Layers ([`DenseLayer`],
//! [`LstmLayer`]) register their parameters in a store at construction
//! and bind them onto the graph on every forward pass.

mod checkpoint;
mod graph;
mod layers;
mod optim;
mod tensor;

pub use checkpoint::{ParamRecord, ParamSet, ENGINE_TAG, ENGINE_VERSION};
pub use graph::{Graph, Param, ParamStore, Var, BCE_EPS};
pub use layers::{DenseLayer, LstmLayer, LstmOutput};
pub use optim::{Optimizer, OptimizerKind};
pub use tensor::Tensor;
