//! Dense tensors, a reverse-mode tape, and the transformer building blocks
//! used by the forecasting model.

pub mod archive;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod params;
pub mod tensor;

pub use error::{NumericsError, Result};
pub use graph::{Gradients, Graph, Var};
pub use params::ParameterSet;
pub use tensor::Tensor;
