//! Event-driven multi-modal forecasting pipeline.

pub mod corpus;
pub mod counterfactual;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod market;
pub mod model;
pub mod synthetic;
pub mod training;

pub use error::{CoreError, Result};
