//! Model-agnostic explanations for tabular predictors.
//!
//! Wrap any scoring function in a [`Predictor`], bind it to a [`Dataset`]
//! through an [`Explainer`], and call the methods in [`local`], [`global`]
//! and [`fairness`]. Every method returns an [`Explanation`] with a
//! column-oriented result table and a chart payload; [`dispatch::run`]
//! selects a method by name.

pub mod cart;
pub mod data;
pub mod dispatch;
pub mod error;
pub mod explainer;
pub mod explanation;
pub mod fairness;
pub mod global;
pub mod grid;
pub mod local;
pub mod models;
pub mod predictor;
pub mod rng;
pub mod stats;

pub use data::{load_dataset, load_dataset_str, ColumnKind, ColumnSchema, Dataset, Table, Value};
pub use dispatch::{run, MethodKind, MethodParams};
pub use error::{ExplainError, Result};
pub use explainer::{model_performance, Explainer, Instance, TaskType};
pub use explanation::{validate_payload, Explanation};
pub use models::ModelSpec;
pub use predictor::{row_fn, FnPredictor, Predictor};
