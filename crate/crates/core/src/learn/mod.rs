//! From-scratch regression learners.
//!
//! All learners consume a column-major [`Matrix`] of finite values and are
//! pure functions of `(data, config, seed)`; parallel fitting never changes
//! the result.

mod encoder;
mod forest;
mod gbdt;
mod grid;
mod io;
mod matrix;
mod tree;

pub use encoder::{EncodeMode, TargetEncoder};
pub use forest::{fit_random_forest, ForestConfig, ForestModel};
pub use gbdt::{fit_gbdt, GbdtConfig, GbdtModel};
pub use grid::{grid_search, Family, GridOutcome, HyperGrid, LeaderboardRow, Metric, ModelConfig};
pub use io::{read_model, write_model, ModelFile};
pub use matrix::Matrix;
pub use tree::{fit_regression_tree, Node, RegressionTree, TreeConfig};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnError {
    #[error("empty training input")]
    EmptyInput,
    #[error("input lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("schema mismatch: model expects {expected} columns, input has {found}")]
    SchemaMismatch { expected: usize, found: usize },
    #[error("model file: {0}")]
    Format(String),
}

/// A fitted model of any family.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Tree(RegressionTree),
    Forest(ForestModel),
    Gbdt(GbdtModel),
}

impl Model {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, LearnError> {
        match self {
            Model::Tree(t) => t.predict(x),
            Model::Forest(f) => f.predict(x),
            Model::Gbdt(g) => g.predict(x),
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Model::Tree(t) => t.n_features(),
            Model::Forest(f) => f.n_features(),
            Model::Gbdt(g) => g.n_features(),
        }
    }
}
