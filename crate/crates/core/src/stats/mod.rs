//! Grouped descriptives, rank tests and the random-intercept mixed model.

mod descriptives;
mod gamma;
mod kruskal;
mod mixed;

pub use descriptives::{
    discretize_comorbidity, discretize_elixhauser, group_descriptives, quantile_type7,
    ComorbidityBin, DescriptiveRow, ElixhauserBin,
};
pub use gamma::{chi_square_sf, ln_gamma, normal_two_sided_p, regularized_gamma_q};
pub use kruskal::{kruskal_wallis, KwResult};
pub use mixed::{fit_random_intercept, year_interaction_design, MixedModelFit, MixedModelInput};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("input lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("at least two groups are required, got {0}")]
    TooFewGroups(usize),
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("argument outside the function domain: {0}")]
    DomainError(String),
    #[error("design matrix is rank deficient (rank {rank} < {cols} columns)")]
    RankDeficientDesign { rank: usize, cols: usize },
}
