use thiserror::Error;

use crate::engine::FitResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("weighted design is rank deficient: numerical rank {rank} < {p} columns")]
    RankDeficient { rank: usize, p: usize },

    #[error("regularized system is singular at k = {k}; use a positive ridge parameter")]
    Singular { k: f64 },

    #[error("total responsibility of a component is zero")]
    ZeroResponsibility,

    #[error("coefficient vector is identically zero; the HKP rule is undefined")]
    ZeroCoefficients,

    #[error("LT penalty requires k > 0 for every component (component {component} has k = {k})")]
    NonPositiveK { component: usize, k: f64 },

    #[error("zero denominator while computing the Liu-type d parameter")]
    ZeroDenominator,

    #[error("invalid mixture parameters: {0}")]
    InvalidParams(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite parameters produced at iteration {iteration}")]
    NonFiniteParameters { iteration: usize },

    #[error("every start ended degenerate: {reasons:?}")]
    AllStartsDegenerate {
        reasons: Vec<String>,
        /// Best degenerate result by final objective, if any start produced one.
        best: Option<Box<FitResult>>,
    },

    #[error("component count mismatch: estimated {estimated}, reference {reference}")]
    ComponentMismatch { estimated: usize, reference: usize },

    #[error("experiment cell {cell} failed in {failures} of {total} replicates (limit 10%)")]
    TooManyFailures {
        cell: String,
        failures: usize,
        total: usize,
    },

    #[error("experiment spec is invalid:\n  - {}", .0.join("\n  - "))]
    Spec(Vec<String>),
}
