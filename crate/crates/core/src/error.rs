use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Row `row` of the routing matrix does not sum to one.
    #[error("routing row {row} sums to {sum}, expected 1")]
    NonStochasticRow { row: usize, sum: f64 },

    #[error("routing matrix is reducible: node {node} is not mutually reachable with the pool")]
    Reducible { node: usize },

    #[error("service rate of node {node} at population {n} is not strictly positive")]
    NonPositiveRate { node: usize, n: usize },

    #[error("routing entry r(0,0) must be zero, found {value}")]
    PoolSelfLoop { value: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("traffic equations are numerically singular")]
    SingularSystem,

    #[error("state space has {states} states, above the cap of {cap}")]
    StateSpaceTooLarge { states: usize, cap: usize },

    #[error("arrival rate {lambda_bo} is not below the stability limit {lambda_max}")]
    Unstable { lambda_bo: f64, lambda_max: f64 },

    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("node {0} does not have a constant service rate")]
    NotConstantRate(usize),

    #[error("closed form is only available for N in {{1, 2}}, got N = {0}")]
    UnsupportedN(usize),

    #[error("unknown node {0}")]
    UnknownNode(usize),
}
