use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("missing value in history at row {row}, column {column}")]
    MissingValues { row: usize, column: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("negative turnover {value} for stream {index}")]
    NegativeTurnover { index: usize, value: f64 },

    #[error("duplicate stream label `{0}`")]
    DuplicateLabel(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid cost specification: {0}")]
    InvalidCostSpec(String),

    #[error("invalid option: {0}")]
    InvalidOption(String),

    #[error("all weights are zero; no allocation satisfies the normalization")]
    AllZeroWeights,

    #[error("portfolio volatility is zero; Sharpe ratio undefined")]
    ZeroVolatility,

    #[error("stream {index} has zero variance")]
    ZeroVarianceStream { index: usize },

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("covariance is indefinite (smallest eigenvalue {min_eigenvalue:e})")]
    IndefiniteCovariance { min_eigenvalue: f64 },

    #[error("covariance is singular; use the regression pathway instead")]
    SingularCovariance,

    #[error("requested {requested} factors but covariance rank is {rank}")]
    RankDeficient { requested: usize, rank: usize },

    #[error("correlation matrix has non-positive leading eigenvalue {0:e}")]
    IndefiniteCorrelation(f64),

    #[error("costs exceed every alpha; no stream can be traded")]
    AllAlphasKilled,

    #[error("solver revisited a partition without converging at iteration {iteration}: {state}")]
    CycleDetected { iteration: usize, state: String },

    #[error("solver did not converge within {limit} iterations")]
    MaxIterations { limit: usize },

    #[error("outer turnover-reduction loop revisited universe after {rounds} rounds")]
    OuterLoopCycle { rounds: usize },

    #[error("optimized P&L is non-positive at every sampled investment level")]
    NoPositiveCapacity,

    #[error("capacity is unbounded when only linear cost is present")]
    UnboundedCapacity,

    #[error("regression loadings are rank deficient (condition estimate {condition:e})")]
    RankDeficientLoadings { condition: f64 },

    #[error("brute-force search supports at most 8 streams, got {0}")]
    TooManyStreams(usize),

    #[error("no non-empty sign pattern is feasible")]
    NoFeasiblePattern,
}
