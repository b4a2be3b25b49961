//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the tailnet library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("non-positive price at line {line}: {ticker} {date} close={close}")]
    NonPositivePrice {
        line: usize,
        ticker: String,
        date: String,
        close: f64,
    },

    #[error("duplicate (date, ticker) pair at line {line}: ({date}, {ticker})")]
    DuplicateRow {
        line: usize,
        ticker: String,
        date: String,
    },

    #[error("empty period: no trading days in [{start}, {end}] for period '{label}'")]
    EmptyPeriod {
        label: String,
        start: String,
        end: String,
    },

    #[error("no eligible stocks: every ticker exceeds the missing-day cutoff")]
    NoEligibleStocks,

    #[error("fewer than 2 present values in series")]
    TooFewPresent,

    #[error("insufficient overlap: {got} pairwise-complete observations, need {need}")]
    InsufficientOverlap { got: usize, need: usize },

    #[error("effective sample too small: {got:.2} kernel mass at point, need {need}")]
    EffectiveSampleTooSmall { got: f64, need: f64 },

    #[error("too few valid grid points: {valid} of {total}")]
    TooFewValidPoints { valid: usize, total: usize },

    #[error("too many invalid pairs: {invalid} of {total} ({percent:.1}%) exceed the {limit:.0}% limit")]
    TooManyInvalidPairs {
        invalid: usize,
        total: usize,
        percent: f64,
        limit: f64,
    },

    #[error("disconnected graph: valid entries do not connect all retained tickers")]
    Disconnected,

    #[error("graph too small for {filter}: {nodes} nodes, need at least {min}")]
    TooFewNodes {
        filter: &'static str,
        nodes: usize,
        min: usize,
    },

    #[error("tmfg requires valid weights: no usable (vertex, face) insertion remains")]
    IncompleteMatrix,

    #[error("edge weight {weight} exceeds 1; distance sqrt(2(1-w)) undefined")]
    WeightAboveOne { weight: f64 },

    #[error("non-positive edge weight {weight} between {a} and {b}; transition matrix undefined")]
    NonPositiveWeight { weight: f64, a: String, b: String },

    #[error("zero-strength node {0}")]
    ZeroStrength(String),

    #[error("beta must lie in (0, 1), got {0}")]
    BetaOutOfRange(f64),

    #[error("stationary distribution residual {residual:.3e} exceeds {limit:.1e}")]
    StationaryResidual { residual: f64, limit: f64 },

    #[error("power iteration did not converge within {0} iterations")]
    PowerIterationDiverged(usize),

    #[error("k = {k} exceeds the {n} ranked tickers")]
    KTooLarge { k: usize, n: usize },

    #[error("too few exceedances: {got} above threshold, need {need}")]
    TooFewExceedances { got: usize, need: usize },

    #[error("gpd fit did not converge")]
    GpdNonConvergence,

    #[error("too few valid weight entries: {got}, need {need}")]
    TooFewValidEntries { got: usize, need: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("pipeline failed: {failed} of {total} cells errored (limit {limit:.0}%)")]
    TooManyFailedCells {
        failed: usize,
        total: usize,
        limit: f64,
    },
}
