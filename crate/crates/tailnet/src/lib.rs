//! Tail-dependence financial networks from daily price panels.
//!
//! The crate turns a panel of daily closing prices into correlation-based
//! networks and their summary statistics:
//!
//! - [`market_data`]: CSV ingestion, log returns, period segmentation and
//!   the missing-day eligibility filter.
//! - [`dependence`]: pairwise dependence weights. Either diagonal local
//!   Gaussian correlations averaged over a tail quantile range (negative or
//!   positive tail) or conventional Pearson coefficients.
//! - [`graph_filter`]: MST, PMFG and TMFG backbones extracted from a weight
//!   matrix.
//! - [`net_metrics`]: strength and eigenvector centrality, average shortest
//!   path length, random-walk transition matrix, Shannon/Rényi/Tsallis
//!   entropies and ranking overlaps.
//! - [`tail_fit`]: generalized Pareto fits to the upper tails of centrality
//!   distributions.
//! - [`synth_market`]: seed-deterministic synthetic return panels with known
//!   dependence structure, used to validate the estimators.
//! - [`pipeline`]: the end-to-end run over periods, network kinds and
//!   filters, emitting machine-readable outputs.

pub mod dependence;
pub mod error;
pub mod graph_filter;
pub mod market_data;
pub mod net_metrics;
pub mod numerics;
pub mod pipeline;
pub mod synth_market;
pub mod tail_fit;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
