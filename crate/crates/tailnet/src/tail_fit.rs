//! Generalized Pareto tail fits.
