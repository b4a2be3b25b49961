//! Synthetic market generators.
