//! Network metrics.
