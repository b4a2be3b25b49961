//! Pairwise dependence estimation: diagonal local Gaussian correlations
//! averaged over tail quantile ranges, and conventional Pearson
//! coefficients, assembled into symmetric weight matrices.

mod local_gauss;

pub use local_gauss::{
    estimate_local_gauss, kernel_peak, local_loglik, Bandwidth, FitConfig, LocalGaussParams,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::market_data::ReturnsPanel;
use crate::numerics::{norm_quantile, OptimOptions};
use crate::{Error, Result};

/// Which side of the return distribution a tail spec covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailSide {
    Negative,
    Positive,
}

/// Quantile range and step defining one tail grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSpec {
    pub side: TailSide,
    pub quantile_lo: f64,
    pub quantile_hi: f64,
    pub step: f64,
}

impl TailSpec {
    /// Negative tail, quantiles 5% to 20% in 1% steps.
    pub fn negative() -> Self {
        Self {
            side: TailSide::Negative,
            quantile_lo: 0.05,
            quantile_hi: 0.20,
            step: 0.01,
        }
    }

    /// Positive tail, quantiles 80% to 95% in 1% steps.
    pub fn positive() -> Self {
        Self {
            side: TailSide::Positive,
            quantile_lo: 0.80,
            quantile_hi: 0.95,
            step: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.quantile_lo > 0.0
            && self.quantile_lo < self.quantile_hi
            && self.quantile_hi < 1.0
            && self.step > 0.0)
        {
            return Err(Error::InvalidParameter(format!(
                "tail spec must satisfy 0 < lo < hi < 1 and step > 0, got ({}, {}, step {})",
                self.quantile_lo, self.quantile_hi, self.step
            )));
        }
        Ok(())
    }

    /// The quantile grid, both endpoints included.
    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.quantile_hi - self.quantile_lo) / self.step).round() as usize + 1;
        (0..n)
            .map(|k| self.quantile_lo + k as f64 * self.step)
            .filter(|q| *q <= self.quantile_hi + 1e-12)
            .collect()
    }
}

/// Maps present values to standard-normal scores by empirical rank:
/// rank r of m present values goes to `Phi^-1((r - 0.5) / m)`, ties get the
/// average rank, missing (NaN) entries stay missing.
pub fn rank_normalize(series: &[f64]) -> Result<Vec<f64>> {
    let present: Vec<usize> = (0..series.len()).filter(|&i| !series[i].is_nan()).collect();
    let m = present.len();
    if m < 2 {
        return Err(Error::TooFewPresent);
    }
    let mut order = present.clone();
    order.sort_by(|&a, &b| series[a].partial_cmp(&series[b]).unwrap());

    let mut out = vec![f64::NAN; series.len()];
    let mut k = 0;
    while k < m {
        // tie block [k, j)
        let mut j = k + 1;
        while j < m && series[order[j]] == series[order[k]] {
            j += 1;
        }
        // average of ranks k+1 ..= j
        let avg_rank = (k + 1 + j) as f64 / 2.0;
        let score = norm_quantile((avg_rank - 0.5) / m as f64);
        for &idx in &order[k..j] {
            out[idx] = score;
        }
        k = j;
    }
    Ok(out)
}

/// Plug-in kernel bandwidth `1.75 * sigma * n^(-1/6)`.
pub fn plugin_bandwidth(n: usize, sigma: f64) -> f64 {
    assert!(n >= 1 && sigma > 0.0);
    1.75 * sigma * (n as f64).powf(-1.0 / 6.0)
}

/// One grid point of a diagonal local Gaussian sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagonalPoint {
    pub quantile: f64,
    pub rho: f64,
    pub valid: bool,
}

/// Estimation configuration shared by the matrix builders.
#[derive(Debug, Clone, Copy)]
pub struct DependenceConfig {
    /// Minimum pairwise-complete overlap per pair.
    pub min_overlap: usize,
    /// Multiplies the plug-in bandwidth.
    pub bandwidth_multiplier: f64,
    /// Minimum kernel mass (in peak units) for a grid point to count.
    pub min_effective_n: f64,
    /// Observation floor inside the single-point fit.
    pub min_obs: usize,
    /// A pair is valid when at least this fraction of grid points is valid.
    pub min_valid_fraction: f64,
    /// The matrix build fails when more than this fraction of pairs is invalid.
    pub max_invalid_fraction: f64,
    pub optim: OptimOptions,
}

impl Default for DependenceConfig {
    fn default() -> Self {
        Self {
            min_overlap: 100,
            bandwidth_multiplier: 1.0,
            min_effective_n: 5.0,
            min_obs: 50,
            min_valid_fraction: 0.5,
            max_invalid_fraction: 0.2,
            optim: OptimOptions::default(),
        }
    }
}

impl DependenceConfig {
    fn fit_config(&self) -> FitConfig {
        FitConfig {
            min_obs: self.min_obs,
            min_effective_n: self.min_effective_n,
            optim: self.optim,
        }
    }
}

// |rho| at or above this is a degenerate fit (zero-length edge after the
// distance transform), flagged invalid instead of entering the network.
const DEGENERATE_RHO: f64 = 0.999;

fn pairwise_complete(x: &[f64], y: &[f64]) -> Vec<(f64, f64)> {
    x.iter()
        .zip(y)
        .filter(|(a, b)| !a.is_nan() && !b.is_nan())
        .map(|(a, b)| (*a, *b))
        .collect()
}

/// Diagonal local Gaussian correlation of one pair over a tail grid.
///
/// The pairwise-complete overlap is rank-normalized per series, so the grid
/// point for quantile q is `(Phi^-1(q), Phi^-1(q))` and the plug-in
/// bandwidth uses sigma = 1. Adjacent grid points warm-start each other.
pub fn diagonal_lgc(
    x: &[f64],
    y: &[f64],
    tail: &TailSpec,
    config: &DependenceConfig,
) -> Result<Vec<DiagonalPoint>> {
    tail.validate()?;
    let pairs = pairwise_complete(x, y);
    if pairs.len() < config.min_overlap {
        return Err(Error::InsufficientOverlap {
            got: pairs.len(),
            need: config.min_overlap,
        });
    }
    let n = pairs.len();
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let xn = rank_normalize(&xs)?;
    let yn = rank_normalize(&ys)?;
    let data: Vec<(f64, f64)> = xn.into_iter().zip(yn).collect();

    let b = plugin_bandwidth(n, 1.0) * config.bandwidth_multiplier;
    let bw = Bandwidth::symmetric(b);
    let fit_config = config.fit_config();

    // Sweep from the shallow end of the tail outward so the data-poor deep
    // points warm-start from a well-anchored neighbor.
    let grid = tail.grid();
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| {
        norm_quantile(grid[a])
            .abs()
            .partial_cmp(&norm_quantile(grid[b]).abs())
            .unwrap()
    });

    let mut out = vec![
        DiagonalPoint {
            quantile: 0.0,
            rho: f64::NAN,
            valid: false,
        };
        grid.len()
    ];
    let mut warm: Option<LocalGaussParams> = None;
    for idx in order {
        let q = grid[idx];
        let coord = norm_quantile(q);
        let point = (coord, coord);
        match local_gauss::estimate_with_init(&data, point, bw, &fit_config, warm.as_ref()) {
            Ok(fit) => {
                let valid = fit.converged && fit.rho.abs() < DEGENERATE_RHO;
                if valid {
                    warm = Some(fit);
                }
                out[idx] = DiagonalPoint {
                    quantile: q,
                    rho: fit.rho,
                    valid,
                };
            }
            Err(Error::EffectiveSampleTooSmall { .. }) => {
                out[idx] = DiagonalPoint {
                    quantile: q,
                    rho: f64::NAN,
                    valid: false,
                };
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Arithmetic mean of the valid grid values; invalid when fewer than half
/// the grid points are valid.
pub fn tail_mean_weight(diag: &[DiagonalPoint]) -> Result<f64> {
    let valid: Vec<f64> = diag.iter().filter(|p| p.valid).map(|p| p.rho).collect();
    if valid.len() * 2 < diag.len() {
        return Err(Error::TooFewValidPoints {
            valid: valid.len(),
            total: diag.len(),
        });
    }
    Ok(valid.iter().sum::<f64>() / valid.len() as f64)
}

/// What a weight matrix measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    LgcNegative,
    LgcPositive,
    Pearson,
}

impl WeightKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            WeightKind::LgcNegative => "lgc_negative",
            WeightKind::LgcPositive => "lgc_positive",
            WeightKind::Pearson => "pearson",
        }
    }
}

impl std::fmt::Display for WeightKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Estimation metadata carried alongside an LGC matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LgcMeta {
    pub tail: TailSpec,
    pub bandwidth: f64,
    pub grid: Vec<f64>,
}

/// Symmetric N x N dependence weights with a unit diagonal and a per-entry
/// validity flag.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    pub kind: WeightKind,
    pub tickers: Vec<String>,
    n: usize,
    weights: Vec<f64>,
    valid: Vec<bool>,
    pub meta: Option<LgcMeta>,
}

impl WeightMatrix {
    pub fn new(kind: WeightKind, tickers: Vec<String>) -> Self {
        let n = tickers.len();
        let mut m = Self {
            kind,
            tickers,
            n,
            weights: vec![f64::NAN; n * n],
            valid: vec![false; n * n],
            meta: None,
        };
        for i in 0..n {
            m.weights[i * n + i] = 1.0;
            m.valid[i * n + i] = true;
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Sets both symmetric entries of an unordered pair.
    pub fn set_pair(&mut self, i: usize, j: usize, weight: f64, valid: bool) {
        assert!(i != j);
        debug_assert!(!valid || (-1.0..=1.0).contains(&weight));
        self.weights[i * self.n + j] = weight;
        self.weights[j * self.n + i] = weight;
        self.valid[i * self.n + j] = valid;
        self.valid[j * self.n + i] = valid;
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        self.valid[i * self.n + j]
    }

    /// Valid off-diagonal upper-triangle weights.
    pub fn valid_upper_triangle(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.is_valid(i, j) {
                    out.push(self.weight(i, j));
                }
            }
        }
        out
    }

    /// (valid, invalid) counts over unordered off-diagonal pairs.
    pub fn pair_validity_counts(&self) -> (usize, usize) {
        let mut valid = 0;
        let mut invalid = 0;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.is_valid(i, j) {
                    valid += 1;
                } else {
                    invalid += 1;
                }
            }
        }
        (valid, invalid)
    }

    /// CSV with a ticker header row and column; `NaN` marks invalid entries.
    pub fn to_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        write!(w, "ticker")?;
        for t in &self.tickers {
            write!(w, ",{t}")?;
        }
        writeln!(w)?;
        for i in 0..self.n {
            write!(w, "{}", self.tickers[i])?;
            for j in 0..self.n {
                if self.is_valid(i, j) {
                    write!(w, ",{}", crate::numerics::fmt9(self.weight(i, j)))?;
                } else {
                    write!(w, ",NaN")?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// JSON document with kind, estimation metadata and the validity mask.
    pub fn to_json(&self) -> serde_json::Value {
        let weights: Vec<Vec<serde_json::Value>> = (0..self.n)
            .map(|i| {
                (0..self.n)
                    .map(|j| {
                        if self.is_valid(i, j) {
                            serde_json::json!(crate::numerics::round9(self.weight(i, j)))
                        } else {
                            serde_json::Value::Null
                        }
                    })
                    .collect()
            })
            .collect();
        let valid: Vec<Vec<bool>> = (0..self.n)
            .map(|i| (0..self.n).map(|j| self.is_valid(i, j)).collect())
            .collect();
        serde_json::json!({
            "kind": self.kind.as_str(),
            "tickers": self.tickers,
            "tail": self.meta.as_ref().map(|m| serde_json::to_value(&m.tail).unwrap()),
            "bandwidth": self.meta.as_ref().map(|m| crate::numerics::round9(m.bandwidth)),
            "grid": self.meta.as_ref().map(|m| m.grid.clone()),
            "weights": weights,
            "valid": valid,
        })
    }
}

/// Sample Pearson correlations on pairwise-complete observations. Entries
/// with too little overlap or zero variance are flagged invalid.
pub fn pearson_matrix(panel: &ReturnsPanel, config: &DependenceConfig) -> Result<WeightMatrix> {
    let n = panel.n_tickers();
    let mut m = WeightMatrix::new(WeightKind::Pearson, panel.tickers.clone());
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let results: Vec<(f64, bool)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let data = pairwise_complete(panel.row(i), panel.row(j));
            if data.len() < config.min_overlap {
                return (f64::NAN, false);
            }
            pearson_of(&data)
        })
        .collect();
    for (&(i, j), &(w, valid)) in pairs.iter().zip(&results) {
        m.set_pair(i, j, w, valid);
    }
    Ok(m)
}

fn pearson_of(data: &[(f64, f64)]) -> (f64, bool) {
    let n = data.len() as f64;
    let mx = data.iter().map(|p| p.0).sum::<f64>() / n;
    let my = data.iter().map(|p| p.1).sum::<f64>() / n;
    let mut vx = 0.0;
    let mut vy = 0.0;
    let mut cv = 0.0;
    for &(x, y) in data {
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
        cv += (x - mx) * (y - my);
    }
    if vx <= 0.0 || vy <= 0.0 {
        return (f64::NAN, false);
    }
    let r = (cv / (vx * vy).sqrt()).clamp(-1.0, 1.0);
    (r, true)
}

/// Tail-averaged diagonal LGC weights for every unordered pair, computed in
/// parallel. Per-pair failures become invalid entries; the build errors only
/// when more than `max_invalid_fraction` of the pairs is invalid.
pub fn lgc_weight_matrix(
    panel: &ReturnsPanel,
    tail: &TailSpec,
    config: &DependenceConfig,
) -> Result<WeightMatrix> {
    tail.validate()?;
    let kind = match tail.side {
        TailSide::Negative => WeightKind::LgcNegative,
        TailSide::Positive => WeightKind::LgcPositive,
    };
    let n = panel.n_tickers();
    let mut m = WeightMatrix::new(kind, panel.tickers.clone());
    m.meta = Some(LgcMeta {
        tail: *tail,
        bandwidth: plugin_bandwidth(panel.n_dates().max(1), 1.0) * config.bandwidth_multiplier,
        grid: tail.grid(),
    });

    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let results: Vec<(f64, bool)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            match diagonal_lgc(panel.row(i), panel.row(j), tail, config) {
                Ok(diag) => match tail_mean_weight(&diag) {
                    Ok(w) if w.abs() < 1.0 => (w, true),
                    _ => (f64::NAN, false),
                },
                Err(_) => (f64::NAN, false),
            }
        })
        .collect();
    for (&(i, j), &(w, valid)) in pairs.iter().zip(&results) {
        m.set_pair(i, j, w, valid);
    }

    let (_, invalid) = m.pair_validity_counts();
    let total = pairs.len().max(1);
    let frac = invalid as f64 / total as f64;
    if frac > config.max_invalid_fraction {
        return Err(Error::TooManyInvalidPairs {
            invalid,
            total,
            percent: 100.0 * frac,
            limit: 100.0 * config.max_invalid_fraction,
        });
    }
    Ok(m)
}
