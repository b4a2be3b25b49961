//! Local Gaussian correlation: a bivariate normal density fitted around one
//! evaluation point by kernel-weighted penalized likelihood. The correlation
//! parameter of the fitted density is the local dependence measure.

use crate::numerics::{maximize, OptimOptions};
use crate::{Error, Result};

const TWO_PI: f64 = std::f64::consts::TAU;

/// Kernel bandwidths per coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidth {
    pub b1: f64,
    pub b2: f64,
}

impl Bandwidth {
    pub fn new(b1: f64, b2: f64) -> Self {
        assert!(b1 > 0.0 && b1.is_finite() && b2 > 0.0 && b2.is_finite());
        Self { b1, b2 }
    }

    pub fn symmetric(b: f64) -> Self {
        Self::new(b, b)
    }
}

/// The five parameters of the locally fitted bivariate normal at one point,
/// plus fit diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct LocalGaussParams {
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    /// Local Gaussian correlation, clamped to |rho| <= 0.999.
    pub rho: f64,
    /// Evaluation coordinates.
    pub point: (f64, f64),
    /// True iff the parameter-change norm fell below tolerance in time.
    pub converged: bool,
    /// Sum of kernel weights relative to the kernel peak.
    pub effective_n: f64,
}

/// Optimizer and validity configuration for the local fit.
#[derive(Debug, Clone, Copy)]
pub struct FitConfig {
    /// Minimum pairwise-complete observations.
    pub min_obs: usize,
    /// Minimum kernel mass at the point, in kernel-peak units.
    pub min_effective_n: f64,
    pub optim: OptimOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            min_obs: 50,
            min_effective_n: 5.0,
            optim: OptimOptions::default(),
        }
    }
}

/// Product Gaussian kernel density at displacement zero: 1 / (2 pi b1 b2).
pub fn kernel_peak(bw: Bandwidth) -> f64 {
    1.0 / (TWO_PI * bw.b1 * bw.b2)
}

fn log_bvn(mu1: f64, mu2: f64, s1: f64, s2: f64, rho: f64, v1: f64, v2: f64) -> f64 {
    let om = 1.0 - rho * rho;
    let a = (v1 - mu1) / s1;
    let b = (v2 - mu2) / s2;
    -(TWO_PI * s1 * s2 * om.sqrt()).ln() - (a * a + b * b - 2.0 * rho * a * b) / (2.0 * om)
}

/// Closed-form convolution of the kernel with the candidate density: a
/// bivariate normal with covariance Sigma_theta + diag(b1^2, b2^2)
/// evaluated at the point.
fn penalty(point: (f64, f64), mu1: f64, mu2: f64, s1: f64, s2: f64, rho: f64, bw: Bandwidth) -> f64 {
    let v11 = s1 * s1 + bw.b1 * bw.b1;
    let v22 = s2 * s2 + bw.b2 * bw.b2;
    let v12 = rho * s1 * s2;
    let det = v11 * v22 - v12 * v12;
    let dx = point.0 - mu1;
    let dy = point.1 - mu2;
    let q = (v22 * dx * dx - 2.0 * v12 * dx * dy + v11 * dy * dy) / det;
    (-0.5 * q).exp() / (TWO_PI * det.sqrt())
}

/// Penalized local log-likelihood
/// `L(theta, x) = n^-1 sum_i K_b(X_i - x) log psi(X_i; theta) - (K_b * psi)(x)`.
///
/// Non-finite output signals a degenerate theta.
pub fn local_loglik(
    theta: &LocalGaussParams,
    point: (f64, f64),
    data: &[(f64, f64)],
    bw: Bandwidth,
) -> f64 {
    let peak = kernel_peak(bw);
    let mut acc = 0.0;
    for &(x, y) in data {
        let dx = (x - point.0) / bw.b1;
        let dy = (y - point.1) / bw.b2;
        let w = peak * (-0.5 * (dx * dx + dy * dy)).exp();
        acc += w * log_bvn(theta.mu1, theta.mu2, theta.sigma1, theta.sigma2, theta.rho, x, y);
    }
    acc / data.len() as f64
        - penalty(point, theta.mu1, theta.mu2, theta.sigma1, theta.sigma2, theta.rho, bw)
}

// Transformed coordinates (mu1, mu2, ln s1, ln s2, atanh rho) keep the
// quasi-Newton search unconstrained.
const MU_BOUND: f64 = 50.0;
const LOG_SIGMA_BOUND: f64 = 10.0;
const Z_BOUND: f64 = 9.0;

fn objective(t: &[f64], point: (f64, f64), pts: &PrunedData, bw: Bandwidth, n: usize) -> f64 {
    if t[0].abs() > MU_BOUND
        || t[1].abs() > MU_BOUND
        || t[2].abs() > LOG_SIGMA_BOUND
        || t[3].abs() > LOG_SIGMA_BOUND
        || t[4].abs() > Z_BOUND
    {
        return f64::NEG_INFINITY;
    }
    let (mu1, mu2) = (t[0], t[1]);
    let (s1, s2) = (t[2].exp(), t[3].exp());
    let rho = t[4].tanh();
    let om = 1.0 - rho * rho;
    let log_norm = -(TWO_PI * s1 * s2 * om.sqrt()).ln();
    let inv_om2 = 1.0 / (2.0 * om);
    let mut acc = 0.0;
    for k in 0..pts.x.len() {
        let a = (pts.x[k] - mu1) / s1;
        let b = (pts.y[k] - mu2) / s2;
        acc += pts.w[k] * (log_norm - (a * a + b * b - 2.0 * rho * a * b) * inv_om2);
    }
    acc / n as f64 - penalty(point, mu1, mu2, s1, s2, rho, bw)
}

/// Data with kernel weights attached, pruned of points whose weight is
/// negligible at the evaluation point.
struct PrunedData {
    x: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
}

fn prune(data: &[(f64, f64)], point: (f64, f64), bw: Bandwidth) -> (PrunedData, f64) {
    let peak = kernel_peak(bw);
    let mut pd = PrunedData {
        x: Vec::new(),
        y: Vec::new(),
        w: Vec::new(),
    };
    let mut mass = 0.0;
    for &(x, y) in data {
        let dx = (x - point.0) / bw.b1;
        let dy = (y - point.1) / bw.b2;
        let e = (-0.5 * (dx * dx + dy * dy)).exp();
        mass += e;
        if e > 1e-16 {
            pd.x.push(x);
            pd.y.push(y);
            pd.w.push(peak * e);
        }
    }
    (pd, mass)
}

/// Kernel-weighted moments at the point; the optimizer's starting value.
fn moment_init(pd: &PrunedData) -> [f64; 5] {
    let sw: f64 = pd.w.iter().sum();
    let m1: f64 = pd.w.iter().zip(&pd.x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let m2: f64 = pd.w.iter().zip(&pd.y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let mut v1 = 0.0;
    let mut v2 = 0.0;
    let mut cv = 0.0;
    for k in 0..pd.x.len() {
        let dx = pd.x[k] - m1;
        let dy = pd.y[k] - m2;
        v1 += pd.w[k] * dx * dx;
        v2 += pd.w[k] * dy * dy;
        cv += pd.w[k] * dx * dy;
    }
    let s1 = (v1 / sw).sqrt().max(1e-3);
    let s2 = (v2 / sw).sqrt().max(1e-3);
    let r = (cv / sw / (s1 * s2)).clamp(-0.99, 0.99);
    [m1, m2, s1.ln(), s2.ln(), r.atanh()]
}

/// Fits the five local parameters at `point` by quasi-Newton ascent of the
/// penalized local likelihood.
///
/// Fails on fewer than `min_obs` observations or when the kernel mass at the
/// point is below `min_effective_n`. A fit that exhausts the iteration budget
/// is returned with `converged = false`.
pub fn estimate_local_gauss(
    data: &[(f64, f64)],
    point: (f64, f64),
    bw: Bandwidth,
    config: &FitConfig,
) -> Result<LocalGaussParams> {
    estimate_with_init(data, point, bw, config, None)
}

/// Same as [`estimate_local_gauss`] with an optional warm start in natural
/// parameters, used when sweeping adjacent grid points.
pub(crate) fn estimate_with_init(
    data: &[(f64, f64)],
    point: (f64, f64),
    bw: Bandwidth,
    config: &FitConfig,
    init: Option<&LocalGaussParams>,
) -> Result<LocalGaussParams> {
    if data.len() < config.min_obs {
        return Err(Error::InsufficientOverlap {
            got: data.len(),
            need: config.min_obs,
        });
    }
    let (pd, mass) = prune(data, point, bw);
    let effective_n = mass;
    if effective_n < config.min_effective_n {
        return Err(Error::EffectiveSampleTooSmall {
            got: effective_n,
            need: config.min_effective_n,
        });
    }

    let start = match init {
        Some(p) if p.sigma1 > 0.0 && p.sigma2 > 0.0 && p.rho.abs() < 1.0 => [
            p.mu1,
            p.mu2,
            p.sigma1.ln(),
            p.sigma2.ln(),
            p.rho.clamp(-0.99, 0.99).atanh(),
        ],
        _ => moment_init(&pd),
    };

    let n = data.len();
    let res = maximize(
        |t| objective(t, point, &pd, bw, n),
        &start,
        config.optim,
    );

    let rho = res.x[4].tanh().clamp(-0.999, 0.999);
    Ok(LocalGaussParams {
        mu1: res.x[0],
        mu2: res.x[1],
        sigma1: res.x[2].exp(),
        sigma2: res.x[3].exp(),
        rho,
        point,
        converged: res.converged && res.value.is_finite(),
        effective_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn bivariate_normal(rho: f64, n: usize, seed: u64) -> Vec<(f64, f64)> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let z1: f64 = StandardNormal.sample(&mut rng);
                let z2: f64 = StandardNormal.sample(&mut rng);
                (z1, rho * z1 + (1.0 - rho * rho).sqrt() * z2)
            })
            .collect()
    }

    #[test]
    fn kernel_peak_closed_form() {
        let bw = Bandwidth::new(0.5, 2.0);
        assert_relative_eq!(kernel_peak(bw), 1.0 / (TWO_PI * 0.5 * 2.0), epsilon = 1e-15);
    }

    #[test]
    fn penalty_for_standard_normal_unit_bandwidth() {
        // theta = standard normal, b1 = b2 = 1, x = (0,0): N(0, 2I) at the
        // origin has density 1 / (4 pi).
        let theta = LocalGaussParams {
            mu1: 0.0,
            mu2: 0.0,
            sigma1: 1.0,
            sigma2: 1.0,
            rho: 0.0,
            point: (0.0, 0.0),
            converged: true,
            effective_n: 0.0,
        };
        let p = penalty(
            (0.0, 0.0),
            theta.mu1,
            theta.mu2,
            theta.sigma1,
            theta.sigma2,
            theta.rho,
            Bandwidth::symmetric(1.0),
        );
        assert_relative_eq!(p, 0.07957747154594767, epsilon = 1e-15);
    }

    #[test]
    fn loglik_finite_at_single_point_fit() {
        let data = vec![(0.3, -0.2)];
        let theta = LocalGaussParams {
            mu1: 0.3,
            mu2: -0.2,
            sigma1: 1.0,
            sigma2: 1.0,
            rho: 0.0,
            point: (0.3, -0.2),
            converged: true,
            effective_n: 1.0,
        };
        let l = local_loglik(&theta, (0.3, -0.2), &data, Bandwidth::symmetric(1.0));
        assert!(l.is_finite());
    }

    #[test]
    fn independence_gives_rho_near_zero() {
        // averaged over seeds, the estimate at the origin stays in a tight band
        let mut sum = 0.0;
        let n_seeds = 20;
        for seed in 0..n_seeds {
            let data = bivariate_normal(0.0, 5000, seed);
            let bw = Bandwidth::symmetric(1.75 * 5000f64.powf(-1.0 / 6.0));
            let fit =
                estimate_local_gauss(&data, (0.0, 0.0), bw, &FitConfig::default()).unwrap();
            assert!(fit.converged);
            sum += fit.rho;
        }
        let mean = sum / n_seeds as f64;
        assert!(mean.abs() <= 0.05, "mean rho over seeds = {mean}");
    }

    #[test]
    fn global_gaussian_recovers_global_rho_on_diagonal() {
        // for a global Gaussian, the local rho(x) equals the global rho;
        // single draws scatter, so each coordinate is averaged over seeds
        let n_seeds = 10;
        let coords = [-1.5, -0.75, 0.0, 0.75, 1.5];
        let mut sums = [0.0f64; 5];
        for seed in 0..n_seeds {
            let data = bivariate_normal(0.5, 5000, 100 + seed);
            let bw = Bandwidth::symmetric(1.75 * 5000f64.powf(-1.0 / 6.0));
            for (k, &coord) in coords.iter().enumerate() {
                let fit =
                    estimate_local_gauss(&data, (coord, coord), bw, &FitConfig::default())
                        .unwrap();
                assert!(fit.converged);
                sums[k] += fit.rho;
            }
        }
        for (k, &coord) in coords.iter().enumerate() {
            let mean = sums[k] / n_seeds as f64;
            assert!(
                (0.40..=0.60).contains(&mean),
                "mean rho = {mean} at coordinate {coord}"
            );
        }
    }

    #[test]
    fn parabola_sign_flips_across_branches() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let n = 10_000;
        let data: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let x: f64 = StandardNormal.sample(&mut rng);
                let noise: f64 = StandardNormal.sample(&mut rng);
                (x, x * x + 0.1 * noise)
            })
            .collect();
        let sx = 1.0;
        let sy = {
            let m = data.iter().map(|p| p.1).sum::<f64>() / n as f64;
            (data.iter().map(|p| (p.1 - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        let bw = Bandwidth::new(
            1.75 * sx * (n as f64).powf(-1.0 / 6.0),
            1.75 * sy * (n as f64).powf(-1.0 / 6.0),
        );
        let right = estimate_local_gauss(&data, (1.0, 1.0), bw, &FitConfig::default()).unwrap();
        let left = estimate_local_gauss(&data, (-1.0, 1.0), bw, &FitConfig::default()).unwrap();
        assert!(right.rho > 0.0, "rho(1,1) = {}", right.rho);
        assert!(left.rho < 0.0, "rho(-1,1) = {}", left.rho);
    }

    #[test]
    fn effective_sample_too_small_is_an_error() {
        let data = bivariate_normal(0.0, 200, 3);
        let bw = Bandwidth::symmetric(0.3);
        // far away from any mass
        let err = estimate_local_gauss(&data, (30.0, 30.0), bw, &FitConfig::default());
        assert!(matches!(err, Err(Error::EffectiveSampleTooSmall { .. })));
    }

    #[test]
    fn insufficient_overlap_is_an_error() {
        let data = bivariate_normal(0.0, 30, 4);
        let bw = Bandwidth::symmetric(0.5);
        let err = estimate_local_gauss(&data, (0.0, 0.0), bw, &FitConfig::default());
        assert!(matches!(err, Err(Error::InsufficientOverlap { got: 30, need: 50 })));
    }

    #[test]
    fn gradient_vanishes_at_reported_optimum() {
        // central finite differences in the natural parameters, h = 1e-6
        let data = bivariate_normal(0.5, 2000, 11);
        let bw = Bandwidth::symmetric(1.75 * 2000f64.powf(-1.0 / 6.0));
        let fit = estimate_local_gauss(&data, (0.5, 0.5), bw, &FitConfig::default()).unwrap();
        assert!(fit.converged);
        let h = 1e-6;
        let eval = |p: [f64; 5]| {
            let theta = LocalGaussParams {
                mu1: p[0],
                mu2: p[1],
                sigma1: p[2],
                sigma2: p[3],
                rho: p[4],
                point: fit.point,
                converged: true,
                effective_n: fit.effective_n,
            };
            local_loglik(&theta, (0.5, 0.5), &data, bw)
        };
        let base = [fit.mu1, fit.mu2, fit.sigma1, fit.sigma2, fit.rho];
        let mut norm2 = 0.0;
        for i in 0..5 {
            let mut up = base;
            up[i] += h;
            let mut dn = base;
            dn[i] -= h;
            let g = (eval(up) - eval(dn)) / (2.0 * h);
            norm2 += g * g;
        }
        assert!(norm2.sqrt() <= 1e-4, "gradient norm {}", norm2.sqrt());
    }
}
