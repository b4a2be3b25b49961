//! Shared numerical utilities: standard-normal helpers, empirical quantiles,
//! deterministic float formatting and a small quasi-Newton maximizer.

use statrs::distribution::{ContinuousCDF, Normal};

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).unwrap();
    n.cdf(x)
}

/// Standard normal quantile function.
pub fn norm_quantile(p: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).unwrap();
    n.inverse_cdf(p)
}

/// Empirical quantile with linear interpolation between order statistics
/// (the common "type 7" definition). `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Rounds to 9 significant digits. All emitted numbers pass through this so
/// identical runs produce identical bytes.
pub fn round9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let mag = x.abs().log10().floor() as i32;
    let factor = 10f64.powi(8 - mag);
    (x * factor).round() / factor
}

/// Formats with 9 significant digits in fixed notation.
pub fn fmt9(x: f64) -> String {
    if x.is_nan() {
        return "NaN".to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (8 - mag).clamp(0, 17) as usize;
    let s = format!("{:.*}", decimals, x);
    // trim trailing zeros but keep at least one digit
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        t.to_string()
    } else {
        s
    }
}

/// Options for [`maximize`].
#[derive(Debug, Clone, Copy)]
pub struct OptimOptions {
    /// Maximum quasi-Newton iterations.
    pub max_iter: usize,
    /// Converged once the parameter-change norm falls below this.
    pub param_tol: f64,
    /// Central finite-difference step for gradients.
    pub grad_step: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            param_tol: 1e-6,
            grad_step: 1e-6,
        }
    }
}

/// Result of [`maximize`].
#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64, buf: &mut Vec<f64>) -> Vec<f64> {
    let n = x.len();
    let mut g = vec![0.0; n];
    buf.clear();
    buf.extend_from_slice(x);
    for i in 0..n {
        let xi = x[i];
        buf[i] = xi + h;
        let fp = f(buf);
        buf[i] = xi - h;
        let fm = f(buf);
        buf[i] = xi;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// BFGS maximizer with central finite-difference gradients and a
/// backtracking Armijo line search. Objectives may return `-inf` or NaN
/// outside their support; the line search backs off until the value is
/// finite.
pub fn maximize(f: impl Fn(&[f64]) -> f64, x0: &[f64], opts: OptimOptions) -> OptimResult {
    let n = x0.len();
    let obj = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };

    let mut x = x0.to_vec();
    let mut fx = obj(&x);
    if !fx.is_finite() {
        return OptimResult {
            x,
            value: fx,
            converged: false,
            iterations: 0,
        };
    }

    let mut buf = Vec::with_capacity(n);
    let mut g = fd_gradient(&obj, &x, opts.grad_step, &mut buf);
    // inverse Hessian approximation, started at identity
    let mut h_inv = vec![0.0; n * n];
    for i in 0..n {
        h_inv[i * n + i] = 1.0;
    }

    let mut converged = false;
    let mut iterations = 0;
    for iter in 0..opts.max_iter {
        iterations = iter + 1;
        // ascent direction d = H_inv * g
        let mut d = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += h_inv[i * n + j] * g[j];
            }
            d[i] = acc;
        }
        let dg: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        let (d, dg) = if dg <= 0.0 {
            // reset to steepest ascent when the approximation degenerates
            for v in h_inv.iter_mut() {
                *v = 0.0;
            }
            for i in 0..n {
                h_inv[i * n + i] = 1.0;
            }
            let dg: f64 = g.iter().map(|v| v * v).sum();
            (g.clone(), dg)
        } else {
            (d, dg)
        };

        // Armijo line search with expansion: long steps keep BFGS from
        // zigzagging on ill-scaled objectives
        let mut step = 1.0;
        let mut x_new = vec![0.0; n];
        let mut f_new;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            f_new = obj(&x_new);
            if f_new.is_finite() && f_new >= fx + 1e-4 * step * dg {
                accepted = true;
                fx = f_new;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no uphill step found along d; gradient is numerically flat
            converged = true;
            break;
        }
        if step == 1.0 {
            let mut trial = vec![0.0; n];
            let mut grown = step;
            for _ in 0..8 {
                grown *= 2.0;
                for i in 0..n {
                    trial[i] = x[i] + grown * d[i];
                }
                let f_trial = obj(&trial);
                if f_trial.is_finite() && f_trial > fx {
                    fx = f_trial;
                    step = grown;
                    x_new.copy_from_slice(&trial);
                } else {
                    break;
                }
            }
        }

        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let step_norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let g_new = fd_gradient(&obj, &x_new, opts.grad_step, &mut buf);
        // y = g_k - g_{k+1} for a maximization-form BFGS update
        let y: Vec<f64> = (0..n).map(|i| g[i] - g_new[i]).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let s_norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if sy > 1e-10 * s_norm * y_norm {
            // H' = (I - s y^T / sy) H (I - y s^T / sy) + s s^T / sy
            let mut hy = vec![0.0; n];
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += h_inv[i * n + j] * y[j];
                }
                hy[i] = acc;
            }
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    let upd = (sy + yhy) * s[i] * s[j] / (sy * sy)
                        - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                    h_inv[i * n + j] += upd;
                }
            }
        }

        x = x_new;
        g = g_new;

        if step_norm < opts.param_tol {
            converged = true;
            break;
        }
    }

    OptimResult {
        x,
        value: fx,
        converged,
        iterations,
    }
}
