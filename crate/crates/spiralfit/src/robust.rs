//! Robust fitting with a Student-t error model.
//!
//! The Gaussian likelihood of the distances is replaced by a Student-t,
//! treated as a Gaussian scale mixture with per-point latent scale `zᵢ`.
//! An EM scheme interleaves with the eigen updates: the E-step scores each
//! point with `zᵢ = (ν+1)/(ν + dᵢ²/Σ)`, the M-steps update the variance
//! `Σ = (1/n) Σ zᵢ dᵢ²` and the degrees of freedom `ν`, and the eigen update
//! re-fits the motion with the `zᵢ` as weights. Small `zᵢ` marks outliers;
//! large `ν` recovers the Gaussian fit.

use crate::fit::{
    distances, mean_square, motion_angle, solve_step, FitConfig, FitError, FitReport, MIN_POINTS,
};
use crate::geometry::{OrientedPoint, EPS_GAMMA};

/// Variance floor: exact-fit data would otherwise divide by zero in the
/// E-step.
const SIGMA_FLOOR: f64 = 1e-30;

/// Mean squared distance below which the fit is exact at working precision
/// and further EM rounds are pointless (see the same guard in `fit`).
const SIGMA_EXACT: f64 = 1e-24;

/// Residual tolerance of the ν-equation root.
const NU_RESIDUAL_TOL: f64 = 1e-9;

/// Configuration of the robust fitter.
#[derive(Debug, Clone, Copy)]
pub struct RobustConfig {
    /// Shared fitter settings (`w_p`, outer iteration count, convergence).
    pub base: FitConfig,
    /// Initial degrees of freedom.
    pub nu_init: f64,
    /// Bounds `(low, high)` within which ν is estimated.
    pub nu_bounds: (f64, f64),
}

impl Default for RobustConfig {
    fn default() -> Self {
        Self {
            base: FitConfig::default(),
            nu_init: 10.0,
            nu_bounds: (0.5, 1e6),
        }
    }
}

/// E-step: per-point confidence `zᵢ = (ν+1)/(ν + dᵢ²/Σ)`.
///
/// Each output lies in `(0, (ν+1)/ν]`; for very large ν all zᵢ approach 1.
pub fn e_step(d: &[f64], sigma: f64, nu: f64) -> Vec<f64> {
    debug_assert!(sigma > 0.0 && nu > 0.0);
    d.iter()
        .map(|di| (nu + 1.0) / (nu + di * di / sigma))
        .collect()
}

/// M-Σ step: weighted mean of squared distances, floored at 1e-30.
pub fn m_sigma_step(d: &[f64], z: &[f64]) -> Result<f64, FitError> {
    assert_eq!(d.len(), z.len());
    if d.is_empty() {
        return Err(FitError::EmptyInput {
            needed: 1,
            got: 0,
        });
    }
    let sum: f64 = d.iter().zip(z.iter()).map(|(di, zi)| zi * di * di).sum();
    Ok((sum / d.len() as f64).max(SIGMA_FLOOR))
}

/// Digamma function ψ(x) for x > 0.
///
/// Uses the recurrence ψ(x) = ψ(x+1) − 1/x to shift the argument above 6,
/// then the asymptotic series; absolute accuracy is ~1e-12 on [1e-3, 1e8].
pub fn digamma(x: f64) -> Result<f64, FitError> {
    if !(x > 0.0) {
        return Err(FitError::OutOfDomain(x));
    }
    let mut shift = 0.0;
    let mut t = x;
    while t < 6.0 {
        shift -= 1.0 / t;
        t += 1.0;
    }
    let inv = 1.0 / t;
    let inv2 = inv * inv;
    // ψ(t) ~ ln t − 1/(2t) − Σ B₂ₙ/(2n t²ⁿ).
    let series = inv2
        * (-1.0 / 12.0
            + inv2
                * (1.0 / 120.0
                    + inv2
                        * (-1.0 / 252.0
                            + inv2
                                * (1.0 / 240.0
                                    + inv2 * (-1.0 / 132.0 + inv2 * (691.0 / 32760.0))))));
    Ok(shift + t.ln() - 0.5 * inv + series)
}

/// Value of the ν-equation whose root is the M-step update:
///
/// `−ψ(ν/2) + log(ν/2) + 1 + ψ((ν+1)/2) − log((ν+1)/2) + (1/n) Σ (log zᵢ − zᵢ)`.
fn nu_equation(nu: f64, mean_log_z_minus_z: f64) -> f64 {
    let half = 0.5 * nu;
    let half1 = 0.5 * (nu + 1.0);
    -digamma(half).expect("nu > 0") + half.ln() + 1.0 + digamma(half1).expect("nu > 0")
        - half1.ln()
        + mean_log_z_minus_z
}

/// M-ν step: root of the ν-equation by bisection over `bounds`, clamping to
/// the nearest bound when the equation has no root inside (the function is
/// monotone decreasing in ν).
pub fn m_nu_step(z: &[f64], nu_prev: f64, bounds: (f64, f64)) -> f64 {
    if z.is_empty() {
        return nu_prev;
    }
    let s = z.iter().map(|zi| zi.ln() - zi).sum::<f64>() / z.len() as f64;
    let (mut lo, mut hi) = bounds;
    let f_lo = nu_equation(lo, s);
    let f_hi = nu_equation(hi, s);
    if f_lo <= 0.0 {
        // Decreasing function already nonpositive at the lower bound.
        return lo;
    }
    if f_hi >= 0.0 {
        // Still positive at the upper bound: Gaussian limit.
        return hi;
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let f_mid = nu_equation(mid, s);
        if f_mid.abs() <= NU_RESIDUAL_TOL {
            return mid;
        }
        if f_mid > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    mid
}

/// Fit a spiral motion under the Student-t error model.
///
/// Starts from the same seed as the Gaussian fitter; each outer iteration
/// then runs E-step → M-Σ → M-ν → weighted eigen update. The final `zᵢ` are
/// reported as per-point confidences.
pub fn fit_robust(points: &[OrientedPoint], config: &RobustConfig) -> Result<FitReport, FitError> {
    if points.len() < MIN_POINTS {
        return Err(FitError::EmptyInput {
            needed: MIN_POINTS,
            got: points.len(),
        });
    }
    let cfg = &config.base;
    let unit = vec![1.0; points.len()];
    let (mut eigenvalue, mut motion, mut n_dropped) = solve_step(points, None, &unit, cfg.w_p)?;

    let mut d = distances(points, &motion, cfg.w_p);
    let mut sigma = mean_square(&d).max(SIGMA_FLOOR);
    let mut nu = config.nu_init.clamp(config.nu_bounds.0, config.nu_bounds.1);
    let mut z = unit.clone();
    let mut iterations_run = 0;

    for _ in 0..cfg.iterations {
        if mean_square(&d) <= SIGMA_EXACT {
            break;
        }
        z = e_step(&d, sigma, nu);
        sigma = m_sigma_step(&d, &z)?;
        nu = m_nu_step(&z, nu, config.nu_bounds);
        let (lambda, next, dropped) = solve_step(points, Some(&motion), &z, cfg.w_p)?;
        let angle = motion_angle(&motion, &next);
        eigenvalue = lambda;
        motion = next;
        n_dropped = dropped;
        iterations_run += 1;
        d = distances(points, &motion, cfg.w_p);
        if angle < cfg.convergence_tol {
            break;
        }
    }

    let axis = motion.axis(EPS_GAMMA)?;
    Ok(FitReport {
        motion,
        axis,
        per_point_distance: d,
        per_point_confidence: z,
        sigma,
        nu,
        iterations_run,
        eigenvalue,
        n_dropped,
    })
}
