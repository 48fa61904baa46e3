//! Adaptive composite Gauss–Legendre quadrature.
//!
//! Panel counts double until successive composite estimates agree to the
//! requested relative tolerance or fall inside an absolute floor supplied
//! by the caller. The floor matters for integrands that live at the
//! cancellation-noise level (e.g. ‖h − h_r‖² of a near-exact reduction),
//! whose relative error never converges; a panel cap bounds the cost on
//! pathological inputs either way.

use std::sync::OnceLock;

use nalgebra::DMatrix;

/// Nodes per panel. High enough that one panel resolves a smooth integrand
/// over an observation interval; refinement handles the rest.
const PANEL_ORDER: usize = 12;

/// Hard cap on panel doubling for scalar integrands (2^13 panels).
const MAX_DOUBLINGS_SCALAR: usize = 13;

/// Matrix integrands are costlier per node; cap refinement earlier.
const MAX_DOUBLINGS_MATRIX: usize = 10;

/// Gauss–Legendre nodes and weights on (-1, 1), by Newton iteration on the
/// Legendre polynomial.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 2..=n {
        let kf = k as f64;
        let next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = next;
    }
    let d = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, d)
}

fn panel_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(PANEL_ORDER))
}

fn composite_scalar<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, panels: usize) -> f64 {
    let (nodes, weights) = panel_rule();
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let mid = lo + 0.5 * width;
        let half = 0.5 * width;
        let mut acc = 0.0;
        for (x, w) in nodes.iter().zip(weights) {
            acc += w * f(mid + half * x);
        }
        total += acc * half;
    }
    total
}

/// ∫_a^b f(t) dt with panel doubling until successive estimates differ by
/// less than `rel_tol` relative to the current estimate, or by less than
/// the absolute floor `abs_tol` (pass 0.0 for a purely relative test).
pub fn integrate_scalar<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> f64 {
    if a == b {
        return 0.0;
    }
    let mut panels = 1;
    let mut previous = composite_scalar(&f, a, b, panels);
    for _ in 0..MAX_DOUBLINGS_SCALAR {
        panels *= 2;
        let current = composite_scalar(&f, a, b, panels);
        let gap = (current - previous).abs();
        if gap <= rel_tol * current.abs().max(1e-300) || gap <= abs_tol {
            return current;
        }
        previous = current;
    }
    previous
}

/// Matrix-valued analogue of [`integrate_scalar`]; convergence is measured
/// in the Frobenius norm.
pub fn integrate_matrix<F: Fn(f64) -> DMatrix<f64>>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> DMatrix<f64> {
    let probe = f(a);
    let (rows, cols) = probe.shape();
    if a == b {
        return DMatrix::zeros(rows, cols);
    }
    let (nodes, weights) = panel_rule();
    let composite = |panels: usize| -> DMatrix<f64> {
        let width = (b - a) / panels as f64;
        let mut total = DMatrix::<f64>::zeros(rows, cols);
        for p in 0..panels {
            let lo = a + p as f64 * width;
            let mid = lo + 0.5 * width;
            let half = 0.5 * width;
            for (x, w) in nodes.iter().zip(weights) {
                total += f(mid + half * x) * (w * half);
            }
        }
        total
    };

    let mut panels = 1;
    let mut previous = composite(panels);
    for _ in 0..MAX_DOUBLINGS_MATRIX {
        panels *= 2;
        let current = composite(panels);
        let gap = (&current - &previous).norm();
        if gap <= rel_tol * current.norm().max(1e-300) || gap <= abs_tol {
            return current;
        }
        previous = current;
    }
    previous
}

/// ∫_0^∞ f(t) dt for an eventually-decaying non-negative integrand.
///
/// The horizon is found by marching in unit windows until the integrand
/// stays below `decay_tol` times its running peak, then the finite integral
/// is evaluated window by window with an absolute floor derived from the
/// peak.
pub fn integrate_scalar_to_infinity<F: Fn(f64) -> f64>(f: F, rel_tol: f64, decay_tol: f64) -> f64 {
    const WINDOW: f64 = 1.0;
    const MAX_TIME: f64 = 1e4;
    let mut peak = 0.0f64;
    let mut quiet_windows = 0;
    let mut horizon = WINDOW;
    while horizon < MAX_TIME {
        let mut window_max = 0.0f64;
        for i in 0..8 {
            let t = horizon - WINDOW + WINDOW * (i as f64 + 0.5) / 8.0;
            window_max = window_max.max(f(t).abs());
        }
        peak = peak.max(window_max);
        if window_max <= decay_tol * peak.max(1e-300) {
            quiet_windows += 1;
            if quiet_windows >= 3 {
                break;
            }
        } else {
            quiet_windows = 0;
        }
        horizon += WINDOW;
    }

    let abs_floor = rel_tol * peak * WINDOW;
    let mut total = 0.0;
    let mut lo = 0.0;
    while lo < horizon {
        let hi = (lo + WINDOW).min(horizon);
        total += integrate_scalar(&f, lo, hi, rel_tol, abs_floor);
        lo = hi;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn nodes_match_low_order_closed_forms() {
        let (nodes, weights) = gauss_legendre(2);
        let expect = 1.0 / 3f64.sqrt();
        assert_relative_eq!(nodes[0].abs(), expect, epsilon = 1e-14);
        assert_relative_eq!(nodes[1].abs(), expect, epsilon = 1e-14);
        assert_relative_eq!(weights[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn integrates_polynomials_exactly() {
        // The 12-point rule is exact through degree 23.
        let val = integrate_scalar(|t| t.powi(7) - 3.0 * t * t + 1.0, -1.0, 2.0, 1e-12, 0.0);
        let exact = (2f64.powi(8) - 1.0) / 8.0 - (8.0 + 1.0) + 3.0;
        assert_relative_eq!(val, exact, epsilon = 1e-12);
    }

    #[test]
    fn integrates_decaying_exponential() {
        let val = integrate_scalar(|t| (-2.0 * t).exp(), 0.0, 20.0, 1e-12, 0.0);
        assert_relative_eq!(val, 0.5, epsilon = 1e-10);
    }

    #[test]
    fn noise_level_integrands_hit_the_absolute_floor_quickly() {
        // A jittery integrand at the requested floor converges immediately
        // instead of exhausting the refinement budget.
        let val = integrate_scalar(|t| 1e-30 * (1.0 + (1e6 * t).sin()), 0.0, 0.1, 1e-10, 1e-25);
        assert!(val.abs() <= 1e-25);
    }

    #[test]
    fn infinite_horizon_matches_closed_form() {
        let val = integrate_scalar_to_infinity(|t| (-0.7 * t).exp(), 1e-11, 1e-14);
        assert_relative_eq!(val, 1.0 / 0.7, epsilon = 1e-9);
    }

    #[test]
    fn matrix_integration_matches_entrywise() {
        let val = integrate_matrix(
            |t| nalgebra::DMatrix::from_row_slice(1, 2, &[t, t * t]),
            0.0,
            1.0,
            1e-12,
            0.0,
        );
        assert_relative_eq!(val[(0, 0)], 0.5, epsilon = 1e-12);
        assert_relative_eq!(val[(0, 1)], 1.0 / 3.0, epsilon = 1e-12);
    }
}
