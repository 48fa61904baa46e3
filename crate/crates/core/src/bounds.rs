//! Computable error certificates for reduced smoothing problems: the
//! square-root Hessian error and its trace-form bounds, the per-interval
//! ratio constant κ, the local Lipschitz constants C and C′, and the
//! assembled posterior mean/covariance bounds
//!
//! `‖Γ_pos − Γ̂_pos‖_F ≤ C √(κ · trace_term)` and
//! `‖μ_pos − μ̂_pos‖₂ ≤ C′ √(κ · trace_term)`.

use dashmap::DashMap;
use nalgebra::{Cholesky, DMatrix, DVector};

use crate::balancing::{reduced_forward_map, reduced_impulse_response, ReducedModel, TruncatedBundle};
use crate::error::{Error, Result};
use crate::gramians::{ensure_stable, limited_symmetric_gramian, mixed_and_reduced_reach_gramians, Horizon};
use crate::linalg::{pinv, solve_sylvester, spectral_norm, symmetrize, DEFAULT_RANK_TOL};
use crate::lti::{forward_map, impulse_response, obs_covariance, LtiSystem, ObsCovariance, ObservationGrid, SmoothingProblem};
use crate::posterior::{approx_posterior, inv_sqrt_pd, posterior, posterior_error, GaussianPrior};
use crate::quad::integrate_scalar;

/// Relative tolerance for the κ denominator quadrature.
const KAPPA_QUAD_TOL: f64 = 1e-10;

/// Everything a certificate reports: the constituent constants, the final
/// bound values, and the actual errors they dominate.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub variant: Horizon,
    pub rank: usize,
    /// Per-interval ratio constant; may be `+∞` (flagged, not an error).
    pub kappa: f64,
    /// Covariance Lipschitz constant C.
    pub lipschitz_c: f64,
    /// Mean Lipschitz constant C′.
    pub lipschitz_cprime: f64,
    /// Trace-form bound on `‖h − h_r‖²` (variant-dependent).
    pub trace_term: f64,
    /// `√(κ · trace_term)`, bounding the square-root Hessian error.
    pub pph_err_bound: f64,
    /// `C · pph_err_bound`.
    pub cov_bound: f64,
    /// `C′ · pph_err_bound`.
    pub mean_bound: f64,
    pub actual_cov_err: f64,
    pub actual_mean_err: f64,
    /// `‖Γ_obs^{-1/2}(G − Ĝ)L_pr‖_F`, the certified quantity.
    pub pph_err_actual: f64,
    /// Whether `pph_err_actual² ≤ κ · trace_term` held (up to roundoff).
    pub chain_satisfied: bool,
}

/// Per-problem cache shared across truncation ranks: the exact forward map,
/// the observation covariance triple, and memoized full-model impulse
/// responses keyed by time. All cached values are pure functions of the
/// problem, so concurrent use is deterministic.
pub struct FullModelCache {
    problem: SmoothingProblem,
    g: DMatrix<f64>,
    obs: ObsCovariance,
    h_values: DashMap<u64, DMatrix<f64>>,
}

impl FullModelCache {
    pub fn new(problem: &SmoothingProblem) -> Self {
        let g = forward_map(&problem.system, &problem.grid);
        let obs = obs_covariance(&problem.system, problem.grid.len());
        Self { problem: problem.clone(), g, obs, h_values: DashMap::new() }
    }

    pub fn problem(&self) -> &SmoothingProblem {
        &self.problem
    }

    pub fn forward(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn observation(&self) -> &ObsCovariance {
        &self.obs
    }

    fn h(&self, t: f64) -> DMatrix<f64> {
        if let Some(v) = self.h_values.get(&t.to_bits()) {
            return v.clone();
        }
        let value = impulse_response(&self.problem.system, self.problem.prior.cov_factor(), t);
        self.h_values.insert(t.to_bits(), value.clone());
        value
    }
}

/// `‖Γ_obs^{-1/2}(G − Ĝ)L_pr‖_F`, assembled from the full matrices.
pub fn pph_error_actual(
    system: &LtiSystem,
    prior: &GaussianPrior,
    grid: &ObservationGrid,
    model: &ReducedModel,
) -> f64 {
    let g = forward_map(system, grid);
    let g_hat = reduced_forward_map(model, grid);
    let obs = obs_covariance(system, grid.len());
    (&obs.inv_sqrt * (g - g_hat) * prior.cov_factor().factor()).norm()
}

/// Trace certificate for the infinite-horizon variant:
/// `trace[(L̄_pr L̄_prᵀ + 2 S̄ Ā) Σ̄]` where `S` solves
/// `Aᵀ S + S A_r + Cᵀ Γ_ε⁻¹ C_r = 0` and `S̄ = W̄ᵀ S` expresses its rows in
/// truncated balanced coordinates. Tiny negative totals from roundoff are
/// clamped to zero with a warning.
pub fn prop21_rhs(
    system: &LtiSystem,
    model: &ReducedModel,
    bundle: &TruncatedBundle,
) -> Result<f64> {
    if model.variant != Horizon::Infinite {
        return Err(Error::Invalid(
            "the Sylvester trace certificate applies to the infinite-horizon variant".into(),
        ));
    }
    ensure_stable(system.a())?;
    if bundle.sigma_bar.is_empty() {
        return Ok(0.0);
    }
    let w = system.c().transpose() * system.gamma_eps_inv() * &model.c_r;
    let s = solve_sylvester(system.a(), &model.a_r, &w)?;
    let s_bar = bundle.w_bar.transpose() * s;
    let core = &bundle.l_pr_bar * bundle.l_pr_bar.transpose() + 2.0 * s_bar * &bundle.a_bar;

    let mut value = 0.0;
    for (i, &sigma) in bundle.sigma_bar.iter().enumerate() {
        value += core[(i, i)] * sigma;
    }
    if value < 0.0 {
        log::warn!("trace certificate clamped to 0 from roundoff value {value:.3e}");
        value = 0.0;
    }
    Ok(value)
}

/// Trace certificate for the time-limited variant:
/// `tr[Γ_ε⁻¹ C P_T Cᵀ] + tr[Γ_ε⁻¹ C_r P_red C_rᵀ] − 2 tr[Γ_ε⁻¹ C P_mix C_rᵀ]`.
/// For exact Gramians this equals `‖h − h_r‖²_{L₂,T}`.
pub fn prop22_rhs(
    system: &LtiSystem,
    prior: &GaussianPrior,
    model: &ReducedModel,
    t_end: f64,
) -> Result<f64> {
    if !(t_end > 0.0) {
        return Err(Error::Invalid(format!("horizon must be positive, got {t_end}")));
    }
    let p_t = limited_symmetric_gramian(system.a(), &prior.covariance(), t_end);
    let (p_red, p_mix) = mixed_and_reduced_reach_gramians(system, prior.cov_factor(), model, t_end)?;

    let gi = system.gamma_eps_inv();
    let term_full = (gi * system.c() * &p_t * system.c().transpose()).trace();
    let term_red = (gi * &model.c_r * &p_red * model.c_r.transpose()).trace();
    let term_mix = (gi * system.c() * &p_mix * model.c_r.transpose()).trace();
    let total = term_full + term_red - 2.0 * term_mix;
    if total < 0.0 {
        if total >= -1e-10 * term_full.abs() {
            log::warn!("time-limited trace clamped to 0 from roundoff value {total:.3e}");
            return Ok(0.0);
        }
        return Err(Error::Inconsistent(format!(
            "time-limited trace is negative beyond roundoff: {total:.3e} vs scale {term_full:.3e}"
        )));
    }
    Ok(total)
}

/// Per-interval ratio constant
/// `κ = max_k ‖h(t_k) − h_r(t_k)‖_F² / ∫_{t_{k-1}}^{t_k} ‖h − h_r‖_F² dt`
/// with `t_0 = 0`.
///
/// Intervals where numerator and denominator both vanish are skipped; a
/// vanishing denominator under a live numerator yields `+∞` (a reportable
/// state, not an error). If every interval is skipped, κ is 0.
pub fn estimate_kappa(
    system: &LtiSystem,
    prior: &GaussianPrior,
    grid: &ObservationGrid,
    model: &ReducedModel,
) -> f64 {
    kappa_impl(system, grid, model, |t| impulse_response(system, prior.cov_factor(), t))
}

fn kappa_impl(
    system: &LtiSystem,
    grid: &ObservationGrid,
    model: &ReducedModel,
    h: impl Fn(f64) -> DMatrix<f64>,
) -> f64 {
    let gap_sq =
        |t: f64| -> f64 { (h(t) - reduced_impulse_response(model, system, t)).norm_squared() };
    // Near-exact reductions leave the integrand at cancellation-noise
    // level; below this floor the denominator quadrature stops refining.
    let h_scale_sq = grid
        .times()
        .iter()
        .map(|&t| h(t).norm_squared())
        .fold(0.0, f64::max);
    let mut kappa = 0.0f64;
    let mut t_prev = 0.0;
    for &t_k in grid.times() {
        let numerator = gap_sq(t_k);
        let abs_floor = 1e-28 * h_scale_sq * (t_k - t_prev);
        let denominator = integrate_scalar(gap_sq, t_prev, t_k, KAPPA_QUAD_TOL, abs_floor);
        if denominator < 1e-14 * (numerator + 1e-300) {
            if numerator >= 1e-14 {
                log::warn!(
                    "κ is infinite: no error mass on ({t_prev}, {t_k}) but the endpoint error is {numerator:.3e}"
                );
                return f64::INFINITY;
            }
            // Both vanish: the interval says nothing about κ.
        } else {
            kappa = kappa.max(numerator / denominator);
        }
        t_prev = t_k;
    }
    kappa
}

/// Covariance Lipschitz constant
/// `C = ‖L_pr‖_∞² (‖(I+BBᵀ)⁻¹B‖_∞ + ‖B̂‖_∞‖B‖_∞(‖B‖_∞+‖B̂‖_∞) + ‖(I+B̂B̂ᵀ)⁻¹B̂‖_∞)`
/// with `B = Γ_obs^{-1/2} G L_pr` and `B̂` its reduced counterpart.
pub fn lipschitz_c(
    g: &DMatrix<f64>,
    g_hat: &DMatrix<f64>,
    prior: &GaussianPrior,
    gamma_obs: &DMatrix<f64>,
) -> Result<f64> {
    let inv_sqrt = inv_sqrt_pd(gamma_obs)?;
    let l = prior.cov_factor().factor();
    Ok(lipschitz_c_weighted(&(&inv_sqrt * g * l), &(&inv_sqrt * g_hat * l), prior))
}

fn lipschitz_c_weighted(b: &DMatrix<f64>, b_hat: &DMatrix<f64>, prior: &GaussianPrior) -> f64 {
    let damped_norm = |x: &DMatrix<f64>| -> f64 {
        let n = x.nrows();
        let gram = DMatrix::<f64>::identity(n, n) + x * x.transpose();
        let solved = Cholesky::new(gram).expect("I + XXᵀ is positive definite").solve(x);
        spectral_norm(&solved)
    };
    let l_norm = spectral_norm(prior.cov_factor().factor());
    let nb = spectral_norm(b);
    let nb_hat = spectral_norm(b_hat);
    l_norm * l_norm * (damped_norm(b) + nb_hat * nb * (nb + nb_hat) + damped_norm(b_hat))
}

/// Mean Lipschitz constant
/// `C′ = C‖GᵀΓ_obs⁻¹(m − Gμ_pr)‖₂ + ‖Γ̂_pos Gᵀ Γ_obs^{-1/2}‖_∞‖L_pr†μ_pr‖₂
///      + ‖Γ̂_pos (L_pr†)ᵀ‖_∞‖Γ_obs^{-1/2}(m − Ĝμ_pr)‖₂`.
///
/// Requires `μ_pr ∈ range(L_pr)`, which [`GaussianPrior`] guarantees.
pub fn lipschitz_cprime(
    g: &DMatrix<f64>,
    g_hat: &DMatrix<f64>,
    prior: &GaussianPrior,
    gamma_obs: &DMatrix<f64>,
    m: &DVector<f64>,
    c: f64,
) -> Result<f64> {
    let chol = Cholesky::new(symmetrize(gamma_obs))
        .ok_or_else(|| Error::NotPd("Γ_obs is not positive definite".into()))?;
    let obs_inv = chol.inverse();
    let inv_sqrt = inv_sqrt_pd(gamma_obs)?;
    let gamma_hat_pos = approx_posterior(g_hat, prior, gamma_obs, m)?.cov;
    Ok(lipschitz_cprime_assembled(g, g_hat, prior, &obs_inv, &inv_sqrt, m, c, &gamma_hat_pos))
}

#[allow(clippy::too_many_arguments)]
fn lipschitz_cprime_assembled(
    g: &DMatrix<f64>,
    g_hat: &DMatrix<f64>,
    prior: &GaussianPrior,
    obs_inv: &DMatrix<f64>,
    obs_inv_sqrt: &DMatrix<f64>,
    m: &DVector<f64>,
    c: f64,
    gamma_hat_pos: &DMatrix<f64>,
) -> f64 {
    let mu = prior.mean();
    let l = prior.cov_factor().factor();
    let l_dagger = pinv(l, DEFAULT_RANK_TOL);

    let term_cov = c * (g.transpose() * (obs_inv * (m - g * mu))).norm();
    let term_mean =
        spectral_norm(&(gamma_hat_pos * g.transpose() * obs_inv_sqrt)) * (&l_dagger * mu).norm();
    let term_data = spectral_norm(&(gamma_hat_pos * l_dagger.transpose()))
        * (obs_inv_sqrt * (m - g_hat * mu)).norm();
    term_cov + term_mean + term_data
}

/// Assembles the full certificate for one reduced model.
pub fn certify(
    problem: &SmoothingProblem,
    model: &ReducedModel,
    bundle: &TruncatedBundle,
    variant: Horizon,
) -> Result<BoundReport> {
    certify_with_cache(&FullModelCache::new(problem), model, bundle, variant)
}

/// [`certify`] against a shared per-problem cache; use this when sweeping
/// truncation ranks of the same problem.
pub fn certify_with_cache(
    cache: &FullModelCache,
    model: &ReducedModel,
    bundle: &TruncatedBundle,
    variant: Horizon,
) -> Result<BoundReport> {
    if variant != model.variant {
        return Err(Error::Invalid(format!(
            "certificate variant {} does not match the model variant {}",
            variant.label(),
            model.variant.label()
        )));
    }
    let problem = &cache.problem;
    let system = &problem.system;
    let grid = &problem.grid;
    let prior = &problem.prior;
    let t_last = *grid.times().last().expect("grid is nonempty");
    if let Horizon::Limited(t_end) = variant {
        if !(t_end > t_last) {
            return Err(Error::Invalid(format!(
                "time-limited horizon {t_end} must exceed the last observation time {t_last}"
            )));
        }
    }

    let g = &cache.g;
    let g_hat = reduced_forward_map(model, grid);

    let exact = posterior(g, prior, &cache.obs.full, &problem.data)?;
    let approx = approx_posterior(&g_hat, prior, &cache.obs.full, &problem.data)?;
    let (actual_mean_err, actual_cov_err) = posterior_error(&exact, &approx);

    let l = prior.cov_factor().factor();
    let b = &cache.obs.inv_sqrt * g * l;
    let b_hat = &cache.obs.inv_sqrt * &g_hat * l;
    let pph_err_actual = (&b - &b_hat).norm();

    let kappa = kappa_impl(system, grid, model, |t| cache.h(t));
    let trace_term = match variant {
        Horizon::Infinite => prop21_rhs(system, model, bundle)?,
        Horizon::Limited(t_end) => prop22_rhs(system, prior, model, t_end)?,
    };

    let lipschitz_c = lipschitz_c_weighted(&b, &b_hat, prior);
    let lipschitz_cprime = lipschitz_cprime_assembled(
        g,
        &g_hat,
        prior,
        &cache.obs.inv,
        &cache.obs.inv_sqrt,
        &problem.data,
        lipschitz_c,
        &approx.cov,
    );

    let chain_rhs = if kappa.is_infinite() { f64::INFINITY } else { kappa * trace_term };
    let pph_err_bound = chain_rhs.sqrt();
    // Roundoff floor: the assembled error cannot be resolved below the
    // cancellation noise of ‖B‖ itself.
    let noise_floor = (1e-10 * b.norm()).powi(2);
    let chain_satisfied = pph_err_actual * pph_err_actual <= chain_rhs * (1.0 + 1e-9) + noise_floor;

    Ok(BoundReport {
        variant,
        rank: model.r,
        kappa,
        lipschitz_c,
        lipschitz_cprime,
        trace_term,
        pph_err_bound,
        cov_bound: lipschitz_c * pph_err_bound,
        mean_bound: lipschitz_cprime * pph_err_bound,
        actual_cov_err,
        actual_mean_err,
        pph_err_actual,
        chain_satisfied,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, StandardNormal};

    use crate::balancing::{balance_and_truncate, BalancedRealization};
    use crate::linalg::{spectral_abscissa, PsdFactor, SchattenP};
    use crate::quad::integrate_scalar_to_infinity;

    fn randn(rng: &mut ChaCha20Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
    }

    fn random_stable_system(rng: &mut ChaCha20Rng, d: usize, d_out: usize) -> LtiSystem {
        let m = randn(rng, d, d);
        let a = &m - DMatrix::identity(d, d) * (spectral_abscissa(&m) + 0.5);
        let c = randn(rng, d_out, d);
        let noise = DMatrix::identity(d_out, d_out) * 0.05;
        LtiSystem::new(a, c, noise).unwrap()
    }

    fn test_problem(
        rng: &mut ChaCha20Rng,
        d: usize,
        d_out: usize,
        n: usize,
    ) -> (SmoothingProblem, PsdFactor) {
        let system = random_stable_system(rng, d, d_out);
        let l_pr = PsdFactor::new(randn(rng, d, d));
        let prior = GaussianPrior::zero_mean(l_pr.clone());
        let grid = ObservationGrid::equidistant(n, 0.25, 0.25 * n as f64 + 0.5).unwrap();
        let p_true = l_pr.factor()
            * DVector::from_fn(l_pr.cols(), |_, _| -> f64 { StandardNormal.sample(rng) });
        let data = crate::lti::simulate_outputs(&system, &grid, &p_true);
        (SmoothingProblem::new(system, grid, prior, data).unwrap(), l_pr)
    }

    #[test]
    fn pph_error_routes_agree() {
        // Route (a): assembled G, Ĝ. Route (b): stacked impulse responses.
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let (problem, l_pr) = test_problem(&mut rng, 5, 2, 6);
        let (model, _) =
            balance_and_truncate(&problem.system, &l_pr, 2, Horizon::Infinite).unwrap();

        let direct = pph_error_actual(&problem.system, &problem.prior, &problem.grid, &model);
        let mut sum = 0.0;
        for &t in problem.grid.times() {
            let gap = impulse_response(&problem.system, &l_pr, t)
                - reduced_impulse_response(&model, &problem.system, t);
            sum += gap.norm_squared();
        }
        assert_relative_eq!(direct, sum.sqrt(), max_relative = 1e-10);
    }

    #[test]
    fn pph_error_of_full_rank_model_vanishes() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let (problem, l_pr) = test_problem(&mut rng, 4, 2, 5);
        let realization =
            BalancedRealization::new(&problem.system, &l_pr, Horizon::Infinite).unwrap();
        let (model, _) = realization.truncate(realization.hankel_rank()).unwrap();
        let err = pph_error_actual(&problem.system, &problem.prior, &problem.grid, &model);

        let obs = obs_covariance(&problem.system, problem.grid.len());
        let scale =
            (&obs.inv_sqrt * forward_map(&problem.system, &problem.grid) * l_pr.factor()).norm();
        assert!(err <= 1e-6 * scale, "residual {err:.3e} vs scale {scale:.3e}");
    }

    #[test]
    fn full_rank_trace_certificates_vanish() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let (problem, l_pr) = test_problem(&mut rng, 4, 1, 4);
        let realization =
            BalancedRealization::new(&problem.system, &l_pr, Horizon::Infinite).unwrap();
        let (model, bundle) = realization.truncate(realization.hankel_rank()).unwrap();
        assert_eq!(prop21_rhs(&problem.system, &model, &bundle).unwrap(), 0.0);
    }

    #[test]
    fn prop21_dominates_infinite_horizon_error_integral() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        for _ in 0..5 {
            let (problem, l_pr) = test_problem(&mut rng, 5, 2, 4);
            let (model, bundle) =
                balance_and_truncate(&problem.system, &l_pr, 2, Horizon::Infinite).unwrap();
            let rhs = prop21_rhs(&problem.system, &model, &bundle).unwrap();

            let gap_sq = |t: f64| {
                (impulse_response(&problem.system, &l_pr, t)
                    - reduced_impulse_response(&model, &problem.system, t))
                .norm_squared()
            };
            let h_sq = |t: f64| impulse_response(&problem.system, &l_pr, t).norm_squared();
            let actual = integrate_scalar_to_infinity(gap_sq, 1e-10, 1e-14);
            let scale = integrate_scalar_to_infinity(h_sq, 1e-10, 1e-14);
            assert!(
                actual <= rhs + 1e-8 * scale,
                "L2 error {actual:.6e} exceeds certificate {rhs:.6e}"
            );
        }
    }

    #[test]
    fn prop21_clamps_negative_roundoff() {
        let mut rng = ChaCha20Rng::seed_from_u64(19);
        let (problem, l_pr) = test_problem(&mut rng, 4, 1, 4);
        let (model, mut bundle) =
            balance_and_truncate(&problem.system, &l_pr, 2, Horizon::Infinite).unwrap();
        // Degenerate input: no prior energy in the truncated directions.
        bundle.l_pr_bar.fill(0.0);
        let rhs = prop21_rhs(&problem.system, &model, &bundle).unwrap();
        assert!(rhs >= 0.0);
    }

    #[test]
    fn prop22_is_an_identity_for_exact_gramians() {
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let (problem, l_pr) = test_problem(&mut rng, 5, 2, 4);
        let t_end = problem.grid.horizon();
        let (model, _) =
            balance_and_truncate(&problem.system, &l_pr, 2, Horizon::Limited(t_end)).unwrap();
        let rhs = prop22_rhs(&problem.system, &problem.prior, &model, t_end).unwrap();

        let gap_sq = |t: f64| {
            (impulse_response(&problem.system, &l_pr, t)
                - reduced_impulse_response(&model, &problem.system, t))
            .norm_squared()
        };
        let quadrature = integrate_scalar(gap_sq, 0.0, t_end, 1e-11, 0.0);
        assert_relative_eq!(rhs, quadrature, max_relative = 1e-8);
    }

    #[test]
    fn prop22_accepts_small_horizons() {
        // The trace identity is well defined even below the first
        // observation time.
        let mut rng = ChaCha20Rng::seed_from_u64(29);
        let (problem, l_pr) = test_problem(&mut rng, 4, 1, 4);
        let (model, _) =
            balance_and_truncate(&problem.system, &l_pr, 2, Horizon::Limited(3.0)).unwrap();
        let rhs = prop22_rhs(&problem.system, &problem.prior, &model, 0.05).unwrap();
        let gap_sq = |t: f64| {
            (impulse_response(&problem.system, &l_pr, t)
                - reduced_impulse_response(&model, &problem.system, t))
            .norm_squared()
        };
        let quadrature = integrate_scalar(gap_sq, 0.0, 0.05, 1e-11, 0.0);
        assert_relative_eq!(rhs, quadrature, max_relative = 1e-8);
    }

    #[test]
    fn full_rank_prop22_vanishes() {
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let (problem, l_pr) = test_problem(&mut rng, 4, 2, 4);
        let t_end = problem.grid.horizon();
        let realization =
            BalancedRealization::new(&problem.system, &l_pr, Horizon::Limited(t_end)).unwrap();
        let (model, _) = realization.truncate(realization.hankel_rank()).unwrap();
        let rhs = prop22_rhs(&problem.system, &problem.prior, &model, t_end).unwrap();

        let gi = problem.system.gamma_eps_inv();
        let p_t =
            limited_symmetric_gramian(problem.system.a(), &problem.prior.covariance(), t_end);
        let scale = (gi * problem.system.c() * p_t * problem.system.c().transpose()).trace();
        assert!(rhs <= 1e-9 * scale.max(1.0), "rhs {rhs:.3e} vs scale {scale:.3e}");
    }

    #[test]
    fn kappa_of_constant_error_profile_is_inverse_spacing() {
        // Zero dynamics with C = 1, L_pr = 1 gives h(t) ≡ 1; a reduced model
        // with zero output leaves ‖h−h_r‖² ≡ 1, so every ratio is 1/Δt.
        let sys = LtiSystem::new(
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::identity(1, 1),
        )
        .unwrap();
        let grid = ObservationGrid::equidistant(4, 0.5, 3.0).unwrap();
        let model = ReducedModel {
            r: 1,
            a_r: DMatrix::zeros(1, 1),
            c_r: DMatrix::zeros(1, 1),
            l_pr_r: DMatrix::zeros(1, 1),
            v_r: DMatrix::identity(1, 1),
            w_r: DMatrix::identity(1, 1),
            hsv: vec![1.0],
            hankel_rank: 1,
            variant: Horizon::Infinite,
        };
        let prior = GaussianPrior::zero_mean(PsdFactor::identity(1));
        let kappa = estimate_kappa(&sys, &prior, &grid, &model);
        assert_relative_eq!(kappa, 2.0, max_relative = 1e-9);
    }

    #[test]
    fn kappa_of_exact_model_is_zero_by_convention() {
        // Identical reduced model: numerator and denominator both vanish.
        let sys = LtiSystem::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::identity(1, 1),
        )
        .unwrap();
        let grid = ObservationGrid::equidistant(3, 0.4, 2.0).unwrap();
        let model = ReducedModel {
            r: 1,
            a_r: DMatrix::from_element(1, 1, -1.0),
            c_r: DMatrix::from_element(1, 1, 1.0),
            l_pr_r: DMatrix::from_element(1, 1, 1.0),
            v_r: DMatrix::identity(1, 1),
            w_r: DMatrix::identity(1, 1),
            hsv: vec![0.5],
            hankel_rank: 1,
            variant: Horizon::Infinite,
        };
        let prior = GaussianPrior::zero_mean(PsdFactor::identity(1));
        let kappa = estimate_kappa(&sys, &prior, &grid, &model);
        assert_eq!(kappa, 0.0);
    }

    #[test]
    fn kappa_is_at_least_every_ratio() {
        let mut rng = ChaCha20Rng::seed_from_u64(37);
        let (problem, l_pr) = test_problem(&mut rng, 4, 2, 5);
        let (model, _) =
            balance_and_truncate(&problem.system, &l_pr, 2, Horizon::Infinite).unwrap();
        let kappa = estimate_kappa(&problem.system, &problem.prior, &problem.grid, &model);
        assert!(kappa.is_finite() && kappa > 0.0);

        let gap_sq = |t: f64| {
            (impulse_response(&problem.system, &l_pr, t)
                - reduced_impulse_response(&model, &problem.system, t))
            .norm_squared()
        };
        let mut t_prev = 0.0;
        for &t_k in problem.grid.times() {
            let ratio = gap_sq(t_k) / integrate_scalar(gap_sq, t_prev, t_k, 1e-10, 0.0);
            assert!(kappa >= ratio * (1.0 - 1e-12));
            t_prev = t_k;
        }
    }

    #[test]
    fn lipschitz_c_closed_forms() {
        // All-zero maps: every term carries a factor of B or B̂.
        let prior = GaussianPrior::zero_mean(PsdFactor::identity(2));
        let zero = DMatrix::<f64>::zeros(2, 2);
        let eye = DMatrix::<f64>::identity(2, 2);
        assert_eq!(lipschitz_c(&zero, &zero, &prior, &eye).unwrap(), 0.0);

        // Scalar B = B̂ = 1, L_pr = 1: C = 1/2 + 2 + 1/2 = 3.
        let prior1 = GaussianPrior::zero_mean(PsdFactor::identity(1));
        let one = DMatrix::from_element(1, 1, 1.0);
        let c = lipschitz_c(&one, &one, &prior1, &one).unwrap();
        assert_relative_eq!(c, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn lipschitz_cprime_scalar_hand_computation() {
        // G=Ĝ=1, Γ_pr=1, Γ_obs=1, μ_pr=1, m=1: C=3, Γ̂_pos=1/2,
        // C′ = 3·|1·(1−1)| + |Γ̂_pos·1·1|·|1| + |Γ̂_pos·1|·|1−1| = 1/2.
        let prior =
            GaussianPrior::new(DVector::from_element(1, 1.0), PsdFactor::identity(1)).unwrap();
        let one = DMatrix::from_element(1, 1, 1.0);
        let m = DVector::from_element(1, 1.0);
        let c = lipschitz_c(&one, &one, &prior, &one).unwrap();
        let cprime = lipschitz_cprime(&one, &one, &prior, &one, &m, c).unwrap();
        assert_relative_eq!(cprime, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn lipschitz_cprime_zero_data_and_mean() {
        let prior = GaussianPrior::zero_mean(PsdFactor::identity(2));
        let zero = DMatrix::<f64>::zeros(2, 2);
        let eye = DMatrix::<f64>::identity(2, 2);
        let m = DVector::zeros(2);
        let c = lipschitz_c(&zero, &zero, &prior, &eye).unwrap();
        let cprime = lipschitz_cprime(&zero, &zero, &prior, &eye, &m, c).unwrap();
        assert_eq!(cprime, 0.0);
    }

    #[test]
    fn theorem_dominance_on_random_perturbations() {
        // C and C′ dominate the actual posterior errors for arbitrary
        // perturbed forward maps, in both Schatten norms.
        let mut rng = ChaCha20Rng::seed_from_u64(41);
        for trial in 0..25 {
            let d = 2 + (trial % 5);
            let d_obs = 1 + (trial % 4);
            let s = 1 + (trial % d);
            let l = PsdFactor::new(randn(&mut rng, d, s));
            let mu = l.factor()
                * DVector::from_fn(s, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
            let prior = GaussianPrior::new(mu, l).unwrap();
            let g = randn(&mut rng, d_obs, d);
            let g_hat = &g + randn(&mut rng, d_obs, d) * 0.3;
            let w = randn(&mut rng, d_obs, d_obs);
            let gamma_obs = &w * w.transpose() + DMatrix::identity(d_obs, d_obs) * 0.4;
            let m = DVector::from_fn(d_obs, |_, _| -> f64 { StandardNormal.sample(&mut rng) });

            let exact = posterior(&g, &prior, &gamma_obs, &m).unwrap();
            let approx = approx_posterior(&g_hat, &prior, &gamma_obs, &m).unwrap();
            let c = lipschitz_c(&g, &g_hat, &prior, &gamma_obs).unwrap();
            let cprime = lipschitz_cprime(&g, &g_hat, &prior, &gamma_obs, &m, c).unwrap();

            let inv_sqrt = inv_sqrt_pd(&gamma_obs).unwrap();
            let gap = &inv_sqrt * (&g - &g_hat) * prior.cov_factor().factor();
            let mean_gap = (&exact.mean - &approx.mean).norm();
            for p in [SchattenP::Two, SchattenP::Inf] {
                let gap_p = crate::linalg::schatten_norm(&gap, p);
                let cov_gap = crate::linalg::schatten_norm(&(&exact.cov - &approx.cov), p);
                assert!(
                    cov_gap <= c * gap_p * (1.0 + 1e-9) + 1e-12,
                    "trial {trial}: covariance dominance failed"
                );
                assert!(
                    mean_gap <= cprime * gap_p * (1.0 + 1e-9) + 1e-12,
                    "trial {trial}: mean dominance failed"
                );
            }
        }
    }

    #[test]
    fn certify_full_rank_is_tiny_everywhere() {
        let mut rng = ChaCha20Rng::seed_from_u64(43);
        let (problem, l_pr) = test_problem(&mut rng, 4, 2, 5);
        let realization =
            BalancedRealization::new(&problem.system, &l_pr, Horizon::Infinite).unwrap();
        let (model, bundle) = realization.truncate(realization.hankel_rank()).unwrap();
        let report = certify(&problem, &model, &bundle, Horizon::Infinite).unwrap();

        let scale = problem.prior.covariance().norm();
        assert!(report.actual_cov_err <= 1e-6 * scale);
        assert!(report.cov_bound <= 1e-6 * scale.max(1.0));
        assert!(report.chain_satisfied);
    }

    #[test]
    fn certify_dominates_across_ranks_both_variants() {
        let mut rng = ChaCha20Rng::seed_from_u64(47);
        let (problem, l_pr) = test_problem(&mut rng, 8, 2, 6);
        let t_end = problem.grid.horizon();
        for variant in [Horizon::Infinite, Horizon::Limited(t_end)] {
            let realization = BalancedRealization::new(&problem.system, &l_pr, variant).unwrap();
            let cache = FullModelCache::new(&problem);
            for r in 1..realization.hankel_rank() {
                let (model, bundle) = realization.truncate(r).unwrap();
                let report = certify_with_cache(&cache, &model, &bundle, variant).unwrap();
                assert!(
                    report.cov_bound >= report.actual_cov_err * (1.0 - 1e-9),
                    "rank {r} {}: cov {:.3e} > bound {:.3e}",
                    variant.label(),
                    report.actual_cov_err,
                    report.cov_bound
                );
                assert!(
                    report.mean_bound >= report.actual_mean_err * (1.0 - 1e-9),
                    "rank {r} {}: mean {:.3e} > bound {:.3e}",
                    variant.label(),
                    report.actual_mean_err,
                    report.mean_bound
                );
                assert!(report.chain_satisfied, "rank {r}: chain inequality failed");
            }
        }
    }

    #[test]
    fn certify_rejects_variant_mismatch() {
        let mut rng = ChaCha20Rng::seed_from_u64(53);
        let (problem, l_pr) = test_problem(&mut rng, 4, 1, 4);
        let (model, bundle) =
            balance_and_truncate(&problem.system, &l_pr, 2, Horizon::Infinite).unwrap();
        assert!(matches!(
            certify(&problem, &model, &bundle, Horizon::Limited(3.0)),
            Err(Error::Invalid(_))
        ));
    }

    #[test]
    fn stable_system_trace_terms_agree_at_long_horizons() {
        // With a horizon far past the decay time, the time-limited trace
        // approaches the infinite-horizon certificate; statistically most
        // instances agree within 10%.
        let mut rng = ChaCha20Rng::seed_from_u64(59);
        let mut close = 0;
        let total = 10;
        for _ in 0..total {
            let system = random_stable_system(&mut rng, 5, 2);
            let l_pr = PsdFactor::new(randn(&mut rng, 5, 5));
            let prior = GaussianPrior::zero_mean(l_pr.clone());
            let slowest = system
                .a()
                .complex_eigenvalues()
                .iter()
                .map(|l| l.re.abs())
                .fold(f64::INFINITY, f64::min);
            let t_end = 50.0 / slowest;

            let (model_inf, bundle_inf) =
                balance_and_truncate(&system, &l_pr, 2, Horizon::Infinite).unwrap();
            let p21 = prop21_rhs(&system, &model_inf, &bundle_inf).unwrap();
            let (model_tl, _) =
                balance_and_truncate(&system, &l_pr, 2, Horizon::Limited(t_end)).unwrap();
            let p22 = prop22_rhs(&system, &prior, &model_tl, t_end).unwrap();

            if (p21 - p22).abs() <= 0.10 * p21.max(p22) {
                close += 1;
            }
        }
        assert!(close * 2 >= total, "only {close}/{total} instances agreed within 10%");
    }
}
