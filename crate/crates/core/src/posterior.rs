//! Exact and approximate Gaussian posteriors for linear forward models, and
//! the square root of the prior-preconditioned Hessian.
//!
//! The covariance-form update is the canonical path even when the prior is
//! nonsingular, since the priors of interest here are rank-deficient:
//!
//! `Γ_pos = Γ_pr − Γ_pr Gᵀ (Γ_obs + G Γ_pr Gᵀ)⁻¹ G Γ_pr`
//! `μ_pos = μ_pr + Γ_pos Gᵀ Γ_obs⁻¹ (m − G μ_pr)`

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{pinv, symmetrize, PsdFactor, DEFAULT_RANK_TOL};

/// Gaussian prior `N(μ_pr, L_pr L_prᵀ)` with a possibly rank-deficient
/// covariance factor.
#[derive(Debug, Clone)]
pub struct GaussianPrior {
    mean: DVector<f64>,
    cov_factor: PsdFactor,
}

impl GaussianPrior {
    /// Requires `μ_pr ∈ range(L_pr)` whenever the mean is nonzero (checked
    /// through the pseudoinverse); the mean bound constant is undefined
    /// otherwise.
    pub fn new(mean: DVector<f64>, cov_factor: PsdFactor) -> Result<Self> {
        if mean.len() != cov_factor.dim() {
            return Err(Error::Dimension(format!(
                "prior mean length {} does not match factor dimension {}",
                mean.len(),
                cov_factor.dim()
            )));
        }
        if mean.norm() > 0.0 {
            let l = cov_factor.factor();
            let projected = l * (pinv(l, DEFAULT_RANK_TOL) * &mean);
            if (&projected - &mean).norm() > 1e-8 * mean.norm() {
                return Err(Error::MeanOutsideRange);
            }
        }
        Ok(Self { mean, cov_factor })
    }

    /// Zero-mean prior; the range condition holds trivially.
    pub fn zero_mean(cov_factor: PsdFactor) -> Self {
        Self { mean: DVector::zeros(cov_factor.dim()), cov_factor }
    }

    pub fn dim(&self) -> usize {
        self.cov_factor.dim()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov_factor(&self) -> &PsdFactor {
        &self.cov_factor
    }

    /// The full covariance `Γ_pr = L_pr L_prᵀ`.
    pub fn covariance(&self) -> DMatrix<f64> {
        self.cov_factor.covariance()
    }

    /// Prior with covariance `λ Γ_pr` (factor scaled by `√λ`).
    pub fn scale_covariance(&self, lambda: f64) -> Self {
        Self { mean: self.mean.clone(), cov_factor: self.cov_factor.scale_covariance(lambda) }
    }
}

/// Gaussian posterior `N(μ_pos, Γ_pos)`.
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Solves the linear Gaussian inverse problem `m = G p + ε`.
///
/// The inner matrix `Γ_obs + G Γ_pr Gᵀ` is positive definite under the
/// model assumptions and is factorized symmetrically (Cholesky); returned
/// covariances are explicitly symmetrized.
pub fn posterior(
    g: &DMatrix<f64>,
    prior: &GaussianPrior,
    gamma_obs: &DMatrix<f64>,
    m: &DVector<f64>,
) -> Result<GaussianPosterior> {
    let d = prior.dim();
    let d_obs = g.nrows();
    if g.ncols() != d {
        return Err(Error::Dimension(format!(
            "forward map has {} columns, prior dimension is {}",
            g.ncols(),
            d
        )));
    }
    if gamma_obs.shape() != (d_obs, d_obs) {
        return Err(Error::Dimension(format!(
            "observation covariance must be {d_obs}x{d_obs}, got {}x{}",
            gamma_obs.nrows(),
            gamma_obs.ncols()
        )));
    }
    if m.len() != d_obs {
        return Err(Error::Dimension(format!(
            "data length {} does not match observation dimension {d_obs}",
            m.len()
        )));
    }

    let gamma_pr = prior.covariance();
    let g_gamma = g * &gamma_pr; // d_obs × d
    let inner = gamma_obs + &g_gamma * g.transpose();
    let inner_chol = Cholesky::new(symmetrize(&inner))
        .ok_or_else(|| Error::NotPd("Γ_obs + G Γ_pr Gᵀ is not positive definite".into()))?;

    // Γ_pos = Γ_pr − (G Γ_pr)ᵀ (Γ_obs + G Γ_pr Gᵀ)⁻¹ (G Γ_pr)
    let solved = inner_chol.solve(&g_gamma);
    let cov = symmetrize(&(&gamma_pr - g_gamma.transpose() * solved));

    // μ_pos = μ_pr + Γ_pos Gᵀ Γ_obs⁻¹ (m − G μ_pr)
    let obs_chol = Cholesky::new(symmetrize(gamma_obs))
        .ok_or_else(|| Error::NotPd("Γ_obs is not positive definite".into()))?;
    let residual = m - g * prior.mean();
    let weighted = obs_chol.solve(&residual);
    let mean = prior.mean() + &cov * (g.transpose() * weighted);

    Ok(GaussianPosterior { mean, cov })
}

/// Posterior obtained by replacing `G` with the approximation `Ĝ`; same
/// code path as [`posterior`], so `Ĝ = G` reproduces it bitwise.
pub fn approx_posterior(
    g_hat: &DMatrix<f64>,
    prior: &GaussianPrior,
    gamma_obs: &DMatrix<f64>,
    m: &DVector<f64>,
) -> Result<GaussianPosterior> {
    posterior(g_hat, prior, gamma_obs, m)
}

/// Square root `Γ_obs^{-1/2} G L_pr` of the prior-preconditioned Hessian
/// `L_prᵀ Gᵀ Γ_obs⁻¹ G L_pr`.
///
/// `Γ_obs^{-1/2}` is the symmetric inverse square root; block-diagonal
/// observation covariances built by [`crate::lti::obs_covariance`] carry a
/// blockwise-precomputed copy, which callers on the hot path should prefer.
pub fn pph_sqrt(
    g: &DMatrix<f64>,
    prior: &GaussianPrior,
    gamma_obs: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let inv_sqrt = inv_sqrt_pd(gamma_obs)?;
    Ok(inv_sqrt * g * prior.cov_factor().factor())
}

/// Symmetric inverse square root of a PD matrix.
pub(crate) fn inv_sqrt_pd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = symmetrize(m).symmetric_eigen();
    if eig.eigenvalues.min() <= 0.0 {
        return Err(Error::NotPd(format!(
            "matrix has eigenvalue {:.3e}",
            eig.eigenvalues.min()
        )));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// `(‖μ_pos − μ̂_pos‖₂, ‖Γ_pos − Γ̂_pos‖_F)`.
pub fn posterior_error(exact: &GaussianPosterior, approx: &GaussianPosterior) -> (f64, f64) {
    assert_eq!(exact.mean.len(), approx.mean.len(), "posterior dimensions differ");
    ((&exact.mean - &approx.mean).norm(), (&exact.cov - &approx.cov).norm())
}
