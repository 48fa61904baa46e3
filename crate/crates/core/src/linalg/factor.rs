//! Rank-revealing PSD square roots and the Moore–Penrose pseudoinverse.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::{is_symmetric, symmetrize};

/// Default relative rank tolerance for factorizations and pseudoinverses.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// A possibly non-symmetric square root `L` of a PSD matrix `L Lᵀ`.
///
/// The factor is `d × s` with `s ≤ d` allowed and expected: rank-deficient
/// covariances are first-class citizens here.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdFactor {
    factor: DMatrix<f64>,
}

impl PsdFactor {
    /// Wraps an arbitrary `d × s` matrix as the factor of `L Lᵀ`.
    pub fn new(factor: DMatrix<f64>) -> Self {
        Self { factor }
    }

    /// Factor of the `d`-dimensional identity.
    pub fn identity(d: usize) -> Self {
        Self { factor: DMatrix::identity(d, d) }
    }

    /// Dimension `d` of the represented matrix.
    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    /// Number of factor columns `s`.
    pub fn cols(&self) -> usize {
        self.factor.ncols()
    }

    /// The raw factor `L`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// The represented matrix `L Lᵀ`.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }

    /// Factor of `λ · L Lᵀ`, i.e. the factor scaled by `√λ`.
    pub fn scale_covariance(&self, lambda: f64) -> Self {
        Self { factor: &self.factor * lambda.sqrt() }
    }
}

/// Rank-revealing square-root factor of a symmetric PSD matrix.
///
/// Eigenvalue-based: columns are `v_i √λ_i` for eigenvalues above
/// `tol · λ_max`, ordered by decreasing eigenvalue. Eigenvalues below
/// `−tol · ‖M‖_∞` raise [`Error::NotPsd`]. The reconstruction satisfies
/// `‖L Lᵀ − M‖_F ≤ 10 · tol · ‖M‖_F`.
pub fn psd_sqrt_factor(m: &DMatrix<f64>, tol: f64) -> Result<PsdFactor> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "psd_sqrt_factor requires a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !is_symmetric(m, 1e-10) {
        return Err(Error::Invalid("psd_sqrt_factor requires a symmetric matrix".into()));
    }
    let d = m.nrows();
    let eig = symmetrize(m).symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0f64, |acc, l| acc.max(l.abs()));
    let lambda_max = eig.eigenvalues.max();
    if eig.eigenvalues.iter().any(|&l| l < -(tol * scale + 1e-300)) {
        return Err(Error::NotPsd(format!(
            "eigenvalue {:.3e} below -tol·‖M‖ = {:.3e}",
            eig.eigenvalues.min(),
            -tol * scale
        )));
    }

    let mut kept: Vec<(f64, usize)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > tol * lambda_max && l > 0.0)
        .map(|(i, &l)| (l, i))
        .collect();
    kept.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

    let mut factor = DMatrix::<f64>::zeros(d, kept.len());
    for (col, &(l, i)) in kept.iter().enumerate() {
        factor.set_column(col, &(eig.eigenvectors.column(i) * l.sqrt()));
    }
    Ok(PsdFactor::new(factor))
}

/// SVD-based Moore–Penrose pseudoinverse truncating singular values below
/// `tol · σ_max`. Satisfies the four Penrose identities to 1e-8 relative.
pub fn pinv(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    if m.is_empty() {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    let sigma_max = svd.singular_values.max();
    let cutoff = tol * sigma_max;

    let mut inv_sigma = svd.singular_values.clone();
    for v in inv_sigma.iter_mut() {
        *v = if *v > cutoff { 1.0 / *v } else { 0.0 };
    }
    v_t.transpose() * DMatrix::from_diagonal(&inv_sigma) * u.transpose()
}
