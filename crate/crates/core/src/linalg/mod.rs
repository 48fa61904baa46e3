//! Dense linear-algebra kernels used by every other module.
//!
//! All routines operate on `nalgebra::DMatrix<f64>` and are pure functions of
//! their inputs; tolerances follow the contracts stated on each item.

mod expm;
mod factor;
mod sylvester;

pub use expm::expm;
pub use factor::{pinv, psd_sqrt_factor, PsdFactor, DEFAULT_RANK_TOL};
pub use sylvester::{solve_lyapunov, solve_sylvester, LyapunovForm};

use nalgebra::DMatrix;

/// Schatten index accepted by [`schatten_norm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchattenP {
    /// 2-Schatten norm, i.e. the Frobenius norm.
    Two,
    /// ∞-Schatten norm, i.e. the spectral norm (largest singular value).
    Inf,
}

/// p-Schatten norm for p ∈ {2, ∞}.
pub fn schatten_norm(m: &DMatrix<f64>, p: SchattenP) -> f64 {
    match p {
        SchattenP::Two => m.norm(),
        SchattenP::Inf => spectral_norm(m),
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Matrix ∞-norm: maximum absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// (M + Mᵀ)/2; removes roundoff asymmetry before eigenvalue-based steps.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

/// True when ‖M − Mᵀ‖_F ≤ rel_tol · max(‖M‖_F, 1e-300).
pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    (m - m.transpose()).norm() <= rel_tol * m.norm().max(1e-300)
}

/// Spectral abscissa: the largest real part over the eigenvalues of `a`.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, StandardNormal};

    pub(crate) fn random_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn schatten_norms_on_identity() {
        let eye = DMatrix::<f64>::identity(3, 3);
        assert_relative_eq!(schatten_norm(&eye, SchattenP::Two), 3f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(schatten_norm(&eye, SchattenP::Inf), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn schatten_two_is_pythagorean_on_diagonals() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 4.0]));
        assert_relative_eq!(schatten_norm(&m, SchattenP::Two), 5.0, epsilon = 1e-14);
        assert_relative_eq!(schatten_norm(&m, SchattenP::Inf), 4.0, epsilon = 1e-14);
    }

    #[test]
    fn inf_norm_is_max_row_sum() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 0.25]);
        assert_relative_eq!(inf_norm(&m), 3.0, epsilon = 1e-15);
    }

    #[test]
    fn abscissa_of_shifted_matrix() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let m = random_matrix(&mut rng, 5, 5);
        let shifted = &m - DMatrix::identity(5, 5) * (inf_norm(&m) + 1.0);
        assert!(spectral_abscissa(&shifted) < 0.0);
    }
}
