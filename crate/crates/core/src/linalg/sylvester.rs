//! Dense Lyapunov and Sylvester solvers (Bartels–Stewart).
//!
//! Both equations are reduced to quasi-triangular form via real Schur
//! decompositions and solved by block back-substitution. Near-resonant
//! spectra surface as [`Error::SingularEquation`], either directly from a
//! singular diagonal block or through the final residual check.

use nalgebra::linalg::Schur;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::{inf_norm, is_symmetric, symmetrize};

/// Orientation of the Lyapunov equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LyapunovForm {
    /// `A X + X Aᵀ + W = 0` (reachability Gramians).
    Reachability,
    /// `Aᵀ X + X A + W = 0` (observability Gramians).
    Observability,
}

/// Solves the Lyapunov equation in the requested orientation.
///
/// `A` must have no eigenvalue pair with `λ_i + λ_j = 0` (stability
/// suffices) and `W` must be symmetric. The result is symmetrized and
/// satisfies the residual contract
/// `‖A X + X Aᵀ + W‖_F ≤ 1e-8 (‖A‖_F ‖X‖_F + ‖W‖_F)`.
pub fn solve_lyapunov(a: &DMatrix<f64>, w: &DMatrix<f64>, form: LyapunovForm) -> Result<DMatrix<f64>> {
    if !a.is_square() || a.shape() != w.shape() {
        return Err(Error::Dimension(format!(
            "Lyapunov equation requires square A and W of equal size, got {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            w.nrows(),
            w.ncols()
        )));
    }
    if !is_symmetric(w, 1e-10) {
        return Err(Error::Invalid("Lyapunov right-hand side W must be symmetric".into()));
    }
    let minus_w = -w;
    let x = match form {
        LyapunovForm::Reachability => bartels_stewart(a, &a.transpose(), &minus_w)?,
        LyapunovForm::Observability => bartels_stewart(&a.transpose(), a, &minus_w)?,
    };
    let x = symmetrize(&x);

    let residual = match form {
        LyapunovForm::Reachability => (a * &x + &x * a.transpose() + w).norm(),
        LyapunovForm::Observability => (a.transpose() * &x + &x * a + w).norm(),
    };
    let bound = 1e-8 * (a.norm() * x.norm() + w.norm());
    if residual > bound {
        return Err(Error::SingularEquation(format!(
            "Lyapunov residual {residual:.3e} exceeds {bound:.3e}; spectrum is near-resonant"
        )));
    }
    Ok(x)
}

/// Solves `Aᵀ S + S B + W = 0`.
///
/// The spectra of `−Aᵀ` and `B` must be disjoint. Residual contract:
/// `‖Aᵀ S + S B + W‖_F ≤ 1e-8 ((‖A‖_F + ‖B‖_F) ‖S‖_F + ‖W‖_F)`.
pub fn solve_sylvester(a: &DMatrix<f64>, b: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() || !b.is_square() || w.nrows() != a.nrows() || w.ncols() != b.nrows() {
        return Err(Error::Dimension(format!(
            "Sylvester equation AᵀS + SB + W = 0 requires A {0}x{0}, B {1}x{1}, W {0}x{1}",
            a.nrows(),
            b.nrows()
        )));
    }
    let s = bartels_stewart(&a.transpose(), b, &(-w))?;
    let residual = (a.transpose() * &s + &s * b + w).norm();
    let bound = 1e-8 * ((a.norm() + b.norm()) * s.norm() + w.norm());
    if residual > bound {
        return Err(Error::SingularEquation(format!(
            "Sylvester residual {residual:.3e} exceeds {bound:.3e}; spectra overlap"
        )));
    }
    Ok(s)
}

/// Solves `A X + X B = C` via real Schur reduction of both operands.
pub(crate) fn bartels_stewart(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let (qa, ta) = real_schur(a)?;
    let (qb, tb) = real_schur(b)?;
    let f = qa.transpose() * c * &qb;
    let y = solve_quasi_triangular(&ta, &tb, &f)?;
    Ok(&qa * y * qb.transpose())
}

fn real_schur(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    Schur::try_new(m.clone(), f64::EPSILON, 100_000)
        .map(|s| s.unpack())
        .ok_or_else(|| Error::SingularEquation("real Schur decomposition did not converge".into()))
}

/// 1x1/2x2 diagonal block layout of a real quasi-triangular matrix.
fn diagonal_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        let coupled = i + 1 < n && {
            let sub = t[(i + 1, i)].abs();
            sub > f64::EPSILON * (t[(i, i)].abs() + t[(i + 1, i + 1)].abs())
        };
        let size = if coupled { 2 } else { 1 };
        blocks.push((i, size));
        i += size;
    }
    blocks
}

/// Solves `T_A Y + Y T_B = F` with both operands upper quasi-triangular.
fn solve_quasi_triangular(
    ta: &DMatrix<f64>,
    tb: &DMatrix<f64>,
    f: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let m = ta.nrows();
    let n = tb.nrows();
    let a_blocks = diagonal_blocks(ta);
    let b_blocks = diagonal_blocks(tb);
    let pivot_tol = 1e-13 * (inf_norm(ta) + inf_norm(tb)).max(f64::MIN_POSITIVE);

    let mut y = DMatrix::<f64>::zeros(m, n);
    for &(jb, q) in &b_blocks {
        for &(ib, p) in a_blocks.iter().rev() {
            // Residual right-hand side for this block:
            // F[bi,bj] - T_A[bi, k>bi] Y[k, bj] - Y[bi, l<bj] T_B[l, bj]
            let mut rhs = DMatrix::<f64>::zeros(p, q);
            for r in 0..p {
                for cc in 0..q {
                    let mut s = f[(ib + r, jb + cc)];
                    for k in (ib + p)..m {
                        s -= ta[(ib + r, k)] * y[(k, jb + cc)];
                    }
                    for l in 0..jb {
                        s -= y[(ib + r, l)] * tb[(l, jb + cc)];
                    }
                    rhs[(r, cc)] = s;
                }
            }

            // Kronecker system (I_q ⊗ T_A_blk + T_B_blkᵀ ⊗ I_p) vec(Y_blk) = vec(rhs).
            let dim = p * q;
            let mut k_mat = DMatrix::<f64>::zeros(dim, dim);
            for cc in 0..q {
                for r in 0..p {
                    let row = cc * p + r;
                    for r2 in 0..p {
                        k_mat[(row, cc * p + r2)] += ta[(ib + r, ib + r2)];
                    }
                    for c2 in 0..q {
                        k_mat[(row, c2 * p + r)] += tb[(jb + c2, jb + cc)];
                    }
                }
            }

            let svd = k_mat.clone().svd(true, true);
            let smallest = svd.singular_values.min();
            if smallest <= pivot_tol {
                return Err(Error::SingularEquation(format!(
                    "eigenvalue resonance: diagonal block is singular (σ_min = {smallest:.3e})"
                )));
            }
            let rhs_vec = DMatrix::from_column_slice(dim, 1, rhs.as_slice());
            let sol = svd
                .solve(&rhs_vec, 0.0)
                .map_err(|e| Error::SingularEquation(e.to_string()))?;
            for cc in 0..q {
                for r in 0..p {
                    y[(ib + r, jb + cc)] = sol[(cc * p + r, 0)];
                }
            }
        }
    }
    Ok(y)
}
