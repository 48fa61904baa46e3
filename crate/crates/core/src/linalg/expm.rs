//! Matrix exponential by scaling-and-squaring with a fixed order-13 Padé
//! approximant.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::inf_norm;

/// Padé [13/13] numerator coefficients for the exponential; the denominator
/// uses the same coefficients with alternating signs.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Scaling threshold: the argument is halved until its ∞-norm is at most this.
const THETA_13: f64 = 5.4;

/// Matrix exponential `e^A`.
///
/// Scaling-and-squaring: `A` is divided by `2^k` until `‖A/2^k‖_∞ ≤ 5.4`, the
/// order-13 Padé approximant is evaluated, and the result squared `k` times.
/// `expm(0) = I` exactly.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "expm requires a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    let norm = inf_norm(a);
    let k = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a / 2f64.powi(k as i32);

    let mut r = pade13(&scaled)?;
    for _ in 0..k {
        r = &r * &r;
    }
    debug_assert_eq!(r.nrows(), n);
    Ok(r)
}

fn pade13(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let b = &PADE13;

    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;

    // U = A (A6 (b13 A6 + b11 A4 + b9 A2) + b7 A6 + b5 A4 + b3 A2 + b1 I)
    let u_inner = &a6 * (b[13] * &a6 + b[11] * &a4 + b[9] * &a2)
        + b[7] * &a6
        + b[5] * &a4
        + b[3] * &a2
        + b[1] * &eye;
    let u = a * u_inner;

    // V = A6 (b12 A6 + b10 A4 + b8 A2) + b6 A6 + b4 A4 + b2 A2 + b0 I
    let v = &a6 * (b[12] * &a6 + b[10] * &a4 + b[8] * &a2)
        + b[6] * &a6
        + b[4] * &a4
        + b[2] * &a2
        + b[0] * &eye;

    // (V - U) X = (V + U)
    let lhs = &v - &u;
    let rhs = &v + &u;
    lhs.lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularEquation("Padé denominator is singular".into()))
}
