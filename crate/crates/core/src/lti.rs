//! The LTI smoothing model `ẋ = Ax`, `y = Cx` observed at discrete times
//! with i.i.d. Gaussian noise, and everything it induces: the stacked
//! forward map, the block-diagonal observation covariance, impulse
//! responses of the prior-driven system, and noise-free simulation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{expm, is_symmetric, symmetrize, PsdFactor};
use crate::posterior::GaussianPrior;

/// Time-invariant model: state dynamics `A`, output map `C`, and
/// per-observation noise covariance `Γ_ε ≻ 0`.
#[derive(Debug, Clone)]
pub struct LtiSystem {
    a: DMatrix<f64>,
    c: DMatrix<f64>,
    gamma_eps: DMatrix<f64>,
    gamma_eps_inv: DMatrix<f64>,
    gamma_eps_inv_sqrt: DMatrix<f64>,
}

impl LtiSystem {
    /// Validates dimensions, finiteness, and positive definiteness of `Γ_ε`;
    /// precomputes `Γ_ε⁻¹` and `Γ_ε^{-1/2}` for the hot paths.
    pub fn new(a: DMatrix<f64>, c: DMatrix<f64>, gamma_eps: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension(format!(
                "state matrix A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let d = a.nrows();
        if c.ncols() != d {
            return Err(Error::Dimension(format!(
                "output matrix C must have {} columns, got {}",
                d,
                c.ncols()
            )));
        }
        let d_out = c.nrows();
        if gamma_eps.shape() != (d_out, d_out) {
            return Err(Error::Dimension(format!(
                "noise covariance must be {d_out}x{d_out}, got {}x{}",
                gamma_eps.nrows(),
                gamma_eps.ncols()
            )));
        }
        for (name, m) in [("A", &a), ("C", &c), ("Γ_ε", &gamma_eps)] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("matrix {name} has non-finite entries")));
            }
        }
        if !is_symmetric(&gamma_eps, 1e-10) {
            return Err(Error::NotPd("noise covariance is not symmetric".into()));
        }

        let eig = symmetrize(&gamma_eps).symmetric_eigen();
        if eig.eigenvalues.min() <= 0.0 {
            return Err(Error::NotPd(format!(
                "noise covariance has eigenvalue {:.3e}",
                eig.eigenvalues.min()
            )));
        }
        let vecs = &eig.eigenvectors;
        let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
        let inv_sqrt_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
        let gamma_eps_inv = vecs * inv_diag * vecs.transpose();
        let gamma_eps_inv_sqrt = vecs * inv_sqrt_diag * vecs.transpose();

        Ok(Self { a, c, gamma_eps, gamma_eps_inv, gamma_eps_inv_sqrt })
    }

    /// State dimension `d`.
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Output dimension `d_out`.
    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn gamma_eps(&self) -> &DMatrix<f64> {
        &self.gamma_eps
    }

    pub fn gamma_eps_inv(&self) -> &DMatrix<f64> {
        &self.gamma_eps_inv
    }

    pub fn gamma_eps_inv_sqrt(&self) -> &DMatrix<f64> {
        &self.gamma_eps_inv_sqrt
    }
}

/// Strictly increasing observation times `t_1 < … < t_n` below a horizon
/// `T` used by the time-limited variants. `t_1 = 0` is permitted as a
/// limiting case.
#[derive(Debug, Clone)]
pub struct ObservationGrid {
    times: Vec<f64>,
    horizon: f64,
}

impl ObservationGrid {
    pub fn new(times: Vec<f64>, horizon: f64) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Invalid("observation grid must be nonempty".into()));
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::Invalid("observation times must be finite and non-negative".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid("observation times must be strictly increasing".into()));
        }
        let t_last = *times.last().unwrap();
        if !(horizon > t_last) {
            return Err(Error::Invalid(format!(
                "horizon {horizon} must exceed the last observation time {t_last}"
            )));
        }
        Ok(Self { times, horizon })
    }

    /// `t_k = k·dt` for `k = 1..=n`.
    pub fn equidistant(n: usize, dt: f64, horizon: f64) -> Result<Self> {
        if n == 0 || !(dt > 0.0) {
            return Err(Error::Invalid("equidistant grid needs n ≥ 1 and dt > 0".into()));
        }
        Self::new((1..=n).map(|k| k as f64 * dt).collect(), horizon)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// A fully specified smoothing problem: model, observation times, prior on
/// the initial condition, and one data realization.
#[derive(Debug, Clone)]
pub struct SmoothingProblem {
    pub system: LtiSystem,
    pub grid: ObservationGrid,
    pub prior: GaussianPrior,
    pub data: DVector<f64>,
}

impl SmoothingProblem {
    pub fn new(
        system: LtiSystem,
        grid: ObservationGrid,
        prior: GaussianPrior,
        data: DVector<f64>,
    ) -> Result<Self> {
        if prior.dim() != system.state_dim() {
            return Err(Error::Dimension(format!(
                "prior dimension {} does not match state dimension {}",
                prior.dim(),
                system.state_dim()
            )));
        }
        let expected = grid.len() * system.output_dim();
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "data length {} does not match n·d_out = {}",
                data.len(),
                expected
            )));
        }
        Ok(Self { system, grid, prior, data })
    }
}

/// Stacked forward map `G` with k-th block row `C e^{A t_k}`.
///
/// Each block is computed from `A·t_k` independently (no step-chaining) and
/// written by index, so the result does not depend on evaluation order.
pub fn forward_map(system: &LtiSystem, grid: &ObservationGrid) -> DMatrix<f64> {
    let d = system.state_dim();
    let d_out = system.output_dim();
    let mut g = DMatrix::<f64>::zeros(grid.len() * d_out, d);
    for (k, &t) in grid.times().iter().enumerate() {
        let e = expm(&(system.a() * t)).expect("A·t is square and finite");
        g.view_mut((k * d_out, 0), (d_out, d)).copy_from(&(system.c() * e));
    }
    g
}

/// Block-diagonal observation covariance `Γ_obs = diag(Γ_ε, …, Γ_ε)` along
/// with its inverse and inverse principal square root in the same layout.
#[derive(Debug, Clone)]
pub struct ObsCovariance {
    pub full: DMatrix<f64>,
    pub inv: DMatrix<f64>,
    pub inv_sqrt: DMatrix<f64>,
}

/// Builds `Γ_obs` for `n` observations.
pub fn obs_covariance(system: &LtiSystem, n: usize) -> ObsCovariance {
    assert!(n >= 1, "observation count must be at least 1");
    let block_diag = |block: &DMatrix<f64>| {
        let d_out = block.nrows();
        let mut m = DMatrix::<f64>::zeros(n * d_out, n * d_out);
        for k in 0..n {
            m.view_mut((k * d_out, k * d_out), (d_out, d_out)).copy_from(block);
        }
        m
    };
    ObsCovariance {
        full: block_diag(system.gamma_eps()),
        inv: block_diag(system.gamma_eps_inv()),
        inv_sqrt: block_diag(system.gamma_eps_inv_sqrt()),
    }
}

/// Impulse response `h(t) = Γ_ε^{-1/2} C e^{At} L_pr` of the prior-driven
/// system.
pub fn impulse_response(system: &LtiSystem, l_pr: &PsdFactor, t: f64) -> DMatrix<f64> {
    debug_assert!(t >= 0.0, "impulse response is evaluated for t ≥ 0");
    let e = expm(&(system.a() * t)).expect("A·t is square and finite");
    system.gamma_eps_inv_sqrt() * system.c() * e * l_pr.factor()
}

/// Noise-free outputs `y(t_k) = C e^{A t_k} p`, stacked.
pub fn simulate_outputs(system: &LtiSystem, grid: &ObservationGrid, p: &DVector<f64>) -> DVector<f64> {
    assert_eq!(p.len(), system.state_dim(), "initial condition has wrong length");
    let d_out = system.output_dim();
    let mut out = DVector::<f64>::zeros(grid.len() * d_out);
    for (k, &t) in grid.times().iter().enumerate() {
        let e = expm(&(system.a() * t)).expect("A·t is square and finite");
        out.rows_mut(k * d_out, d_out).copy_from(&(system.c() * e * p));
    }
    out
}
