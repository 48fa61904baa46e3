//! Square-root balanced truncation of the prior-driven system.
//!
//! The Gramians are factored as `P = L Lᵀ`, `Q = R Rᵀ`; the SVD
//! `Rᵀ L = U Σ Zᵀ` yields the Hankel singular values and the projection
//! bases `W_r = L Z_r Σ_r^{-1/2}`, `V_r = R U_r Σ_r^{-1/2}`, so that
//! `V_rᵀ P V_r = Σ_r = W_rᵀ Q W_r` and `W_rᵀ V_r = I`.
//!
//! Balancing is performed once at the full numerical Hankel rank; any
//! requested truncation rank is a slice of that realization, which makes
//! rank sweeps cheap and slicing trivially consistent with direct
//! truncation.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gramians::{gramians_infinite, gramians_limited, Horizon};
use crate::linalg::{expm, psd_sqrt_factor, PsdFactor, DEFAULT_RANK_TOL};
use crate::lti::{LtiSystem, ObservationGrid};

/// Rank-`r` reduced prior-driven system together with its projection bases
/// and the full Hankel singular value list.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    /// Retained rank.
    pub r: usize,
    /// Reduced dynamics `A_r = V_rᵀ A W_r`.
    pub a_r: DMatrix<f64>,
    /// Reduced output map `C_r = C W_r`.
    pub c_r: DMatrix<f64>,
    /// Reduced prior input port `L_pr,r = V_rᵀ L_pr`.
    pub l_pr_r: DMatrix<f64>,
    /// Left basis (d × r).
    pub v_r: DMatrix<f64>,
    /// Right basis (d × r).
    pub w_r: DMatrix<f64>,
    /// All Hankel singular values, non-increasing.
    pub hsv: Vec<f64>,
    /// Count of HSVs above the relative cutoff `1e-12 σ₁`.
    pub hankel_rank: usize,
    /// Which Gramians produced the bases.
    pub variant: Horizon,
}

/// Truncated directions `r+1 .. m` (m = numerical Hankel rank) needed by
/// the trace-form error certificates.
#[derive(Debug, Clone)]
pub struct TruncatedBundle {
    /// Truncated HSVs `σ_{r+1} … σ_m`.
    pub sigma_bar: Vec<f64>,
    /// `L̄_pr = V̄ᵀ L_pr`, (m−r) × s.
    pub l_pr_bar: DMatrix<f64>,
    /// `Ā = V_rᵀ A W̄`, r × (m−r).
    pub a_bar: DMatrix<f64>,
    /// Truncated left basis, d × (m−r).
    pub v_bar: DMatrix<f64>,
    /// Truncated right basis, d × (m−r).
    pub w_bar: DMatrix<f64>,
    /// Directions dropped entirely because `σ_i ≤ 1e-12 σ₁`.
    pub discarded: usize,
}

/// Fully balanced realization at the numerical Hankel rank; individual
/// truncation ranks are slices of this.
#[derive(Debug, Clone)]
pub struct BalancedRealization {
    v: DMatrix<f64>,
    w: DMatrix<f64>,
    a_bal: DMatrix<f64>,
    c_bal: DMatrix<f64>,
    l_bal: DMatrix<f64>,
    hsv: Vec<f64>,
    hankel_rank: usize,
    variant: Horizon,
}

impl BalancedRealization {
    /// Balances the prior-driven system `(A, L_pr, Γ_ε^{-1/2} C)` using the
    /// Gramians of the requested variant.
    pub fn new(system: &LtiSystem, l_pr: &PsdFactor, variant: Horizon) -> Result<Self> {
        if l_pr.dim() != system.state_dim() {
            return Err(Error::Dimension(format!(
                "prior factor dimension {} does not match state dimension {}",
                l_pr.dim(),
                system.state_dim()
            )));
        }
        let gamma_pr = l_pr.covariance();
        let pair = match variant {
            Horizon::Infinite => gramians_infinite(system, &gamma_pr)?,
            Horizon::Limited(t_end) => gramians_limited(system, &gamma_pr, t_end)?,
        };
        let reach_factor = psd_sqrt_factor(&pair.p, DEFAULT_RANK_TOL)?;
        let obs_factor = psd_sqrt_factor(&pair.q, DEFAULT_RANK_TOL)?;
        if reach_factor.cols() == 0 || obs_factor.cols() == 0 {
            return Err(Error::Degenerate(
                "a Gramian vanishes; the prior-driven system carries no energy".into(),
            ));
        }

        let product = obs_factor.factor().transpose() * reach_factor.factor();
        let mut svd = product.svd(true, true);
        sign_fix(&mut svd);
        let u = svd.u.as_ref().expect("svd with u");
        let v_t = svd.v_t.as_ref().expect("svd with v_t");

        let hsv: Vec<f64> = svd.singular_values.iter().copied().collect();
        let sigma_1 = hsv.first().copied().unwrap_or(0.0);
        if sigma_1 <= 0.0 {
            return Err(Error::Degenerate("all Hankel singular values vanish".into()));
        }
        let hankel_rank = hsv.iter().filter(|&&s| s > DEFAULT_RANK_TOL * sigma_1).count();

        // V = R U_m Σ_m^{-1/2}, W = L Z_m Σ_m^{-1/2}.
        let mut v = obs_factor.factor() * u.columns(0, hankel_rank);
        let mut w = reach_factor.factor() * v_t.rows(0, hankel_rank).transpose();
        for i in 0..hankel_rank {
            let scale = 1.0 / hsv[i].sqrt();
            v.column_mut(i).scale_mut(scale);
            w.column_mut(i).scale_mut(scale);
        }

        let a_bal = v.transpose() * system.a() * &w;
        let c_bal = system.c() * &w;
        let l_bal = v.transpose() * l_pr.factor();

        Ok(Self { v, w, a_bal, c_bal, l_bal, hsv, hankel_rank, variant })
    }

    /// All Hankel singular values.
    pub fn hsv(&self) -> &[f64] {
        &self.hsv
    }

    /// Number of HSVs above the relative cutoff.
    pub fn hankel_rank(&self) -> usize {
        self.hankel_rank
    }

    pub fn variant(&self) -> Horizon {
        self.variant
    }

    /// Slices the realization at rank `r`, keeping the leading `r` singular
    /// values and collecting the remaining `m − r` directions in the bundle.
    pub fn truncate(&self, r: usize) -> Result<(ReducedModel, TruncatedBundle)> {
        if r == 0 {
            return Err(Error::Invalid("truncation rank must be at least 1".into()));
        }
        if r > self.hankel_rank {
            return Err(Error::RankTooLarge { requested: r, available: self.hankel_rank });
        }
        let m = self.hankel_rank;
        let tail = m - r;

        let model = ReducedModel {
            r,
            a_r: self.a_bal.view((0, 0), (r, r)).clone_owned(),
            c_r: self.c_bal.columns(0, r).clone_owned(),
            l_pr_r: self.l_bal.rows(0, r).clone_owned(),
            v_r: self.v.columns(0, r).clone_owned(),
            w_r: self.w.columns(0, r).clone_owned(),
            hsv: self.hsv.clone(),
            hankel_rank: m,
            variant: self.variant,
        };
        let bundle = TruncatedBundle {
            sigma_bar: self.hsv[r..m].to_vec(),
            l_pr_bar: self.l_bal.rows(r, tail).clone_owned(),
            a_bar: self.a_bal.view((0, r), (r, tail)).clone_owned(),
            v_bar: self.v.columns(r, tail).clone_owned(),
            w_bar: self.w.columns(r, tail).clone_owned(),
            discarded: self.hsv.len() - m,
        };
        Ok((model, bundle))
    }
}

/// Deterministic SVD signs: the largest-magnitude entry of each left
/// singular vector is made positive, flipping the right vector along.
fn sign_fix(svd: &mut nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>) {
    let u = svd.u.as_mut().expect("svd with u");
    let v_t = svd.v_t.as_mut().expect("svd with v_t");
    for i in 0..svd.singular_values.len() {
        let col = u.column(i);
        let mut pivot = 0;
        let mut best = 0.0;
        for (j, &val) in col.iter().enumerate() {
            if val.abs() > best {
                best = val.abs();
                pivot = j;
            }
        }
        if col[pivot] < 0.0 {
            u.column_mut(i).neg_mut();
            v_t.row_mut(i).neg_mut();
        }
    }
}

/// One-shot balance-and-truncate; equivalent to slicing the realization.
pub fn balance_and_truncate(
    system: &LtiSystem,
    l_pr: &PsdFactor,
    r: usize,
    variant: Horizon,
) -> Result<(ReducedModel, TruncatedBundle)> {
    BalancedRealization::new(system, l_pr, variant)?.truncate(r)
}

/// Reduced forward map `Ĝ = [C_r e^{A_r t_k}]_k V_rᵀ`; only r × r
/// exponentials are evaluated.
pub fn reduced_forward_map(model: &ReducedModel, grid: &ObservationGrid) -> DMatrix<f64> {
    let d_out = model.c_r.nrows();
    let r = model.r;
    let mut stacked = DMatrix::<f64>::zeros(grid.len() * d_out, r);
    for (k, &t) in grid.times().iter().enumerate() {
        let e = expm(&(&model.a_r * t)).expect("A_r·t is square and finite");
        stacked.view_mut((k * d_out, 0), (d_out, r)).copy_from(&(&model.c_r * e));
    }
    stacked * model.v_r.transpose()
}

/// Reduced impulse response `h_r(t) = Γ_ε^{-1/2} C_r e^{A_r t} L_pr,r`.
pub fn reduced_impulse_response(model: &ReducedModel, system: &LtiSystem, t: f64) -> DMatrix<f64> {
    debug_assert!(t >= 0.0, "impulse response is evaluated for t ≥ 0");
    let e = expm(&(&model.a_r * t)).expect("A_r·t is square and finite");
    system.gamma_eps_inv_sqrt() * &model.c_r * e * &model.l_pr_r
}
