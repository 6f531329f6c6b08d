//! Stability certificate for the LTI closed loop.
//!
//! The pipeline runs bottom-up: LMI feasibility for the reduced and
//! boundary-layer pairs, sandwich and decay gains of U_s and U_f, the
//! interconnection constants b₁–b₃, the slow-jump inflation λ₁/λ₂, the
//! composite weight d, the time-scale threshold ε*, and the envelope c₁, c₂.
//! Matrix norms are spectral norms throughout.

pub mod monitor;

use crate::ltimodel::ClosedLoop;
use crate::mati::{mati_bound, MatiError, MatiParams};
use crate::numerics::{mat_mul, spectral_norm, sym_eig_extremes, sym_eigenvalues, Matrix, NumericsError};
use crate::protocols::ProtocolConstants;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use monitor::{lyapunov_u, monitor_trajectory, LyapunovValues, MonitorReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertifyError {
    #[error("design constants invalid: {0}")]
    Invalid(String),
    #[error("constraint violated: {0}")]
    Constraint(String),
    #[error("LMI infeasible on the {side} side: largest eigenvalue {max_eig:e}")]
    LmiInfeasible { side: &'static str, max_eig: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Mati(#[from] MatiError),
}

pub type Result<T> = std::result::Result<T, CertifyError>;

/// Inputs to the certificate: Lyapunov matrices, gains and protocol data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignConstants {
    pub p_s: Matrix,
    pub p_f: Matrix,
    pub gamma_s: f64,
    pub gamma_f: f64,
    pub lambda_star_s: f64,
    pub lambda_star_f: f64,
    pub a_rho_s: f64,
    pub a_rho_f: f64,
    pub l_s: f64,
    pub l_f: f64,
    pub protocol_s: ProtocolConstants,
    pub protocol_f: ProtocolConstants,
    /// Bound on |∂W_s/∂e_s|.
    pub l1: f64,
    /// Bound on |∂W_f/∂e_f|.
    pub l1_fast: f64,
}

impl DesignConstants {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CertifyError::Invalid(m));
        for (name, lam_star, lam) in [
            ("slow", self.lambda_star_s, self.protocol_s.lambda),
            ("fast", self.lambda_star_f, self.protocol_f.lambda),
        ] {
            if !(lam_star > lam && lam_star < 1.0) {
                return bad(format!("{name} lambda_star {lam_star} must lie in ({lam}, 1)"));
            }
        }
        for (name, p) in [("P_s", &self.p_s), ("P_f", &self.p_f)] {
            let (lo, _) = sym_eig_extremes(p)?;
            if lo <= 0.0 {
                return bad(format!("{name} is not positive definite (lambda_min {lo:e})"));
            }
        }
        for (name, v) in [
            ("gamma_s", self.gamma_s),
            ("gamma_f", self.gamma_f),
            ("a_rho_s", self.a_rho_s),
            ("a_rho_f", self.a_rho_f),
            ("a_w_lower_s", self.protocol_s.a_w_lower),
            ("a_w_lower_f", self.protocol_f.a_w_lower),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("l_s", self.l_s), ("l_f", self.l_f), ("l1", self.l1), ("l1_fast", self.l1_fast)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be nonnegative, got {v}"));
            }
        }
        Ok(())
    }

    pub fn mati_params_slow(&self) -> MatiParams {
        MatiParams { l: self.l_s, gamma: self.gamma_s, lambda_star: self.lambda_star_s }
    }

    pub fn mati_params_fast(&self) -> MatiParams {
        MatiParams { l: self.l_f, gamma: self.gamma_f, lambda_star: self.lambda_star_f }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Slow,
    Fast,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Slow => "slow",
            Side::Fast => "fast",
        }
    }
}

struct LmiData<'a> {
    a11: &'a Matrix,
    a12: &'a Matrix,
    a_h: &'a Matrix,
    p: &'a Matrix,
    a_rho: f64,
    gamma: f64,
    a_w_lower: f64,
}

fn lmi_data<'a>(cl: &'a ClosedLoop, dc: &'a DesignConstants, side: Side) -> LmiData<'a> {
    match side {
        Side::Slow => LmiData {
            a11: &cl.a11s,
            a12: &cl.a12s,
            a_h: &cl.a21s,
            p: &dc.p_s,
            a_rho: dc.a_rho_s,
            gamma: dc.gamma_s,
            a_w_lower: dc.protocol_s.a_w_lower,
        },
        Side::Fast => LmiData {
            a11: &cl.a11f,
            a12: &cl.a12f,
            a_h: &cl.a21f,
            p: &dc.p_f,
            a_rho: dc.a_rho_f,
            gamma: dc.gamma_f,
            a_w_lower: dc.protocol_f.a_w_lower,
        },
    }
}

fn assemble_lmi(d: &LmiData) -> Result<Matrix> {
    let n = d.a11.rows();
    let m = d.a12.cols();
    let pa = mat_mul(d.p, d.a11)?;
    let hh = mat_mul(&d.a_h.transpose(), d.a_h)?;
    let tl = pa.add(&pa.transpose())?.add(&Matrix::identity(n).scale(d.a_rho))?.add(&hh)?;
    let tr = mat_mul(d.p, d.a12)?;
    let br = Matrix::identity(m).scale(d.a_rho - d.gamma * d.gamma * d.a_w_lower * d.a_w_lower);
    Ok(Matrix::block(&[&[&tl, &tr], &[&tr.transpose(), &br]])?)
}

/// [[P A + Aᵀ P + a_ρ I + A_Hᵀ A_H, P A12], [A12ᵀ P, (a_ρ − γ² a̲_W²) I]].
pub fn lmi_matrix(cl: &ClosedLoop, dc: &DesignConstants, side: Side) -> Result<Matrix> {
    assemble_lmi(&lmi_data(cl, dc, side))
}

pub fn lmi_max_eigenvalue(cl: &ClosedLoop, dc: &DesignConstants, side: Side) -> Result<f64> {
    Ok(sym_eig_extremes(&lmi_matrix(cl, dc, side)?)?.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LmiFeasibility {
    pub slow: bool,
    pub fast: bool,
    pub slow_max_eig: f64,
    pub fast_max_eig: f64,
}

pub fn lmi_feasible(cl: &ClosedLoop, dc: &DesignConstants, tol: f64) -> Result<LmiFeasibility> {
    let slow_max_eig = lmi_max_eigenvalue(cl, dc, Side::Slow)?;
    let fast_max_eig = lmi_max_eigenvalue(cl, dc, Side::Fast)?;
    Ok(LmiFeasibility { slow: slow_max_eig <= tol, fast: fast_max_eig <= tol, slow_max_eig, fast_max_eig })
}

/// Best point of a relative grid search around the given LMI data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationReport {
    pub side: Side,
    pub relative_radius: f64,
    pub nominal_max_eig: f64,
    pub best_max_eig: f64,
    pub feasible: bool,
    pub p: Matrix,
    pub gamma: f64,
    pub a_rho: f64,
}

/// Scans every combination of relative offsets in {−r, −r/2, 0, r/2, r} on the
/// upper-triangular entries of P, γ and a_ρ, keeping P symmetric.
pub fn lmi_perturbation_search(
    cl: &ClosedLoop,
    dc: &DesignConstants,
    side: Side,
    radius: f64,
) -> Result<PerturbationReport> {
    let base = lmi_data(cl, dc, side);
    let nominal_max_eig = sym_eig_extremes(&assemble_lmi(&base)?)?.1;
    let n = base.p.rows();
    let upper: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let steps = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let dims = upper.len() + 2;
    let total = steps.len().pow(dims as u32);
    let mut best = (nominal_max_eig, base.p.clone(), base.gamma, base.a_rho);
    for code in 0..total {
        let mut c = code;
        let mut factor = |_: usize| {
            let s = steps[c % steps.len()];
            c /= steps.len();
            1.0 + radius * s
        };
        let mut p = base.p.clone();
        for (k, &(i, j)) in upper.iter().enumerate() {
            let v = base.p.get(i, j) * factor(k);
            p.set(i, j, v);
            p.set(j, i, v);
        }
        let gamma = base.gamma * factor(upper.len());
        let a_rho = base.a_rho * factor(upper.len() + 1);
        let trial = LmiData { p: &p, gamma, a_rho, ..base };
        let eig = sym_eig_extremes(&assemble_lmi(&trial)?)?.1;
        if eig < best.0 {
            best = (eig, p, gamma, a_rho);
        }
    }
    Ok(PerturbationReport {
        side,
        relative_radius: radius,
        nominal_max_eig,
        best_max_eig: best.0,
        feasible: best.0 <= 0.0,
        p: best.1,
        gamma: best.2,
        a_rho: best.3,
    })
}

/// Flow decay and sandwich constants of U_s and U_f.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub a_s: f64,
    pub a_f: f64,
    pub a_vs_lower: f64,
    pub a_vs_upper: f64,
    pub a_vf_lower: f64,
    pub a_vf_upper: f64,
    pub a_us_lower: f64,
    pub a_us_upper: f64,
    pub a_uf_lower: f64,
    pub a_uf_upper: f64,
    pub a_psi_s: f64,
    pub a_psi_f: f64,
}

pub fn exponential_gains(dc: &DesignConstants) -> Result<Gains> {
    dc.validate()?;
    let (vs_lo, vs_hi) = sym_eig_extremes(&dc.p_s)?;
    let (vf_lo, vf_hi) = sym_eig_extremes(&dc.p_f)?;
    let ps = &dc.protocol_s;
    let pf = &dc.protocol_f;
    let a_us_lower = vs_lo.min(dc.gamma_s * dc.lambda_star_s * ps.a_w_lower.powi(2));
    let a_us_upper = vs_hi.max(dc.gamma_s / dc.lambda_star_s * ps.a_w_upper.powi(2));
    let a_uf_lower = vf_lo.min(dc.gamma_f * dc.lambda_star_f * pf.a_w_lower.powi(2));
    let a_uf_upper = vf_hi.max(dc.gamma_f / dc.lambda_star_f * pf.a_w_upper.powi(2));
    Ok(Gains {
        a_s: dc.a_rho_s * ps.a_w_lower.powi(2).min(1.0),
        a_f: dc.a_rho_f * pf.a_w_lower.powi(2).min(1.0),
        a_vs_lower: vs_lo,
        a_vs_upper: vs_hi,
        a_vf_lower: vf_lo,
        a_vf_upper: vf_hi,
        a_us_lower,
        a_us_upper,
        a_uf_lower,
        a_uf_upper,
        a_psi_s: a_us_lower.powf(-0.5),
        a_psi_f: a_uf_lower.powf(-0.5),
    })
}

/// (b₁, b₂, b₃) from stacked bilinear-form matrices.
pub fn interconnection_constants(cl: &ClosedLoop, dc: &DesignConstants) -> Result<(f64, f64, f64)> {
    let c_s = dc.gamma_s / dc.lambda_star_s * dc.protocol_s.a_w_upper * dc.l1;
    let c_f = dc.gamma_f / dc.lambda_star_f * dc.protocol_f.a_w_upper * dc.l1_fast;

    let ps13 = mat_mul(&dc.p_s, &cl.a13)?;
    let ps14 = mat_mul(&dc.p_s, &cl.a14)?;
    let lam_b1 = Matrix::block(&[&[&ps13, &ps14], &[&cl.a23.scale(c_s), &cl.a24.scale(c_s)]])?;
    let b1 = spectral_norm(&lam_b1.scale(2.0));

    let pf_h = mat_mul(&dc.p_f, &cl.h_bar())?;
    let s_slow = Matrix::block(&[&[&cl.a11s, &cl.a12s], &[&cl.a21s, &cl.a22s]])?;
    let s_fast = Matrix::block(&[&[&cl.a13, &cl.a14], &[&cl.a23, &cl.a24]])?;
    let k_slow = mat_mul(&cl.ax_f, &Matrix::hstack(&[&cl.a11s, &cl.a12s])?)?;
    let k_fast = mat_mul(&cl.ax_f, &Matrix::hstack(&[&cl.a13, &cl.a14])?)?;

    let lam_b2 = Matrix::vstack(&[&mat_mul(&pf_h, &s_slow)?, &k_slow.scale(c_f)])?;
    let lam_b3 = Matrix::vstack(&[&mat_mul(&pf_h, &s_fast)?, &k_fast.scale(c_f)])?;
    Ok((b1, spectral_norm(&lam_b2.scale(2.0)), spectral_norm(&lam_b3.scale(2.0))))
}

/// (λ₁, λ₂): growth of U_f across a slow transmission.
pub fn slow_jump_constants(cl: &ClosedLoop, dc: &DesignConstants) -> Result<(f64, f64)> {
    let g = mat_mul(&cl.a33_inv, &cl.a32)?;
    let pg = mat_mul(&dc.p_f, &g)?;
    let gpg = mat_mul(&g.transpose(), &pg)?;
    let aw = dc.protocol_s.a_w_lower;
    let (vf_lo, _) = sym_eig_extremes(&dc.p_f)?;
    let lambda1 = spectral_norm(&gpg) / (aw * aw);
    let lambda2 = 2.0 / (aw * vf_lo.sqrt()) * spectral_norm(&pg);
    Ok((lambda1, lambda2))
}

/// Hand-specialized constants for the example loop, written in its scalar
/// parameters and the entries of P_s, P_f. Used as an independent check on
/// the generic path.
pub mod example_fixture {
    use super::*;
    use crate::ltimodel::example::*;

    pub fn lambda_b1(dc: &DesignConstants) -> Matrix {
        let (p11, p12, p22) = (dc.p_s.get(0, 0).abs(), dc.p_s.get(0, 1).abs(), dc.p_s.get(1, 1).abs());
        let c = dc.gamma_s / dc.lambda_star_s;
        Matrix::from_rows(&[
            &[A2 * p11, A6 * p12, 0.0],
            &[A2 * p12, 0.0, A6 * p22],
            &[0.0, c * A6 * K, c * A6 * K],
        ])
        .scale(2.0)
    }

    pub fn lambda_b2(dc: &DesignConstants) -> Matrix {
        let (q12, q22) = (dc.p_f.get(0, 1).abs(), dc.p_f.get(1, 1).abs());
        let c = dc.gamma_f / dc.lambda_star_f;
        let r = A3 / A4;
        let nbar = N1 - N2;
        Matrix::from_rows(&[
            &[A1 * r * q12, A1 * r * q22, A1 * c],
            &[r * nbar * K * q12, r * nbar * K * q12, nbar * K * c],
            &[r * nbar * q12, r * nbar * q22, nbar * c],
        ])
        .scale(2.0)
    }

    /// Symmetric; the starred entries mirror the lower triangle.
    pub fn lambda_b3(dc: &DesignConstants) -> Matrix {
        let (q12, q22) = (dc.p_f.get(0, 1).abs(), dc.p_f.get(1, 1).abs());
        let c = dc.gamma_f / dc.lambda_star_f;
        let r = A3 / A4;
        Matrix::from_rows(&[
            &[2.0 * A2 * r * q12, A2 * r * q22, A2 * c],
            &[A2 * r * q22, 0.0, 0.0],
            &[A2 * c, 0.0, 0.0],
        ])
    }

    pub fn interconnection(dc: &DesignConstants) -> Result<(f64, f64, f64)> {
        let b3 = sym_eig_extremes(&lambda_b3(dc))?.1;
        Ok((spectral_norm(&lambda_b1(dc)), spectral_norm(&lambda_b2(dc)), b3))
    }

    pub fn slow_jump(dc: &DesignConstants) -> Result<(f64, f64)> {
        let (q11, q12) = (dc.p_f.get(0, 0).abs(), dc.p_f.get(0, 1).abs());
        let (lo, _) = sym_eig_extremes(&dc.p_f)?;
        let r = N2 / A2;
        Ok((r * r * q11, 2.0 * r * (q11 + q12) / lo.sqrt()))
    }
}

/// Positive root of a·X² + b·X + c = 0 with c < 0. Falls back to −c/b when
/// a = 0, and to 1 when a = b = 0 (every positive X works).
pub fn positive_quadratic_root(a: f64, b: f64, c: f64) -> Result<f64> {
    if c >= 0.0 {
        return Err(CertifyError::Constraint(format!(
            "quadratic constant term must be negative, got {c:e}; lambda_decay is too small"
        )));
    }
    if a == 0.0 && b == 0.0 {
        return Ok(1.0);
    }
    if a == 0.0 {
        return Ok(-c / b);
    }
    Ok((-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum WeightMode {
    /// Practical stability with flow decay rate μ₁ < μ.
    Spas { mu1: f64 },
    Uges,
}

/// Slow-jump data entering the composite weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightInputs {
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma_s: f64,
    pub lambda_star_s: f64,
}

/// a_d(d) = 1 + λ₁/(γλ*)·d + ½(λ₂/(γλ*) + λ₂)·√d.
pub fn a_d(d: f64, lambda1: f64, lambda2: f64, gamma_s: f64, lambda_star_s: f64) -> f64 {
    let g = gamma_s * lambda_star_s;
    1.0 + lambda1 / g * d + 0.5 * (lambda2 / g + lambda2) * d.sqrt()
}

/// The weight d with a_d(d)·e^{−rate·miati_s} = λ, where the rate is μ
/// (UGES) or μ₁ (SPAS). a_d is quadratic in √d.
pub fn composite_weight(w: WeightInputs, lambda_decay: f64, mu: f64, miati_s: f64, mode: WeightMode) -> Result<f64> {
    let rate = match mode {
        WeightMode::Uges => mu,
        WeightMode::Spas { mu1 } => {
            if !(mu1 > 0.0 && mu1 < mu) {
                return Err(CertifyError::Constraint(format!("mu1 {mu1} must lie in (0, mu = {mu})")));
            }
            mu1
        }
    };
    let g = w.gamma_s * w.lambda_star_s;
    let a = w.lambda1 / g;
    let b = 0.5 * (w.lambda2 / g + w.lambda2);
    let c = 1.0 - lambda_decay * (rate * miati_s).exp();
    let root = positive_quadratic_root(a, b, c)?;
    if a == 0.0 && b == 0.0 {
        return Ok(root);
    }
    Ok(root * root)
}

pub fn epsilon_star(
    d: f64,
    mu: f64,
    a_s: f64,
    a_f: f64,
    a_psi_s: f64,
    a_psi_f: f64,
    b1: f64,
    b2: f64,
    b3: f64,
) -> Result<f64> {
    let ceiling = a_s * a_psi_s * a_psi_s;
    if mu >= ceiling {
        return Err(CertifyError::Constraint(format!("mu {mu} must be below a_s a_psi_s^2 = {ceiling}")));
    }
    if d <= 0.0 {
        return Err(CertifyError::Constraint(format!("d must be positive, got {d}")));
    }
    let cross = (b1 + d * b2).powi(2) * a_psi_s.powi(2) * a_psi_f.powi(2) / (4.0 * (ceiling - mu));
    let inv = a_psi_f / (a_f * d) * (cross + mu * d) + b3 * a_psi_f.powi(2) / a_f;
    Ok(1.0 / inv)
}

/// (c₁, c₂) of the envelope |ξ(t,j)| ≤ c₁|ξ(0,0)|e^{−c₂(t+j)}.
pub fn decay_constants(
    lambda_decay: f64,
    a_d: f64,
    a_u_lower: f64,
    a_u_upper: f64,
    mati_s: f64,
    miati_s: f64,
    h1: f64,
) -> (f64, f64) {
    let ln_inv = (1.0 / lambda_decay).ln();
    let c1 = h1 * h1 * (a_d * a_u_upper / (lambda_decay * a_u_lower)).sqrt() * (ln_inv * miati_s / (4.0 * mati_s)).exp();
    let c2 = ln_inv / (4.0 * mati_s) * miati_s.min(1.0);
    (c1, c2)
}

/// Free choices in the certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignKnobs {
    /// Explicit μ; otherwise `mu_fraction · a_s a_ψs²`.
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default = "default_mu_fraction")]
    pub mu_fraction: f64,
    /// Explicit λ; otherwise the geometric midpoint of (e^{−μ miati_s}, 1).
    #[serde(default)]
    pub lambda_decay: Option<f64>,
}

fn default_mu_fraction() -> f64 {
    0.66
}

impl Default for DesignKnobs {
    fn default() -> Self {
        DesignKnobs { mu: None, mu_fraction: default_mu_fraction(), lambda_decay: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub mati_s_bound: f64,
    pub mati_f_bound_fast_time: f64,
    pub miati_s: f64,
    pub mati_s: f64,
    pub gains: Gains,
    pub a_s: f64,
    pub a_f: f64,
    pub a_us_lower: f64,
    pub a_us_upper: f64,
    pub a_uf_lower: f64,
    pub a_uf_upper: f64,
    pub a_psi_s: f64,
    pub a_psi_f: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu: f64,
    pub mu_ceiling: f64,
    pub lambda_decay: f64,
    pub lambda_decay_floor: f64,
    pub d_star: f64,
    pub a_d: f64,
    pub a_u_lower: f64,
    pub a_u_upper: f64,
    pub epsilon_star: f64,
    /// Physical fast MATI available at ε = ε*.
    pub mati_f_at_epsilon_star: f64,
    /// Fast MIATI ceiling at ε = ε*, half the fast MATI.
    pub miati_f_at_epsilon_star: f64,
    pub h1: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Runs every constant of the certificate for given slow timing bounds.
pub fn build_certificate(
    cl: &ClosedLoop,
    dc: &DesignConstants,
    miati_s: f64,
    mati_s: f64,
    knobs: &DesignKnobs,
) -> Result<Certificate> {
    dc.validate()?;
    let mati_s_bound = mati_bound(&dc.mati_params_slow())?;
    let mati_f_bound = mati_bound(&dc.mati_params_fast())?;
    if !(miati_s > 0.0 && miati_s <= mati_s) {
        return Err(CertifyError::Constraint(format!("need 0 < miati_s ({miati_s}) <= mati_s ({mati_s})")));
    }
    if mati_s > mati_s_bound {
        return Err(CertifyError::Constraint(format!(
            "mati_s {mati_s} exceeds the slow bound {mati_s_bound}"
        )));
    }
    let g = exponential_gains(dc)?;
    let (b1, b2, b3) = interconnection_constants(cl, dc)?;
    let (lambda1, lambda2) = slow_jump_constants(cl, dc)?;

    let mu_ceiling = g.a_s * g.a_psi_s * g.a_psi_s;
    let mu = knobs.mu.unwrap_or(knobs.mu_fraction * mu_ceiling);
    if !(mu > 0.0 && mu < mu_ceiling) {
        return Err(CertifyError::Constraint(format!("mu {mu} must lie in (0, {mu_ceiling})")));
    }
    let lambda_decay_floor = (-mu * miati_s).exp();
    let lambda_decay = knobs.lambda_decay.unwrap_or(lambda_decay_floor.sqrt());
    if !(lambda_decay > lambda_decay_floor && lambda_decay < 1.0) {
        return Err(CertifyError::Constraint(format!(
            "lambda_decay {lambda_decay} must lie in ({lambda_decay_floor}, 1)"
        )));
    }
    let w = WeightInputs { lambda1, lambda2, gamma_s: dc.gamma_s, lambda_star_s: dc.lambda_star_s };
    let d_star = composite_weight(w, lambda_decay, mu, miati_s, WeightMode::Uges)?;
    let ad = a_d(d_star, lambda1, lambda2, dc.gamma_s, dc.lambda_star_s);
    let eps = epsilon_star(d_star, mu, g.a_s, g.a_f, g.a_psi_s, g.a_psi_f, b1, b2, b3)?;
    let a_u_lower = g.a_us_lower.min(d_star * g.a_uf_lower);
    let a_u_upper = g.a_us_upper.max(d_star * g.a_uf_upper);
    let h1 = 1.0 + spectral_norm(&cl.h_bar());
    let (c1, c2) = decay_constants(lambda_decay, ad, a_u_lower, a_u_upper, mati_s, miati_s, h1);
    Ok(Certificate {
        mati_s_bound,
        mati_f_bound_fast_time: mati_f_bound,
        miati_s,
        mati_s,
        gains: g,
        a_s: g.a_s,
        a_f: g.a_f,
        a_us_lower: g.a_us_lower,
        a_us_upper: g.a_us_upper,
        a_uf_lower: g.a_uf_lower,
        a_uf_upper: g.a_uf_upper,
        a_psi_s: g.a_psi_s,
        a_psi_f: g.a_psi_f,
        b1,
        b2,
        b3,
        lambda1,
        lambda2,
        mu,
        mu_ceiling,
        lambda_decay,
        lambda_decay_floor,
        d_star,
        a_d: ad,
        a_u_lower,
        a_u_upper,
        epsilon_star: eps,
        mati_f_at_epsilon_star: eps * mati_f_bound,
        miati_f_at_epsilon_star: 0.5 * eps * mati_f_bound,
        h1,
        c1,
        c2,
    })
}

/// All eigenvalues of the LMI matrix, for reports.
pub fn lmi_spectrum(cl: &ClosedLoop, dc: &DesignConstants, side: Side) -> Result<Vec<f64>> {
    Ok(sym_eigenvalues(&lmi_matrix(cl, dc, side)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltimodel::{example_closed_loop, example_fixture};

    fn dc() -> DesignConstants {
        example_fixture().2
    }

    #[test]
    fn gains_on_example() {
        let g = exponential_gains(&dc()).unwrap();
        assert!((g.a_s - 1.16).abs() < 1e-15);
        assert!((g.a_vs_lower - 1.7517).abs() < 1e-4);
        assert!((g.a_us_lower - 2.58 * 0.33).abs() < 1e-15);
        assert!((g.a_us_upper - g.a_vs_upper).abs() < 1e-15);
        assert!((g.a_psi_s.powi(2) * g.a_us_lower - 1.0).abs() < 1e-14);
    }

    #[test]
    fn slow_lmi_within_rounding() {
        let e = lmi_max_eigenvalue(&example_closed_loop(), &dc(), Side::Slow).unwrap();
        assert!(e <= 0.05, "{e}");
    }

    #[test]
    fn fast_lmi_bottom_right() {
        let m = lmi_matrix(&example_closed_loop(), &dc(), Side::Fast).unwrap();
        assert_eq!(m.shape(), (3, 3));
        assert!((m.get(2, 2) - (0.41 - 0.64 * 0.64)).abs() < 1e-15);
    }

    #[test]
    fn diagonal_lmi_construction() {
        let mut cl = example_closed_loop();
        cl.a11s = Matrix::identity(2).scale(-1.0);
        cl.a12s = Matrix::zeros(2, 1);
        cl.a21s = Matrix::zeros(1, 2);
        let mut d = dc();
        d.p_s = Matrix::identity(2);
        d.a_rho_s = 1.0;
        d.gamma_s = 2.0;
        let ev = lmi_spectrum(&cl, &d, Side::Slow).unwrap();
        assert_eq!(ev, vec![-3.0, -1.0, -1.0]);
        assert!(lmi_feasible(&cl, &d, 0.0).unwrap().slow);
    }

    #[test]
    fn quadratic_root_cases() {
        assert_eq!(positive_quadratic_root(0.0, 0.0, -1.0).unwrap(), 1.0);
        assert_eq!(positive_quadratic_root(0.0, 0.1, -0.5).unwrap(), 5.0);
        let r = positive_quadratic_root(1.0, 1.0, -1.0).unwrap();
        assert!((r - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
        assert!(positive_quadratic_root(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn weight_vacuous_and_root_property() {
        let zero = WeightInputs { lambda1: 0.0, lambda2: 0.0, gamma_s: 2.0, lambda_star_s: 0.5 };
        assert_eq!(composite_weight(zero, 0.9, 1.0, 0.3, WeightMode::Uges).unwrap(), 1.0);
        let w = WeightInputs { lambda1: 0.3, lambda2: 0.2, gamma_s: 2.0, lambda_star_s: 0.5 };
        let (lam, mu, tau) = (0.9, 1.0, 0.3);
        let d = composite_weight(w, lam, mu, tau, WeightMode::Uges).unwrap();
        let ad = a_d(d, 0.3, 0.2, 2.0, 0.5);
        assert!((ad * (-mu * tau).exp() - lam).abs() < 1e-12);
        // Linear case: λ₁ = 0 leaves a_d linear in √d.
        let w = WeightInputs { lambda1: 0.0, lambda2: 0.2, gamma_s: 1.0, lambda_star_s: 1.0 };
        let d = composite_weight(w, 1.5, 0.0, 1.0, WeightMode::Uges).unwrap();
        assert!((d - 2.5f64.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn spas_weight_uses_mu1() {
        let w = WeightInputs { lambda1: 0.3, lambda2: 0.2, gamma_s: 2.0, lambda_star_s: 0.5 };
        let d = composite_weight(w, 0.95, 1.0, 0.3, WeightMode::Spas { mu1: 0.5 }).unwrap();
        let ad = a_d(d, 0.3, 0.2, 2.0, 0.5);
        assert!((ad * (-0.5f64 * 0.3).exp() - 0.95).abs() < 1e-12);
        assert!(composite_weight(w, 0.95, 1.0, 0.3, WeightMode::Spas { mu1: 1.5 }).is_err());
    }

    #[test]
    fn a_d_cases() {
        assert_eq!(a_d(3.0, 0.0, 0.0, 1.0, 0.5), 1.0);
        assert_eq!(a_d(4.0, 0.5, 0.0, 1.0, 0.5), 5.0);
    }

    #[test]
    fn epsilon_star_decoupled_limit() {
        let e = epsilon_star(2.0, 0.5, 1.0, 0.4, 1.2, 1.5, 0.0, 0.0, 0.0).unwrap();
        assert!((e - 0.4 / (1.5 * 0.5)).abs() < 1e-15);
        assert!(epsilon_star(2.0, 2.0, 1.0, 0.4, 1.2, 1.5, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn decay_constants_cases() {
        let (_, c2) = decay_constants((-1f64).exp(), 1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
        assert!((c2 - 0.25).abs() < 1e-15);
        let (_, c2) = decay_constants(1.0 - 1e-12, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
        assert!(c2 < 1e-12);
    }

    #[test]
    fn slow_jump_on_example() {
        let (l1, l2) = slow_jump_constants(&example_closed_loop(), &dc()).unwrap();
        let (f1, f2) = example_fixture::slow_jump(&dc()).unwrap();
        assert!((l1 - 0.009f64.powi(2) * 1.12).abs() < 1e-12);
        assert!((l1 / f1 - 1.0).abs() < 0.05);
        assert!((l2 / f2 - 1.0).abs() < 0.05);
    }

    #[test]
    fn b1_generic_matches_fixture() {
        let (b1, _, _) = interconnection_constants(&example_closed_loop(), &dc()).unwrap();
        let (f1, _, _) = example_fixture::interconnection(&dc()).unwrap();
        assert!((b1 / f1 - 1.0).abs() < 0.05, "{b1} vs {f1}");
    }

    #[test]
    fn b1_linear_in_ps() {
        let cl = example_closed_loop();
        let mut d = dc();
        d.l1 = 0.0;
        let (b1, _, _) = interconnection_constants(&cl, &d).unwrap();
        d.p_s = d.p_s.scale(2.0);
        let (b1x2, _, _) = interconnection_constants(&cl, &d).unwrap();
        assert!((b1x2 - 2.0 * b1).abs() < 1e-12 * b1);
    }
}
