//! Transmission-interval bound T(L, γ, λ) and the clock function φ.
//!
//! φ solves φ̇ = −2Lφ − γ(φ² + 1) from φ(0) = 1/λ and reaches λ exactly at
//! T(L, γ, λ). With ψ = φ + L/γ the equation becomes ψ̇ = −γ(ψ² + 1 − (L/γ)²),
//! which has tan / rational / coth solutions depending on the sign of γ − L.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatiError {
    #[error("lambda_star must lie in (0, 1), got {0}")]
    Lambda(f64),
    #[error("gamma must be positive, got {0}")]
    Gamma(f64),
    #[error("L must be nonnegative, got {0}")]
    Growth(f64),
}

/// Relative band around γ = L where the rational branch is used.
pub const BRANCH_BAND: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatiParams {
    pub l: f64,
    pub gamma: f64,
    pub lambda_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Branch {
    Tan,
    Rational,
    Coth,
}

impl MatiParams {
    pub fn new(l: f64, gamma: f64, lambda_star: f64) -> Result<Self, MatiError> {
        let p = MatiParams { l, gamma, lambda_star };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), MatiError> {
        if !(self.lambda_star > 0.0 && self.lambda_star < 1.0) {
            return Err(MatiError::Lambda(self.lambda_star));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(MatiError::Gamma(self.gamma));
        }
        if !(self.l >= 0.0 && self.l.is_finite()) {
            return Err(MatiError::Growth(self.l));
        }
        Ok(())
    }

    fn branch(&self) -> Branch {
        if self.l > 0.0 && (self.gamma - self.l).abs() <= BRANCH_BAND * self.gamma.max(self.l) {
            Branch::Rational
        } else if self.gamma > self.l {
            Branch::Tan
        } else {
            Branch::Coth
        }
    }
}

/// T(L, γ, λ) in the time units of the clock it bounds.
pub fn mati_bound(p: &MatiParams) -> Result<f64, MatiError> {
    p.validate()?;
    let (l, g, lam) = (p.l, p.gamma, p.lambda_star);
    if l == 0.0 {
        return Ok(((1.0 / lam).atan() - lam.atan()) / g);
    }
    let ratio = g / l;
    let r = (ratio * ratio - 1.0).abs().sqrt();
    let denom = 2.0 * lam / (1.0 + lam) * (ratio - 1.0) + 1.0 + lam;
    let arg = r * (1.0 - lam) / denom;
    Ok(match p.branch() {
        Branch::Rational => (1.0 - lam) / (l * (1.0 + lam)),
        Branch::Tan => arg.atan() / (l * r),
        Branch::Coth => arg.atanh() / (l * r),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiClock {
    pub params: MatiParams,
}

impl PhiClock {
    pub fn new(params: MatiParams) -> Result<Self, MatiError> {
        params.validate()?;
        Ok(PhiClock { params })
    }

    pub fn initial(&self) -> f64 {
        1.0 / self.params.lambda_star
    }

    /// Right-hand side of the φ equation.
    pub fn rate(&self, phi: f64) -> f64 {
        let p = &self.params;
        -2.0 * p.l * phi - p.gamma * (phi * phi + 1.0)
    }
}

/// φ(τ). Past the finite escape of the tan branch the value is −∞.
pub fn phi_eval(clock: &PhiClock, tau: f64) -> f64 {
    let p = &clock.params;
    let g = p.gamma;
    let shift = p.l / g;
    let psi0 = clock.initial() + shift;
    let psi = match p.branch() {
        Branch::Rational => psi0 / (1.0 + g * psi0 * tau),
        Branch::Tan => {
            let c = (1.0 - shift * shift).sqrt();
            let theta = (psi0 / c).atan() - g * c * tau;
            if theta <= -std::f64::consts::FRAC_PI_2 {
                return f64::NEG_INFINITY;
            }
            c * theta.tan()
        }
        Branch::Coth => {
            let k = (shift * shift - 1.0).sqrt();
            let u = (k / psi0).atanh() + g * k * tau;
            k / u.tanh()
        }
    };
    psi - shift
}

/// The τ with φ(τ) = λ*, by bisection on [`phi_eval`].
pub fn phi_crossing_time(clock: &PhiClock) -> f64 {
    let lam = clock.params.lambda_star;
    // φ̇ ≤ −γ while φ ≥ 0, so the crossing happens before (1/λ − λ)/γ.
    let mut lo = 0.0;
    let mut hi = (1.0 / lam - lam) / clock.params.gamma;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if phi_eval(clock, mid) > lam {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Classic RK4 on the φ equation with `n` equal steps over [0, tau].
pub fn phi_rk4(clock: &PhiClock, tau: f64, n: usize) -> f64 {
    let h = tau / n as f64;
    let mut phi = clock.initial();
    for _ in 0..n {
        let k1 = clock.rate(phi);
        let k2 = clock.rate(phi + 0.5 * h * k1);
        let k3 = clock.rate(phi + 0.5 * h * k2);
        let k4 = clock.rate(phi + h * k3);
        phi += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    phi
}
