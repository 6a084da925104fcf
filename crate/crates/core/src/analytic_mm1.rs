//! Closed-form transforms for the two-node unreliable M/M/1 tandem.
//!
//! The whole network shares one operational state: breakdowns arrive at rate
//! `alpha` while it is up and repairs complete at rate `gamma`. The kernels
//! `D, A, B, C`, the curve `f(z2)`, the node-2 marginal PGF, the sojourn LST
//! `W*(s) = P(1 - s/lambda)` and the age LST are transcribed exactly as
//! published, including the `(alpha + gamma)/gamma` prefactor in `h*`.
//!
//! The transcription is not self-consistent: on the published `f` curve the
//! kernel `A` does not vanish, and the resulting `P(z2)` tends to 0 (not
//! `gamma/(alpha + gamma)`) as `z2 -> 1`; for `gamma = 1` it is constant in
//! `z2`. Downstream quantities inherit this. `ctmc` and `des` provide the
//! independent reference values, and `experiments::validate` reports the gap.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lst_calculus::{neg_derivative_at_zero, Approach, CalculusConfig, TransformFn};

const ZERO_EPS: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mm1TandemParams {
    pub lambda: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub alpha: f64,
    pub gamma: f64,
}

impl Mm1TandemParams {
    pub fn new(lambda: f64, mu1: f64, mu2: f64, alpha: f64, gamma: f64) -> Result<Self> {
        let p = Mm1TandemParams {
            lambda,
            mu1,
            mu2,
            alpha,
            gamma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("gamma", self.gamma),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::InvalidParams(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        Ok(())
    }

    /// Long-run fraction of time the network is operational.
    pub fn availability(&self) -> f64 {
        self.gamma / (self.alpha + self.gamma)
    }

    /// `gamma/(alpha+gamma) - lambda (1/mu1 + 1/mu2)`; positive iff stable.
    pub fn stability_slack(&self) -> f64 {
        self.availability() - self.lambda * (1.0 / self.mu1 + 1.0 / self.mu2)
    }

    pub fn is_stable(&self) -> bool {
        self.stability_slack() > 0.0
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Mm1TandemParams { lambda, ..*self }
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        Mm1TandemParams { alpha, ..*self }
    }

    fn require_stable(&self) -> Result<()> {
        self.validate()?;
        if self.is_stable() {
            Ok(())
        } else {
            Err(Error::Unstable {
                slack: self.stability_slack(),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernels {
    pub d: Complex64,
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
}

pub fn kernels(p: &Mm1TandemParams, z1: Complex64, z2: Complex64) -> Kernels {
    let Mm1TandemParams {
        lambda,
        mu1,
        mu2,
        gamma,
        ..
    } = *p;
    let d = z1 * z2 * (lambda * (1.0 - z1) + gamma) + mu1 * z2 * (z1 - z2) + mu2 * z1 * (z2 - 1.0);
    let a = mu2 * z1 * (z2 - 1.0) + mu1 * z2 * (z2 - z1);
    let c = mu1 * z2 * (z2 - z1) + mu2 * z1 * (z2 - 1.0);
    Kernels { d, a, b: -a, c }
}

/// `f(z2) = mu1 z2^2 / (mu1 + mu2 (1 - z2))`.
pub fn f_curve(p: &Mm1TandemParams, z2: Complex64) -> Result<Complex64> {
    let den = p.mu1 + p.mu2 * (1.0 - z2);
    if den.norm() < 1e-14 * p.mu1 {
        return Err(Error::Domain(format!("f(z2) pole at z2 = {}", 1.0 + p.mu1 / p.mu2)));
    }
    Ok(p.mu1 * z2 * z2 / den)
}

/// `Pi_0(0,0) = gamma/(alpha+gamma) - lambda (1/mu1 + 1/mu2)`.
pub fn boundary_prob(p: &Mm1TandemParams) -> Result<f64> {
    p.require_stable()?;
    Ok(p.stability_slack())
}

/// `h*(s) = ((alpha+gamma)/gamma) (mu1/(s+mu1)) (mu2/(s+mu2))`.
pub fn h_star(p: &Mm1TandemParams, s: Complex64) -> Result<Complex64> {
    let d1 = s + p.mu1;
    let d2 = s + p.mu2;
    if d1.norm() < ZERO_EPS || d2.norm() < ZERO_EPS {
        return Err(Error::Domain("h* pole".into()));
    }
    Ok((p.alpha + p.gamma) / p.gamma * (p.mu1 / d1) * (p.mu2 / d2))
}

fn marginal_pgf_value(p: &Mm1TandemParams, pi00: f64, z2: Complex64) -> Result<Complex64> {
    let f = f_curve(p, z2)?;
    let repair_den = p.lambda * (1.0 - f) + p.gamma;
    if repair_den.norm() < ZERO_EPS {
        return Err(Error::Domain("lambda(1 - f) + gamma vanishes".into()));
    }
    let k = kernels(p, f, z2);
    // alpha appears as a common factor of numerator and denominator and is
    // divided out, so alpha = 0 is evaluated directly.
    let w = 1.0 / repair_den;
    let num = w * k.c * pi00;
    let den = w * k.d - p.gamma * f * z2;
    if den.norm() < 1e-15 * (w * k.d).norm().max(1e-300) || den.norm() < ZERO_EPS {
        return Err(Error::Domain(format!("marginal PGF denominator vanishes at z2 = {z2}")));
    }
    Ok(num / den)
}

/// Node-2 marginal PGF `P(z2) = Pi_0(f(z2), z2)`; `z2 = 1` is flagged removable.
pub fn marginal_pgf_node2(p: &Mm1TandemParams) -> Result<TransformFn> {
    let pi00 = boundary_prob(p)?;
    let p = *p;
    Ok(
        TransformFn::new("node-2 marginal PGF, z2 in the closed unit disk", move |z2| {
            marginal_pgf_value(&p, pi00, z2)
        })
        .with_removable(1.0, Approach::FromBelow),
    )
}

/// `W*(s) = P(1 - s/lambda)`; `s = 0` is flagged removable.
pub fn sojourn_lst(p: &Mm1TandemParams) -> Result<TransformFn> {
    let pi00 = boundary_prob(p)?;
    let p = *p;
    Ok(TransformFn::new("sojourn LST, Re(s) >= 0", move |s| {
        marginal_pgf_value(&p, pi00, 1.0 - s / p.lambda)
    })
    .with_removable(0.0, Approach::FromAbove))
}

/// Age LST
/// `lambda [W*(s) - W*(s) h*(s) + W*(s+lambda) s h*(s)/(s+lambda)] / s`.
pub fn age_lst(p: &Mm1TandemParams) -> Result<TransformFn> {
    age_lst_variant(p, true)
}

/// [`age_lst`] with or without the `(alpha+gamma)/gamma` factor in `h*`;
/// the two coincide at `alpha = 0`.
pub fn age_lst_variant(p: &Mm1TandemParams, h_prefactor: bool) -> Result<TransformFn> {
    let w = sojourn_lst(p)?;
    let scale = if h_prefactor { 1.0 } else { p.gamma / (p.alpha + p.gamma) };
    let p = *p;
    Ok(TransformFn::new("age LST, Re(s) > 0", move |s| {
        if s.norm() < ZERO_EPS {
            return Err(Error::Domain("age LST evaluated at its removable point s = 0".into()));
        }
        let lam = p.lambda;
        let ws = w.eval(s)?;
        let hs = h_star(&p, s)? * scale;
        let ws_shift = w.eval(s + lam)?;
        Ok(lam * (ws - ws * hs + ws_shift * s * hs / (s + lam)) / s)
    })
    .with_removable(0.0, Approach::FromAbove))
}

/// Mean age `-d/ds age_lst(s)` at `0+`.
pub fn aaoi(p: &Mm1TandemParams, cfg: &CalculusConfig) -> Result<f64> {
    let v = neg_derivative_at_zero(&age_lst(p)?, cfg)?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Domain(format!("mean age evaluates to {v}")))
    }
}

/// Mean sojourn `-W*'(0+)`.
pub fn mean_sojourn(p: &Mm1TandemParams, cfg: &CalculusConfig) -> Result<f64> {
    neg_derivative_at_zero(&sojourn_lst(p)?, cfg)
}
