//! Closed-form transforms for the N-stage unreliable M/G/1 tandem.
//!
//! Only node 1 buffers; a packet holds the whole chain from its service start
//! at node 1 until it leaves node N. Each node fails at rate `alpha` while it
//! serves, is repaired according to the common law `repair`, and resumes the
//! interrupted service where it stopped.
//!
//! With `phi(s, z) = s + lambda - lambda z + alpha - alpha r*(s + lambda - lambda z)`
//! and `h*(s) = prod_i s_i*(s)`:
//!
//! * system size PGF: `P(z) = h*(phi(0,z)) (1 - z) p0 / (h*(phi(0,z)) - z)`
//! * sojourn LST: `W*(s) = P(1 - s/lambda)`
//! * age LST: `W*(s) - s p0 h*(s) / (s + lambda h*(s + lambda))`
//!
//! where `p0 = 1 - lambda (1 + alpha E[R]) sum_i E[H_i]`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dist::DistributionSpec;
use crate::error::{Error, Result};
use crate::lst_calculus::{derivative_at, neg_derivative_at_zero, Approach, CalculusConfig, TransformFn};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mg1TandemParams {
    pub lambda: f64,
    pub stages: Vec<DistributionSpec>,
    pub alpha: f64,
    pub repair: DistributionSpec,
}

impl Mg1TandemParams {
    pub fn new(lambda: f64, stages: Vec<DistributionSpec>, alpha: f64, repair: DistributionSpec) -> Result<Self> {
        let p = Mg1TandemParams {
            lambda,
            stages,
            alpha,
            repair,
        };
        p.validate()?;
        Ok(p)
    }

    /// `n` identical stages, exponential repair at rate `gamma`.
    pub fn uniform(lambda: f64, n: usize, stage: DistributionSpec, alpha: f64, gamma: f64) -> Result<Self> {
        Self::new(lambda, vec![stage; n], alpha, DistributionSpec::exponential(gamma)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidParams(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.stages.is_empty() {
            return Err(Error::InvalidParams("at least one stage is required".into()));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::InvalidParams(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        for s in &self.stages {
            s.validate()?;
        }
        self.repair.validate()
    }

    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn total_service_mean(&self) -> f64 {
        self.stages.iter().map(DistributionSpec::mean).sum()
    }

    /// Mean time to complete all stages, breakdowns included.
    pub fn completion_mean(&self) -> f64 {
        (1.0 + self.alpha * self.repair.mean()) * self.total_service_mean()
    }

    /// Second moment of the total completion time (sum over stages of the
    /// per-stage completion times, each a service time stretched by a
    /// compound-Poisson number of repairs).
    pub fn completion_second_moment(&self) -> f64 {
        let stretch = 1.0 + self.alpha * self.repair.mean();
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for s in &self.stages {
            let c1 = s.mean() * stretch;
            let c2 = s.second_moment() * stretch * stretch + self.alpha * s.mean() * self.repair.second_moment();
            // E[(X + Y)^2] for independent X (accumulated) and Y (this stage)
            m2 += c2 + 2.0 * m1 * c1;
            m1 += c1;
        }
        m2
    }

    /// `p0 = 1 - lambda (1 + alpha E[R]) sum E[H_i]`.
    pub fn p0(&self) -> f64 {
        1.0 - self.lambda * self.completion_mean()
    }

    pub fn is_stable(&self) -> bool {
        self.p0() > 0.0
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Mg1TandemParams { lambda, ..self.clone() }
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        Mg1TandemParams { alpha, ..self.clone() }
    }

    fn require_stable(&self) -> Result<f64> {
        self.validate()?;
        let p0 = self.p0();
        if p0 > 0.0 {
            Ok(p0)
        } else {
            Err(Error::Unstable { slack: p0 })
        }
    }
}

pub fn phi(p: &Mg1TandemParams, s: Complex64, z: Complex64) -> Result<Complex64> {
    let x = s + p.lambda - p.lambda * z;
    if p.alpha == 0.0 {
        return Ok(x);
    }
    Ok(x + p.alpha - p.alpha * p.repair.lst(x)?)
}

pub fn h_star(p: &Mg1TandemParams, s: Complex64) -> Result<Complex64> {
    p.stages
        .iter()
        .try_fold(Complex64::new(1.0, 0.0), |acc, st| Ok(acc * st.lst(s)?))
}

fn system_pgf_value(p: &Mg1TandemParams, p0: f64, z: Complex64) -> Result<Complex64> {
    let h = h_star(p, phi(p, Complex64::new(0.0, 0.0), z)?)?;
    let den = h - z;
    if den.norm() < 1e-300 {
        return Err(Error::Domain(format!("system PGF denominator vanishes at z = {z}")));
    }
    Ok(h * (1.0 - z) * p0 / den)
}

/// PGF of the number of packets in the system; `z = 1` is flagged removable.
pub fn system_pgf(p: &Mg1TandemParams) -> Result<TransformFn> {
    let p0 = p.require_stable()?;
    let p = p.clone();
    Ok(
        TransformFn::new("system-size PGF, |z| <= 1", move |z| system_pgf_value(&p, p0, z))
            .with_removable(1.0, Approach::FromBelow),
    )
}

fn sojourn_value(p: &Mg1TandemParams, p0: f64, s: Complex64) -> Result<Complex64> {
    let u = s / p.lambda;
    let h = h_star(p, phi(p, Complex64::new(0.0, 0.0), 1.0 - u)?)?;
    let den = h - 1.0 + u;
    if den.norm() < 1e-300 {
        return Err(Error::Domain(format!("sojourn LST denominator vanishes at s = {s}")));
    }
    Ok(h * u * p0 / den)
}

/// Sojourn-time LST `W*(s) = P(1 - s/lambda)`; `s = 0` is flagged removable.
pub fn sojourn_lst(p: &Mg1TandemParams) -> Result<TransformFn> {
    let p0 = p.require_stable()?;
    let p = p.clone();
    Ok(
        TransformFn::new("sojourn LST, Re(s) >= 0", move |s| sojourn_value(&p, p0, s))
            .with_removable(0.0, Approach::FromAbove),
    )
}

/// Age LST (end-to-end age at the monitor); `s = 0` is flagged removable.
pub fn age_lst(p: &Mg1TandemParams) -> Result<TransformFn> {
    let p0 = p.require_stable()?;
    let p = p.clone();
    Ok(TransformFn::new("age LST, Re(s) >= 0", move |s| {
        let w = sojourn_value(&p, p0, s)?;
        let hs = h_star(&p, s)?;
        let den = s + p.lambda * h_star(&p, s + p.lambda)?;
        if den.norm() < 1e-300 {
            return Err(Error::Domain(format!("age LST denominator vanishes at s = {s}")));
        }
        Ok(w - s * p0 * hs / den)
    })
    .with_removable(0.0, Approach::FromAbove))
}

pub fn aaoi(p: &Mg1TandemParams, cfg: &CalculusConfig) -> Result<f64> {
    let v = neg_derivative_at_zero(&age_lst(p)?, cfg)?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Domain(format!("mean age evaluates to {v}")))
    }
}

pub fn mean_sojourn(p: &Mg1TandemParams, cfg: &CalculusConfig) -> Result<f64> {
    neg_derivative_at_zero(&sojourn_lst(p)?, cfg)
}

/// `P'(1-)`, the mean number of packets in the system.
pub fn mean_system_size(p: &Mg1TandemParams, cfg: &CalculusConfig) -> Result<f64> {
    derivative_at(&system_pgf(p)?, 1.0, Approach::FromBelow, cfg)
}
