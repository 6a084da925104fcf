//! Numerical calculus on transforms.
//!
//! Transforms (LSTs in `s`, PGFs in `z`) are opaque closures over a complex
//! argument. Many of them have a removable 0/0 singularity at the point of
//! interest (`s = 0` for an LST, `z = 1` for a PGF), so derivatives and
//! limits are taken from one side only, on a geometric step ladder, and
//! Richardson-extrapolated. The singular point itself is never evaluated.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type EvalFn = dyn Fn(Complex64) -> Result<Complex64> + Send + Sync;

/// Side from which a removable singularity is approached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Approach {
    FromAbove,
    FromBelow,
}

impl Approach {
    fn sign(self) -> f64 {
        match self {
            Approach::FromAbove => 1.0,
            Approach::FromBelow => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Removable {
    pub at: f64,
    pub approach: Approach,
}

/// A scalar transform with its singularity metadata.
#[derive(Clone)]
pub struct TransformFn {
    eval: Arc<EvalFn>,
    pub domain_note: String,
    pub removable: Vec<Removable>,
}

impl fmt::Debug for TransformFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TransformFn")
            .field("domain_note", &self.domain_note)
            .field("removable", &self.removable)
            .finish_non_exhaustive()
    }
}

impl TransformFn {
    pub fn new<F>(domain_note: impl Into<String>, eval: F) -> Self
    where
        F: Fn(Complex64) -> Result<Complex64> + Send + Sync + 'static,
    {
        TransformFn {
            eval: Arc::new(eval),
            domain_note: domain_note.into(),
            removable: Vec::new(),
        }
    }

    pub fn with_removable(mut self, at: f64, approach: Approach) -> Self {
        self.removable.push(Removable { at, approach });
        self
    }

    pub fn eval(&self, x: Complex64) -> Result<Complex64> {
        let v = (self.eval)(x)?;
        if v.re.is_finite() && v.im.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(format!("non-finite value at {x} ({})", self.domain_note)))
        }
    }

    pub fn eval_real(&self, x: f64) -> Result<f64> {
        Ok(self.eval(Complex64::new(x, 0.0))?.re)
    }

    pub fn removable_at(&self, x: f64) -> Option<Approach> {
        self.removable
            .iter()
            .find(|r| (r.at - x).abs() <= f64::EPSILON * x.abs().max(1.0))
            .map(|r| r.approach)
    }
}

/// Tolerances and ladder settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalculusConfig {
    pub derivative_rel_tol: f64,
    pub limit_tol: f64,
    pub initial_step: f64,
    pub max_levels: usize,
    pub pgf_radius: f64,
    pub pgf_negative_tol: f64,
}

impl Default for CalculusConfig {
    fn default() -> Self {
        CalculusConfig {
            derivative_rel_tol: 1e-6,
            limit_tol: 1e-8,
            initial_step: 1e-2,
            max_levels: 10,
            pgf_radius: 0.9,
            pgf_negative_tol: 1e-8,
        }
    }
}

/// Richardson extrapolation for a sequence whose error expands in integer
/// powers of the step, with steps halving level to level. Returns the first
/// diagonal entry that agrees with its predecessor within `accept`, or the
/// smallest observed residual on failure.
fn richardson<F>(mut sample: F, levels: usize, accept: impl Fn(f64, f64) -> bool) -> std::result::Result<f64, f64>
where
    F: FnMut(usize) -> Result<f64>,
{
    let mut prev_row: Vec<f64> = Vec::new();
    let mut best_residual = f64::INFINITY;
    // once accepted, keep refining while the residual shrinks
    let mut accepted: Option<(f64, f64)> = None;
    for j in 0..levels {
        let Ok(first) = sample(j) else {
            return accepted.map(|a| a.0).ok_or(best_residual);
        };
        let mut row = Vec::with_capacity(j + 1);
        row.push(first);
        for m in 1..=j {
            let factor = f64::powi(2.0, m as i32) - 1.0;
            let next = row[m - 1] + (row[m - 1] - prev_row[m - 1]) / factor;
            row.push(next);
        }
        if j > 0 {
            let cur = row[j];
            let last = prev_row[j - 1];
            let diff = (cur - last).abs();
            if !cur.is_finite() {
                return accepted.map(|a| a.0).ok_or(best_residual);
            }
            best_residual = best_residual.min(diff);
            match accepted {
                Some((v, d)) if diff >= d => return Ok(v),
                Some(_) => accepted = Some((cur, diff)),
                None if accept(cur, diff) => accepted = Some((cur, diff)),
                None => {}
            }
        }
        prev_row = row;
    }
    accepted.map(|a| a.0).ok_or(best_residual)
}

/// `g'(point)` from one side, without evaluating `g` at `point`.
///
/// For step `h` the ladder uses the central difference about `point ± h`
/// with half-width `h/2`, whose error expands in powers of `h`.
pub fn derivative_at(g: &TransformFn, point: f64, approach: Approach, cfg: &CalculusConfig) -> Result<f64> {
    let dir = approach.sign();
    let mut domain_err = None;
    let res = richardson(
        |j| {
            let h = cfg.initial_step / f64::powi(2.0, j as i32);
            let near = g.eval_real(point + dir * 0.5 * h);
            let far = g.eval_real(point + dir * 1.5 * h);
            match (near, far) {
                (Ok(a), Ok(b)) => Ok(dir * (b - a) / h),
                (Err(e), _) | (_, Err(e)) => {
                    domain_err = Some(e.to_string());
                    Err(Error::Domain(String::new()))
                }
            }
        },
        cfg.max_levels,
        // relative, with an absolute floor so a vanishing derivative can settle
        |v, diff| diff <= cfg.derivative_rel_tol * v.abs().max(1e-3),
    );
    match (res, domain_err) {
        (Ok(v), _) => Ok(v),
        (Err(_), Some(msg)) => Err(Error::Domain(msg)),
        (Err(residual), None) => Err(Error::UnstableDerivative { residual }),
    }
}

/// `-g'(0+)`: the first moment of an LST (or the mean age from an age LST).
pub fn neg_derivative_at_zero(g: &TransformFn, cfg: &CalculusConfig) -> Result<f64> {
    derivative_at(g, 0.0, Approach::FromAbove, cfg).map(|d| -d)
}

/// Limit of `g` at a flagged removable point, approached from the flagged side.
pub fn limit_at(g: &TransformFn, point: f64, cfg: &CalculusConfig) -> Result<f64> {
    let approach = g
        .removable_at(point)
        .ok_or_else(|| Error::Domain(format!("{point} is not flagged removable ({})", g.domain_note)))?;
    let dir = approach.sign();
    let mut domain_err = None;
    let res = richardson(
        |j| {
            let h = cfg.initial_step / f64::powi(2.0, j as i32);
            g.eval_real(point + dir * h).inspect_err(|e| domain_err = Some(e.to_string()))
        },
        cfg.max_levels,
        |v, diff| diff <= cfg.limit_tol * v.abs().max(1.0),
    );
    match (res, domain_err) {
        (Ok(v), _) => Ok(v),
        (Err(_), Some(msg)) => Err(Error::Domain(msg)),
        (Err(residual), None) => Err(Error::DivergentLimit { residual }),
    }
}

/// Complex-step derivative `Im g(x + i·step) / step`; exact to round-off for
/// transforms that are real-analytic at `x`.
pub fn complex_step_derivative(g: &TransformFn, x: f64, step: f64) -> Result<f64> {
    Ok(g.eval(Complex64::new(x, step))?.im / step)
}

/// Largest tolerated round-off amplification `r^-n_max`.
const MAX_RADIUS_AMPLIFICATION: f64 = 1e4;

/// Probability masses `c_0..=c_n_max` of a PGF, by discrete Fourier inversion
/// on a circle of radius `cfg.pgf_radius` with `M >= 4 (n_max + 1)` nodes.
///
/// For long coefficient vectors the radius is raised towards 1 so that
/// `r^-n_max` stays below 1e4; with `M >= 4 n_max` nodes the aliasing term
/// `r^M` is then still below 1e-16.
pub fn pgf_coefficients(p: &TransformFn, n_max: usize, cfg: &CalculusConfig) -> Result<Vec<f64>> {
    let r = if n_max > 0 {
        cfg.pgf_radius.max(MAX_RADIUS_AMPLIFICATION.powf(-1.0 / n_max as f64))
    } else {
        cfg.pgf_radius
    };
    let m = (4 * (n_max + 1)).max(256);
    let values: Vec<Complex64> = (0..m)
        .map(|j| {
            let w = Complex64::from_polar(r, std::f64::consts::TAU * j as f64 / m as f64);
            p.eval(w)
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(n_max + 1);
    for k in 0..=n_max {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, v) in values.iter().enumerate() {
            let idx = (j * k) % m;
            let angle = -std::f64::consts::TAU * idx as f64 / m as f64;
            acc += v * Complex64::from_polar(1.0, angle);
        }
        let ck = acc.re / m as f64 / r.powi(k as i32);
        if !ck.is_finite() || ck < -cfg.pgf_negative_tol || ck > 1.0 + cfg.pgf_negative_tol {
            return Err(Error::InversionFailed { index: k, value: ck });
        }
        out.push(ck.clamp(0.0, 1.0));
    }
    Ok(out)
}
