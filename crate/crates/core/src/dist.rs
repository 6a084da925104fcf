//! Service and repair time laws.
//!
//! Every law exposes its Laplace–Stieltjes transform `E[exp(-sX)]`, its first
//! two moments and a sampler. The JSON form is tagged by `kind`:
//! `{"kind":"exp","rate":1.0}`, `{"kind":"erlang","k":2,"rate":2.0}`,
//! `{"kind":"hyper2","p1":0.5,"rate1":2.0,"rate2":0.6667}`,
//! `{"kind":"det","value":1.0}`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance to a pole below which an LST evaluation is refused.
const POLE_EPS: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum DistributionSpec {
    #[serde(rename = "exp")]
    Exponential { rate: f64 },
    /// Sum of `k` exponential phases, each with rate `rate`.
    #[serde(rename = "erlang")]
    Erlang { k: u32, rate: f64 },
    #[serde(rename = "hyper2")]
    Hyper2 { p1: f64, rate1: f64, rate2: f64 },
    #[serde(rename = "det")]
    Deterministic { value: f64 },
}

impl DistributionSpec {
    pub fn exponential(rate: f64) -> Result<Self> {
        let d = DistributionSpec::Exponential { rate };
        d.validate()?;
        Ok(d)
    }

    pub fn erlang(k: u32, rate: f64) -> Result<Self> {
        let d = DistributionSpec::Erlang { k, rate };
        d.validate()?;
        Ok(d)
    }

    /// Erlang-k with the given mean (per-phase rate `k / mean`).
    pub fn erlang_with_mean(k: u32, mean: f64) -> Result<Self> {
        Self::erlang(k, k as f64 / mean)
    }

    pub fn hyper2(p1: f64, rate1: f64, rate2: f64) -> Result<Self> {
        let d = DistributionSpec::Hyper2 { p1, rate1, rate2 };
        d.validate()?;
        Ok(d)
    }

    pub fn deterministic(value: f64) -> Result<Self> {
        let d = DistributionSpec::Deterministic { value };
        d.validate()?;
        Ok(d)
    }

    /// Unit-mean balanced H2 used when no H2 parameters are given:
    /// p1 = 0.5, rates 2 and 2/3 (SCV 1.5).
    pub fn hyper2_default() -> Self {
        DistributionSpec::Hyper2 {
            p1: 0.5,
            rate1: 2.0,
            rate2: 2.0 / 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParams(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match *self {
            DistributionSpec::Exponential { rate } => positive("rate", rate),
            DistributionSpec::Erlang { k, rate } => {
                if k == 0 {
                    return Err(Error::InvalidParams("erlang k must be >= 1".into()));
                }
                positive("rate", rate)
            }
            DistributionSpec::Hyper2 { p1, rate1, rate2 } => {
                if !(p1 > 0.0 && p1 < 1.0) {
                    return Err(Error::InvalidParams(format!("hyper2 p1 must lie in (0,1), got {p1}")));
                }
                positive("rate1", rate1)?;
                positive("rate2", rate2)
            }
            DistributionSpec::Deterministic { value } => positive("value", value),
        }
    }

    /// Short label used in CSV output.
    pub fn label(&self) -> String {
        match self {
            DistributionSpec::Exponential { .. } => "exp".into(),
            DistributionSpec::Erlang { k, .. } => format!("erlang{k}"),
            DistributionSpec::Hyper2 { .. } => "hyper2".into(),
            DistributionSpec::Deterministic { .. } => "det".into(),
        }
    }

    /// `E[exp(-sX)]`. Exponential-family laws are continued analytically to
    /// the left half-plane and only refuse evaluation at the pole `s = -rate`.
    pub fn lst(&self, s: Complex64) -> Result<Complex64> {
        let phase = |rate: f64| -> Result<Complex64> {
            let den = s + rate;
            if den.norm() < POLE_EPS * rate.max(1.0) {
                return Err(Error::Domain(format!("LST pole at s = {}", -rate)));
            }
            Ok(Complex64::new(rate, 0.0) / den)
        };
        match *self {
            DistributionSpec::Exponential { rate } => phase(rate),
            DistributionSpec::Erlang { k, rate } => Ok(phase(rate)?.powu(k)),
            DistributionSpec::Hyper2 { p1, rate1, rate2 } => {
                Ok(phase(rate1)? * p1 + phase(rate2)? * (1.0 - p1))
            }
            DistributionSpec::Deterministic { value } => Ok((-s * value).exp()),
        }
    }

    pub fn lst_real(&self, s: f64) -> Result<f64> {
        Ok(self.lst(Complex64::new(s, 0.0))?.re)
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DistributionSpec::Exponential { rate } => 1.0 / rate,
            DistributionSpec::Erlang { k, rate } => k as f64 / rate,
            DistributionSpec::Hyper2 { p1, rate1, rate2 } => p1 / rate1 + (1.0 - p1) / rate2,
            DistributionSpec::Deterministic { value } => value,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            DistributionSpec::Exponential { rate } => 2.0 / (rate * rate),
            DistributionSpec::Erlang { k, rate } => {
                let k = k as f64;
                k * (k + 1.0) / (rate * rate)
            }
            DistributionSpec::Hyper2 { p1, rate1, rate2 } => {
                2.0 * (p1 / (rate1 * rate1) + (1.0 - p1) / (rate2 * rate2))
            }
            DistributionSpec::Deterministic { value } => value * value,
        }
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.second_moment() - m * m
    }

    /// Squared coefficient of variation.
    pub fn scv(&self) -> f64 {
        let m = self.mean();
        self.variance() / (m * m)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DistributionSpec::Exponential { rate } => Exp::new(rate).unwrap().sample(rng),
            DistributionSpec::Erlang { k, rate } => {
                if k == 1 {
                    Exp::new(rate).unwrap().sample(rng)
                } else {
                    Gamma::new(k as f64, 1.0 / rate).unwrap().sample(rng)
                }
            }
            DistributionSpec::Hyper2 { p1, rate1, rate2 } => {
                let rate = if rng.gen::<f64>() < p1 { rate1 } else { rate2 };
                Exp::new(rate).unwrap().sample(rng)
            }
            DistributionSpec::Deterministic { value } => value,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn all_kinds() -> Vec<DistributionSpec> {
        vec![
            DistributionSpec::exponential(1.0).unwrap(),
            DistributionSpec::erlang(2, 2.0).unwrap(),
            DistributionSpec::hyper2_default(),
            DistributionSpec::deterministic(2.5).unwrap(),
        ]
    }

    #[test]
    fn lst_examples() {
        let e = DistributionSpec::exponential(1.0).unwrap();
        assert_eq!(e.lst(c(0.0)).unwrap(), c(1.0));
        assert_eq!(e.lst(c(1.0)).unwrap(), c(0.5));
        let erl = DistributionSpec::erlang_with_mean(2, 1.0).unwrap();
        assert!((erl.lst_real(1.0).unwrap() - 4.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn lst_normalized_at_zero() {
        for d in all_kinds() {
            assert_eq!(d.lst(c(0.0)).unwrap(), c(1.0), "{d:?}");
        }
    }

    #[test]
    fn pole_is_a_domain_error() {
        let e = DistributionSpec::exponential(2.0).unwrap();
        assert!(matches!(e.lst(c(-2.0)), Err(Error::Domain(_))));
        let h = DistributionSpec::hyper2_default();
        assert!(h.lst(c(-2.0 / 3.0)).is_err());
        // analytic continuation away from the pole is fine
        assert!((e.lst_real(-1.0).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn means() {
        assert_eq!(DistributionSpec::exponential(1.0).unwrap().mean(), 1.0);
        assert_eq!(DistributionSpec::erlang(2, 2.0).unwrap().mean(), 1.0);
        let h = DistributionSpec::hyper2(0.5, 2.0, 2.0 / 3.0).unwrap();
        assert!((h.mean() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scv_values() {
        assert!((DistributionSpec::exponential(3.0).unwrap().scv() - 1.0).abs() < 1e-12);
        assert!((DistributionSpec::erlang(2, 2.0).unwrap().scv() - 0.5).abs() < 1e-12);
        assert!((DistributionSpec::hyper2_default().scv() - 1.5).abs() < 1e-12);
        assert!(DistributionSpec::deterministic(1.0).unwrap().scv().abs() < 1e-12);
    }

    #[test]
    fn mean_is_negative_lst_slope() {
        for d in all_kinds() {
            let h = 1e-5;
            let slope = (d.lst_real(h).unwrap() - d.lst_real(-h).unwrap()) / (2.0 * h);
            assert!(((-slope) - d.mean()).abs() / d.mean() < 1e-6, "{d:?}");
        }
    }

    #[test]
    fn lst_positive_and_nonincreasing_on_grid() {
        for d in all_kinds() {
            let mut prev = f64::INFINITY;
            for i in 0..100 {
                let s = 10.0 * i as f64 / 99.0;
                let v = d.lst_real(s).unwrap();
                assert!(v > 0.0 && v <= prev, "{d:?} at {s}");
                prev = v;
            }
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(DistributionSpec::exponential(0.0).is_err());
        assert!(DistributionSpec::erlang(0, 1.0).is_err());
        assert!(DistributionSpec::hyper2(1.0, 1.0, 1.0).is_err());
        assert!(DistributionSpec::hyper2(0.5, -1.0, 1.0).is_err());
        assert!(DistributionSpec::deterministic(f64::NAN).is_err());
    }

    #[test]
    fn json_forms() {
        let d: DistributionSpec = serde_json::from_str(r#"{"kind":"erlang","k":2,"rate":2.0}"#).unwrap();
        assert_eq!(d, DistributionSpec::Erlang { k: 2, rate: 2.0 });
        let d: DistributionSpec =
            serde_json::from_str(r#"{"kind":"hyper2","p1":0.5,"rate1":2.0,"rate2":0.6667}"#).unwrap();
        assert!(matches!(d, DistributionSpec::Hyper2 { .. }));
        let s = serde_json::to_string(&DistributionSpec::Deterministic { value: 1.0 }).unwrap();
        assert_eq!(s, r#"{"kind":"det","value":1.0}"#);
        let s = serde_json::to_string(&DistributionSpec::Exponential { rate: 1.0 }).unwrap();
        assert_eq!(s, r#"{"kind":"exp","rate":1.0}"#);
    }

    #[test]
    fn deterministic_sample_is_constant() {
        let d = DistributionSpec::deterministic(2.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..100).all(|_| d.sample(&mut rng) == 2.5));
    }

    fn sample_moments(d: &DistributionSpec, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x = d.sample(&mut rng);
            s1 += x;
            s2 += x * x;
        }
        let m = s1 / n as f64;
        (m, s2 / n as f64 - m * m)
    }

    #[test]
    fn exponential_sample_mean() {
        let (m, _) = sample_moments(&DistributionSpec::exponential(1.0).unwrap(), 1_000_000, 7);
        assert!((m - 1.0).abs() < 0.01, "{m}");
    }

    #[test]
    fn erlang_sample_variance() {
        let (_, v) = sample_moments(&DistributionSpec::erlang(2, 2.0).unwrap(), 1_000_000, 8);
        assert!((v - 0.5).abs() < 0.01, "{v}");
    }

    #[test]
    fn sample_scv_matches_within_two_percent() {
        for d in [
            DistributionSpec::exponential(1.0).unwrap(),
            DistributionSpec::erlang(2, 2.0).unwrap(),
            DistributionSpec::hyper2_default(),
        ] {
            let (m, v) = sample_moments(&d, 2_000_000, 11);
            let scv = v / (m * m);
            assert!((scv - d.scv()).abs() / d.scv() < 0.02, "{d:?}: {scv}");
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let d = DistributionSpec::hyper2_default();
        let a: Vec<f64> = {
            let mut r = ChaCha8Rng::seed_from_u64(42);
            (0..10).map(|_| d.sample(&mut r)).collect()
        };
        let b: Vec<f64> = {
            let mut r = ChaCha8Rng::seed_from_u64(42);
            (0..10).map(|_| d.sample(&mut r)).collect()
        };
        assert_eq!(a, b);
    }
}
