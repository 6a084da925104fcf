use aoi_tandem::analytic_mg1::{self, Mg1TandemParams};
use aoi_tandem::analytic_mm1::Mm1TandemParams;
use aoi_tandem::ctmc;
use aoi_tandem::experiments::{find_lambda_star, fmt_sig};
use aoi_tandem::lst_calculus::{neg_derivative_at_zero, pgf_coefficients};
use aoi_tandem::{CalculusConfig, DistributionSpec, TransformFn};
use num_complex::Complex64;
use proptest::prelude::*;

fn dist_strategy() -> impl Strategy<Value = DistributionSpec> {
    prop_oneof![
        (0.2f64..5.0).prop_map(|rate| DistributionSpec::Exponential { rate }),
        (1u32..5, 0.2f64..5.0).prop_map(|(k, rate)| DistributionSpec::Erlang { k, rate }),
        (0.05f64..0.95, 0.2f64..5.0, 0.2f64..5.0)
            .prop_map(|(p1, rate1, rate2)| DistributionSpec::Hyper2 { p1, rate1, rate2 }),
        (0.1f64..3.0).prop_map(|value| DistributionSpec::Deterministic { value }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lst_is_normalized_and_bounded(d in dist_strategy(), re in 0.0f64..5.0, im in -5.0f64..5.0) {
        prop_assert_eq!(d.lst(Complex64::new(0.0, 0.0)).unwrap(), Complex64::new(1.0, 0.0));
        let v = d.lst(Complex64::new(re, im)).unwrap();
        prop_assert!(v.norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn mean_is_minus_lst_slope(d in dist_strategy()) {
        let mean = d.mean();
        let g = TransformFn::new("lst", move |s| d.lst(s));
        let m = neg_derivative_at_zero(&g, &CalculusConfig::default()).unwrap();
        prop_assert!((m - mean).abs() < 1e-6 * mean, "{} vs {}", m, mean);
    }

    #[test]
    fn variance_is_nonnegative(d in dist_strategy()) {
        prop_assert!(d.variance() >= -1e-12);
        prop_assert!(d.second_moment() >= d.mean() * d.mean() - 1e-12);
    }

    #[test]
    fn mg1_pgf_is_a_distribution(
        lambda in 0.02f64..0.3,
        alpha in 0.0f64..1.0,
        gamma in 0.5f64..3.0,
        stage in prop_oneof![
            Just(DistributionSpec::Exponential { rate: 1.0 }),
            Just(DistributionSpec::Erlang { k: 2, rate: 2.0 }),
            Just(DistributionSpec::hyper2_default()),
        ],
    ) {
        let p = Mg1TandemParams::uniform(lambda, 2, stage, alpha, gamma).unwrap();
        prop_assume!(p.p0() > 0.05);
        let cfg = CalculusConfig::default();
        let c = pgf_coefficients(&analytic_mg1::system_pgf(&p).unwrap(), 120, &cfg).unwrap();
        prop_assert!((c[0] - p.p0()).abs() < 1e-8);
        prop_assert!(c.iter().all(|&x| x >= 0.0));
        prop_assert!(c.iter().sum::<f64>() <= 1.0 + 1e-8);
    }

    #[test]
    fn mg1_aaoi_exceeds_mean_sojourn(lambda in 0.02f64..0.3, alpha in 0.0f64..0.8) {
        let p = Mg1TandemParams::uniform(lambda, 2, DistributionSpec::Exponential { rate: 1.0 }, alpha, 1.0).unwrap();
        prop_assume!(p.is_stable());
        let cfg = CalculusConfig::default();
        let soj = analytic_mg1::mean_sojourn(&p, &cfg).unwrap();
        let age = analytic_mg1::aaoi(&p, &cfg).unwrap();
        prop_assert!(soj >= p.completion_mean() - 1e-6);
        prop_assert!(age >= soj);
    }

    #[test]
    fn ctmc_generator_rows_sum_to_zero(
        lambda in 0.05f64..2.0, mu1 in 0.1f64..3.0, mu2 in 0.1f64..3.0,
        alpha in 0.0f64..2.0, gamma in 0.1f64..3.0, cap in 1usize..8,
    ) {
        let p = Mm1TandemParams { lambda, mu1, mu2, alpha, gamma };
        let chain = ctmc::build(&p, cap).unwrap();
        for s in 0..chain.n_states() {
            let sum: f64 = chain.generator.row(s).map(|(_, r)| r).sum();
            prop_assert!(sum.abs() < 1e-12);
        }
        let dist = ctmc::stationary(&chain).unwrap();
        prop_assert!(dist.probs.iter().all(|&x| x >= 0.0));
        prop_assert!((dist.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn formatted_floats_round_trip(x in prop_oneof![-1e12f64..1e12, -1e-3f64..1e-3]) {
        let s = fmt_sig(x);
        let back: f64 = s.parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-9 * x.abs());
        prop_assert!(!s.contains("NaN") && !s.contains("inf"));
    }

    #[test]
    fn lambda_star_finds_parabola_vertex(v in 0.1f64..0.8) {
        let s = find_lambda_star(|l| Some((l - v).powi(2) + 1.0), 0.02, 0.98, 0.02, 1e-4).unwrap();
        prop_assert!((s.lambda_star - v).abs() < 1e-4);
    }
}
