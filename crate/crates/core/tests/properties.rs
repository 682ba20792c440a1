use cmvlab::cmv::{build_cmv, build_lm_factors, theta_block, VerblunskySeq};
use cmvlab::config::{parse_config, Command, RunConfig};
use cmvlab::estimators::{
    fit_decay, holder_interpolation_gap, jensen_gap, windowed_sup_and_bound, Weights,
};
use cmvlab::linalg::unitarity_defect;
use cmvlab::perturbation::conjugation_residual;
use cmvlab::spectral::eigendecompose_unitary;
use num_complex::Complex64;
use proptest::prelude::*;

fn disk(r_max: f64) -> impl Strategy<Value = Complex64> {
    (0.0..r_max, 0.0..std::f64::consts::TAU).prop_map(|(r, t)| Complex64::from_polar(r, t))
}

fn circle() -> impl Strategy<Value = Complex64> {
    (0.0..std::f64::consts::TAU).prop_map(|t| Complex64::from_polar(1.0, t))
}

fn sequence(max_dim: usize) -> impl Strategy<Value = VerblunskySeq> {
    (2..=max_dim)
        .prop_flat_map(|n| (prop::collection::vec(disk(0.99), n - 1), circle()))
        .prop_map(|(alphas, beta)| VerblunskySeq::new(alphas, beta).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn theta_has_real_symmetric_offdiagonal_and_determinant_minus_one(alpha in disk(1.0)) {
        let t = theta_block(alpha).unwrap();
        let rho = t[0][1];
        prop_assert!((rho.norm_sqr() + alpha.norm_sqr() - 1.0).abs() < 1e-14);
        prop_assert_eq!(t[0][1], t[1][0]);
        let det = t[0][0] * t[1][1] - t[0][1] * t[1][0];
        prop_assert!((det + 1.0).norm() < 1e-14);
    }

    #[test]
    fn cmv_and_its_factors_are_unitary(seq in sequence(24)) {
        let (l, m) = build_lm_factors(&seq);
        prop_assert!(unitarity_defect(&l) < 1e-13);
        prop_assert!(unitarity_defect(&m) < 1e-13);
        prop_assert!(unitarity_defect(build_cmv(&seq).entries()) < 1e-12);
    }

    #[test]
    fn tail_rotation_conjugates(seq in sequence(12), lambda in circle(), pick in 0usize..100) {
        let n = pick % (seq.n_dim() - 1);
        prop_assert!(conjugation_residual(&seq, n, lambda).unwrap() < 1e-12);
    }

    #[test]
    fn windowed_sup_stays_below_the_weight_bound(seq in sequence(16), k in 0usize..16, l in 0usize..16) {
        let n = seq.n_dim();
        let (k, l) = (k % n, l % n);
        let sd = eigendecompose_unitary(&build_cmv(&seq)).unwrap();
        let (sup, bound) = windowed_sup_and_bound(&sd, k, l, 2 * n);
        prop_assert!(sup <= bound + 1e-12);
        prop_assert!(sup <= 1.0 + 1e-12);
        if k == l {
            prop_assert!(sup >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn holder_and_jensen_gaps_are_nonnegative(
        raw in prop::collection::vec((0.0f64..1.0, 0.0f64..50.0), 1..20),
        p in 0.01f64..0.99,
    ) {
        let total: f64 = raw.iter().map(|x| x.0).sum();
        prop_assume!(total > 1e-6);
        let mu: Vec<f64> = raw.iter().map(|x| x.0 / total).collect();
        let g: Vec<f64> = raw.iter().map(|x| x.1).collect();
        let scale = 1.0 + g.iter().cloned().fold(0.0, f64::max);
        prop_assert!(holder_interpolation_gap(&mu, &g, p) >= -1e-12 * scale);
        prop_assert!(jensen_gap(&mu, &g, p) >= -1e-12 * scale);
    }

    #[test]
    fn exact_exponentials_are_fitted_exactly(c in 0.01f64..100.0, kappa in -1.0f64..2.0, d0 in 0i64..10) {
        let d: Vec<i64> = (d0..d0 + 8).collect();
        let v: Vec<f64> = d.iter().map(|&d| c * (-kappa * d as f64).exp()).collect();
        let fit = fit_decay(&d, &v, Weights::Uniform).unwrap();
        prop_assert!((fit.rate - kappa).abs() < 1e-9);
        prop_assert!((fit.prefactor / c - 1.0).abs() < 1e-8);
        prop_assert!((0.0..=1.0).contains(&fit.r_squared));
    }

    #[test]
    fn config_round_trips(seed in any::<u64>(), n_dim in 20usize..200, p in 0.01f64..0.99, samples in 1usize..1000) {
        let mut config = RunConfig::new(Command::Decay);
        config.seed = seed;
        config.n_dim = n_dim;
        config.p = p;
        config.n_samples = samples;
        config.n_window = None;
        config.pairs = None;
        let text = serde_json::to_string(&config).unwrap();
        let parsed = parse_config(&text).unwrap();
        prop_assert_eq!(&parse_config(&parsed.emit()).unwrap(), &parsed);
        prop_assert_eq!(parsed.p, p);
        prop_assert_eq!(parsed.n_window(), 4 * n_dim);
    }
}
