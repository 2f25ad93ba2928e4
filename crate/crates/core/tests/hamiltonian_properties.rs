use ldp_core::hamiltonians::{model_free_energy, random_fields, transformed_generator, RadialTestFn};
use ldp_core::models::{FwDrift, FwSigma, NoiseProfile, NoiseSpec, PotentialSpec};
use ldp_core::oracles::{dense_log_generator, fd_log_generator, ou_log_generator_fd};
use ldp_core::simulator::{simulate_path, SimConfig};
use ldp_core::{BasisIndex, Model, ModelSpec, SpectralField};
use proptest::prelude::*;

fn ac(n: f64, multiplicative: bool) -> Model {
    let noise = if multiplicative {
        let probe = SpectralField::mode(1, 2, &BasisIndex::new(vec![2]).unwrap(), 1.0).unwrap();
        NoiseSpec::Multiplicative { probes: vec![probe], profile: NoiseProfile::Modulated { base: 1.0, amplitude: 0.4 } }
    } else {
        NoiseSpec::Additive
    };
    Model::new(ModelSpec::AllenCahn { dim: 1, m: 4, n, potential: PotentialSpec::default(), noise }).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn generator_matches_dense_oracle(
        seed in any::<u64>(),
        n in 8.0..512.0f64,
        mu in 0.1..3.0f64,
        multiplicative in any::<bool>(),
        log_energy in any::<bool>(),
    ) {
        let model = ac(n, multiplicative);
        let mut pts = random_fields(&model, 2, 2.0, seed);
        let x = pts.remove(0);
        let f = if log_energy { RadialTestFn::log_free_energy(&model) } else { RadialTestFn::quadratic(mu, pts.remove(0)) };
        let got = transformed_generator(&f, &x, &model).unwrap().total;
        let want = dense_log_generator(&f, &x, &model).unwrap();
        prop_assert!(rel(got, want) <= 1e-8, "{got} vs {want}");
    }

    #[test]
    fn generator_matches_value_only_differences(
        seed in any::<u64>(),
        n in 8.0..512.0f64,
        multiplicative in any::<bool>(),
    ) {
        let model = ac(n, multiplicative);
        let x = random_fields(&model, 1, 2.0, seed).remove(0);
        let f = RadialTestFn::log_free_energy(&model);
        let got = transformed_generator(&f, &x, &model).unwrap().total;
        let want = fd_log_generator(&f, &x, &model, 1e-3).unwrap();
        prop_assert!(rel(got, want) <= 1e-8, "{got} vs {want}");
    }

    #[test]
    fn finite_family_generator_matches_dense_oracle(
        x in prop::collection::vec(-2.0..2.0f64, 2),
        c in prop::collection::vec(-1.0..1.0f64, 2),
        mu in 0.1..3.0f64,
    ) {
        let model = Model::new(ModelSpec::FiniteDimFw {
            n: 20.0,
            drift: FwDrift::Linear { matrix: vec![vec![-1.0, 0.5], vec![-0.3, -2.0]] },
            sigma: FwSigma::Matrix { rows: vec![vec![1.0, 0.2], vec![0.0, 0.7]] },
        })
        .unwrap();
        let f = RadialTestFn::quadratic(mu, c);
        let got = transformed_generator(&f, &x, &model).unwrap().total;
        let want = dense_log_generator(&f, &x, &model).unwrap();
        prop_assert!(rel(got, want) <= 1e-8);
    }

    #[test]
    fn ou_generator_matches_difference_quotients(x in -1.5..1.5f64, mu in 0.2..2.0f64) {
        let n = 4.0;
        let model = Model::new(ModelSpec::ornstein_uhlenbeck(n)).unwrap();
        let got = transformed_generator(&RadialTestFn::quadratic(mu, vec![0.0]), &[x], &model).unwrap().total;
        prop_assert!((got - ou_log_generator_fd(mu, x, n, 1e-4)).abs() <= 1e-5);
    }

    #[test]
    fn gradient_term_ignores_constants_and_drift_term_is_linear(seed in any::<u64>(), mu in 0.1..3.0f64, c in -5.0..5.0f64) {
        let model = ac(64.0, true);
        let mut pts = random_fields(&model, 2, 2.0, seed);
        let x = pts.remove(0);
        let center = pts.remove(0);
        let f = RadialTestFn::quadratic(mu, center.clone());
        let a = transformed_generator(&f, &x, &model).unwrap();
        let b = transformed_generator(&f.clone().shifted(c), &x, &model).unwrap();
        prop_assert_eq!(a.gradient, b.gradient);
        let unit = transformed_generator(&RadialTestFn::quadratic(1.0, center), &x, &model).unwrap();
        prop_assert!((a.drift - mu * unit.drift).abs() <= 1e-12 * a.drift.abs().max(1.0));
    }

    #[test]
    fn allen_cahn_flow_dissipates_free_energy(x0 in prop::collection::vec(-1.0..1.0f64, 4)) {
        let model = ac(64.0, false);
        let dt = 1e-3;
        let path = simulate_path(&x0, &model, &SimConfig::new(dt, 0.1).deterministic()).unwrap();
        let e: Vec<f64> = path.states().map(|x| model_free_energy(&model, x).unwrap()).collect();
        for w in e.windows(2) {
            prop_assert!(w[1] <= w[0] + dt * 1e-6);
        }
    }
}

#[test]
fn free_energy_has_quadratic_lower_bound() {
    let model = ac(64.0, false);
    let (c1, c2) = PotentialSpec::default().lower_bound();
    for x in random_fields(&model, 100, 4.0, 21) {
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        assert!(model_free_energy(&model, &x).unwrap() >= c1 + c2 * norm2 - 1e-12);
    }
}
