use ldp_core::models::{NoiseSpec, PotentialSpec};
use ldp_core::oracles::linear_qp;
use ldp_core::rate::{action, gradient_check, minimize_action, pinned, MinimizeOptions};
use ldp_core::{Model, ModelSpec};
use proptest::prelude::*;

fn ac() -> Model {
    Model::new(ModelSpec::AllenCahn { dim: 1, m: 3, n: 64.0, potential: PotentialSpec::default(), noise: NoiseSpec::Additive })
        .unwrap()
}

fn scalar_linear(kappa: f64, sigma: f64) -> Model {
    use ldp_core::models::{FwDrift, FwSigma};
    Model::new(ModelSpec::FiniteDimFw {
        n: 10.0,
        drift: FwDrift::Linear { matrix: vec![vec![-kappa]] },
        sigma: FwSigma::Scaled { scale: sigma },
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn analytic_gradient_matches_differences(seed in any::<u64>(), a in prop::collection::vec(-1.0..1.0f64, 3)) {
        let model = ac();
        let opts = MinimizeOptions { max_iter: 5, ..MinimizeOptions::default() };
        let (path, _) = minimize_action(&a, &[0.8, 0.0, 0.1], 1.0, &model, 16, &opts, None).unwrap();
        prop_assert!(gradient_check(&path, &model, 1, 0.1, seed).unwrap() < 1e-5);
    }

    #[test]
    fn linear_minimum_matches_quadratic_program(kappa in 0.0..2.0f64, sigma in 0.5..2.0f64, x0 in -1.0..1.0f64, x1 in -1.0..1.0f64) {
        let model = scalar_linear(kappa, sigma);
        let (_, rep) = minimize_action(&[x0], &[x1], 1.0, &model, 32, &MinimizeOptions::default(), None).unwrap();
        let (want, _) = linear_qp(kappa, sigma, x0, x1, 1.0, 32);
        prop_assert!((rep.total - want).abs() <= 1e-6 * want.max(1.0), "{} vs {}", rep.total, want);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn refinement_and_self_consistency(a in prop::collection::vec(-0.6..0.6f64, 3), b in prop::collection::vec(-0.6..0.6f64, 3)) {
        let model = ac();
        let opts = MinimizeOptions::default();
        let mut prev = f64::INFINITY;
        for slices in [8, 16, 32] {
            let (path, rep) = minimize_action(&a, &b, 1.0, &model, slices, &opts, None).unwrap();
            prop_assert!(rep.converged);
            let again = action(&path, &model, pinned).unwrap().total;
            prop_assert!((again - rep.total).abs() <= 1e-10 * rep.total.max(1.0));
            prop_assert!(rep.total <= prev + 1e-8);
            prev = rep.total;
        }
    }
}
