use ldp_core::tataru::{
    h_eps, h_n_eps, semigroup_checks, tataru_distance, tataru_suite, SemigroupHandle, SuiteConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Rotation combined with decay: a nonsymmetric contraction given as an explicit map.
fn damped_rotation() -> SemigroupHandle {
    SemigroupHandle::explicit(2, |t, y| {
        let (c, s, d) = (t.cos(), t.sin(), (-0.5 * t).exp());
        vec![d * (c * y[0] - s * y[1]), d * (s * y[0] + c * y[1])]
    })
}

fn kinds() -> Vec<(&'static str, SemigroupHandle)> {
    vec![
        ("scalar", SemigroupHandle::scalar_decay()),
        ("spectral-heat", SemigroupHandle::spectral_heat(1, 4)),
        ("matrix", SemigroupHandle::finite_dim(&[vec![-1.0, 2.0], vec![-2.0, -0.5]]).unwrap()),
        ("explicit", damped_rotation()),
    ]
}

#[test]
fn standing_suites_hold_for_every_semigroup_kind() {
    for (name, s) in kinds() {
        let cfg = SuiteConfig { samples: 120, seed: 5, ..SuiteConfig::default() };
        for r in tataru_suite(&s, &cfg).unwrap().into_iter().chain(semigroup_checks(&s, 200, 2.0, 6)) {
            assert!(r.pass, "{name}: {r:?}");
        }
    }
}

#[test]
fn scalar_distance_matches_calculus() {
    let s = SemigroupHandle::scalar_decay();
    for y in [1.5f64, 2.0, 3.0, 5.0] {
        // t + y e^{−t} is minimized at ln y when y > 1
        let d = tataru_distance(&[0.0], &[y], &s).unwrap();
        assert!((d.value - (y.ln() + 1.0)).abs() < 1e-12);
    }
}

#[test]
fn soft_min_approaches_smoothed_distance() {
    let s = SemigroupHandle::spectral_heat(1, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut pt = || -> Vec<f64> { (0..4).map(|_| rng.random_range(-2.0..2.0)).collect() };
    for _ in 0..50 {
        let (x, y) = (pt(), pt());
        let h = h_eps(&x, &y, 1e-2, &s).unwrap().value;
        let gaps: Vec<f64> =
            [10.0, 30.0, 100.0, 300.0].iter().map(|&a| (h_n_eps(&x, &y, 1e-2, a, &s).unwrap().value - h).abs()).collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn soft_min_gradient_matches_differences(
        x in prop::collection::vec(-2.0..2.0f64, 4),
        y in prop::collection::vec(-2.0..2.0f64, 4),
        a in prop::sample::select(vec![10.0, 100.0]),
    ) {
        let s = SemigroupHandle::spectral_heat(1, 4);
        let g = h_n_eps(&x, &y, 1e-2, a, &s).unwrap().gradient;
        let h = 1e-6;
        for i in 0..4 {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (h_n_eps(&xp, &y, 1e-2, a, &s).unwrap().value - h_n_eps(&xm, &y, 1e-2, a, &s).unwrap().value) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0), "{} vs {}", fd, g[i]);
        }
    }

    #[test]
    fn distance_to_self_vanishes(x in prop::collection::vec(-3.0..3.0f64, 4)) {
        prop_assert_eq!(tataru_distance(&x, &x, &SemigroupHandle::spectral_heat(1, 4)).unwrap().value, 0.0);
    }
}
