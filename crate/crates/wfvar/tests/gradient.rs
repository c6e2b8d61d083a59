use rand::SeedableRng;
use std::f64::consts::PI;
use wfvar::action::action_difference;
use wfvar::circular::{kepler_circular, make_circular_ehbc, refine_circular};
use wfvar::gradient::{action_gradient_dofs, discrete_action_gradient, eom_residual};
use wfvar::spline::PerturbationBasis;
use wfvar::Particle;

#[test]
fn gradient_matches_centered_differences() {
    let spec = kepler_circular(100.0, 1.0, 1824.0);
    let c = make_circular_ehbc(&spec, PI, 128).unwrap();
    let basis = PerturbationBasis::new(&c.pair, &c.bd).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let eps = 1e-4;
    for p in [Particle::One, Particle::Two] {
        let g = action_gradient_dofs(&c.pair, &c.bd, &basis, Some(p)).unwrap();
        for _ in 0..3 {
            let b = basis.smooth_random(&mut rng, 4, Some(p));
            let plus = basis.apply(&c.pair, &b, eps).unwrap();
            let minus = basis.apply(&c.pair, &b, -eps).unwrap();
            let fd = action_difference(&plus, &minus, &c.bd, Some(p)).unwrap() / (2.0 * eps);
            let an: f64 = g.iter().zip(&b).map(|(a, b)| a * b).sum();
            assert!(((an - fd) / fd).abs() < 1e-6, "{p:?}: {an} vs {fd}");
        }
    }
}

#[test]
fn node_gradient_has_no_time_component() {
    let spec = kepler_circular(100.0, 1.0, 1824.0);
    let c = make_circular_ehbc(&spec, PI, 64).unwrap();
    let g = discrete_action_gradient(&c.pair, &c.bd, Particle::Two).unwrap();
    assert!(!g.is_empty());
    assert!(g.iter().all(|(_, v)| v.t == 0.0));
    assert!(g.windows(2).all(|w| w[0].0 < w[1].0));
}

#[test]
fn refined_orbits_are_extremal_and_approach_kepler() {
    let mut gaps = Vec::new();
    for r in [100.0, 1000.0] {
        let spec = refine_circular(&kepler_circular(r, 1.0, 1824.0)).unwrap();
        let c = make_circular_ehbc(&spec, 2.0 * PI, 256).unwrap();
        let res = eom_residual(&c.pair, &c.bd).unwrap();
        assert!(res.max_norm() < 1e-8, "r = {r}: {}", res.max_norm());
        gaps.push(((spec.omega - spec.newtonian_omega()) / spec.newtonian_omega()).abs());
    }
    // at least linear in 1/r
    assert!(gaps[1] <= gaps[0] / 10.0 * 1.05, "{gaps:?}");
}
