use rand::SeedableRng;
use std::f64::consts::PI;
use wfvar::action::action_difference;
use wfvar::circular::{kepler_circular, make_circular_ehbc, refine_circular};
use wfvar::second_variation::{
    assemble_hessian, binomial_bound_check, bifurcation_scan, fourier_bound_check, large_radius_forms, ScanTemplate,
};
use wfvar::spline::PerturbationBasis;
use wfvar::Perturbation;

fn sine(times: &[f64], k: f64, amp: [f64; 3]) -> Perturbation {
    let (a, z) = (times[0], times[times.len() - 1]);
    let w = k * PI / (z - a);
    Perturbation::from_fn(times, |t| {
        let (s, c) = ((w * (t - a)).sin(), (w * (t - a)).cos());
        (amp.map(|x| x * s), amp.map(|x| x * w * c))
    })
}

fn grid(a: f64, z: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| a + (z - a) * k as f64 / n as f64).collect()
}

#[test]
fn short_arc_hessian_is_positive_and_symmetric() {
    let spec = refine_circular(&kepler_circular(100.0, 1.0, 1824.0)).unwrap();
    let c = make_circular_ehbc(&spec, 0.8 * PI, 128).unwrap();
    let q = assemble_hessian(&c.pair, &c.bd).unwrap();
    assert!(q.symmetry_error() < 1e-9);
    assert!(q.min_eigenvalue() > 0.0, "{}", q.min_eigenvalue());
    assert!(q.cholesky().is_some());
}

#[test]
fn full_turn_has_one_conjugate_mode() {
    let spec = refine_circular(&kepler_circular(100.0, 1.0, 1824.0)).unwrap();
    let c = make_circular_ehbc(&spec, 2.0 * PI, 128).unwrap();
    let q = assemble_hessian(&c.pair, &c.bd).unwrap();
    let e = q.l2_eigenvalues().unwrap();
    assert!(e[0] < 0.0 && e[1] > 0.0, "{:?}", &e[..3]);
    // Newtonian estimate: reduced mass times (pi / window)^2 minus the tidal 1/r^3
    let mu = 1824.0 / 1825.0;
    let window = c.bd.variable_window(wfvar::Particle::One);
    let est = mu * (PI / (window.1 - window.0)).powi(2) - 1.0 / 100f64.powi(3);
    assert!(((e[0] - est) / est).abs() < 0.05, "{} vs {est}", e[0]);
}

#[test]
fn quadratic_value_matches_second_differences() {
    let spec = kepler_circular(100.0, 1.0, 1824.0);
    let c = make_circular_ehbc(&spec, PI, 64).unwrap();
    let q = assemble_hessian(&c.pair, &c.bd).unwrap();
    let basis = PerturbationBasis::new(&c.pair, &c.bd).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..3 {
        let x = basis.smooth_random(&mut rng, 3, None);
        let eps = 1e-3;
        let plus = basis.apply(&c.pair, &x, eps).unwrap();
        let minus = basis.apply(&c.pair, &x, -eps).unwrap();
        let d2 = (action_difference(&plus, &c.pair, &c.bd, None).unwrap()
            + action_difference(&minus, &c.pair, &c.bd, None).unwrap())
            / (eps * eps);
        let an = 2.0 * q.value(&x);
        assert!(((an - d2) / d2).abs() < 1e-4, "{an} vs {d2}");
    }
}

#[test]
fn large_radius_structure() {
    let spec = kepler_circular(1000.0, 1.0, 1824.0);
    let t = spec.period();
    let times = grid(0.0, t, 2000);
    let b1 = sine(&times, 1.0, [1.0, 0.5, 0.2]);
    let b2 = sine(&times, 2.0, [0.3, -0.2, 0.1]);
    let f = large_radius_forms(&spec, &b1, &b2);
    assert!(f.velocity > 0.0);
    assert!(f.vanishing.abs() < 1e-8, "{}", f.vanishing);
    assert!(f.position >= f.position_bound);
    let chain = binomial_bound_check(&spec, (&b1, spec.m1), (&b2, spec.m2));
    assert!(chain[0] >= chain[1] && chain[1] >= chain[2], "{chain:?}");
}

#[test]
fn fourier_lemma_ratios() {
    let times = grid(0.0, 50.0, 400);
    let (l1, r1) = fourier_bound_check(&sine(&times, 1.0, [1.0, 0.0, 0.0]), 50.0);
    assert!((l1 / r1 - 1.0).abs() < 1e-8);
    let (l2, r2) = fourier_bound_check(&sine(&times, 2.0, [0.0, 1.0, 0.0]), 50.0);
    assert!((l2 / r2 - 4.0).abs() < 1e-6);
}

#[test]
fn scan_reports_every_radius() {
    let tpl = ScanTemplate { nodes_per_turn: 64, ..Default::default() };
    let rows = bifurcation_scan(&[1000.0, 100.0], &tpl);
    assert_eq!(rows.len(), 2);
    for row in &rows {
        assert!(row.min_eig.is_some() || row.failure.is_some());
    }
}
