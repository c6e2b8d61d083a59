use rand::SeedableRng;
use std::f64::consts::PI;
use wfvar::circular::{kepler_circular, make_circular_ehbc, refine_circular, CircularEhbc};
use wfvar::second_variation::assemble_hessian;
use wfvar::solver::{minimize_report_consistency, solve, Optimizer, SolveOptions};
use wfvar::spline::PerturbationBasis;
use wfvar::{Error, Particle};

fn short_arc(npt: usize) -> CircularEhbc {
    let spec = refine_circular(&kepler_circular(100.0, 1.0, 1824.0)).unwrap();
    make_circular_ehbc(&spec, 0.8 * PI, npt).unwrap()
}

/// Smooth perturbation with sup norm `rel` times each orbit radius.
fn kick(c: &CircularEhbc, rel: f64, seed: u64) -> Vec<f64> {
    let basis = PerturbationBasis::new(&c.pair, &c.bd).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; basis.dim()];
    for (p, rho) in [(Particle::One, c.spec.rho1), (Particle::Two, c.spec.rho2)] {
        let b = basis.smooth_random(&mut rng, 4, Some(p));
        let m = b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (xi, bi) in x.iter_mut().zip(&b) {
            *xi += bi * rel * rho / m;
        }
    }
    x
}

#[test]
fn returns_to_the_circular_orbit() {
    let c = short_arc(128);
    let x = kick(&c, 1e-3, 1);
    let q = assemble_hessian(&c.pair, &c.bd).unwrap();
    let start = q.basis.apply(&c.pair, &x, 1.0).unwrap();
    let (sol, r) = solve(&start, &c.bd, &SolveOptions::default()).unwrap();
    assert!(r.converged && r.monotone());
    assert!(r.final_max_residual < 1e-6);
    let predicted = q.value(&x);
    assert!(((r.decreases[0] - predicted) / predicted).abs() < 0.2, "{} vs {predicted}", r.decreases[0]);
    let check = minimize_report_consistency(&sol, &c.bd, 1e-6).unwrap();
    assert!(check.passed(), "{:?}", check.failures);
}

#[test]
fn fixed_point_converges_immediately() {
    let c = short_arc(128);
    let (_, r) = solve(&c.pair, &c.bd, &SolveOptions::default()).unwrap();
    assert!(r.iterations <= 2, "{}", r.iterations);
}

#[test]
fn iteration_limit_reports_failure() {
    let c = short_arc(64);
    let x = kick(&c, 1e-3, 2);
    let basis = PerturbationBasis::new(&c.pair, &c.bd).unwrap();
    let start = basis.apply(&c.pair, &x, 1.0).unwrap();
    let opts = SolveOptions { max_iters: 0, ..Default::default() };
    match solve(&start, &c.bd, &opts) {
        Err(Error::SolverNoConvergence(r)) => {
            assert_eq!(r.iterations, 0);
            assert!(!r.converged && r.final_gradient_norm > 0.0);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn steepest_descent_decreases_monotonically() {
    let c = short_arc(64);
    let x = kick(&c, 1e-3, 3);
    let basis = PerturbationBasis::new(&c.pair, &c.bd).unwrap();
    let start = basis.apply(&c.pair, &x, 1.0).unwrap();
    let opts = SolveOptions { max_iters: 5, optimizer: Optimizer::SteepestDescent, ..Default::default() };
    let r = match solve(&start, &c.bd, &opts) {
        Ok((_, r)) => r,
        Err(Error::SolverNoConvergence(r)) => *r,
        Err(e) => panic!("{e}"),
    };
    assert!(r.iterations > 0 && r.monotone());
    assert!(r.decreases.iter().all(|d| *d >= 0.0));
}
