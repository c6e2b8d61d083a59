use std::f64::consts::PI;
use wfvar::action::{action_difference, classify_extremal, fokker_action, interaction_integral, interaction_over_window, OrbitClass};
use wfvar::circular::{kepler_circular, make_circular_ehbc, refine_circular};
use wfvar::{BoundaryData, Pair, Particle, Trajectory};

fn static_ehbc(d: f64, t2: f64) -> (Pair, BoundaryData) {
    let line = |p: Particle, x: f64, lo: f64, hi: f64, m: f64, e: f64| {
        let n = (hi - lo).round() as usize;
        let times: Vec<f64> = (0..=n).map(|k| lo + k as f64).collect();
        Trajectory::from_fn(&times, p, m, e, |_| ([x, 0.0, 0.0], [0.0; 3])).unwrap()
    };
    let pair = Pair::new(line(Particle::One, 0.0, 0.0, t2 + d, 1.0, -1.0), line(Particle::Two, d, -d, t2, 1824.0, 1.0)).unwrap();
    let bd = BoundaryData::from_pair(&pair).unwrap();
    (pair, bd)
}

#[test]
fn static_interaction_over_a_span() {
    let (pair, _) = static_ehbc(4.0, 40.0);
    // inner window far from both ends sees both roots of every event
    let s = interaction_over_window(&pair, Particle::One, (10.0, 30.0)).unwrap();
    assert!((s - 2.0 * 20.0 / (2.0 * 4.0)).abs() < 1e-9, "{s}");
}

#[test]
fn outer_variable_choice_agrees_on_static_data() {
    let (pair, bd) = static_ehbc(3.0, 30.0);
    let a = interaction_integral(&pair, &bd, Particle::One).unwrap();
    let b = interaction_integral(&pair, &bd, Particle::Two).unwrap();
    assert!(((a - b) / a).abs() < 1e-8, "{a} {b}");
}

#[test]
fn outer_variable_choice_agrees_on_circular_data() {
    let spec = kepler_circular(100.0, 1.0, 1824.0);
    let c = make_circular_ehbc(&spec, 2.0 * PI, 128).unwrap();
    let a = interaction_integral(&c.pair, &c.bd, Particle::One).unwrap();
    let b = interaction_integral(&c.pair, &c.bd, Particle::Two).unwrap();
    assert!(((a - b) / a).abs() < 1e-8, "{a} {b}");
}

#[test]
fn action_is_deterministic_and_difference_is_termwise() {
    let spec = refine_circular(&kepler_circular(100.0, 1.0, 1824.0)).unwrap();
    let c = make_circular_ehbc(&spec, PI, 128).unwrap();
    let s1 = fokker_action(&c.pair, &c.bd).unwrap();
    let s2 = fokker_action(&c.pair, &c.bd).unwrap();
    assert_eq!(s1.total.to_bits(), s2.total.to_bits());
    assert_eq!(action_difference(&c.pair, &c.pair, &c.bd, None).unwrap(), 0.0);
    assert!((s1.total - (s1.kinetic1 + s1.kinetic2 + s1.interaction)).abs() < 1e-9 * s1.total.abs());
}

#[test]
fn circular_orbits_are_subluminal_with_constant_speed() {
    let spec = kepler_circular(30.0, 1.0, 1824.0);
    let c = make_circular_ehbc(&spec, 2.0 * PI, 64).unwrap();
    let r = classify_extremal(&c.pair);
    assert_eq!(r.class, [OrbitClass::Subluminal; 2]);
    assert!(r.constant(1e-10));
}
