//! Circular two-body orbits: the leading-order Kepler family, refinement to
//! an exact circular solution of the delay equations of motion, and
//! matching exchange-of-history boundary data.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::gradient::{lw_force, proper_kinematics};
use crate::lightcone::Branch;
use crate::minkowski::{FourVector, Vec3};
use crate::sewing::{grid_with, Markers, SewingGrid};
use crate::trajectory::{BoundaryData, Pair, Particle, State, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircularOrbitSpec {
    /// Nominal separation the family was built for.
    pub r12: f64,
    pub omega: f64,
    pub v1: f64,
    pub v2: f64,
    pub rho1: f64,
    pub rho2: f64,
    /// Angular offset of particle 2 from particle 1.
    pub phase: f64,
    pub m1: f64,
    pub m2: f64,
    pub e1: f64,
    pub e2: f64,
}

pub const DEFAULT_NODES_PER_TURN: usize = 256;

impl CircularOrbitSpec {
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// Constant lightcone delay between the two orbits (same for both
    /// branches and both particles by symmetry).
    pub fn delay(&self) -> f64 {
        let (a, b, w, ph) = (self.rho1, self.rho2, self.omega, self.phase);
        // tau^2 = |r1(t) - r2(t - tau)|^2, solved by fixed-point Newton
        let f = |t: f64| t * t - (a * a + b * b - 2.0 * a * b * (ph + w * t).cos());
        let df = |t: f64| 2.0 * t - 2.0 * a * b * w * (ph + w * t).sin();
        let mut t = a + b;
        for _ in 0..60 {
            let s = f(t) / df(t);
            t -= s;
            if s.abs() <= 1e-16 * t {
                break;
            }
        }
        t
    }

    /// Exact position, velocity and acceleration on the ansatz.
    pub fn state(&self, p: Particle, t: f64) -> (Vec3, Vec3, Vec3) {
        let (rho, ph) = match p {
            Particle::One => (self.rho1, 0.0),
            Particle::Two => (self.rho2, self.phase),
        };
        let w = self.omega;
        let (s, c) = (w * t + ph).sin_cos();
        (
            [rho * c, rho * s, 0.0],
            [-rho * w * s, rho * w * c, 0.0],
            [-rho * w * w * c, -rho * w * w * s, 0.0],
        )
    }

    fn four_state(&self, p: Particle, t: f64) -> State {
        let (r, v, a) = self.state(p, t);
        State {
            position: FourVector::from_parts(t, r),
            velocity: FourVector::from_parts(1.0, v),
            acceleration: FourVector::from_parts(0.0, a),
        }
    }

    pub fn mass(&self, p: Particle) -> f64 {
        match p {
            Particle::One => self.m1,
            Particle::Two => self.m2,
        }
    }

    pub fn charge(&self, p: Particle) -> f64 {
        match p {
            Particle::One => self.e1,
            Particle::Two => self.e2,
        }
    }

    /// Sample both orbits at the given node parameters.
    pub fn sample_pair(&self, nodes1: &[f64], nodes2: &[f64]) -> Result<Pair> {
        let mk = |p: Particle, times: &[f64]| {
            Trajectory::from_fn(times, p, self.mass(p), self.charge(p), |t| {
                let (r, v, _) = self.state(p, t);
                (r, v)
            })
        };
        Pair::new(mk(Particle::One, nodes1)?, mk(Particle::Two, nodes2)?)
    }

    /// Newtonian reduced-mass Kepler frequency sqrt(M / (m1 m2)) r^(-3/2).
    pub fn newtonian_omega(&self) -> f64 {
        let mt = self.m1 + self.m2;
        (mt / (self.m1 * self.m2)).sqrt() * self.r12.powf(-1.5)
    }
}

/// Leading-order circular data: v1 = m2/(M sqrt r), v2 = m1/(M sqrt r),
/// period 2 pi sqrt(M/(m1 m2)) r^(3/2), electron-proton charges.
pub fn kepler_circular(r12: f64, m1: f64, m2: f64) -> CircularOrbitSpec {
    let mt = m1 + m2;
    let v1 = m2 / (mt * r12.sqrt());
    let v2 = m1 / (mt * r12.sqrt());
    let period = 2.0 * PI * (mt / (m1 * m2)).sqrt() * r12.powf(1.5);
    let omega = 2.0 * PI / period;
    CircularOrbitSpec {
        r12,
        omega,
        v1,
        v2,
        rho1: v1 / omega,
        rho2: v2 / omega,
        phase: PI,
        m1,
        m2,
        e1: -1.0,
        e2: 1.0,
    }
}

/// Build a spec with delay exactly `tau`, frequency `omega` and radius
/// split `s` = rho1 / (rho1 + rho2), opposition exactly pi.
fn spec_with(base: &CircularOrbitSpec, tau: f64, omega: f64, s: f64) -> CircularOrbitSpec {
    // tau^2 = sigma^2 (s^2 + (1-s)^2 + 2 s (1-s) cos(omega tau))
    let q = s * s + (1.0 - s) * (1.0 - s) + 2.0 * s * (1.0 - s) * (omega * tau).cos();
    let sigma = tau / q.sqrt();
    let (rho1, rho2) = (s * sigma, (1.0 - s) * sigma);
    CircularOrbitSpec {
        r12: base.r12,
        omega,
        v1: omega * rho1,
        v2: omega * rho2,
        rho1,
        rho2,
        phase: PI,
        ..*base
    }
}

/// Outward radial residuals of both equations of motion at t = 0 on the
/// exact ansatz.
pub fn circular_residual(spec: &CircularOrbitSpec) -> Result<[f64; 2]> {
    let tau = spec.delay();
    let kappa = -spec.e1 * spec.e2;
    let mut out = [0.0; 2];
    for p in [Particle::One, Particle::Two] {
        let me = spec.four_state(p, 0.0);
        let (_, du) = proper_kinematics(me.v(), me.a())?;
        let mut g = du * spec.mass(p);
        for br in Branch::BOTH {
            let src = spec.four_state(p.other(), -br.sign() * tau);
            g = g - lw_force(&src, me.position, me.v())? * kappa;
        }
        let outward = me.r()[0].signum();
        out[p.index()] = g.x * outward;
    }
    Ok(out)
}

/// Solve the radial balance of both particles for (omega, radius split)
/// with the lightcone delay held at `r12`, keeping exact opposition.
pub fn refine_circular(spec: &CircularOrbitSpec) -> Result<CircularOrbitSpec> {
    let tau = spec.r12;
    let mut w = spec.omega;
    let mut s = spec.rho1 / (spec.rho1 + spec.rho2);
    let res = |w: f64, s: f64| circular_residual(&spec_with(spec, tau, w, s));
    let scale = 1.0 / (tau * tau);
    let mut r = res(w, s)?;
    let mut best = f64::INFINITY;
    let mut stall = 0;
    for _ in 0..100 {
        let norm = r[0].abs().max(r[1].abs());
        if norm < 1e-15 * scale {
            return Ok(spec_with(spec, tau, w, s));
        }
        if norm < best * 0.5 {
            best = norm;
            stall = 0;
        } else {
            stall += 1;
            if stall >= 3 && norm < 1e-10 {
                return Ok(spec_with(spec, tau, w, s));
            }
        }
        let hw = 1e-7 * w;
        let hs = 1e-6 * (1.0 - s).min(s);
        let rwp = res(w + hw, s)?;
        let rwm = res(w - hw, s)?;
        let rsp = res(w, s + hs)?;
        let rsm = res(w, s - hs)?;
        let j = [
            [(rwp[0] - rwm[0]) / (2.0 * hw), (rsp[0] - rsm[0]) / (2.0 * hs)],
            [(rwp[1] - rwm[1]) / (2.0 * hw), (rsp[1] - rsm[1]) / (2.0 * hs)],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let dw = (j[1][1] * r[0] - j[0][1] * r[1]) / det;
        let ds = (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
        w -= dw;
        s -= ds;
        if !(w > 0.0 && s > 0.0 && s < 1.0) {
            break;
        }
        r = res(w, s)?;
    }
    let norm = r[0].abs().max(r[1].abs());
    if norm < 1e-10 {
        return Ok(spec_with(spec, tau, w, s));
    }
    Err(Error::NoConvergence { context: "refine_circular", iterations: 100, residual: norm })
}

/// Circular orbit with exchange-of-history boundary data and its sewing grid.
#[derive(Debug, Clone)]
pub struct CircularEhbc {
    pub spec: CircularOrbitSpec,
    pub arc: f64,
    pub bd: BoundaryData,
    pub pair: Pair,
    pub grid: SewingGrid,
}

/// Chains needed for roughly `nodes_per_turn` nodes per turn on each orbit.
pub fn chains_for_density(spec: &CircularOrbitSpec, nodes_per_turn: usize) -> usize {
    let n = (nodes_per_turn as f64 * spec.delay() / spec.period()).ceil() as usize;
    n.max(2)
}

/// O_A at phase 0 on orbit 1 (t = 0), L_B at phase `arc` on orbit 2.
pub fn make_circular_ehbc(spec: &CircularOrbitSpec, arc: f64, nodes_per_turn: usize) -> Result<CircularEhbc> {
    make_circular_ehbc_chains(spec, arc, chains_for_density(spec, nodes_per_turn))
}

pub fn make_circular_ehbc_chains(spec: &CircularOrbitSpec, arc: f64, n_chains: usize) -> Result<CircularEhbc> {
    if !(arc > 0.0 && arc <= 2.0 * PI * (1.0 + 1e-4)) {
        return Err(Error::InvalidInput(format!("arc {arc} outside (0, 2 pi]")));
    }
    let tau = spec.delay();
    let t2 = arc / spec.omega;
    // the varied part of orbit 1 must outlast both history cuts
    let min_arc = 3.0 * tau * spec.omega;
    if t2 <= 3.0 * tau {
        return Err(Error::ArcTooShort { arc, min: min_arc });
    }
    let m = Markers { o_minus: -tau, o_plus: tau, l_minus: t2 - tau, l_plus: t2 + tau };
    let hop = move |_p: Particle, t: f64, br: Branch| -> Result<f64> { Ok(t - br.sign() * tau) };
    let grid = grid_with(&hop, m, n_chains)?;
    let pair = spec.sample_pair(grid.nodes(Particle::One), grid.nodes(Particle::Two))?;
    let tol = 1e-9 * (1.0 + t2);
    let o1 = pair.one.nodes[0];
    let l2 = pair.two.nodes[pair.two.len() - 1];
    let bd = BoundaryData {
        o_a: FourVector::from_parts(o1.t, o1.pos),
        l_b: FourVector::from_parts(l2.t, l2.pos),
        history1: pair.one.segment(m.l_minus, m.l_plus, tol)?,
        history2: pair.two.segment(m.o_minus, m.o_plus, tol)?,
        lambda2_minus: m.o_minus,
        lambda2_plus: m.o_plus,
        t1: m.l_minus,
        lambda1_plus: m.l_plus,
    };
    Ok(CircularEhbc { spec: *spec, arc, bd, pair, grid })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kepler_values() {
        let s = kepler_circular(100.0, 1.0, 1824.0);
        assert!((s.v1 - 0.0999452).abs() < 1e-7);
        assert!((s.v2 - 5.47945e-5).abs() < 1e-10);
        assert!((s.period() - 6284.91).abs() < 0.01);
        let e = kepler_circular(100.0, 1.0, 1.0);
        assert!((e.v1 - 0.05).abs() < 1e-15 && (e.v2 - 0.05).abs() < 1e-15);
    }

    #[test]
    fn delay_is_near_separation() {
        let s = kepler_circular(100.0, 1.0, 1824.0);
        let d = s.delay();
        assert!(((d - 100.0) / 100.0).abs() < 1.0 / 100.0);
        // consistency of the delay equation on the ansatz
        let (r1, _, _) = s.state(Particle::One, 0.0);
        let (r2, _, _) = s.state(Particle::Two, -d);
        let dist = crate::minkowski::norm3(crate::minkowski::sub3(r1, r2));
        assert!((dist - d).abs() < 1e-11);
    }

    #[test]
    fn refinement_reduces_residual_and_is_idempotent() {
        let k = kepler_circular(100.0, 1.0, 1824.0);
        let r0 = circular_residual(&k).unwrap();
        let s = refine_circular(&k).unwrap();
        let r1 = circular_residual(&s).unwrap();
        assert!(r1[0].abs() < 1e-10 && r1[1].abs() < 1e-10);
        assert!(r0[0].abs().max(r0[1].abs()) > r1[0].abs().max(r1[1].abs()));
        let s2 = refine_circular(&s).unwrap();
        assert!(((s2.omega - s.omega) / s.omega).abs() < 1e-12);
        assert!((s.v1 / s.v2 - s.m2 / s.m1).abs() / (s.m2 / s.m1) < 1e-2);
    }

    #[test]
    fn large_radius_matches_kepler() {
        let s = refine_circular(&kepler_circular(1e6, 1.0, 1824.0)).unwrap();
        assert!(((s.omega - s.newtonian_omega()) / s.newtonian_omega()).abs() < 1e-5);
    }

    #[test]
    fn ehbc_construction() {
        let s = kepler_circular(100.0, 1.0, 1824.0);
        let c = make_circular_ehbc(&s, 2.0 * PI, 256).unwrap();
        let tau = s.delay();
        assert!((c.bd.lambda2_plus - c.bd.lambda2_minus - 2.0 * tau).abs() < 1e-9);
        assert!(((c.bd.lambda2_plus - c.bd.lambda2_minus) / 200.0 - 1.0).abs() < 1e-2);
        assert!(matches!(make_circular_ehbc(&s, 0.05, 256), Err(Error::ArcTooShort { .. })));
    }
}
