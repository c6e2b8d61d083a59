//! Conserved four-momentum and angular momentum of the two-body action.
//!
//! With pi_i the momentum of particle i including its lightcone interaction
//! terms, the equations of motion give d pi_1/dt1 = int f dt2 and
//! d pi_2/dt2 = -int f dt1 for the force kernel f(t1, t2). The quantity
//!
//!   P(t1, t2) = p_1(t1) + p_2(t2) - int_{R1} f + int_{R2} f
//!
//! is then independent of (t1, t2) on an extremal, where R1 = (t1, L+) x
//! (O-, t2) and R2 = (O_A, t1) x (t2, L_B). The same construction with the
//! Lorentz generator gives the angular momentum.
//!
//! The kernels contain delta'(s) of the interval s = x12.x12. Integrating
//! by parts along the partner turns it into a sum over the roots inside the
//! inner interval plus point terms where an edge of the rectangle meets the
//! lightcone of an outer event.

use crate::error::{Error, Result};
use crate::lightcone::{find_root, Branch};
use crate::minkowski::{dot3, gamma_of_velocity, FourVector, Vec3};
use crate::quadrature::gauss_points;
use crate::scalar::{Dual, Scalar};
use crate::trajectory::{BoundaryData, Pair, Particle, Trajectory};

/// Index pairs (a, b), a < b, of the independent entries of an
/// antisymmetric 4x4 array.
pub const WEDGE_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoetherState {
    /// Total four-momentum, contravariant components.
    pub p: FourVector,
    /// Angular momentum L^{ab}, antisymmetric.
    pub l: [[f64; 4]; 4],
    pub t1: f64,
    pub t2: f64,
}

impl NoetherState {
    /// Orbital angular momentum L^{xy}.
    pub fn lxy(&self) -> f64 {
        self.l[1][2]
    }
}

fn wedge(a: [f64; 4], b: [f64; 4]) -> [f64; 6] {
    WEDGE_PAIRS.map(|(i, j)| a[i] * b[j] - a[j] * b[i])
}

fn antisymmetric(w: [f64; 6]) -> [[f64; 4]; 4] {
    let mut l = [[0.0; 4]; 4];
    for (k, &(i, j)) in WEDGE_PAIRS.iter().enumerate() {
        l[i][j] = w[k];
        l[j][i] = -w[k];
    }
    l
}

fn four(t: f64, r: Vec3) -> [f64; 4] {
    [t, r[0], r[1], r[2]]
}

/// m gamma (1, v) minus kappa (1, v_partner) / (2|J|) for both partner
/// roots of the event at `t` on trajectory `which`.
pub fn particle_momentum(pair: &Pair, which: Particle, t: f64) -> Result<FourVector> {
    let me = pair.get(which);
    let partner = pair.get(which.other());
    let s = me.eval(t)?;
    let g = gamma_of_velocity(s.v())?;
    let mut p = s.velocity * (me.mass * g);
    for br in Branch::BOTH {
        let root = find_root(partner, s.position, br)?;
        p = p - root.partner.velocity * (pair.coupling() / (2.0 * root.jacobian.abs()));
    }
    Ok(p)
}

/// Tail integrals over one rectangle: the delta' part with kernel
/// 2 kappa N (x12, x1 ^ x2) and the delta part with kernel kappa x1' ^ x2'.
#[derive(Debug, Clone, Copy, Default)]
struct Tail {
    momentum: [f64; 4],
    wedge_pos: [f64; 6],
    wedge_vel: [f64; 6],
}

impl Tail {
    fn add(&mut self, m: [f64; 4], wp: [f64; 6], wv: [f64; 6], scale: f64) {
        for i in 0..4 {
            self.momentum[i] += scale * m[i];
        }
        for i in 0..6 {
            self.wedge_pos[i] += scale * wp[i];
            self.wedge_vel[i] += scale * wv[i];
        }
    }
}

/// delta' kernel components at an event pair; N = x1'.x2'.
fn kernel<S: Scalar>(t1: f64, r1: Vec3, v1: Vec3, t2: S, r2: [S; 3], v2: [S; 3], kappa: f64) -> [S; 10] {
    let n = S::cst(1.0) - (v2[0] * v1[0] + v2[1] * v1[1] + v2[2] * v1[2]);
    let c = n * (2.0 * kappa);
    let x1 = [S::cst(t1), S::cst(r1[0]), S::cst(r1[1]), S::cst(r1[2])];
    let x2 = [t2, r2[0], r2[1], r2[2]];
    let mut out = [S::cst(0.0); 10];
    for i in 0..4 {
        out[i] = c * (x1[i] - x2[i]);
    }
    for (k, &(i, j)) in WEDGE_PAIRS.iter().enumerate() {
        out[4 + k] = c * (x1[i] * x2[j] - x1[j] * x2[i]);
    }
    out
}

/// Outer cells of `tr` over (lo, hi), split at `breaks`.
fn split_cells(tr: &Trajectory, lo: f64, hi: f64, breaks: &[f64]) -> Vec<(usize, f64, f64)> {
    let mut pts: Vec<f64> = tr.times().into_iter().filter(|&t| t > lo && t < hi).collect();
    pts.extend(breaks.iter().copied().filter(|&t| t > lo && t < hi));
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + a.abs()));
    pts.windows(2).map(|w| (tr.cell_of(0.5 * (w[0] + w[1])), w[0], w[1])).collect()
}

/// Partner roots on trajectory 1 of the trajectory-2 event at `e`, inside
/// the open outer interval.
fn edge_partners(pair: &Pair, e: f64, outer: (f64, f64)) -> Result<Vec<(f64, f64)>> {
    let two = &pair.two;
    if !two.contains(e) {
        return Ok(Vec::new());
    }
    let ev = two.eval(e)?.position;
    let mut out = Vec::new();
    for br in Branch::BOTH {
        match find_root(&pair.one, ev, br) {
            Ok(r) if r.t_other > outer.0 && r.t_other < outer.1 => out.push((r.t_other, r.jacobian.abs())),
            Ok(_) | Err(Error::RootNotBracketed { .. }) => {}
            Err(err) => return Err(err),
        }
    }
    Ok(out)
}

/// Both tail integrals over outer (t1) interval `outer` and inner (t2)
/// interval `inner`.
fn tail(pair: &Pair, outer: (f64, f64), inner: (f64, f64)) -> Result<Tail> {
    let (one, two) = (&pair.one, &pair.two);
    let kappa = pair.coupling();
    let mut out = Tail::default();
    // point terms where the inner edges meet the lightcone of an outer event
    let mut breaks = Vec::new();
    for (e, sign) in [(inner.0, -1.0), (inner.1, 1.0)] {
        for (t1s, j1) in edge_partners(pair, e, outer)? {
            breaks.push(t1s);
            let s1 = one.eval(t1s)?;
            let s2 = two.eval(e)?;
            let x12 = crate::minkowski::sub3(s1.r(), s2.r());
            let j2 = (t1s - e) - dot3(x12, s2.v());
            let k = kernel(t1s, s1.r(), s1.v(), e, s2.r(), s2.v(), kappa);
            // g delta(s) / (ds/dt2) at the edge, ds/dt2 = -2 J2, integrated over t1
            let w = sign / (-2.0 * j2 * 2.0 * j1);
            let m = [k[0], k[1], k[2], k[3]];
            let wp = [k[4], k[5], k[6], k[7], k[8], k[9]];
            out.add(m, wp, [0.0; 6], w);
        }
    }
    for (cell, a, b) in split_cells(one, outer.0, outer.1, &breaks) {
        for (t, w) in gauss_points(a, b) {
            let kin = one.cell_kin(cell, t);
            let ev = FourVector::from_parts(t, kin.pos);
            for br in Branch::BOTH {
                let root = match find_root(two, ev, br) {
                    Ok(r) => r,
                    Err(Error::RootNotBracketed { .. }) => continue,
                    Err(e) => return Err(e),
                };
                if !(root.t_other > inner.0 && root.t_other < inner.1) {
                    continue;
                }
                // delta' part: d/dt2 [g / (2J)] / |2J|
                let t2 = Dual::<1>::var(root.t_other, 0);
                let k2 = two.cell_kin(root.cell, t2);
                let dt = Dual::cst(t) - t2;
                let x12 = [Dual::cst(kin.pos[0]) - k2.pos[0], Dual::cst(kin.pos[1]) - k2.pos[1], Dual::cst(kin.pos[2]) - k2.pos[2]];
                let j = dt - crate::scalar::dot3s(x12, k2.vel);
                let g = kernel(t, kin.pos, kin.vel, t2, k2.pos, k2.vel, kappa);
                let inv = 1.0 / (2.0 * root.jacobian.abs());
                let d: Vec<f64> = g.iter().map(|gi| (*gi / (j * 2.0)).d[0] * inv).collect();
                // delta part: kappa x1' ^ x2' / |2J|
                let wv = wedge(four(1.0, kin.vel), four(1.0, root.partner.v()));
                out.add([d[0], d[1], d[2], d[3]], [d[4], d[5], d[6], d[7], d[8], d[9]], wv.map(|x| kappa * x * inv), w);
            }
        }
    }
    Ok(out)
}

/// Momentum and angular momentum at the evaluation pair (t1, t2).
pub fn noether_state(pair: &Pair, bd: &BoundaryData, t1: f64, t2: f64) -> Result<NoetherState> {
    let l_plus = bd.lambda1_plus;
    let o_minus = bd.lambda2_minus;
    let p1 = particle_momentum(pair, Particle::One, t1)?;
    let p2 = particle_momentum(pair, Particle::Two, t2)?;
    let r1 = tail(pair, (t1, l_plus), (o_minus, t2))?;
    let r2 = tail(pair, (bd.o_a.t, t1), (t2, bd.l_b.t))?;
    let pa = p1.to_array();
    let pb = p2.to_array();
    let mut p = [0.0; 4];
    for i in 0..4 {
        p[i] = pa[i] + pb[i] - r1.momentum[i] + r2.momentum[i];
    }
    let x1 = pair.one.eval(t1)?.position.to_array();
    let x2 = pair.two.eval(t2)?.position.to_array();
    let (w1, w2) = (wedge(x1, pa), wedge(x2, pb));
    let mut w = [0.0; 6];
    for k in 0..6 {
        let h1 = r1.wedge_pos[k] - r1.wedge_vel[k];
        let h2 = r2.wedge_pos[k] - r2.wedge_vel[k];
        w[k] = w1[k] + w2[k] + h1 - h2;
    }
    Ok(NoetherState { p: FourVector::from_array(p), l: antisymmetric(w), t1, t2 })
}

pub fn noether_momentum(pair: &Pair, bd: &BoundaryData, t1: f64, t2: f64) -> Result<FourVector> {
    Ok(noether_state(pair, bd, t1, t2)?.p)
}

pub fn noether_angular(pair: &Pair, bd: &BoundaryData, t1: f64, t2: f64) -> Result<[[f64; 4]; 4]> {
    Ok(noether_state(pair, bd, t1, t2)?.l)
}

/// `n` evaluation pairs: trajectory-1 nodes spread over the part of the
/// window where both partner roots exist, each with the nearest
/// trajectory-2 node.
pub fn evaluation_pairs(pair: &Pair, bd: &BoundaryData, n: usize) -> Vec<(f64, f64)> {
    let (lo, hi) = (bd.lambda2_plus, bd.t1);
    let t1s: Vec<f64> = pair.one.times().into_iter().filter(|&t| t > lo && t < hi).collect();
    let t2s = pair.two.times();
    if t1s.is_empty() || n == 0 {
        return Vec::new();
    }
    (0..n)
        .map(|k| {
            let i = if n == 1 { t1s.len() / 2 } else { k * (t1s.len() - 1) / (n - 1) };
            let t1 = t1s[i];
            let t2 = *t2s
                .iter()
                .filter(|&&t| t > bd.lambda2_plus && t < bd.l_b.t)
                .min_by(|a, b| (*a - t1).abs().total_cmp(&(*b - t1).abs()))
                .unwrap_or(&t1);
            (t1, t2)
        })
        .collect()
}

/// Largest relative change of p (Euclidean norm of the components) and of
/// L^{xy} over a set of states, against the first.
pub fn drift(states: &[NoetherState]) -> (f64, f64) {
    let Some(first) = states.first() else { return (0.0, 0.0) };
    let p0 = first.p.to_array();
    let pn = p0.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut dp = 0.0f64;
    let mut dl = 0.0f64;
    for s in states {
        let d = s.p.to_array().iter().zip(&p0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        dp = dp.max(d / pn);
        dl = dl.max((s.lxy() - first.lxy()).abs() / first.lxy().abs().max(f64::MIN_POSITIVE));
    }
    (dp, dl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::TrajectoryNode;

    fn static_pair(d: f64) -> Pair {
        let mk = |p: Particle, x: f64, m: f64, e: f64| {
            let nodes = (-10..=50).map(|k| TrajectoryNode { t: k as f64, pos: [x, 0.0, 0.0], vel: [0.0; 3] }).collect();
            Trajectory::new(nodes, p, m, e).unwrap()
        };
        Pair::new(mk(Particle::One, 0.0, 1.0, -1.0), mk(Particle::Two, d, 1824.0, 1.0)).unwrap()
    }

    #[test]
    fn static_particle_momentum() {
        let pair = static_pair(3.0);
        let p = particle_momentum(&pair, Particle::One, 20.0).unwrap();
        assert!((p.t - 2.0 / 3.0).abs() < 1e-12);
        assert!(p.spatial().iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn antisymmetry_is_exact() {
        let l = antisymmetric([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(l[i][j], -l[j][i]);
            }
        }
    }
}
