//! Lightcone roots between an event and a partner world line, Jacobians,
//! delay rates and the delta-composed integrals built on them.
//!
//! For an event x1 and partner x2(t) the separation function is
//! d(t) = (t1 - t)^2 - |r1 - r2(t)|^2, with d'(t) = -2J and
//! J = (x1 - x2).x2' the Jacobian.

use crate::error::{Error, Result};
use crate::minkowski::{dot3, gamma_of_velocity, mink_dot, norm3, sub3, FourVector, Vec3};
use crate::scalar::{Dual, Scalar};
use crate::trajectory::{State, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// t2 = t1 - r
    Retarded,
    /// t2 = t1 + r
    Advanced,
}

impl Branch {
    pub const BOTH: [Branch; 2] = [Branch::Retarded, Branch::Advanced];

    /// +1 on the retarded branch, -1 on the advanced one.
    pub fn sign(self) -> f64 {
        match self {
            Branch::Retarded => 1.0,
            Branch::Advanced => -1.0,
        }
    }

    pub fn flip(self) -> Branch {
        match self {
            Branch::Retarded => Branch::Advanced,
            Branch::Advanced => Branch::Retarded,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightconeRoot {
    pub t_other: f64,
    pub branch: Branch,
    /// J = x12 . dx2/dt at the root.
    pub jacobian: f64,
    /// x12 = x1 - x2 at the root.
    pub separation: FourVector,
    pub r: f64,
    /// t2 - (t1 -/+ r)
    pub residual: f64,
    /// Partner state at the root.
    pub partner: State,
    pub cell: usize,
}

pub fn jacobian_threshold(r: f64) -> f64 {
    1e-8 * r
}

/// Null-separation tolerance 1e-10 (1 + |x12|^2).
pub fn cone_tolerance(x12: FourVector) -> f64 {
    let n = x12.norm4();
    1e-10 * (1.0 + n * n)
}

fn make_root(partner: &Trajectory, event: FourVector, t2: f64, branch: Branch, cell: usize) -> LightconeRoot {
    let kin = partner.cell_kin(cell, t2);
    let dr = sub3(event.spatial(), kin.pos);
    let r = norm3(dr);
    let dt = event.t - t2;
    LightconeRoot {
        t_other: t2,
        branch,
        jacobian: dt - dot3(dr, kin.vel),
        separation: FourVector::from_parts(dt, dr),
        r,
        residual: t2 - (event.t - branch.sign() * r),
        partner: State {
            position: FourVector::from_parts(t2, kin.pos),
            velocity: FourVector::from_parts(1.0, kin.vel),
            acceleration: FourVector::from_parts(0.0, kin.acc),
        },
        cell,
    }
}

fn check_jacobian(root: LightconeRoot) -> Result<LightconeRoot> {
    let th = jacobian_threshold(root.r);
    if !(root.jacobian.abs() >= th) || root.r == 0.0 {
        return Err(Error::NearLuminalJacobian { jacobian: root.jacobian, threshold: th });
    }
    Ok(root)
}

/// Newton polish on d with d' = -2J, at most five steps, kept inside [a, b].
fn polish(partner: &Trajectory, event: FourVector, mut t: f64, a: f64, b: f64) -> (f64, usize) {
    let r1 = event.spatial();
    let mut cell = partner.cell_of(t);
    for _ in 0..5 {
        let kin = partner.cell_kin(cell, t);
        let dr = sub3(r1, kin.pos);
        let dt = event.t - t;
        let d = dt * dt - dot3(dr, dr);
        let j = dt - dot3(dr, kin.vel);
        if j == 0.0 {
            break;
        }
        let step = d / (2.0 * j);
        let tn = t + step;
        if !(tn >= a && tn <= b) {
            break;
        }
        t = tn;
        cell = partner.cell_of(t);
        if step.abs() <= 4.0 * f64::EPSILON * (1.0 + t.abs()) {
            break;
        }
    }
    (t, cell)
}

/// The unique lightcone root of `event` on a subluminal partner.
pub fn find_root(partner: &Trajectory, event: FourVector, branch: Branch) -> Result<LightconeRoot> {
    let sigma = branch.sign();
    let r1 = event.spatial();
    // g is strictly decreasing for a subluminal partner and vanishes at the root
    let g = |k: usize| -> f64 {
        let n = &partner.nodes[k];
        (event.t - n.t) - sigma * norm3(sub3(r1, n.pos))
    };
    let n = partner.len();
    let tol = 1e-11 * (1.0 + event.t.abs());
    let (g0, gn) = (g(0), g(n - 1));
    if g0 < -tol || gn > tol {
        return Err(Error::RootNotBracketed { t_event: event.t });
    }
    if g0 <= 0.0 {
        return check_jacobian(make_root(partner, event, partner.nodes[0].t, branch, 0));
    }
    if gn >= 0.0 {
        let t = partner.nodes[n - 1].t;
        return check_jacobian(make_root(partner, event, t, branch, n - 2));
    }
    // largest k with g(t_k) > 0
    let (mut lo, mut hi) = (0usize, n - 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let cell = lo;
    let gt = |t: f64| -> f64 { (event.t - t) - sigma * norm3(sub3(r1, partner.cell_kin(cell, t).pos)) };
    let (ca, cb) = (partner.nodes[lo].t, partner.nodes[hi].t);
    let (mut a, mut b) = (ca, cb);
    while b - a > 1e-10 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if gt(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    let (t, c) = polish(partner, event, 0.5 * (a + b), ca, cb);
    check_jacobian(make_root(partner, event, t, branch, c))
}

/// Proper-time Jacobian x12 . u2 = gamma2 J.
pub fn jacobian_proper(root: &LightconeRoot) -> Result<f64> {
    let g = gamma_of_velocity(root.partner.v())?;
    let jt = g * root.jacobian;
    let th = jacobian_threshold(root.r);
    if jt.abs() < th {
        return Err(Error::NearLuminalJacobian { jacobian: jt, threshold: th });
    }
    Ok(jt)
}

/// d tau2 / d tau1 = (x12 . u1) / (x12 . u2) along the cone.
pub fn delay_rate(root: &LightconeRoot, own_velocity: Vec3) -> Result<f64> {
    let u1 = crate::minkowski::proper_velocity(own_velocity)?;
    let num = mink_dot(root.separation, u1);
    let den = jacobian_proper(root)?;
    let th = jacobian_threshold(root.r);
    if num.abs() < th {
        return Err(Error::NearLuminalJacobian { jacobian: num, threshold: th });
    }
    Ok(num / den)
}

/// d tau2(ret) / d tau2(adv), the product of two positive delay rates.
pub fn chain_rate(retarded: &LightconeRoot, advanced: &LightconeRoot, own_velocity: Vec3) -> Result<f64> {
    Ok(delay_rate(retarded, own_velocity)? / delay_rate(advanced, own_velocity)?)
}

/// Both subluminal roots that lie in `[lo, hi)`.
pub fn roots_in(partner: &Trajectory, event: FourVector, interval: (f64, f64)) -> Result<Vec<LightconeRoot>> {
    let mut out = Vec::with_capacity(2);
    for br in Branch::BOTH {
        match find_root(partner, event, br) {
            Ok(r) if r.t_other >= interval.0 && r.t_other < interval.1 => out.push(r),
            Ok(_) | Err(Error::RootNotBracketed { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Integral of delta(d) f over the partner parameter: sum of f / |2J| over
/// the roots in `[lo, hi)`, zero when there are none.
pub fn delta_integral(
    partner: &Trajectory,
    event: FourVector,
    interval: (f64, f64),
    f: impl Fn(&LightconeRoot) -> f64,
) -> Result<f64> {
    let mut s = 0.0;
    for root in roots_in(partner, event, interval)? {
        s += f(&root) / (2.0 * root.jacobian.abs());
    }
    Ok(s)
}

type LambdaFn<'a> = &'a dyn Fn(Dual<1>) -> Dual<1>;

/// Derivative at eps = 0 of the integral of delta(d + eps d_eps) f, via the
/// transformed integrand: sum over roots of d/dt [f d_eps / (2J)] / |2J|.
/// `f` and `d_eps` are functions of the partner parameter.
pub fn delta_integral_derivative(
    partner: &Trajectory,
    event: FourVector,
    interval: (f64, f64),
    f: LambdaFn,
    d_eps: LambdaFn,
) -> Result<f64> {
    for end in [interval.0, interval.1] {
        let v = d_eps(Dual::cst(end)).v;
        if v.abs() > 1e-12 {
            return Err(Error::EndpointPerturbed { value: v });
        }
    }
    let r1 = event.spatial();
    let mut s = 0.0;
    for root in roots_in(partner, event, interval)? {
        let t = Dual::<1>::var(root.t_other, 0);
        let kin = partner.cell_kin(root.cell, t);
        let dt = Dual::cst(event.t) - t;
        let dr = [
            Dual::cst(r1[0]) - kin.pos[0],
            Dual::cst(r1[1]) - kin.pos[1],
            Dual::cst(r1[2]) - kin.pos[2],
        ];
        let j = dt - crate::scalar::dot3s(dr, kin.vel);
        let g = f(t) * d_eps(t) / (j * 2.0);
        s += g.d[0] / (2.0 * root.jacobian.abs());
    }
    Ok(s)
}

/// A = sum over roots of (1, v2) / (2|J|).
pub fn vector_potential(partner: &Trajectory, event: FourVector, interval: (f64, f64)) -> Result<FourVector> {
    let mut a = FourVector::ZERO;
    for root in roots_in(partner, event, interval)? {
        a = a + root.partner.velocity * (1.0 / (2.0 * root.jacobian.abs()));
    }
    Ok(a)
}

fn separation(partner: &Trajectory, event: FourVector, t: f64) -> f64 {
    let dr = sub3(event.spatial(), partner.position(t));
    let dt = event.t - t;
    dt * dt - dot3(dr, dr)
}

/// Every sign change of d over the partner parameter in `[lo, hi)`, for
/// partners of any causal class. Scan step is one node interval, refined
/// eightfold where |d| at the ends is small relative to the step.
pub fn find_all_roots(partner: &Trajectory, event: FourVector, interval: (f64, f64)) -> Vec<LightconeRoot> {
    let (a0, b0) = partner.span();
    let lo = interval.0.max(a0);
    let hi = interval.1.min(b0);
    let mut out: Vec<LightconeRoot> = Vec::new();
    if !(hi > lo) {
        return out;
    }
    let d = |t: f64| separation(partner, event, t);
    let mut push = |t: f64| {
        if t < lo || t >= hi {
            return;
        }
        if out.last().is_some_and(|r: &LightconeRoot| (r.t_other - t).abs() < 1e-10) {
            return;
        }
        let cell = partner.cell_of(t);
        let br = if t <= event.t { Branch::Retarded } else { Branch::Advanced };
        out.push(make_root(partner, event, t, br, cell));
    };
    let mut knots: Vec<f64> = vec![lo];
    knots.extend(partner.nodes.iter().map(|n| n.t).filter(|&t| t > lo && t < hi));
    knots.push(hi);
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (da, db) = (d(a), d(b));
        let steps = if da.abs().min(db.abs()) < 0.1 * (b - a) { 8 } else { 1 };
        let mut s0 = a;
        let mut v0 = da;
        for j in 1..=steps {
            let s1 = if j == steps { b } else { a + (b - a) * j as f64 / steps as f64 };
            let v1 = if j == steps { db } else { d(s1) };
            if v0 == 0.0 {
                push(s0);
            } else if v0 * v1 < 0.0 {
                let (mut x0, mut x1, mut f0) = (s0, s1, v0);
                for _ in 0..200 {
                    let m = 0.5 * (x0 + x1);
                    if m <= x0 || m >= x1 || x1 - x0 < 1e-13 * (1.0 + m.abs()) {
                        break;
                    }
                    let fm = d(m);
                    if fm == 0.0 {
                        x0 = m;
                        x1 = m;
                        break;
                    }
                    if fm * f0 < 0.0 {
                        x1 = m;
                    } else {
                        x0 = m;
                        f0 = fm;
                    }
                }
                push(0.5 * (x0 + x1));
            }
            s0 = s1;
            v0 = v1;
        }
        if v0 == 0.0 && b >= hi {
            push(b);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Particle;

    fn static_partner(d: f64) -> Trajectory {
        let times: Vec<f64> = (0..=40).map(|k| k as f64).collect();
        Trajectory::from_fn(&times, Particle::Two, 1824.0, 1.0, |_| ([d, 0.0, 0.0], [0.0; 3])).unwrap()
    }

    #[test]
    fn static_roots() {
        let p = static_partner(3.0);
        let e = FourVector::new(10.0, 0.0, 0.0, 0.0);
        let r = find_root(&p, e, Branch::Retarded).unwrap();
        assert!((r.t_other - 7.0).abs() < 1e-12 && (r.jacobian - 3.0).abs() < 1e-12);
        let a = find_root(&p, e, Branch::Advanced).unwrap();
        assert!((a.t_other - 13.0).abs() < 1e-12 && (a.jacobian + 3.0).abs() < 1e-12);
        assert!((jacobian_proper(&r).unwrap() - 3.0).abs() < 1e-12);
        assert!(jacobian_proper(&a).unwrap() < 0.0);
        assert!((delay_rate(&r, [0.0; 3]).unwrap() - 1.0).abs() < 1e-12);
        assert!((delay_rate(&a, [0.0; 3]).unwrap() - 1.0).abs() < 1e-12);
        assert!(chain_rate(&r, &a, [0.0; 3]).unwrap() > 0.0);
    }

    #[test]
    fn root_outside_span() {
        let p = static_partner(3.0);
        let e = FourVector::new(1.0, 0.0, 0.0, 0.0);
        assert!(matches!(find_root(&p, e, Branch::Retarded), Err(Error::RootNotBracketed { .. })));
    }

    #[test]
    fn proper_jacobian_transverse_motion() {
        let v = 0.6;
        let times: Vec<f64> = (0..=40).map(|k| k as f64).collect();
        let p = Trajectory::from_fn(&times, Particle::Two, 1.0, 1.0, |t| ([5.0, v * (t - 20.0), 0.0], [0.0, v, 0.0]))
            .unwrap();
        // event on the x axis at the time the partner crosses y = 0 plus r
        let e = FourVector::new(25.0, 0.0, 0.0, 0.0);
        let r = find_root(&p, e, Branch::Retarded).unwrap();
        assert!((r.t_other - 20.0).abs() < 1e-12);
        assert!((jacobian_proper(&r).unwrap() - 1.25 * 5.0).abs() < 1e-10);
    }

    #[test]
    fn delta_integral_static() {
        let p = static_partner(3.0);
        let e = FourVector::new(10.0, 0.0, 0.0, 0.0);
        let both = delta_integral(&p, e, (0.0, 40.0), |_| 1.0).unwrap();
        assert!((both - 1.0 / 3.0).abs() < 1e-12);
        let one = delta_integral(&p, e, (0.0, 10.0), |_| 1.0).unwrap();
        assert!((one - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(delta_integral(&p, e, (8.0, 12.0), |_| 1.0).unwrap(), 0.0);
        let a = vector_potential(&p, e, (0.0, 40.0)).unwrap();
        assert!((a.t - 1.0 / 3.0).abs() < 1e-12 && a.spatial() == [0.0; 3]);
        assert_eq!(vector_potential(&p, e, (8.0, 12.0)).unwrap(), FourVector::ZERO);
    }

    #[test]
    fn derivative_closed_form_static() {
        // J = t1 - t on both branches; d_eps = (t - 0)(40 - t), f = 1
        let p = static_partner(3.0);
        let e = FourVector::new(10.0, 0.0, 0.0, 0.0);
        let de = |t: Dual<1>| t * (Dual::cst(40.0) - t);
        let one = |_t: Dual<1>| Dual::cst(1.0);
        let got = delta_integral_derivative(&p, e, (0.0, 40.0), &one, &de).unwrap();
        // g(t) = (t(40 - t)) / (2 (10 - t)); g' at t = 7 and 13, each over |2J| = 6
        let gp = |t: f64| {
            let u = t * (40.0 - t);
            let du = 40.0 - 2.0 * t;
            let w = 2.0 * (10.0 - t);
            (du * w + 2.0 * u) / (w * w)
        };
        let want = (gp(7.0) + gp(13.0)) / 6.0;
        assert!((got - want).abs() < 1e-12 * want.abs().max(1.0), "{got} vs {want}");
        let zero = |_t: Dual<1>| Dual::cst(0.0);
        assert_eq!(delta_integral_derivative(&p, e, (0.0, 40.0), &one, &zero).unwrap(), 0.0);
        assert!(matches!(
            delta_integral_derivative(&p, e, (1.0, 40.0), &one, &de),
            Err(Error::EndpointPerturbed { .. })
        ));
    }

    #[test]
    fn all_roots_static() {
        let p = static_partner(3.0);
        let e = FourVector::new(10.0, 0.0, 0.0, 0.0);
        let r = find_all_roots(&p, e, (0.0, 40.0));
        assert_eq!(r.len(), 2);
        assert!((r[0].t_other - 7.0).abs() < 1e-10 && (r[1].t_other - 13.0).abs() < 1e-10);
        assert!(find_all_roots(&p, e, (0.0, 6.0)).is_empty());
    }
}
