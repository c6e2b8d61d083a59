//! Lienard-Wiechert forces, equation-of-motion residuals and the exact
//! gradient of the discretized partial action.

use crate::error::{Error, Result};
use crate::minkowski::{dot3, gamma_of_velocity, mink_dot, norm3, FourVector, Vec3};
use crate::trajectory::State;

/// Proper velocity and proper acceleration from coordinate velocity and
/// acceleration.
pub fn proper_kinematics(v: Vec3, a: Vec3) -> Result<(FourVector, FourVector)> {
    let g = gamma_of_velocity(v)?;
    let gd = g * g * g * dot3(v, a);
    let u = FourVector::from_parts(g, [g * v[0], g * v[1], g * v[2]]);
    let du = FourVector::new(
        g * gd,
        g * (gd * v[0] + g * a[0]),
        g * (gd * v[1] + g * a[1]),
        g * (gd * v[2] + g * a[2]),
    );
    Ok((u, du))
}

/// Force on a target at `target` moving with coordinate velocity
/// `target_v`, from a source whose state at the lightcone root is `source`.
/// Each branch carries half the Lienard-Wiechert field; the charge sign is
/// applied by the caller.
pub fn lw_force(source: &State, target: FourVector, target_v: Vec3) -> Result<FourVector> {
    let x = target - source.position;
    let (u2, a2) = proper_kinematics(source.v(), source.a())?;
    let (u1, _) = proper_kinematics(target_v, [0.0; 3])?;
    let j = mink_dot(x, u2);
    let r = norm3(x.spatial());
    let th = crate::lightcone::jacobian_threshold(r);
    if !(j.abs() >= th) {
        return Err(Error::NearLuminalJacobian { jacobian: j, threshold: th });
    }
    let rho2 = 2.0 * (j * j * j).abs();
    let xu1 = mink_dot(x, u1);
    let c1 = j / rho2;
    let c2 = (1.0 - mink_dot(x, a2)) / rho2;
    let first = a2 * xu1 - x * mink_dot(u1, a2);
    let second = u2 * xu1 - x * mink_dot(u1, u2);
    Ok(first * c1 + second * c2)
}

use rayon::prelude::*;

use crate::lightcone::{find_root, Branch};
use crate::quadrature::{cells_in_window, gauss_points};
use crate::spline::PerturbationBasis;
use crate::trajectory::{BoundaryData, Pair, Particle};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeResidual {
    pub t: f64,
    pub g: FourVector,
}

/// Residuals G = m du/dtau - kappa (F(ret) + F(adv)) at the interior nodes
/// of each varied window.
#[derive(Debug, Clone, PartialEq)]
pub struct EomResidual {
    pub g1: Vec<NodeResidual>,
    pub g2: Vec<NodeResidual>,
}

impl EomResidual {
    pub fn get(&self, p: Particle) -> &[NodeResidual] {
        match p {
            Particle::One => &self.g1,
            Particle::Two => &self.g2,
        }
    }

    pub fn max_norm(&self) -> f64 {
        self.g1.iter().chain(&self.g2).map(|n| n.g.norm4()).fold(0.0, f64::max)
    }

    pub fn max_norm_of(&self, p: Particle) -> f64 {
        self.get(p).iter().map(|n| n.g.norm4()).fold(0.0, f64::max)
    }
}

/// Residual and orthogonality defect u.G at one node.
pub fn node_residual(pair: &Pair, p: Particle, k: usize) -> Result<(FourVector, f64)> {
    let me = pair.get(p);
    let partner = pair.get(p.other());
    let n = me.nodes[k];
    let acc = me.node_acceleration(k);
    let (u, du) = proper_kinematics(n.vel, acc)?;
    let x = FourVector::from_parts(n.t, n.pos);
    let kappa = pair.coupling();
    let mut g = du * me.mass;
    for br in Branch::BOTH {
        let root = find_root(partner, x, br)?;
        g = g - lw_force(&root.partner, x, n.vel)? * kappa;
    }
    Ok((g, mink_dot(u, g)))
}

pub fn eom_residual(pair: &Pair, bd: &BoundaryData) -> Result<EomResidual> {
    let side = |p: Particle| -> Result<Vec<NodeResidual>> {
        let tr = pair.get(p);
        let (lo, hi) = bd.variable_window(p);
        let idx: Vec<usize> = (0..tr.len()).filter(|&k| tr.nodes[k].t > lo && tr.nodes[k].t < hi).collect();
        idx.par_iter()
            .map(|&k| Ok(NodeResidual { t: tr.nodes[k].t, g: node_residual(pair, p, k)?.0 }))
            .collect()
    };
    Ok(EomResidual { g1: side(Particle::One)?, g2: side(Particle::Two)? })
}

/// Hermite shape functions and their parameter derivatives at s in [0, 1]:
/// ([h00, h10, h01, h11], [d00, d10, d01, d11]).
pub(crate) fn shape(s: f64) -> ([f64; 4], [f64; 4]) {
    let (s2, s3) = (s * s, s * s * s);
    (
        [2.0 * s3 - 3.0 * s2 + 1.0, s3 - 2.0 * s2 + s, 3.0 * s2 - 2.0 * s3, s3 - s2],
        [6.0 * (s2 - s), 3.0 * s2 - 4.0 * s + 1.0, 6.0 * (s - s2), 3.0 * s2 - 2.0 * s],
    )
}

/// dL/dr and dL/dv of the Lagrangian of `which` at parameter t in cell k,
/// with the delay dependence of the partner times through dt2/dr = -x/J.
fn lagrangian_partials(pair: &Pair, which: Particle, k: usize, t: f64) -> Result<(Vec3, Vec3)> {
    let me = pair.get(which);
    let partner = pair.get(which.other());
    let kappa = pair.coupling();
    let kin = me.cell_kin(k, t);
    let (r, v) = (kin.pos, kin.vel);
    let g = gamma_of_velocity(v)?;
    let mut dr = [0.0; 3];
    let mut dv = [me.mass * g * v[0], me.mass * g * v[1], me.mass * g * v[2]];
    let ev = FourVector::from_parts(t, r);
    for br in Branch::BOTH {
        let root = find_root(partner, ev, br)?;
        let (v2, a2) = (root.partner.v(), root.partner.a());
        let x = root.separation.spatial();
        let j = root.jacobian;
        let s = j.signum();
        let n = 1.0 - dot3(v, v2);
        let dn_dt2 = -dot3(v, a2);
        let dj_dt2 = -1.0 + dot3(v2, v2) - dot3(x, a2);
        for c in 0..3 {
            let dt2 = -x[c] / j;
            let dn = dn_dt2 * dt2;
            let dj = -v2[c] + dj_dt2 * dt2;
            dr[c] += kappa / (2.0 * s) * (dn / j - n * dj / (j * j));
            dv[c] += -kappa * v2[c] / (2.0 * s * j);
        }
    }
    Ok((dr, dv))
}

/// Gradient of the partial action of `which` with respect to the Hermite
/// node values (position, velocity) of its varied window, window order.
pub fn partial_action_hermite_gradient(pair: &Pair, bd: &BoundaryData, which: Particle) -> Result<Vec<[f64; 6]>> {
    let me = pair.get(which);
    let (lo, hi) = bd.variable_window(which);
    let tol = 1e-8 * (1.0 + hi.abs());
    let first = me
        .node_index(lo, tol)
        .ok_or_else(|| crate::error::Error::InvalidEhbc(format!("no node at window start {lo}")))?;
    let cells = cells_in_window(&me.times(), lo, hi);
    let parts: Vec<(usize, [[f64; 6]; 2])> = cells
        .par_iter()
        .map(|&(k, a, b)| {
            let (t0, h) = (me.nodes[k].t, me.nodes[k + 1].t - me.nodes[k].t);
            let mut acc = [[0.0; 6]; 2];
            for (t, w) in gauss_points(a, b) {
                let (dr, dv) = lagrangian_partials(pair, which, k, t)?;
                let (hv, dh) = shape((t - t0) / h);
                for c in 0..3 {
                    acc[0][c] += w * (hv[0] * dr[c] + dh[0] / h * dv[c]);
                    acc[0][3 + c] += w * (h * hv[1] * dr[c] + dh[1] * dv[c]);
                    acc[1][c] += w * (hv[2] * dr[c] + dh[2] / h * dv[c]);
                    acc[1][3 + c] += w * (h * hv[3] * dr[c] + dh[3] * dv[c]);
                }
            }
            Ok((k, acc))
        })
        .collect::<Result<Vec<_>>>()?;
    let nw = cells.last().map(|c| c.0 + 2 - first).unwrap_or(0);
    let mut out = vec![[0.0; 6]; nw];
    for (k, acc) in parts {
        for (j, row) in acc.iter().enumerate() {
            for s in 0..6 {
                out[k - first + j][s] += row[s];
            }
        }
    }
    Ok(out)
}

/// Exact gradient of the discretized partial action of `which` over the
/// interior node positions of its varied window.
pub fn discrete_action_gradient(pair: &Pair, bd: &BoundaryData, which: Particle) -> Result<Vec<(f64, FourVector)>> {
    let basis = PerturbationBasis::new(pair, bd)?;
    let g = action_gradient_dofs(pair, bd, &basis, Some(which))?;
    let off = basis.offset(which);
    Ok(basis
        .dof_times(which)
        .iter()
        .enumerate()
        .map(|(m, &t)| {
            let i = off + 3 * m;
            (t, FourVector::new(0.0, g[i], g[i + 1], g[i + 2]))
        })
        .collect())
}

/// Gradient over the basis DOFs: partial action gradients of both particles
/// (or only `which`), stacked in basis order.
pub fn action_gradient_dofs(
    pair: &Pair,
    bd: &BoundaryData,
    basis: &PerturbationBasis,
    which: Option<Particle>,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; basis.dim()];
    for p in [Particle::One, Particle::Two] {
        if which.is_some_and(|w| w != p) {
            continue;
        }
        let h = partial_action_hermite_gradient(pair, bd, p)?;
        basis.pull_back(p, &h, &mut out);
    }
    Ok(out)
}

/// Trapezoid-rule pairing of the residual with a perturbation: the
/// continuum counterpart of the gradient applied to `b`.
pub fn residual_pairing(res: &EomResidual, pair: &Pair, basis: &PerturbationBasis, x: &[f64]) -> Result<f64> {
    let mut s = 0.0;
    for p in [Particle::One, Particle::Two] {
        let tr = pair.get(p);
        let b = basis.part(p);
        let (pos, _) = basis.window_values(p, x);
        let rows = res.get(p);
        for (m, nr) in rows.iter().enumerate() {
            let k = b.first + m + 1;
            let w = 0.5 * (tr.nodes[k + 1].t - tr.nodes[k - 1].t);
            let g = gamma_of_velocity(tr.nodes[k].vel)?;
            let db = FourVector::from_parts(0.0, pos[m + 1]);
            s += w * mink_dot(nr.g, db) / g;
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minkowski::scale3;

    fn state(r: Vec3, v: Vec3, a: Vec3, t: f64) -> State {
        State {
            position: FourVector::from_parts(t, r),
            velocity: FourVector::from_parts(1.0, v),
            acceleration: FourVector::from_parts(0.0, a),
        }
    }

    #[test]
    fn static_force_per_branch() {
        let d = 3.0;
        let target = FourVector::new(0.0, 0.0, 0.0, 0.0);
        for dt in [-d, d] {
            let src = state([d, 0.0, 0.0], [0.0; 3], [0.0; 3], dt);
            let f = lw_force(&src, target, [0.0; 3]).unwrap();
            // contravariant spatial part points at the source with size 1/(2 d^2)
            assert!((f.x - 1.0 / (2.0 * d * d)).abs() < 1e-15);
            assert!(f.t.abs() < 1e-15 && f.y == 0.0 && f.z == 0.0);
        }
    }

    #[test]
    fn force_is_orthogonal_to_target_velocity() {
        let src = state([1.0, 2.0, -0.5], [0.3, -0.2, 0.1], [0.05, 0.01, -0.02], -3.0);
        let v1 = [-0.4, 0.1, 0.5];
        let dr = crate::minkowski::sub3([0.0; 3], [1.0, 2.0, -0.5]);
        let target = FourVector::from_parts(-3.0 + crate::minkowski::norm3(dr), [0.0; 3]);
        let f = lw_force(&src, target, v1).unwrap();
        let u1 = crate::minkowski::proper_velocity(v1).unwrap();
        assert!(mink_dot(u1, f).abs() < 1e-14);
        let _ = scale3(v1, 1.0);
    }
}
