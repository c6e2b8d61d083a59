//! Second variation of the discretized action about a base orbit.
//!
//! Every interaction sample touches two Hermite cells: the cell of the outer
//! event and the partner cell holding its lightcone root. The sample is
//! evaluated in [`Jet2`] arithmetic over the 24 node values of those cells;
//! the root is re-polished by Newton steps in the same arithmetic, so the
//! implicit delay contributes its exact first and second derivatives. Node
//! blocks are then pulled back through the spline perturbation basis.
//!
//! The stored matrix is the true second derivative of the action over the
//! basis coordinates, so the quadratic form is q(x) = x.Hx / 2.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::action::ordered_sum;
use crate::circular::{kepler_circular, make_circular_ehbc, refine_circular, CircularOrbitSpec};
use crate::error::{Error, Result};
use crate::gradient::shape;
use crate::lightcone::{find_root, Branch};
use crate::minkowski::{dot3, norm3, sub3, FourVector, Vec3};
use crate::quadrature::{cells_in_window, gauss_points};
use crate::scalar::{dot3s, sub3s, Jet2, Scalar};
use crate::spline::PerturbationBasis;
use crate::trajectory::{hermite, BoundaryData, Kin, Pair, Particle, Perturbation, Trajectory, ENDPOINT_TOL};

type Block = [[f64; 6]; 6];

/// Node values of one Hermite cell in a generic scalar.
struct CellValues<S> {
    t0: f64,
    h: f64,
    p0: [S; 3],
    v0: [S; 3],
    p1: [S; 3],
    v1: [S; 3],
}

impl<S: Scalar> CellValues<S> {
    fn kin(&self, t: S) -> Kin<S> {
        hermite(self.t0, self.h, self.p0, self.v0, self.p1, self.v1, t)
    }

    /// Cell `k` of `tr` with node values shifted by `f(node, slot)` where
    /// slot 0..3 is position and 3..6 velocity.
    fn build(tr: &Trajectory, k: usize, f: impl Fn(usize, usize, f64) -> S) -> Self {
        let (a, b) = (&tr.nodes[k], &tr.nodes[k + 1]);
        let lift = |node: usize, off: usize, v: Vec3| [f(node, off, v[0]), f(node, off + 1, v[1]), f(node, off + 2, v[2])];
        CellValues {
            t0: a.t,
            h: b.t - a.t,
            p0: lift(0, 0, a.pos),
            v0: lift(0, 3, a.vel),
            p1: lift(1, 0, b.pos),
            v1: lift(1, 3, b.vel),
        }
    }
}

/// N/(2|J|) for the event at `t` on `own`, with the partner root started
/// from `t2` and polished in the scalar type.
fn density<S: Scalar>(own: &CellValues<S>, t: f64, partner: &CellValues<S>, t2: f64) -> S {
    let k1 = own.kin(S::cst(t));
    let mut ts = S::cst(t2);
    for _ in 0..2 {
        let k2 = partner.kin(ts);
        let x = sub3s(k1.pos, k2.pos);
        let dt = S::cst(t) - ts;
        let f = dt * dt - dot3s(x, x);
        let df = dot3s(x, k2.vel) * 2.0 - dt * 2.0;
        ts = ts - f / df;
    }
    let k2 = partner.kin(ts);
    let x = sub3s(k1.pos, k2.pos);
    let j = (S::cst(t) - ts) - dot3s(x, k2.vel);
    let n = S::cst(1.0) - dot3s(k1.vel, k2.vel);
    let sign = if j.val() < 0.0 { -1.0 } else { 1.0 };
    n / (j * (2.0 * sign))
}

fn kinetic_density<S: Scalar>(cell: &CellValues<S>, t: f64, mass: f64) -> S {
    let v = cell.kin(S::cst(t)).vel;
    -((S::cst(1.0) - dot3s(v, v)).sqrt() * mass)
}

/// The interaction samples of the action: (outer, window, branch) with the
/// outer variable on trajectory 1.
fn interaction_windows(bd: &BoundaryData) -> [((f64, f64), Branch); 2] {
    [((bd.o_a.t, bd.t1), Branch::Advanced), ((bd.o_a.t, bd.lambda1_plus), Branch::Retarded)]
}

fn check_subluminal(tr: &Trajectory) -> Result<()> {
    let m = tr.subluminal_margin();
    if m < 0.0 {
        return Err(Error::SuperluminalOrbit { margin: m });
    }
    Ok(())
}

fn check_layout(tr: &Trajectory, b: &Perturbation) -> Result<()> {
    if b.times.len() != tr.len() || b.times.iter().zip(&tr.nodes).any(|(t, n)| *t != n.t) {
        return Err(Error::LayoutMismatch("perturbation and base differ in node layout".into()));
    }
    Ok(())
}

/// Second-order kinetic term m/2 int [gamma |b'|^2 + gamma^3 (v.b')^2] dt,
/// i.e. half the second derivative of -m int sqrt(1 - v^2) along b.
pub fn kinetic_quadratic(base: &Trajectory, b: &Perturbation) -> Result<f64> {
    check_subluminal(base)?;
    check_layout(base, b)?;
    let mut s = 0.0;
    for k in 0..base.len() - 1 {
        let (lo, hi) = (base.nodes[k].t, base.nodes[k + 1].t);
        for (t, w) in gauss_points(lo, hi) {
            let v = base.cell_kin(k, t).vel;
            let db = b.kin(k, t).vel;
            let g2 = 1.0 / (1.0 - dot3(v, v));
            let g = g2.sqrt();
            let vb = dot3(v, db);
            s += w * g * (dot3(db, db) + g2 * vb * vb);
        }
    }
    Ok(0.5 * base.mass * s)
}

/// b (and b') must vanish off the varied window and b at its ends.
fn check_support(tr: &Trajectory, b: &Perturbation, window: (f64, f64)) -> Result<()> {
    let tol = 1e-9 * (1.0 + window.1.abs());
    for (k, n) in tr.nodes.iter().enumerate() {
        let inside = n.t > window.0 + tol && n.t < window.1 - tol;
        let on_end = (n.t - window.0).abs() <= tol || (n.t - window.1).abs() <= tol;
        let v = if inside {
            0.0
        } else if on_end {
            norm3(b.b[k])
        } else {
            norm3(b.b[k]).max(norm3(b.bdot[k]))
        };
        if v > ENDPOINT_TOL {
            return Err(Error::EndpointPerturbed { value: v });
        }
    }
    Ok(())
}

/// Second-order interaction term: half the second derivative of the
/// coupling times the lightcone interaction along the pair perturbation.
pub fn interaction_quadratic(base: &Pair, b: [&Perturbation; 2], bd: &BoundaryData) -> Result<f64> {
    for p in [Particle::One, Particle::Two] {
        check_layout(base.get(p), b[p.index()])?;
        check_support(base.get(p), b[p.index()], bd.variable_window(p))?;
    }
    let (one, two) = (&base.one, &base.two);
    let e = Jet2::<1>::var(0.0, 0);
    let shifted = |tr: &Trajectory, pb: &Perturbation, k: usize| {
        CellValues::build(tr, k, |node, slot, v| {
            let d = if slot < 3 { pb.b[k + node][slot] } else { pb.bdot[k + node][slot - 3] };
            e * d + v
        })
    };
    let mut total = 0.0;
    for (window, br) in interaction_windows(bd) {
        let cells = cells_in_window(&one.times(), window.0, window.1);
        total += ordered_sum(&cells, |k, lo, hi| {
            let own = shifted(one, b[0], k);
            let mut s = 0.0;
            for (t, w) in gauss_points(lo, hi) {
                let ev = FourVector::from_parts(t, one.cell_kin(k, t).pos);
                let root = find_root(two, ev, br)?;
                let partner = shifted(two, b[1], root.cell);
                s += w * density(&own, t, &partner, root.t_other).h[0][0];
            }
            Ok(s)
        })?;
    }
    Ok(0.5 * base.coupling() * total)
}

/// Window-node numbering over both particles.
struct NodeMap {
    first: [usize; 2],
    len: [usize; 2],
}

impl NodeMap {
    fn new(basis: &PerturbationBasis) -> Self {
        let (a, b) = (basis.part(Particle::One), basis.part(Particle::Two));
        NodeMap { first: [a.first, b.first], len: [a.window_len(), b.window_len()] }
    }

    fn id(&self, p: Particle, k: usize) -> Option<usize> {
        let i = p.index();
        let local = k.checked_sub(self.first[i])?;
        (local < self.len[i]).then(|| local + if i == 1 { self.len[0] } else { 0 })
    }

    fn total(&self) -> usize {
        self.len[0] + self.len[1]
    }
}

type Contribution = Vec<((usize, usize), Block)>;

/// Scatter a local Hessian over `nodes` (one entry per 6 local variables).
fn scatter<const N: usize>(h: &[[f64; N]; N], nodes: &[Option<usize>], scale: f64, out: &mut Contribution) {
    for (a, na) in nodes.iter().enumerate() {
        let Some(i) = na else { continue };
        for (b, nb) in nodes.iter().enumerate() {
            let Some(j) = nb else { continue };
            let mut blk = [[0.0; 6]; 6];
            for (r, row) in blk.iter_mut().enumerate() {
                for (c, x) in row.iter_mut().enumerate() {
                    *x = scale * h[6 * a + r][6 * b + c];
                }
            }
            out.push(((*i, *j), blk));
        }
    }
}

fn merge(parts: Vec<Contribution>) -> BTreeMap<(usize, usize), Block> {
    let mut map: BTreeMap<(usize, usize), Block> = BTreeMap::new();
    for part in parts {
        for (key, blk) in part {
            let e = map.entry(key).or_insert([[0.0; 6]; 6]);
            for r in 0..6 {
                for c in 0..6 {
                    e[r][c] += blk[r][c];
                }
            }
        }
    }
    map
}

/// H = P^T H_node P for the node-value map P of the basis.
fn pull_back_blocks(basis: &PerturbationBasis, map: &NodeMap, blocks: &BTreeMap<(usize, usize), Block>) -> DMatrix<f64> {
    let dim = basis.dim();
    // sparse rows of P: node value (node, slot) -> [(dof, coefficient)]
    let mut prow: Vec<Vec<(usize, f64)>> = vec![Vec::new(); 6 * map.total()];
    for p in [Particle::One, Particle::Two] {
        let part = basis.part(p);
        let off = basis.offset(p);
        let ni = part.interior_len();
        for li in 0..part.window_len() {
            let id = map.id(p, part.first + li).expect("window node");
            for c in 0..3 {
                if li >= 1 && li <= ni {
                    prow[6 * id + c].push((off + 3 * (li - 1) + c, 1.0));
                }
                for m in 0..ni {
                    let s = part.slope(li, m);
                    if s != 0.0 {
                        prow[6 * id + 3 + c].push((off + 3 * m + c, s));
                    }
                }
            }
        }
    }
    // T = H_node P, row-major, one node row-group per task
    let n = map.total();
    let trows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut t = vec![0.0; 6 * dim];
            for (&(_, j), blk) in blocks.range((i, 0)..(i + 1, 0)) {
                for a in 0..6 {
                    let row = &mut t[a * dim..(a + 1) * dim];
                    for (b, &hab) in blk[a].iter().enumerate() {
                        if hab != 0.0 {
                            for &(d, coef) in &prow[6 * j + b] {
                                row[d] += hab * coef;
                            }
                        }
                    }
                }
            }
            t
        })
        .collect();
    // H = P^T T, one DOF row per task
    let mut pcol: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dim];
    for (r, entries) in prow.iter().enumerate() {
        for &(d, coef) in entries {
            pcol[d].push((r, coef));
        }
    }
    let hrows: Vec<Vec<f64>> = pcol
        .par_iter()
        .map(|entries| {
            let mut h = vec![0.0; dim];
            for &(r, coef) in entries {
                let tr = &trows[r / 6][(r % 6) * dim..(r % 6 + 1) * dim];
                for (x, y) in h.iter_mut().zip(tr) {
                    *x += coef * y;
                }
            }
            h
        })
        .collect();
    DMatrix::from_fn(dim, dim, |i, j| hrows[i][j])
}

/// Second derivative of the action over the perturbation basis, plus the
/// L2 Gram matrix of the basis for grid-independent spectra.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    pub matrix: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub basis: PerturbationBasis,
    pub base: Pair,
    pub bd: BoundaryData,
}

impl QuadraticForm {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let v = nalgebra::DVector::from_column_slice(x);
        (&self.matrix * v).as_slice().to_vec()
    }

    /// q(x) = x.Hx / 2, the second-order change of the action along x.
    pub fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.apply(x).iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }

    /// ||H - H^T|| / ||H|| in the Frobenius norm.
    pub fn symmetry_error(&self) -> f64 {
        let d = &self.matrix - self.matrix.transpose();
        d.norm() / self.matrix.norm()
    }

    /// Ascending eigenvalues of the matrix over basis coordinates.
    pub fn eigenvalues(&self) -> Vec<f64> {
        sorted(self.matrix.clone().symmetric_eigenvalues().as_slice().to_vec())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Ascending eigenvalues of H x = lambda M x, M the L2 Gram matrix of
    /// the position perturbations. These converge under grid refinement.
    pub fn l2_eigenvalues(&self) -> Result<Vec<f64>> {
        let chol = self
            .mass
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidInput("basis Gram matrix is not positive definite".into()))?;
        let l = chol.l();
        let x = l.solve_lower_triangular(&self.matrix).expect("nonsingular factor");
        let c = l.solve_lower_triangular(&x.transpose()).expect("nonsingular factor");
        let c = (&c + c.transpose()) * 0.5;
        Ok(sorted(c.symmetric_eigenvalues().as_slice().to_vec()))
    }

    pub fn min_l2_eigenvalue(&self) -> Result<f64> {
        Ok(self.l2_eigenvalues()?[0])
    }

    /// Cholesky factor of H when it is positive definite.
    pub fn cholesky(&self) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        self.matrix.clone().cholesky()
    }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

fn jet_cell<const N: usize>(tr: &Trajectory, k: usize, first_var: usize) -> CellValues<Jet2<N>> {
    CellValues::build(tr, k, |node, slot, v| Jet2::var(v, first_var + 6 * node + slot))
}

/// Exact Hessian of the discretized action (both kinetic terms plus the
/// interaction) over the basis of `pair` and `bd`.
pub fn assemble_hessian(pair: &Pair, bd: &BoundaryData) -> Result<QuadraticForm> {
    for tr in [&pair.one, &pair.two] {
        check_subluminal(tr)?;
    }
    let basis = PerturbationBasis::new(pair, bd)?;
    let map = NodeMap::new(&basis);
    let kappa = pair.coupling();
    let mut parts: Vec<Contribution> = Vec::new();
    for p in [Particle::One, Particle::Two] {
        let tr = pair.get(p);
        let w = bd.variable_window(p);
        let cells = cells_in_window(&tr.times(), w.0, w.1);
        let kin: Vec<Contribution> = cells
            .par_iter()
            .map(|&(k, lo, hi)| {
                let cell = jet_cell::<12>(tr, k, 0);
                let mut acc = Jet2::<12>::cst(0.0);
                for (t, wt) in gauss_points(lo, hi) {
                    acc = acc + kinetic_density(&cell, t, tr.mass) * wt;
                }
                let mut out = Vec::new();
                scatter(&acc.h, &[map.id(p, k), map.id(p, k + 1)], 1.0, &mut out);
                out
            })
            .collect();
        parts.extend(kin);
    }
    let (one, two) = (&pair.one, &pair.two);
    for (window, br) in interaction_windows(bd) {
        let cells = cells_in_window(&one.times(), window.0, window.1);
        let int: Vec<Contribution> = cells
            .par_iter()
            .map(|&(k, lo, hi)| {
                let own = jet_cell::<24>(one, k, 0);
                let mut out = Vec::new();
                for (t, wt) in gauss_points(lo, hi) {
                    let ev = FourVector::from_parts(t, one.cell_kin(k, t).pos);
                    let root = find_root(two, ev, br)?;
                    let c = root.cell;
                    let partner = jet_cell::<24>(two, c, 12);
                    let d = density(&own, t, &partner, root.t_other);
                    let nodes = [map.id(Particle::One, k), map.id(Particle::One, k + 1), map.id(Particle::Two, c), map.id(Particle::Two, c + 1)];
                    scatter(&d.h, &nodes, kappa * wt, &mut out);
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        parts.extend(int);
    }
    let matrix = pull_back_blocks(&basis, &map, &merge(parts));
    let mass = gram_matrix(pair, bd, &basis, &map);
    Ok(QuadraticForm { matrix, mass, basis, base: pair.clone(), bd: bd.clone() })
}

/// L2 Gram matrix sum_p int |b_p|^2 dt over the basis.
fn gram_matrix(pair: &Pair, bd: &BoundaryData, basis: &PerturbationBasis, map: &NodeMap) -> DMatrix<f64> {
    let mut parts = Vec::new();
    for p in [Particle::One, Particle::Two] {
        let tr = pair.get(p);
        let w = bd.variable_window(p);
        for (k, lo, hi) in cells_in_window(&tr.times(), w.0, w.1) {
            let (t0, h) = (tr.nodes[k].t, tr.nodes[k + 1].t - tr.nodes[k].t);
            let mut local = [[0.0; 12]; 12];
            for (t, wt) in gauss_points(lo, hi) {
                let (hv, _) = shape((t - t0) / h);
                // position weights on (p0, v0, p1, v1)
                let beta = [(0, hv[0]), (3, h * hv[1]), (6, hv[2]), (9, h * hv[3])];
                for &(ia, ba) in &beta {
                    for &(ib, bb) in &beta {
                        for c in 0..3 {
                            local[ia + c][ib + c] += wt * ba * bb;
                        }
                    }
                }
            }
            let mut out = Vec::new();
            scatter(&local, &[map.id(p, k), map.id(p, k + 1)], 1.0, &mut out);
            parts.push(out);
        }
    }
    pull_back_blocks(basis, map, &merge(parts))
}

/// Closed-form large-radius pieces of the second variation on circular data,
/// in the r12-scaled normalization of the velocity form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LargeRadiusForms {
    /// int (m1 r |b1'|^2 + m2 r |b2'|^2 + b1'.b2')
    pub velocity: f64,
    /// Position-position terms.
    pub position: f64,
    /// Position-velocity terms surviving integration by parts.
    pub mixed: f64,
    /// Position-velocity terms that reduce to an exact differential.
    pub vanishing: f64,
    /// Lower bound -(m1 m2 / (M r^3)) int (|b1|^2 + |b2|^2) for `position`.
    pub position_bound: f64,
}

impl LargeRadiusForms {
    /// Sum of the three forms divided by the 2 r12 scaling, comparable with
    /// the quadratic form of [`QuadraticForm::value`].
    pub fn scaled_total(&self, r12: f64) -> f64 {
        (self.velocity + self.position + self.mixed) / (2.0 * r12)
    }
}

/// (b, b') of a perturbation at `t`, zero outside its span.
fn pert_at(b: &Perturbation, t: f64) -> (Vec3, Vec3) {
    let n = b.times.len();
    if t < b.times[0] || t > b.times[n - 1] {
        return ([0.0; 3], [0.0; 3]);
    }
    let k = b.times.partition_point(|&x| x <= t).saturating_sub(1).min(n - 2);
    let kin = b.kin(k, t);
    (kin.pos, kin.vel)
}

/// Gauss points over the merged node layouts of both perturbations.
fn common_points(b1: &Perturbation, b2: &Perturbation) -> Vec<(f64, f64)> {
    let mut ts: Vec<f64> = b1.times.iter().chain(&b2.times).copied().collect();
    ts.sort_by(|a, b| a.total_cmp(b));
    ts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + a.abs()));
    let mut out = Vec::with_capacity(4 * ts.len());
    for w in ts.windows(2) {
        out.extend(gauss_points(w[0], w[1]));
    }
    out
}

/// Evaluate the closed forms along a common coordinate time.
pub fn large_radius_forms(spec: &CircularOrbitSpec, b1: &Perturbation, b2: &Perturbation) -> LargeRadiusForms {
    let r = spec.r12;
    let (m1, m2) = (spec.m1, spec.m2);
    let mt = m1 + m2;
    let mut f = LargeRadiusForms { velocity: 0.0, position: 0.0, mixed: 0.0, vanishing: 0.0, position_bound: 0.0 };
    let mut norms = 0.0;
    for (t, w) in common_points(b1, b2) {
        let (x1, d1) = pert_at(b1, t);
        let (x2, d2) = pert_at(b2, t);
        let (r1, v1, _) = spec.state(Particle::One, t);
        let (r2, v2, _) = spec.state(Particle::Two, t);
        let sep = sub3(r1, r2);
        let n = crate::minkowski::scale3(sep, 1.0 / norm3(sep));
        let del = sub3(x1, x2);
        let nd = dot3(n, del);
        f.velocity += w * (m1 * r * dot3(d1, d1) + m2 * r * dot3(d2, d2) + dot3(d1, d2));
        f.position += w
            * (0.5 * dot3(del, del) + 1.5 * nd * nd + 2.0 * dot3(n, x1) * dot3(n, x2)
                + dot3(v2, x1) * dot3(v1, x2)
                + dot3(v1, x1) * dot3(v2, x2))
            / (r * r);
        let dv = dot3(v1, x2) + dot3(v2, x1);
        f.mixed += w * dv * (nd - (dot3(v1, x1) - dot3(v2, x2))) / r;
        f.vanishing += w * (dot3(d1, x2) - 2.0 * dot3(d1, x1) + dot3(d2, x1) - 2.0 * dot3(d2, x2)) / (2.0 * r);
        norms += w * (dot3(x1, x1) + dot3(x2, x2));
    }
    f.position_bound = -(m1 * m2 / (mt * r.powi(3))) * norms;
    f
}

/// (int |b'|^2, pi^2 / T^2 int |b|^2) for a perturbation vanishing at both
/// ends of an interval of length `t_phi`.
pub fn fourier_bound_check(b: &Perturbation, t_phi: f64) -> (f64, f64) {
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for k in 0..b.times.len() - 1 {
        for (t, w) in gauss_points(b.times[k], b.times[k + 1]) {
            let kin = b.kin(k, t);
            lhs += w * dot3(kin.vel, kin.vel);
            rhs += w * dot3(kin.pos, kin.pos);
        }
    }
    (lhs, PI * PI / (t_phi * t_phi) * rhs)
}

/// The chain int r (m_i|b_i'|^2 + m_j|b_j'|^2) >= int r m_i|b_i'|^2 +
/// int m1 m2 m_j |b_j|^2 / (4 M r^2) >= sqrt(m1 m2 m_i m_j / (M r)) int |b_i'||b_j|,
/// returned as its three members.
pub fn binomial_bound_check(spec: &CircularOrbitSpec, bi: (&Perturbation, f64), bj: (&Perturbation, f64)) -> [f64; 3] {
    let r = spec.r12;
    let mt = spec.m1 + spec.m2;
    let (mi, mj) = (bi.1, bj.1);
    let mut out = [0.0; 3];
    for (t, w) in common_points(bi.0, bj.0) {
        let (_, di) = pert_at(bi.0, t);
        let (xj, dj) = pert_at(bj.0, t);
        out[0] += w * r * (mi * dot3(di, di) + mj * dot3(dj, dj));
        out[1] += w * (r * mi * dot3(di, di) + spec.m1 * spec.m2 * mj * dot3(xj, xj) / (4.0 * mt * r * r));
        out[2] += w * (spec.m1 * spec.m2 * mi * mj / (mt * r)).sqrt() * norm3(di) * norm3(xj);
    }
    out
}

/// Boundary-data template for the radius scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanTemplate {
    pub m1: f64,
    pub m2: f64,
    pub arc: f64,
    pub nodes_per_turn: usize,
}

impl Default for ScanTemplate {
    fn default() -> Self {
        ScanTemplate { m1: 1.0, m2: 1824.0, arc: 2.0 * PI, nodes_per_turn: crate::circular::DEFAULT_NODES_PER_TURN }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub r12: f64,
    /// Smallest eigenvalue over basis coordinates.
    pub min_eig: Option<f64>,
    /// Smallest eigenvalue relative to the L2 Gram matrix.
    pub min_l2_eig: Option<f64>,
    /// Why the radius produced no eigenvalue.
    pub failure: Option<String>,
}

fn scan_one(r: f64, tpl: &ScanTemplate) -> Result<(f64, f64)> {
    let spec = refine_circular(&kepler_circular(r, tpl.m1, tpl.m2))?;
    let c = make_circular_ehbc(&spec, tpl.arc, tpl.nodes_per_turn)?;
    let q = assemble_hessian(&c.pair, &c.bd)?;
    Ok((q.min_eigenvalue(), q.min_l2_eigenvalue()?))
}

/// Smallest eigenvalue of the second variation along a list of radii.
/// Radii where refinement or assembly fails are reported as gaps.
pub fn bifurcation_scan(r_values: &[f64], tpl: &ScanTemplate) -> Vec<ScanRow> {
    r_values
        .iter()
        .map(|&r| match scan_one(r, tpl) {
            Ok((a, b)) => ScanRow { r12: r, min_eig: Some(a), min_l2_eig: Some(b), failure: None },
            Err(e) => ScanRow { r12: r, min_eig: None, min_l2_eig: None, failure: Some(e.to_string()) },
        })
        .collect()
}

/// Consecutive radii between which the smallest eigenvalue changes sign.
pub fn sign_changes(rows: &[ScanRow]) -> Vec<(f64, f64)> {
    let valid: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.min_eig.map(|e| (r.r12, e))).collect();
    valid.windows(2).filter(|w| (w[0].1 > 0.0) != (w[1].1 > 0.0)).map(|w| (w[0].0, w[1].0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::action_difference;
    use rand::SeedableRng;

    fn static_line(n: usize, len: f64) -> Trajectory {
        let times: Vec<f64> = (0..=n).map(|k| len * k as f64 / n as f64).collect();
        Trajectory::from_fn(&times, Particle::One, 1.0, -1.0, |_| ([0.0; 3], [0.0; 3])).unwrap()
    }

    #[test]
    fn kinetic_quadratic_static_mode() {
        let (len, a) = (10.0, 0.3);
        let tr = static_line(200, len);
        let w = PI / len;
        let b = Perturbation::from_fn(&tr.times(), |t| ([0.0, a * (w * t).sin(), 0.0], [0.0, a * w * (w * t).cos(), 0.0]));
        let q = kinetic_quadratic(&tr, &b).unwrap();
        let exact = (a * w).powi(2) * len / 4.0;
        assert!((q - exact).abs() < 1e-8 * exact);
        assert_eq!(kinetic_quadratic(&tr, &Perturbation::zero(&tr.times())).unwrap(), 0.0);
    }

    #[test]
    fn fourier_modes() {
        let len = 7.0;
        let times: Vec<f64> = (0..=256).map(|k| len * k as f64 / 256.0).collect();
        for (k, ratio) in [(1.0, 1.0), (2.0, 4.0)] {
            let w = k * PI / len;
            let b = Perturbation::from_fn(&times, |t| ([(w * t).sin(), 0.0, 0.0], [w * (w * t).cos(), 0.0, 0.0]));
            let (l, r) = fourier_bound_check(&b, len);
            assert!((l / r - ratio).abs() < 1e-8 * ratio, "{k}: {}", l / r);
        }
    }

    #[test]
    fn hessian_matches_second_differences_on_circular_base() {
        let spec = kepler_circular(100.0, 1.0, 1824.0);
        let c = make_circular_ehbc(&spec, 2.0 * PI, 64).unwrap();
        let q = assemble_hessian(&c.pair, &c.bd).unwrap();
        assert!(q.symmetry_error() < 1e-9);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..3 {
            let x = q.basis.smooth_random(&mut rng, 3, None);
            let eps = 1e-3;
            let pp = q.basis.apply(&c.pair, &x, eps).unwrap();
            let pm = q.basis.apply(&c.pair, &x, -eps).unwrap();
            let fd = 0.5
                * (action_difference(&pp, &c.pair, &c.bd, None).unwrap()
                    + action_difference(&pm, &c.pair, &c.bd, None).unwrap())
                / (eps * eps);
            let an = q.value(&x);
            assert!(((fd - an) / an).abs() < 1e-4, "fd {fd} an {an}");
            let b1 = q.basis.perturbation(&c.pair.one, &x);
            let b2 = q.basis.perturbation(&c.pair.two, &x);
            let direct = kinetic_quadratic(&c.pair.one, &b1).unwrap()
                + kinetic_quadratic(&c.pair.two, &b2).unwrap()
                + interaction_quadratic(&c.pair, [&b1, &b2], &c.bd).unwrap();
            assert!(((direct - an) / an).abs() < 1e-8, "direct {direct} an {an}");
        }
    }

    #[test]
    fn support_outside_window_is_rejected() {
        let spec = kepler_circular(100.0, 1.0, 1824.0);
        let c = make_circular_ehbc(&spec, 2.0 * PI, 64).unwrap();
        let mut b1 = Perturbation::zero(&c.pair.one.times());
        let b2 = Perturbation::zero(&c.pair.two.times());
        let last = b1.b.len() - 1;
        b1.b[last] = [1e-3, 0.0, 0.0];
        assert!(matches!(
            interaction_quadratic(&c.pair, [&b1, &b2], &c.bd),
            Err(Error::EndpointPerturbed { .. })
        ));
    }
}
