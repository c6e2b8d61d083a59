//! World lines parametrized by coordinate time, stored as cubic Hermite
//! nodes (position and velocity), plus perturbations and boundary data.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::lightcone::{find_root, Branch};
use crate::minkowski::{dot3, norm3, sub3, FourVector, Vec3};
use crate::quadrature::GAUSS4;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Particle {
    One,
    Two,
}

impl Particle {
    pub fn other(self) -> Particle {
        match self {
            Particle::One => Particle::Two,
            Particle::Two => Particle::One,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Particle::One => 0,
            Particle::Two => 1,
        }
    }

    pub fn label(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn from_label(k: u8) -> Result<Particle> {
        match k {
            1 => Ok(Particle::One),
            2 => Ok(Particle::Two),
            _ => Err(Error::InvalidInput(format!("particle label {k}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryNode {
    pub t: f64,
    pub pos: Vec3,
    pub vel: Vec3,
}

/// Position, velocity and acceleration of a world line at one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub position: FourVector,
    pub velocity: FourVector,
    pub acceleration: FourVector,
}

impl State {
    pub fn r(&self) -> Vec3 {
        self.position.spatial()
    }
    pub fn v(&self) -> Vec3 {
        self.velocity.spatial()
    }
    pub fn a(&self) -> Vec3 {
        self.acceleration.spatial()
    }
}

/// Kinematics produced by the generic Hermite evaluator.
#[derive(Debug, Clone, Copy)]
pub struct Kin<S> {
    pub pos: [S; 3],
    pub vel: [S; 3],
    pub acc: [S; 3],
}

/// Cubic Hermite interpolation on one cell `[t0, t0 + h]`, generic in the
/// node values and in the evaluation parameter.
pub fn hermite<S: Scalar>(
    t0: f64,
    h: f64,
    p0: [S; 3],
    v0: [S; 3],
    p1: [S; 3],
    v1: [S; 3],
    t: S,
) -> Kin<S> {
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    // weights on p0 are minus those on p1 (plus 1 for position), so work with
    // p1 - p0 and avoid cancelling large coordinates
    let h10 = s3 - s2 * 2.0 + s;
    let h01 = s2 * 3.0 - s3 * 2.0;
    let h11 = s3 - s2;
    let d10 = s2 * 3.0 - s * 4.0 + 1.0;
    let d01 = (s - s2) * 6.0;
    let d11 = s2 * 3.0 - s * 2.0;
    let e10 = s * 6.0 - 4.0;
    let e01 = -(s * 12.0) + 6.0;
    let e11 = s * 6.0 - 2.0;
    let mut pos = [S::cst(0.0); 3];
    let mut vel = [S::cst(0.0); 3];
    let mut acc = [S::cst(0.0); 3];
    for k in 0..3 {
        let hv0 = v0[k] * h;
        let hv1 = v1[k] * h;
        let dp = p1[k] - p0[k];
        pos[k] = p0[k] + (h01 * dp + h10 * hv0 + h11 * hv1);
        vel[k] = (d01 * dp + d10 * hv0 + d11 * hv1) / h;
        acc[k] = (e01 * dp + e10 * hv0 + e11 * hv1) / (h * h);
    }
    Kin { pos, vel, acc }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub nodes: Vec<TrajectoryNode>,
    pub particle: Particle,
    pub mass: f64,
    pub charge: f64,
}

impl Trajectory {
    pub fn new(nodes: Vec<TrajectoryNode>, particle: Particle, mass: f64, charge: f64) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidInput("a trajectory needs at least two nodes".into()));
        }
        if !(mass > 0.0) || !mass.is_finite() || !charge.is_finite() {
            return Err(Error::InvalidInput(format!("mass {mass}, charge {charge}")));
        }
        for w in nodes.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::InvalidInput(format!(
                    "node parameters not strictly increasing at t = {}",
                    w[0].t
                )));
            }
        }
        for n in &nodes {
            let finite = n.t.is_finite()
                && n.pos.iter().all(|x| x.is_finite())
                && n.vel.iter().all(|x| x.is_finite());
            if !finite {
                return Err(Error::InvalidInput(format!("non-finite node at t = {}", n.t)));
            }
        }
        Ok(Trajectory { nodes, particle, mass, charge })
    }

    /// Sample `f(t) -> (position, velocity)` at the given parameters.
    pub fn from_fn(
        times: &[f64],
        particle: Particle,
        mass: f64,
        charge: f64,
        f: impl Fn(f64) -> (Vec3, Vec3),
    ) -> Result<Self> {
        let nodes = times
            .iter()
            .map(|&t| {
                let (pos, vel) = f(t);
                TrajectoryNode { t, pos, vel }
            })
            .collect();
        Trajectory::new(nodes, particle, mass, charge)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.t).collect()
    }

    pub fn span(&self) -> (f64, f64) {
        (self.nodes[0].t, self.nodes[self.nodes.len() - 1].t)
    }

    pub fn contains(&self, t: f64) -> bool {
        let (lo, hi) = self.span();
        t >= lo && t <= hi
    }

    /// Cell index k with t_k <= t <= t_{k+1}, clamped to the node range.
    pub fn cell_of(&self, t: f64) -> usize {
        let n = self.nodes.len();
        let k = self.nodes.partition_point(|nd| nd.t <= t);
        k.saturating_sub(1).min(n - 2)
    }

    /// Index of the node at parameter `t`, if one lies within `tol`.
    pub fn node_index(&self, t: f64, tol: f64) -> Option<usize> {
        let k = self.nodes.partition_point(|nd| nd.t < t - tol);
        (k < self.nodes.len() && (self.nodes[k].t - t).abs() <= tol).then_some(k)
    }

    pub fn cell_kin<S: Scalar>(&self, cell: usize, t: S) -> Kin<S> {
        let a = &self.nodes[cell];
        let b = &self.nodes[cell + 1];
        hermite(
            a.t,
            b.t - a.t,
            crate::scalar::lift3(a.pos),
            crate::scalar::lift3(a.vel),
            crate::scalar::lift3(b.pos),
            crate::scalar::lift3(b.vel),
            t,
        )
    }

    /// Unchecked evaluation; `t` is clamped into the span by the cell lookup.
    pub fn state_at(&self, t: f64) -> State {
        let k = self.cell_of(t);
        let kin = self.cell_kin(k, t);
        State {
            position: FourVector::from_parts(t, kin.pos),
            velocity: FourVector::from_parts(1.0, kin.vel),
            acceleration: FourVector::from_parts(0.0, kin.acc),
        }
    }

    pub fn eval(&self, t: f64) -> Result<State> {
        let (lo, hi) = self.span();
        if !(t >= lo && t <= hi) {
            return Err(Error::OutOfRange { t, lo, hi });
        }
        if let Some(k) = self.node_index(t, 0.0) {
            let n = &self.nodes[k];
            let mut s = self.state_at(t);
            s.position = FourVector::from_parts(t, n.pos);
            s.velocity = FourVector::from_parts(1.0, n.vel);
            return Ok(s);
        }
        Ok(self.state_at(t))
    }

    pub fn position(&self, t: f64) -> Vec3 {
        self.cell_kin(self.cell_of(t), t).pos
    }

    /// Acceleration at a node: mean of the one-sided cell values (the
    /// interpolant's second derivative jumps across nodes).
    pub fn node_acceleration(&self, k: usize) -> Vec3 {
        let n = self.nodes.len();
        let t = self.nodes[k].t;
        let left = (k > 0).then(|| self.cell_kin(k - 1, t).acc);
        let right = (k + 1 < n).then(|| self.cell_kin(k, t).acc);
        match (left, right) {
            (Some(l), Some(r)) => [(l[0] + r[0]) * 0.5, (l[1] + r[1]) * 0.5, (l[2] + r[2]) * 0.5],
            (Some(l), None) => l,
            (None, Some(r)) => r,
            (None, None) => [0.0; 3],
        }
    }

    /// min(1 - |v|^2) over nodes and the interior Gauss points of each cell.
    pub fn subluminal_margin(&self) -> f64 {
        let mut m = f64::INFINITY;
        for n in &self.nodes {
            m = m.min(1.0 - dot3(n.vel, n.vel));
        }
        for k in 0..self.nodes.len() - 1 {
            let (a, b) = (self.nodes[k].t, self.nodes[k + 1].t);
            for (x, _) in GAUSS4 {
                let t = 0.5 * (a + b) + 0.5 * (b - a) * x;
                let v = self.cell_kin(k, t).vel;
                m = m.min(1.0 - dot3(v, v));
            }
        }
        m
    }

    /// Sub-trajectory over `[lo, hi]`; the cut parameters must be nodes.
    pub fn segment(&self, lo: f64, hi: f64, tol: f64) -> Result<Trajectory> {
        let i = self
            .node_index(lo, tol)
            .ok_or_else(|| Error::InvalidEhbc(format!("no node at segment start {lo}")))?;
        let j = self
            .node_index(hi, tol)
            .ok_or_else(|| Error::InvalidEhbc(format!("no node at segment end {hi}")))?;
        Trajectory::new(self.nodes[i..=j].to_vec(), self.particle, self.mass, self.charge)
    }
}

/// The two world lines of the problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub one: Trajectory,
    pub two: Trajectory,
}

impl Pair {
    pub fn new(one: Trajectory, two: Trajectory) -> Result<Self> {
        if one.particle != Particle::One || two.particle != Particle::Two {
            return Err(Error::InvalidInput("pair must hold particle 1 then particle 2".into()));
        }
        Ok(Pair { one, two })
    }

    pub fn get(&self, p: Particle) -> &Trajectory {
        match p {
            Particle::One => &self.one,
            Particle::Two => &self.two,
        }
    }

    pub fn get_mut(&mut self, p: Particle) -> &mut Trajectory {
        match p {
            Particle::One => &mut self.one,
            Particle::Two => &mut self.two,
        }
    }

    /// Interaction sign -e1*e2 (1 for the electron-proton pair).
    pub fn coupling(&self) -> f64 {
        -self.one.charge * self.two.charge
    }
}

/// Perturbation sampled on a trajectory's node layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub times: Vec<f64>,
    pub b: Vec<Vec3>,
    pub bdot: Vec<Vec3>,
}

pub const ENDPOINT_TOL: f64 = 1e-14;

impl Perturbation {
    pub fn zero(times: &[f64]) -> Self {
        Perturbation { times: times.to_vec(), b: vec![[0.0; 3]; times.len()], bdot: vec![[0.0; 3]; times.len()] }
    }

    pub fn from_fn(times: &[f64], f: impl Fn(f64) -> (Vec3, Vec3)) -> Self {
        let (b, bdot) = times.iter().map(|&t| f(t)).unzip();
        Perturbation { times: times.to_vec(), b, bdot }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let s = |v: &Vec3| [v[0] * a, v[1] * a, v[2] * a];
        Perturbation {
            times: self.times.clone(),
            b: self.b.iter().map(s).collect(),
            bdot: self.bdot.iter().map(s).collect(),
        }
    }

    pub fn sum(&self, o: &Perturbation) -> Result<Self> {
        if self.times != o.times {
            return Err(Error::LayoutMismatch("perturbation node layouts differ".into()));
        }
        let add = |a: &[Vec3], b: &[Vec3]| -> Vec<Vec3> {
            a.iter().zip(b).map(|(x, y)| crate::minkowski::add3(*x, *y)).collect()
        };
        Ok(Perturbation { times: self.times.clone(), b: add(&self.b, &o.b), bdot: add(&self.bdot, &o.bdot) })
    }

    pub fn kin(&self, cell: usize, t: f64) -> Kin<f64> {
        let h = self.times[cell + 1] - self.times[cell];
        hermite(self.times[cell], h, self.b[cell], self.bdot[cell], self.b[cell + 1], self.bdot[cell + 1], t)
    }

    fn check_endpoints(&self) -> Result<()> {
        let n = self.b.len();
        let v = norm3(self.b[0]).max(norm3(self.b[n - 1]));
        if v > ENDPOINT_TOL {
            return Err(Error::EndpointViolation { value: v });
        }
        Ok(())
    }

    /// (sup |b|, sup |b'|, sup |b''|) on a 10x oversampled grid.
    fn sups(&self) -> (f64, f64, f64) {
        let mut out = (0.0f64, 0.0f64, 0.0f64);
        for k in 0..self.times.len() - 1 {
            let (a, c) = (self.times[k], self.times[k + 1]);
            for j in 0..=10 {
                let t = a + (c - a) * j as f64 / 10.0;
                let kin = self.kin(k, t);
                out.0 = out.0.max(norm3(kin.pos));
                out.1 = out.1.max(norm3(kin.vel));
                out.2 = out.2.max(norm3(kin.acc));
            }
        }
        out
    }

    pub fn span_length(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }
}

/// Sup of |b'| (time component of b is identically zero).
pub fn perturbation_norm(b: &Perturbation) -> Result<f64> {
    b.check_endpoints()?;
    Ok(b.sups().1)
}

/// Both sides of sup|b| <= span * sup|b'|.
pub fn sup_bound_check(b: &Perturbation) -> (f64, f64) {
    let (s0, s1, _) = b.sups();
    (s0, b.span_length() * s1)
}

/// Per-order sups (|b|, |b'|, |b''|) and the bounds span^(2-k) sup|b''|.
pub fn derivative_bounds(b: &Perturbation) -> ([f64; 3], [f64; 3]) {
    let (s0, s1, s2) = b.sups();
    let l = b.span_length();
    ([s0, s1, s2], [l * l * s2, l * s2, s2])
}

pub fn apply_perturbation(tr: &Trajectory, b: &Perturbation, eps: f64) -> Result<Trajectory> {
    if b.times.len() != tr.nodes.len() || b.times.iter().zip(&tr.nodes).any(|(t, n)| *t != n.t) {
        return Err(Error::LayoutMismatch(format!(
            "perturbation has {} nodes, trajectory {}",
            b.times.len(),
            tr.nodes.len()
        )));
    }
    let nodes = tr
        .nodes
        .iter()
        .enumerate()
        .map(|(k, n)| TrajectoryNode {
            t: n.t,
            pos: crate::minkowski::add3(n.pos, crate::minkowski::scale3(b.b[k], eps)),
            vel: crate::minkowski::add3(n.vel, crate::minkowski::scale3(b.bdot[k], eps)),
        })
        .collect();
    Trajectory::new(nodes, tr.particle, tr.mass, tr.charge)
}

/// Where b and b' are pinned to zero when integrating an acceleration profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistorySide {
    Start,
    End,
}

/// Integrate a nodal acceleration profile (piecewise linear between nodes)
/// twice, starting from b = b' = 0 on the history side. The result is the
/// exact piecewise cubic, stored as Hermite nodes.
pub fn reconstruct_from_acceleration(times: &[f64], bdd: &[Vec3], side: HistorySide) -> Result<Perturbation> {
    let n = times.len();
    if bdd.len() != n || n < 2 {
        return Err(Error::LayoutMismatch("acceleration samples do not match the node layout".into()));
    }
    let mut b = vec![[0.0; 3]; n];
    let mut bd = vec![[0.0; 3]; n];
    match side {
        HistorySide::Start => {
            for k in 0..n - 1 {
                let h = times[k + 1] - times[k];
                for c in 0..3 {
                    let (a0, a1) = (bdd[k][c], bdd[k + 1][c]);
                    bd[k + 1][c] = bd[k][c] + h * (a0 + a1) / 2.0;
                    b[k + 1][c] = b[k][c] + h * bd[k][c] + h * h * (2.0 * a0 + a1) / 6.0;
                }
            }
        }
        HistorySide::End => {
            for k in (0..n - 1).rev() {
                let h = times[k + 1] - times[k];
                for c in 0..3 {
                    let (a0, a1) = (bdd[k][c], bdd[k + 1][c]);
                    bd[k][c] = bd[k + 1][c] - h * (a0 + a1) / 2.0;
                    b[k][c] = b[k + 1][c] - h * bd[k + 1][c] + h * h * (2.0 * a1 + a0) / 6.0;
                }
            }
        }
    }
    Ok(Perturbation { times: times.to_vec(), b, bdot: bd })
}

/// Exchange-of-history boundary data: the two endpoints, the partner
/// segments inside their lightcones and the derived window markers.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    pub o_a: FourVector,
    pub l_b: FourVector,
    /// Trajectory 1 between the retarded and advanced roots of L_B.
    pub history1: Trajectory,
    /// Trajectory 2 between the retarded and advanced roots of O_A.
    pub history2: Trajectory,
    pub lambda2_minus: f64,
    pub lambda2_plus: f64,
    pub t1: f64,
    pub lambda1_plus: f64,
}

impl BoundaryData {
    /// Derive the markers from the start of trajectory 1 (O_A) and the end of
    /// trajectory 2 (L_B). Requires nodes at the four lightcone cuts.
    pub fn from_pair(pair: &Pair) -> Result<Self> {
        let o = pair.one.nodes[0];
        let l = pair.two.nodes[pair.two.len() - 1];
        let o_a = FourVector::from_parts(o.t, o.pos);
        let l_b = FourVector::from_parts(l.t, l.pos);
        let om = find_root(&pair.two, o_a, Branch::Retarded)?;
        let op = find_root(&pair.two, o_a, Branch::Advanced)?;
        let lm = find_root(&pair.one, l_b, Branch::Retarded)?;
        let lp = find_root(&pair.one, l_b, Branch::Advanced)?;
        let tol = 1e-8 * (1.0 + l.t.abs());
        Ok(BoundaryData {
            o_a,
            l_b,
            history1: pair.one.segment(lm.t_other, lp.t_other, tol)?,
            history2: pair.two.segment(om.t_other, op.t_other, tol)?,
            lambda2_minus: om.t_other,
            lambda2_plus: op.t_other,
            t1: lm.t_other,
            lambda1_plus: lp.t_other,
        })
    }

    pub fn t2(&self) -> f64 {
        self.l_b.t
    }

    pub fn t0(&self) -> f64 {
        self.o_a.t
    }

    /// Parameter window on which `p` is varied.
    pub fn variable_window(&self, p: Particle) -> (f64, f64) {
        match p {
            Particle::One => (self.o_a.t, self.t1),
            Particle::Two => (self.lambda2_plus, self.l_b.t),
        }
    }

    /// Full parameter span of `p` used by the action.
    pub fn full_window(&self, p: Particle) -> (f64, f64) {
        match p {
            Particle::One => (self.o_a.t, self.lambda1_plus),
            Particle::Two => (self.lambda2_minus, self.l_b.t),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EhbcCheck {
    pub name: &'static str,
    pub passed: bool,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EhbcReport {
    pub checks: Vec<EhbcCheck>,
}

impl EhbcReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&EhbcCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn hist_match(part: &Trajectory, hist: &Trajectory, lo: f64, hi: f64) -> f64 {
    let (a, b) = hist.span();
    let mut worst = (a - lo).abs().max((b - hi).abs());
    for n in &hist.nodes {
        if !part.contains(n.t) {
            return f64::INFINITY;
        }
        worst = worst.max(norm3(sub3(part.position(n.t), n.pos)));
    }
    worst
}

pub fn validate_ehbc(pair: &Pair, bd: &BoundaryData) -> EhbcReport {
    let mut checks = Vec::new();
    let tol = 1e-8 * (1.0 + bd.l_b.t.abs());

    // (a) each varied portion is traversable at speed <= 1
    let reach = |tr: &Trajectory, lo: f64, hi: f64| -> f64 {
        if !(tr.contains(lo) && tr.contains(hi)) {
            return f64::NEG_INFINITY;
        }
        (hi - lo) - norm3(sub3(tr.position(hi), tr.position(lo)))
    };
    let ra = reach(&pair.one, bd.o_a.t, bd.t1).min(reach(&pair.two, bd.lambda2_plus, bd.l_b.t));
    checks.push(EhbcCheck { name: "reachability", passed: ra > 0.0, slack: ra });

    // (b) trajectory 1 meets the future cone of O+ before L-
    let ms = (|| -> Result<f64> {
        let op = FourVector::from_parts(bd.lambda2_plus, pair.two.position(bd.lambda2_plus));
        let hit = find_root(&pair.one, op, Branch::Advanced)?;
        Ok(bd.t1 - hit.t_other)
    })()
    .unwrap_or(f64::NEG_INFINITY);
    checks.push(EhbcCheck { name: "minimally_short", passed: ms > 0.0, slack: ms });

    // (c) histories span exactly the lightcone intervals of O_A and L_B
    let cone = (|| -> Result<f64> {
        let om = find_root(&pair.two, bd.o_a, Branch::Retarded)?;
        let op = find_root(&pair.two, bd.o_a, Branch::Advanced)?;
        let lm = find_root(&pair.one, bd.l_b, Branch::Retarded)?;
        let lp = find_root(&pair.one, bd.l_b, Branch::Advanced)?;
        let mut w = 0.0f64;
        for (x, y) in [
            (om.t_other, bd.lambda2_minus),
            (op.t_other, bd.lambda2_plus),
            (lm.t_other, bd.t1),
            (lp.t_other, bd.lambda1_plus),
        ] {
            w = w.max((x - y).abs());
        }
        w = w.max(hist_match(&pair.two, &bd.history2, om.t_other, op.t_other));
        w = w.max(hist_match(&pair.one, &bd.history1, lm.t_other, lp.t_other));
        let (a1, b1) = pair.one.span();
        let (a2, b2) = pair.two.span();
        w = w.max((a1 - bd.o_a.t).abs()).max((b1 - bd.lambda1_plus).abs());
        w = w.max((a2 - bd.lambda2_minus).abs()).max((b2 - bd.l_b.t).abs());
        Ok(w)
    })()
    .unwrap_or(f64::INFINITY);
    checks.push(EhbcCheck { name: "history_cuts", passed: cone <= tol, slack: tol - cone });

    EhbcReport { checks }
}

pub const CSV_HEADER: &str = "particle,t,x,y,z,vx,vy,vz";

pub fn write_csv<W: Write>(w: &mut W, trajectories: &[&Trajectory]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for tr in trajectories {
        for n in &tr.nodes {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                tr.particle.label(),
                n.t,
                n.pos[0],
                n.pos[1],
                n.pos[2],
                n.vel[0],
                n.vel[1],
                n.vel[2]
            )?;
        }
    }
    Ok(())
}

/// Read a trajectory CSV; masses and charges are not part of the format.
pub fn read_csv<R: BufRead>(r: R, masses: [f64; 2], charges: [f64; 2]) -> Result<Pair> {
    let mut nodes: [Vec<TrajectoryNode>; 2] = [Vec::new(), Vec::new()];
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if i == 0 {
            if line != CSV_HEADER {
                return Err(Error::InvalidInput(format!("unexpected CSV header {line:?}")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(Error::InvalidInput(format!("line {}: expected 8 fields", i + 1)));
        }
        let num = |s: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|e| Error::InvalidInput(format!("line {}: {e}", i + 1)))
        };
        let p = Particle::from_label(
            f[0].trim().parse::<u8>().map_err(|e| Error::InvalidInput(format!("line {}: {e}", i + 1)))?,
        )?;
        nodes[p.index()].push(TrajectoryNode {
            t: num(f[1])?,
            pos: [num(f[2])?, num(f[3])?, num(f[4])?],
            vel: [num(f[5])?, num(f[6])?, num(f[7])?],
        });
    }
    let [n1, n2] = nodes;
    Pair::new(
        Trajectory::new(n1, Particle::One, masses[0], charges[0])?,
        Trajectory::new(n2, Particle::Two, masses[1], charges[1])?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn static_traj(t0: f64, t1: f64, n: usize, at: Vec3) -> Trajectory {
        let times: Vec<f64> = (0..n).map(|k| t0 + (t1 - t0) * k as f64 / (n - 1) as f64).collect();
        Trajectory::from_fn(&times, Particle::One, 1.0, -1.0, |_| (at, [0.0; 3])).unwrap()
    }

    #[test]
    fn eval_static_and_knots() {
        let tr = static_traj(0.0, 1.0, 5, [0.0; 3]);
        let s = tr.eval(0.5).unwrap();
        assert_eq!(s.position, FourVector::new(0.5, 0.0, 0.0, 0.0));
        assert_eq!(s.velocity, FourVector::new(1.0, 0.0, 0.0, 0.0));
        assert!(matches!(tr.eval(1.5), Err(Error::OutOfRange { .. })));
        assert_eq!(tr.subluminal_margin(), 1.0);
    }

    #[test]
    fn knot_state_is_exact() {
        let times = [0.0, 0.3, 1.1, 2.0];
        let tr = Trajectory::from_fn(&times, Particle::One, 1.0, -1.0, |t| {
            ([t.sin(), t * t, 0.1], [t.cos(), 2.0 * t, 0.0])
        })
        .unwrap();
        let s = tr.eval(1.1).unwrap();
        assert_eq!(s.position.spatial(), [1.1f64.sin(), 1.1 * 1.1, 0.1]);
        assert_eq!(s.velocity.spatial(), [1.1f64.cos(), 2.2, 0.0]);
    }

    #[test]
    fn superluminal_node_gives_negative_margin() {
        let tr = Trajectory::from_fn(&[0.0, 1.0], Particle::One, 1.0, -1.0, |t| {
            ([1.2 * t, 0.0, 0.0], [1.2, 0.0, 0.0])
        })
        .unwrap();
        assert!(tr.subluminal_margin() < 0.0);
    }

    fn sine_mode(t_end: f64, a: f64, n: usize) -> Perturbation {
        let times: Vec<f64> = (0..n).map(|k| t_end * k as f64 / (n - 1) as f64).collect();
        let w = std::f64::consts::PI / t_end;
        let mut b = Perturbation::from_fn(&times, |t| ([0.0, a * (w * t).sin(), 0.0], [0.0, a * w * (w * t).cos(), 0.0]));
        b.b[0] = [0.0; 3];
        b.b[n - 1] = [0.0; 3];
        b
    }

    #[test]
    fn norm_of_sine_mode() {
        let b = sine_mode(5.0, 0.2, 41);
        let n = perturbation_norm(&b).unwrap();
        assert!((n - 0.2 * std::f64::consts::PI / 5.0).abs() < 1e-12);
        let n3 = perturbation_norm(&b.scaled(-3.0)).unwrap();
        assert!((n3 / n - 3.0).abs() < 1e-14);
        let (s, bound) = sup_bound_check(&b);
        assert!((s - 0.2).abs() < 1e-6 && (bound - 0.2 * std::f64::consts::PI).abs() < 1e-9);
        assert_eq!(perturbation_norm(&Perturbation::zero(&b.times)).unwrap(), 0.0);
    }

    #[test]
    fn norm_rejects_nonzero_endpoint() {
        let mut b = sine_mode(5.0, 0.2, 11);
        b.b[0] = [1e-10, 0.0, 0.0];
        assert!(matches!(perturbation_norm(&b), Err(Error::EndpointViolation { .. })));
    }

    #[test]
    fn reconstruct_constant_acceleration() {
        let lf = 4.0;
        let times: Vec<f64> = (0..9).map(|k| lf * k as f64 / 8.0).collect();
        let c = [0.3, -0.1, 0.0];
        let b = reconstruct_from_acceleration(&times, &vec![c; 9], HistorySide::End).unwrap();
        for (k, t) in times.iter().enumerate() {
            for j in 0..3 {
                let exact = c[j] * (t - lf) * (t - lf) / 2.0;
                assert!((b.b[k][j] - exact).abs() < 1e-13);
                assert!((b.bdot[k][j] - c[j] * (t - lf)).abs() < 1e-13);
            }
        }
        let (s, bounds) = derivative_bounds(&b);
        for k in 0..3 {
            assert!(s[k] <= bounds[k] * (1.0 + 1e-12));
        }
        let z = reconstruct_from_acceleration(&times, &vec![[0.0; 3]; 9], HistorySide::Start).unwrap();
        assert!(z.b.iter().all(|v| *v == [0.0; 3]));
    }

    #[test]
    fn reconstruct_round_trip() {
        // b = (t - 2)^3 (t + 1) vanishes with its slope at t = 2
        let f = |t: f64| (t - 2.0).powi(3) * (t + 1.0);
        let f1 = |t: f64| 3.0 * (t - 2.0).powi(2) * (t + 1.0) + (t - 2.0).powi(3);
        let f2 = |t: f64| 6.0 * (t - 2.0) * (t + 1.0) + 6.0 * (t - 2.0).powi(2);
        let n = 201;
        let times: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 / (n - 1) as f64).collect();
        let acc: Vec<Vec3> = times.iter().map(|&t| [f2(t), 0.0, 0.0]).collect();
        let b = reconstruct_from_acceleration(&times, &acc, HistorySide::End).unwrap();
        for (k, &t) in times.iter().enumerate() {
            assert!((b.b[k][0] - f(t)).abs() < 2e-3, "{} vs {}", b.b[k][0], f(t));
            assert!((b.bdot[k][0] - f1(t)).abs() < 2e-3);
        }
    }

    #[test]
    fn csv_round_trip() {
        let a = Trajectory::from_fn(&[0.0, 0.5, 1.0], Particle::One, 1.0, -1.0, |t| {
            ([t / 3.0, 0.1, 1.0 / 7.0], [1.0 / 3.0, 0.0, 0.0])
        })
        .unwrap();
        let mut b = a.clone();
        b.particle = Particle::Two;
        b.mass = 1824.0;
        b.charge = 1.0;
        let mut buf = Vec::new();
        write_csv(&mut buf, &[&a, &b]).unwrap();
        let p = read_csv(std::io::Cursor::new(buf), [1.0, 1824.0], [-1.0, 1.0]).unwrap();
        assert_eq!(p.one, a);
        assert_eq!(p.two, b);
    }
}
