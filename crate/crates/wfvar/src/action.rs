//! Finite-bounds action: kinetic terms, the lightcone interaction and the
//! generalized action with kinetic exponent p.
//!
//! Windows follow the boundary data: trajectory 1 is integrated over
//! [O_A, T1], trajectory 2 over [Lambda2+, T2]; the interaction takes the
//! advanced partner over [O_A, T1] and the retarded partner over
//! [O_A, Lambda1+] (outer variable on trajectory 1).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lightcone::{find_all_roots, find_root, roots_in, Branch};
use crate::minkowski::{dot3, FourVector};
use crate::quadrature::{cells_in_window, gauss_points};
use crate::trajectory::{BoundaryData, Pair, Particle, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionBreakdown {
    pub kinetic1: f64,
    pub kinetic2: f64,
    pub interaction: f64,
    pub total: f64,
    pub p: f64,
}

impl ActionBreakdown {
    fn new(kinetic1: f64, kinetic2: f64, interaction: f64, p: f64) -> Self {
        ActionBreakdown { kinetic1, kinetic2, interaction, total: kinetic1 + kinetic2 + interaction, p }
    }
}

/// Sum per-cell values computed in parallel, in cell order.
pub(crate) fn ordered_sum<F>(cells: &[(usize, f64, f64)], f: F) -> Result<f64>
where
    F: Fn(usize, f64, f64) -> Result<f64> + Sync,
{
    let parts: Vec<f64> = cells.par_iter().map(|&(k, a, b)| f(k, a, b)).collect::<Result<Vec<_>>>()?;
    Ok(parts.iter().sum())
}

fn check_subluminal(pair: &Pair) -> Result<()> {
    for tr in [&pair.one, &pair.two] {
        let m = tr.subluminal_margin();
        if m < 0.0 {
            return Err(Error::SuperluminalOrbit { margin: m });
        }
    }
    Ok(())
}

/// -m times the proper-time length over `window`.
pub fn kinetic_term(tr: &Trajectory, window: (f64, f64)) -> f64 {
    let cells = cells_in_window(&tr.times(), window.0, window.1);
    let mut s = 0.0;
    for (k, a, b) in cells {
        for (t, w) in gauss_points(a, b) {
            let v = tr.cell_kin(k, t).vel;
            s += w * (1.0 - dot3(v, v)).sqrt();
        }
    }
    -tr.mass * s
}

/// N/(2|J|) for the root of the event at `t` on the outer trajectory.
fn pair_density(outer: &Trajectory, cell: usize, t: f64, partner: &Trajectory, br: Branch) -> Result<f64> {
    let kin = outer.cell_kin(cell, t);
    let ev = FourVector::from_parts(t, kin.pos);
    let root = find_root(partner, ev, br)?;
    Ok(corrected_density(&root, kin.vel))
}

/// N/(2|J|) at a root, moved to first order onto the exact root. The stored
/// root parameter carries the absolute rounding of its magnitude; the local
/// residual of the separation function resolves it much more finely, which
/// keeps differences of nearby actions smooth.
pub(crate) fn corrected_density(root: &crate::lightcone::LightconeRoot, v: crate::minkowski::Vec3) -> f64 {
    let (v2, a2) = (root.partner.v(), root.partner.a());
    let x = root.separation.spatial();
    let j = root.jacobian;
    let n = 1.0 - dot3(v, v2);
    let dt = root.separation.t;
    let d = (dt - root.r) * (dt + root.r);
    let shift = d / (2.0 * j);
    let dn = -dot3(v, a2);
    let dj = -1.0 + dot3(v2, v2) - dot3(x, a2);
    let s = j.signum();
    (n / j + shift * (dn / j - n * dj / (j * j))) / (2.0 * s)
}

/// Integral over `window` of the outer trajectory of N/(2|J|) on one branch.
fn branch_integral(outer: &Trajectory, partner: &Trajectory, window: (f64, f64), br: Branch) -> Result<f64> {
    let cells = cells_in_window(&outer.times(), window.0, window.1);
    ordered_sum(&cells, |k, a, b| {
        let mut s = 0.0;
        for (t, w) in gauss_points(a, b) {
            s += w * pair_density(outer, k, t, partner, br)?;
        }
        Ok(s)
    })
}

/// Interaction with the outer integration variable on trajectory `over`;
/// both choices cover the same set of lightcone-connected pairs.
pub fn interaction_integral(pair: &Pair, bd: &BoundaryData, over: Particle) -> Result<f64> {
    let kappa = pair.coupling();
    let s = match over {
        Particle::One => {
            branch_integral(&pair.one, &pair.two, (bd.o_a.t, bd.t1), Branch::Advanced)?
                + branch_integral(&pair.one, &pair.two, (bd.o_a.t, bd.lambda1_plus), Branch::Retarded)?
        }
        Particle::Two => {
            branch_integral(&pair.two, &pair.one, (bd.lambda2_plus, bd.l_b.t), Branch::Retarded)?
                + branch_integral(&pair.two, &pair.one, (bd.lambda2_minus, bd.l_b.t), Branch::Advanced)?
        }
    };
    Ok(kappa * s)
}

/// Interaction over a window of the outer trajectory counting every
/// subluminal root inside the partner's span.
pub fn interaction_over_window(pair: &Pair, outer: Particle, window: (f64, f64)) -> Result<f64> {
    let (o, q) = (pair.get(outer), pair.get(outer.other()));
    let span = q.span();
    let cells = cells_in_window(&o.times(), window.0, window.1);
    let s = ordered_sum(&cells, |k, a, b| {
        let mut s = 0.0;
        for (t, w) in gauss_points(a, b) {
            let kin = o.cell_kin(k, t);
            let ev = FourVector::from_parts(t, kin.pos);
            for root in roots_in(q, ev, (span.0, f64::INFINITY))? {
                s += w * corrected_density(&root, kin.vel);
            }
        }
        Ok(s)
    })?;
    Ok(pair.coupling() * s)
}

pub fn fokker_action(pair: &Pair, bd: &BoundaryData) -> Result<ActionBreakdown> {
    check_subluminal(pair)?;
    let k1 = kinetic_term(&pair.one, bd.variable_window(Particle::One));
    let k2 = kinetic_term(&pair.two, bd.variable_window(Particle::Two));
    let i = interaction_integral(pair, bd, Particle::One)?;
    Ok(ActionBreakdown::new(k1, k2, i, 0.5))
}

/// Action of the Lagrangian of one particle over its varied window, with
/// both partner branches.
pub fn partial_action(pair: &Pair, bd: &BoundaryData, which: Particle) -> Result<f64> {
    check_subluminal(pair)?;
    let (me, other) = (pair.get(which), pair.get(which.other()));
    let w = bd.variable_window(which);
    let k = kinetic_term(me, w);
    let i = branch_integral(me, other, w, Branch::Advanced)? + branch_integral(me, other, w, Branch::Retarded)?;
    Ok(k + pair.coupling() * i)
}

fn powp(x: f64, p: f64) -> Result<f64> {
    if p.fract() == 0.0 && p.abs() < i32::MAX as f64 {
        Ok(x.powi(p as i32))
    } else if x < 0.0 {
        Err(Error::NonIntegerPowerOfNegative { p })
    } else {
        Ok(x.powf(p))
    }
}

fn generalized_kinetic(tr: &Trajectory, window: (f64, f64), p: f64) -> Result<f64> {
    if p.fract() != 0.0 && tr.subluminal_margin() < 0.0 {
        return Err(Error::NonIntegerPowerOfNegative { p });
    }
    let cells = cells_in_window(&tr.times(), window.0, window.1);
    let mut s = 0.0;
    for (k, a, b) in cells {
        for (t, w) in gauss_points(a, b) {
            let v = tr.cell_kin(k, t).vel;
            s += w * powp(1.0 - dot3(v, v), p)?;
        }
    }
    Ok(-tr.mass / (2.0 * p) * s)
}

/// Kinetic terms -(m/2p) int (x'.x')^p and the interaction over every
/// sign change of the separation function in the window rectangle.
pub fn generalized_action(pair: &Pair, bd: &BoundaryData, p: f64) -> Result<ActionBreakdown> {
    if p == 0.0 || !p.is_finite() {
        return Err(Error::InvalidInput(format!("kinetic exponent {p}")));
    }
    let k1 = generalized_kinetic(&pair.one, bd.variable_window(Particle::One), p)?;
    let k2 = generalized_kinetic(&pair.two, bd.variable_window(Particle::Two), p)?;
    let inner = (bd.lambda2_minus, bd.l_b.t);
    let cells = cells_in_window(&pair.one.times(), bd.o_a.t, bd.lambda1_plus);
    let s = ordered_sum(&cells, |k, a, b| {
        let mut s = 0.0;
        for (t, w) in gauss_points(a, b) {
            let kin = pair.one.cell_kin(k, t);
            let ev = FourVector::from_parts(t, kin.pos);
            for root in find_all_roots(&pair.two, ev, inner) {
                if root.jacobian != 0.0 {
                    s += w * (1.0 - dot3(kin.vel, root.partner.v())) / (2.0 * root.jacobian.abs());
                }
            }
        }
        Ok(s)
    })?;
    Ok(ActionBreakdown::new(k1, k2, pair.coupling() * s, p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrbitClass {
    Subluminal,
    Luminal,
    Superluminal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalReport {
    pub class: [OrbitClass; 2],
    /// True when samples of x'.x' fall in more than one class.
    pub mixed: [bool; 2],
    /// max |x'.x' - mean| over the trajectory nodes.
    pub deviation: [f64; 2],
}

impl ExtremalReport {
    pub fn constant(&self, tol: f64) -> bool {
        self.deviation.iter().all(|d| *d <= tol) && !self.mixed.iter().any(|m| *m)
    }
}

pub fn classify_extremal(pair: &Pair) -> ExtremalReport {
    let mut class = [OrbitClass::Subluminal; 2];
    let mut mixed = [false; 2];
    let mut deviation = [0.0; 2];
    for (i, tr) in [&pair.one, &pair.two].into_iter().enumerate() {
        let q: Vec<f64> = tr.nodes.iter().map(|n| 1.0 - dot3(n.vel, n.vel)).collect();
        let mean = q.iter().sum::<f64>() / q.len() as f64;
        deviation[i] = q.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
        let tol = 1e-12;
        let cls = |x: f64| {
            if x > tol {
                OrbitClass::Subluminal
            } else if x < -tol {
                OrbitClass::Superluminal
            } else {
                OrbitClass::Luminal
            }
        };
        class[i] = cls(mean);
        mixed[i] = q.iter().any(|x| cls(*x) != cls(q[0]));
    }
    ExtremalReport { class, mixed, deviation }
}

/// S(a) - S(b) for two pairs on the same node layout, summed termwise so
/// that small differences between nearby orbits keep their precision.
pub fn action_difference(a: &Pair, b: &Pair, bd: &BoundaryData, which: Option<Particle>) -> Result<f64> {
    for p in [Particle::One, Particle::Two] {
        if a.get(p).times() != b.get(p).times() {
            return Err(Error::LayoutMismatch("pairs differ in node layout".into()));
        }
    }
    check_subluminal(a)?;
    check_subluminal(b)?;
    let kin_diff = |p: Particle| -> f64 {
        let (ta, tb) = (a.get(p), b.get(p));
        let mut s = 0.0;
        for (k, lo, hi) in cells_in_window(&ta.times(), bd.variable_window(p).0, bd.variable_window(p).1) {
            for (t, w) in gauss_points(lo, hi) {
                let va = ta.cell_kin(k, t).vel;
                let vb = tb.cell_kin(k, t).vel;
                let dv = crate::minkowski::sub3(va, vb);
                let sv = crate::minkowski::add3(va, vb);
                // sqrt(1-va^2) - sqrt(1-vb^2) = -(va-vb).(va+vb) / (sum of roots)
                let den = (1.0 - dot3(va, va)).sqrt() + (1.0 - dot3(vb, vb)).sqrt();
                s += w * dot3(dv, sv) / den;
            }
        }
        ta.mass * s
    };
    let branch_diff = |outer: Particle, window: (f64, f64), br: Branch| -> Result<f64> {
        let (oa, ob) = (a.get(outer), b.get(outer));
        let (pa, pb) = (a.get(outer.other()), b.get(outer.other()));
        let cells = cells_in_window(&oa.times(), window.0, window.1);
        ordered_sum(&cells, |k, lo, hi| {
            let mut s = 0.0;
            for (t, w) in gauss_points(lo, hi) {
                s += w * (pair_density(oa, k, t, pa, br)? - pair_density(ob, k, t, pb, br)?);
            }
            Ok(s)
        })
    };
    let kappa = a.coupling();
    Ok(match which {
        None => {
            kin_diff(Particle::One)
                + kin_diff(Particle::Two)
                + kappa
                    * (branch_diff(Particle::One, (bd.o_a.t, bd.t1), Branch::Advanced)?
                        + branch_diff(Particle::One, (bd.o_a.t, bd.lambda1_plus), Branch::Retarded)?)
        }
        Some(p) => {
            let w = bd.variable_window(p);
            kin_diff(p) + kappa * (branch_diff(p, w, Branch::Advanced)? + branch_diff(p, w, Branch::Retarded)?)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::TrajectoryNode;

    /// Static pair at distance 3: O_A at t = 0, L_B at t = 33.
    fn static_setup() -> (Pair, BoundaryData) {
        let d = 3.0;
        let t1: Vec<f64> = (0..=36).map(|k| k as f64).collect();
        let t2: Vec<f64> = (-3..=33).map(|k| k as f64).collect();
        let one = Trajectory::from_fn(&t1, Particle::One, 1.0, -1.0, |_| ([0.0; 3], [0.0; 3])).unwrap();
        let two = Trajectory::from_fn(&t2, Particle::Two, 1824.0, 1.0, |_| ([d, 0.0, 0.0], [0.0; 3])).unwrap();
        let pair = Pair::new(one, two).unwrap();
        let bd = BoundaryData::from_pair(&pair).unwrap();
        (pair, bd)
    }

    #[test]
    fn static_markers() {
        let (_, bd) = static_setup();
        assert_eq!((bd.lambda2_minus, bd.lambda2_plus, bd.t1, bd.lambda1_plus), (-3.0, 3.0, 30.0, 36.0));
    }

    #[test]
    fn static_action() {
        let (pair, bd) = static_setup();
        let a = fokker_action(&pair, &bd).unwrap();
        assert!((a.kinetic1 + 30.0).abs() < 1e-12);
        assert!((a.kinetic2 + 54720.0).abs() < 1e-9);
        // advanced part over [0, 30] and retarded part over [0, 36], each 1/(2d)
        assert!((a.interaction - 11.0).abs() < 1e-12);
        assert_eq!(a.total, a.kinetic1 + a.kinetic2 + a.interaction);
        let s1 = partial_action(&pair, &bd, Particle::One).unwrap();
        assert!((s1 + 20.0).abs() < 1e-12);
        let i2 = interaction_integral(&pair, &bd, Particle::Two).unwrap();
        assert!((i2 - a.interaction).abs() < 1e-12);
        let w = interaction_over_window(&pair, Particle::One, (0.0, 30.0)).unwrap();
        assert!((w - 10.0).abs() < 1e-9);
    }

    #[test]
    fn generalized_static() {
        let (pair, bd) = static_setup();
        let g = generalized_action(&pair, &bd, 1.0).unwrap();
        assert!((g.kinetic1 + 15.0).abs() < 1e-12 && (g.kinetic2 + 27360.0).abs() < 1e-9);
        assert!((g.interaction - 11.0).abs() < 1e-9);
        let h = generalized_action(&pair, &bd, 0.5).unwrap();
        let f = fokker_action(&pair, &bd).unwrap();
        assert!((h.total - f.total).abs() < 1e-12 * f.total.abs());
    }

    #[test]
    fn superluminal_is_rejected() {
        let (mut pair, bd) = static_setup();
        pair.one.nodes[5].vel = [1.2, 0.0, 0.0];
        assert!(matches!(fokker_action(&pair, &bd), Err(Error::SuperluminalOrbit { .. })));
        assert!(matches!(generalized_action(&pair, &bd, 0.5), Err(Error::NonIntegerPowerOfNegative { .. })));
        assert!(generalized_action(&pair, &bd, 1.0).unwrap().total.is_finite());
    }

    #[test]
    fn history_extension_does_not_change_partial_action() {
        let (pair, bd) = static_setup();
        let s = partial_action(&pair, &bd, Particle::One).unwrap();
        let mut longer = pair.clone();
        let mut nodes: Vec<TrajectoryNode> =
            (-10..-3).map(|k| TrajectoryNode { t: k as f64, pos: [3.0, 0.0, 0.0], vel: [0.0; 3] }).collect();
        nodes.extend(pair.two.nodes.iter().copied());
        longer.two = Trajectory::new(nodes, Particle::Two, 1824.0, 1.0).unwrap();
        assert_eq!(partial_action(&longer, &bd, Particle::One).unwrap(), s);
    }

    #[test]
    fn extremal_classes() {
        let (pair, _) = static_setup();
        let r = classify_extremal(&pair);
        assert_eq!(r.class, [OrbitClass::Subluminal; 2]);
        assert_eq!(r.deviation, [0.0; 2]);
        let mut mixed = pair.clone();
        mixed.one.nodes[3].vel = [1.5, 0.0, 0.0];
        let r = classify_extremal(&mixed);
        assert!(r.mixed[0] && !r.constant(1e-8));
    }
}
