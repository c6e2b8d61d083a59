//! Sewing chains: alternating lightcone hops between the two world lines,
//! whose union is the integration and perturbation grid.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lightcone::{find_root, Branch};
use crate::minkowski::FourVector;
use crate::trajectory::{BoundaryData, Pair, Particle};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SewingChain {
    pub direction: Direction,
    pub points: Vec<(Particle, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SewingGrid {
    pub chains: Vec<SewingChain>,
    pub nodes: [Vec<f64>; 2],
}

impl SewingGrid {
    pub fn nodes(&self, p: Particle) -> &[f64] {
        &self.nodes[p.index()]
    }

    /// Cell index k with t_k <= t <= t_{k+1} on trajectory `p`.
    pub fn cell_of(&self, p: Particle, t: f64) -> usize {
        let n = &self.nodes[p.index()];
        n.partition_point(|&x| x <= t).saturating_sub(1).min(n.len() - 2)
    }
}

pub const DEDUP_TOL: f64 = 1e-10;
const MAX_HOPS: usize = 1_000_000;

/// Window markers that drive chain construction.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Markers {
    pub o_minus: f64,
    pub o_plus: f64,
    pub l_minus: f64,
    pub l_plus: f64,
}

impl Markers {
    pub fn of(bd: &BoundaryData) -> Self {
        Markers { o_minus: bd.lambda2_minus, o_plus: bd.lambda2_plus, l_minus: bd.t1, l_plus: bd.lambda1_plus }
    }
}

/// Chain builder over an abstract hop `(from, t, branch) -> t_other`.
pub(crate) fn chain_with(
    hop: &(dyn Fn(Particle, f64, Branch) -> Result<f64> + Sync),
    m: Markers,
    direction: Direction,
    start: f64,
) -> Result<SewingChain> {
    let tol = DEDUP_TOL;
    let (mut p, branch) = match direction {
        Direction::Forward => {
            if start < m.o_minus - tol || start > m.o_plus + tol {
                return Err(Error::InvalidInput(format!("forward seed {start} outside [O-, O+]")));
            }
            (Particle::Two, Branch::Advanced)
        }
        Direction::Backward => {
            if start < m.l_minus - tol || start > m.l_plus + tol {
                return Err(Error::InvalidInput(format!("backward seed {start} outside [L-, L+]")));
            }
            (Particle::One, Branch::Retarded)
        }
    };
    let mut t = start;
    let mut points = vec![(p, t)];
    for _ in 0..MAX_HOPS {
        let next = hop(p, t, branch).map_err(|e| match e {
            Error::RootNotBracketed { .. } => Error::ChainEscaped { t },
            other => other,
        })?;
        p = p.other();
        t = next;
        match direction {
            Direction::Forward => {
                if p == Particle::One && t >= m.l_minus - tol {
                    points.push((p, t.min(m.l_plus)));
                    return Ok(SewingChain { direction, points });
                }
            }
            Direction::Backward => {
                if p == Particle::Two && t <= m.o_plus + tol {
                    points.push((p, t.max(m.o_minus)));
                    return Ok(SewingChain { direction, points });
                }
            }
        }
        points.push((p, t));
    }
    Err(Error::ChainEscaped { t })
}

pub(crate) fn grid_with(
    hop: &(dyn Fn(Particle, f64, Branch) -> Result<f64> + Sync),
    m: Markers,
    n_chains: usize,
) -> Result<SewingGrid> {
    if n_chains < 2 {
        return Err(Error::InvalidInput(format!("n_chains = {n_chains}, need at least 2")));
    }
    let n = n_chains as f64;
    let mut seeds = Vec::with_capacity(2 * n_chains);
    for j in 0..n_chains {
        seeds.push((Direction::Forward, m.o_minus + (m.o_plus - m.o_minus) * j as f64 / n));
    }
    for j in 0..n_chains {
        seeds.push((Direction::Backward, m.l_plus - (m.l_plus - m.l_minus) * j as f64 / n));
    }
    let chains: Vec<SewingChain> = seeds
        .par_iter()
        .map(|&(d, s)| chain_with(hop, m, d, s))
        .collect::<Result<Vec<_>>>()?;
    let mut nodes = [Vec::new(), Vec::new()];
    for c in &chains {
        for &(p, t) in &c.points {
            nodes[p.index()].push(t);
        }
    }
    for list in nodes.iter_mut() {
        list.sort_by(|a, b| a.total_cmp(b));
        list.dedup_by(|b, a| (*b - *a).abs() <= DEDUP_TOL);
    }
    Ok(SewingGrid { chains, nodes })
}

fn pair_hop(pair: &Pair) -> impl Fn(Particle, f64, Branch) -> Result<f64> + Sync + '_ {
    move |p: Particle, t: f64, br: Branch| {
        let src = pair.get(p);
        let ev = FourVector::from_parts(t, src.position(t));
        if !src.contains(t) {
            return Err(Error::ChainEscaped { t });
        }
        Ok(find_root(pair.get(p.other()), ev, br)?.t_other)
    }
}

pub fn build_forward_chain(pair: &Pair, bd: &BoundaryData, start: f64) -> Result<SewingChain> {
    chain_with(&pair_hop(pair), Markers::of(bd), Direction::Forward, start)
}

pub fn build_backward_chain(pair: &Pair, bd: &BoundaryData, start: f64) -> Result<SewingChain> {
    chain_with(&pair_hop(pair), Markers::of(bd), Direction::Backward, start)
}

pub fn build_grid(pair: &Pair, bd: &BoundaryData, n_chains: usize) -> Result<SewingGrid> {
    grid_with(&pair_hop(pair), Markers::of(bd), n_chains)
}

/// Largest lightcone residual over consecutive chain points.
pub fn chain_residual(pair: &Pair, chain: &SewingChain) -> f64 {
    let mut worst = 0.0f64;
    for w in chain.points.windows(2) {
        let (pa, ta) = w[0];
        let (pb, tb) = w[1];
        let xa = FourVector::from_parts(ta, pair.get(pa).position(ta));
        let xb = FourVector::from_parts(tb, pair.get(pb).position(tb));
        let s = xa - xb;
        worst = worst.max(crate::minkowski::mink_dot(s, s).abs());
    }
    worst
}
