//! Descent on the finite action over interior node positions.
//!
//! Iterates are written as a DOF vector on top of a base pair. Action
//! changes are always computed termwise between neighbouring iterates, so
//! accepted decreases far below the action's own rounding are still seen.

use std::collections::VecDeque;

use nalgebra::{Cholesky, DVector, Dyn};

use crate::action::{action_difference, classify_extremal, fokker_action, ExtremalReport};
use crate::error::{Error, Result};
use crate::gradient::{action_gradient_dofs, eom_residual, residual_pairing};
use crate::invariants::{drift, evaluation_pairs, noether_state};
use crate::minkowski::dot3;
use crate::second_variation::assemble_hessian;
use crate::spline::PerturbationBasis;
use crate::trajectory::{BoundaryData, Pair, Particle};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    SteepestDescent,
    QuasiNewton,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// Euclidean norm of the DOF gradient.
    pub gradient_tol: f64,
    /// Required max node ||G|| at the solution.
    pub residual_tol: f64,
    pub armijo_c: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Rebase when nodes moved by more than this fraction of the smallest cell.
    pub rebuild_threshold: f64,
    pub optimizer: Optimizer,
    pub memory: usize,
    /// Use the assembled Hessian as the initial metric when it is positive definite.
    pub hessian_metric: bool,
    /// Node acceleration magnitude above which the bound counts as active.
    pub acceleration_bound: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 50,
            gradient_tol: 1e-10,
            residual_tol: 1e-6,
            armijo_c: 1e-4,
            backtrack: 0.5,
            max_backtracks: 40,
            rebuild_threshold: 0.1,
            optimizer: Optimizer::QuasiNewton,
            memory: 8,
            hessian_metric: true,
            acceleration_bound: 1.0,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.gradient_tol, self.residual_tol, self.armijo_c, self.rebuild_threshold, self.acceleration_bound];
        if pos.iter().any(|x| !(*x > 0.0)) || !(self.backtrack > 0.0 && self.backtrack < 1.0) || self.armijo_c >= 1.0 {
            return Err(Error::InvalidInput("solver tolerances and line-search factors must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveReport {
    pub iterations: usize,
    /// Action after each accepted step, starting with the initial guess.
    pub action_history: Vec<f64>,
    /// Action decrease of each accepted step.
    pub decreases: Vec<f64>,
    pub step_lengths: Vec<f64>,
    pub final_gradient_norm: f64,
    pub final_max_residual: f64,
    pub rebuilds: usize,
    pub max_acceleration: f64,
    pub acceleration_bound_active: bool,
    pub converged: bool,
}

impl SolveReport {
    pub fn monotone(&self) -> bool {
        self.action_history.windows(2).all(|w| w[1] <= w[0])
    }
}

/// Inverse-metric application for the quasi-Newton recursion.
enum Metric {
    Hessian(Cholesky<f64, Dyn>),
    Scaled(f64),
}

impl Metric {
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Metric::Hessian(c) => c.solve(&DVector::from_column_slice(v)).as_slice().to_vec(),
            Metric::Scaled(s) => v.iter().map(|x| s * x).collect(),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Two-loop recursion: approximate inverse Hessian times `g`.
fn lbfgs_direction(g: &[f64], memory: &VecDeque<(Vec<f64>, Vec<f64>)>, metric: &Metric) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y) in memory.iter().rev() {
        let rho = 1.0 / dot(y, s);
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push((a, rho));
    }
    let mut r = metric.apply(&q);
    for ((s, y), (a, rho)) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &r);
        for (ri, si) in r.iter_mut().zip(s) {
            *ri += (a - b) * si;
        }
    }
    r.iter().map(|x| -x).collect()
}

/// Largest node velocity and position change produced by DOF step `d`.
fn step_extent(basis: &PerturbationBasis, d: &[f64]) -> (f64, f64) {
    let mut dv = 0.0f64;
    let mut dx = 0.0f64;
    for p in [Particle::One, Particle::Two] {
        let (pos, vel) = basis.window_values(p, d);
        for (x, v) in pos.iter().zip(&vel) {
            dx = dx.max(dot3(*x, *x).sqrt());
            dv = dv.max(dot3(*v, *v).sqrt());
        }
    }
    (dv, dx)
}

fn min_cell(pair: &Pair) -> f64 {
    [&pair.one, &pair.two]
        .iter()
        .flat_map(|tr| tr.nodes.windows(2).map(|w| w[1].t - w[0].t))
        .fold(f64::INFINITY, f64::min)
}

fn margin(pair: &Pair) -> f64 {
    pair.one.subluminal_margin().min(pair.two.subluminal_margin())
}

fn max_acceleration(pair: &Pair) -> f64 {
    let mut m = 0.0f64;
    for tr in [&pair.one, &pair.two] {
        for k in 1..tr.len() - 1 {
            let a = tr.node_acceleration(k);
            m = m.max(dot3(a, a).sqrt());
        }
    }
    m
}

fn metric_for(pair: &Pair, bd: &BoundaryData, opts: &SolveOptions) -> Result<Option<Metric>> {
    if opts.optimizer != Optimizer::QuasiNewton || !opts.hessian_metric {
        return Ok(None);
    }
    Ok(assemble_hessian(pair, bd)?.cholesky().map(Metric::Hessian))
}

/// Minimize the action over the interior nodes of both varied windows.
/// Returns the final pair with its report; running out of iterations or
/// stalling above the residual target gives `SolverNoConvergence`.
pub fn solve(initial: &Pair, bd: &BoundaryData, opts: &SolveOptions) -> Result<(Pair, SolveReport)> {
    opts.validate()?;
    let m0 = margin(initial);
    if !(m0 > 0.0) {
        return Err(Error::SuperluminalOrbit { margin: m0 });
    }
    let basis = PerturbationBasis::new(initial, bd)?;
    let cell = min_cell(initial);
    let mut base = initial.clone();
    let mut pair = initial.clone();
    let mut x = vec![0.0; basis.dim()];
    let mut moved = 0.0;
    let mut metric = metric_for(&pair, bd, opts)?;
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::new();
    let mut report = SolveReport { action_history: vec![fokker_action(&pair, bd)?.total], ..Default::default() };
    let mut g = action_gradient_dofs(&pair, bd, &basis, None)?;

    let finish = |pair: &Pair, g: &[f64], mut report: SolveReport| -> Result<SolveReport> {
        report.final_gradient_norm = norm(g);
        report.final_max_residual = eom_residual(pair, bd)?.max_norm();
        report.max_acceleration = max_acceleration(pair);
        report.acceleration_bound_active = report.max_acceleration >= opts.acceleration_bound;
        Ok(report)
    };

    loop {
        if norm(&g) < opts.gradient_tol {
            let mut r = finish(&pair, &g, report)?;
            r.converged = r.final_max_residual < opts.residual_tol;
            return if r.converged { Ok((pair, r)) } else { Err(Error::SolverNoConvergence(Box::new(r))) };
        }
        if report.iterations >= opts.max_iters {
            let r = finish(&pair, &g, report)?;
            return Err(Error::SolverNoConvergence(Box::new(r)));
        }
        let mut d = match (&opts.optimizer, &metric) {
            (Optimizer::SteepestDescent, _) => g.iter().map(|v| -v).collect(),
            (Optimizer::QuasiNewton, Some(m)) => lbfgs_direction(&g, &memory, m),
            (Optimizer::QuasiNewton, None) => {
                let s = memory.back().map(|(s, y)| dot(s, y) / dot(y, y)).unwrap_or(1.0 / norm(&g).max(1e-300));
                lbfgs_direction(&g, &memory, &Metric::Scaled(s))
            }
        };
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            memory.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        // subluminal cap on the node velocity change
        let (dv, _) = step_extent(&basis, &d);
        let cap = margin(&pair) / 4.0;
        let mut alpha: f64 = match (opts.optimizer, memory.back()) {
            (Optimizer::SteepestDescent, Some((s, y))) => dot(s, s) / dot(s, y),
            _ => 1.0,
        };
        if alpha * dv > cap {
            alpha = cap / dv;
        }
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let trial_x: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            let trial = match basis.apply(&base, &trial_x, 1.0) {
                Ok(p) => p,
                Err(Error::LuminalVelocity { .. }) => {
                    return Err(Error::SuperluminalStep { margin: margin(&pair) });
                }
                Err(e) => return Err(e),
            };
            let delta = action_difference(&trial, &pair, bd, None)?;
            if delta <= opts.armijo_c * alpha * slope {
                accepted = Some((trial_x, trial, delta));
                break;
            }
            alpha *= opts.backtrack;
        }
        let Some((new_x, new_pair, delta)) = accepted else {
            // no descent left at working precision
            let mut r = finish(&pair, &g, report)?;
            r.converged = r.final_max_residual < opts.residual_tol;
            return if r.converged { Ok((pair, r)) } else { Err(Error::SolverNoConvergence(Box::new(r))) };
        };
        if margin(&new_pair) <= 0.0 {
            return Err(Error::SuperluminalStep { margin: margin(&new_pair) });
        }
        let g_new = action_gradient_dofs(&new_pair, bd, &basis, None)?;
        let s: Vec<f64> = new_x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-12 * norm(&s) * norm(&y) {
            memory.push_back((s.clone(), y));
            if memory.len() > opts.memory {
                memory.pop_front();
            }
        }
        let last = *report.action_history.last().expect("history starts with the initial action");
        report.action_history.push(last + delta);
        report.decreases.push(-delta);
        report.step_lengths.push(alpha);
        report.iterations += 1;
        moved += step_extent(&basis, &s).1;
        x = new_x;
        pair = new_pair;
        g = g_new;
        if moved > opts.rebuild_threshold * cell {
            base = pair.clone();
            x = vec![0.0; basis.dim()];
            moved = 0.0;
            memory.clear();
            metric = metric_for(&pair, bd, opts)?.or(metric);
            report.rebuilds += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub max_residual: f64,
    pub gradient_norm: f64,
    /// Gradient and trapezoid residual pairing along a fixed smooth direction.
    pub gradient_pairing: f64,
    pub residual_pairing: f64,
    pub momentum_drift: f64,
    pub angular_drift: f64,
    pub extremal: ExtremalReport,
    /// Human-readable list of checks that did not meet `tol`.
    pub failures: Vec<String>,
}

impl ConsistencyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Cross-checks at a solution: gradient against the residual pairing,
/// Noether drift over ten evaluation pairs, and x'.x' constancy.
pub fn minimize_report_consistency(pair: &Pair, bd: &BoundaryData, tol: f64) -> Result<ConsistencyReport> {
    use rand::SeedableRng;
    let basis = PerturbationBasis::new(pair, bd)?;
    let g = action_gradient_dofs(pair, bd, &basis, None)?;
    let res = eom_residual(pair, bd)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let dir = basis.smooth_random(&mut rng, 4, None);
    let gradient_pairing = dot(&g, &dir);
    let rp = residual_pairing(&res, pair, &basis, &dir)?;
    let states = evaluation_pairs(pair, bd, 10)
        .into_iter()
        .map(|(a, b)| noether_state(pair, bd, a, b))
        .collect::<Result<Vec<_>>>()?;
    let (momentum_drift, angular_drift) = drift(&states);
    let extremal = classify_extremal(pair);
    let max_residual = res.max_norm();
    let mut failures = Vec::new();
    if max_residual >= tol {
        failures.push(format!("max residual {max_residual:e}"));
    }
    if momentum_drift >= tol {
        failures.push(format!("momentum drift {momentum_drift:e}"));
    }
    if angular_drift >= tol {
        failures.push(format!("angular momentum drift {angular_drift:e}"));
    }
    if !extremal.constant(tol) {
        failures.push(format!("x'.x' deviation {:?}", extremal.deviation));
    }
    Ok(ConsistencyReport {
        max_residual,
        gradient_norm: norm(&g),
        gradient_pairing,
        residual_pairing: rp,
        momentum_drift,
        angular_drift,
        extremal,
        failures,
    })
}
