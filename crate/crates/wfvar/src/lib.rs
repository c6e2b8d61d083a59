//! Finite-bounds Fokker action for the two-body problem of electrodynamics
//! with exchange-of-history boundary conditions: lightcone calculus, action
//! evaluation, analytic gradients and second variations, Noether invariants
//! and a variational boundary-value solver.
//!
//! Units have c = 1 and the metric signature is (+,-,-,-). Trajectories are
//! parametrized by their own coordinate time.

pub mod action;
pub mod circular;
pub mod error;
pub mod gradient;
pub mod invariants;
pub mod lightcone;
pub mod minkowski;
pub mod quadrature;
pub mod scalar;
pub mod second_variation;
pub mod sewing;
pub mod solver;
pub mod spline;
pub mod trajectory;

pub use error::{Error, Result};
pub use minkowski::{CausalClass, FourVector, Vec3};
pub use trajectory::{BoundaryData, Pair, Particle, Perturbation, Trajectory, TrajectoryNode};

/// Worker pool sized from `WFVAR_THREADS` when set.
pub fn init_threads() {
    if let Some(n) = std::env::var("WFVAR_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}
