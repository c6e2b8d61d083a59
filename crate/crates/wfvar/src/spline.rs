//! Perturbation basis over interior node positions.
//!
//! The degrees of freedom are the spatial displacements of the interior
//! nodes of each varied window. Node velocities follow from a cubic spline
//! through the displacements with b = 0 at both window ends, b' = 0 on the
//! history side and b'' = 0 at the free endpoint, so every perturbation is
//! C2 and joins the fixed history with matching slope.

use crate::error::{Error, Result};
use crate::minkowski::Vec3;
use crate::trajectory::{apply_perturbation, BoundaryData, Pair, Particle, Perturbation, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBasis {
    pub particle: Particle,
    /// Node indices of the varied window ends.
    pub first: usize,
    pub last: usize,
    /// Window node parameters.
    pub times: Vec<f64>,
    /// Row-major (window nodes) x (interior nodes) map from displacements to slopes.
    pub slope_map: Vec<f64>,
}

impl TrajectoryBasis {
    pub fn window_len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn interior_len(&self) -> usize {
        self.window_len() - 2
    }

    pub fn slope(&self, row: usize, col: usize) -> f64 {
        self.slope_map[row * self.interior_len() + col]
    }
}

/// Tridiagonal solve for the spline slopes; `clamp_start` pins the slope at
/// the first node, otherwise the last one is pinned.
fn spline_slopes(t: &[f64], y: &[f64], clamp_start: bool) -> Vec<f64> {
    let n = t.len();
    let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    let mut lo = vec![0.0; n];
    let mut di = vec![0.0; n];
    let mut up = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for k in 1..n - 1 {
        lo[k] = 1.0 / h[k - 1];
        di[k] = 2.0 * (1.0 / h[k - 1] + 1.0 / h[k]);
        up[k] = 1.0 / h[k];
        rhs[k] = 3.0 * ((y[k] - y[k - 1]) / (h[k - 1] * h[k - 1]) + (y[k + 1] - y[k]) / (h[k] * h[k]));
    }
    if clamp_start {
        di[0] = 1.0;
        di[n - 1] = 2.0 / h[n - 2];
        lo[n - 1] = 1.0 / h[n - 2];
        rhs[n - 1] = 3.0 * (y[n - 1] - y[n - 2]) / (h[n - 2] * h[n - 2]);
    } else {
        di[0] = 2.0 / h[0];
        up[0] = 1.0 / h[0];
        rhs[0] = 3.0 * (y[1] - y[0]) / (h[0] * h[0]);
        di[n - 1] = 1.0;
    }
    // Thomas algorithm
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = up[0] / di[0];
    d[0] = rhs[0] / di[0];
    for k in 1..n {
        let m = di[k] - lo[k] * c[k - 1];
        c[k] = up[k] / m;
        d[k] = (rhs[k] - lo[k] * d[k - 1]) / m;
    }
    let mut s = vec![0.0; n];
    s[n - 1] = d[n - 1];
    for k in (0..n - 1).rev() {
        s[k] = d[k] - c[k] * s[k + 1];
    }
    s
}

impl TrajectoryBasis {
    pub fn new(tr: &Trajectory, window: (f64, f64)) -> Result<Self> {
        let tol = 1e-8 * (1.0 + window.1.abs());
        let first = tr
            .node_index(window.0, tol)
            .ok_or_else(|| Error::InvalidEhbc(format!("no node at window start {}", window.0)))?;
        let last = tr
            .node_index(window.1, tol)
            .ok_or_else(|| Error::InvalidEhbc(format!("no node at window end {}", window.1)))?;
        if last < first + 2 {
            return Err(Error::InvalidEhbc("varied window has no interior node".into()));
        }
        let times: Vec<f64> = tr.nodes[first..=last].iter().map(|n| n.t).collect();
        let nw = times.len();
        let ni = nw - 2;
        // history side: end of window for particle 1, start for particle 2
        let clamp_start = tr.particle == Particle::Two;
        let mut slope_map = vec![0.0; nw * ni];
        let mut y = vec![0.0; nw];
        for m in 0..ni {
            y[m + 1] = 1.0;
            let s = spline_slopes(&times, &y, clamp_start);
            for (row, v) in s.iter().enumerate() {
                slope_map[row * ni + m] = *v;
            }
            y[m + 1] = 0.0;
        }
        Ok(TrajectoryBasis { particle: tr.particle, first, last, times, slope_map })
    }
}

/// Degrees of freedom of both particles: particle 1 interior nodes first,
/// each node contributing (x, y, z).
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationBasis {
    pub parts: [TrajectoryBasis; 2],
}

impl PerturbationBasis {
    pub fn new(pair: &Pair, bd: &BoundaryData) -> Result<Self> {
        Ok(PerturbationBasis {
            parts: [
                TrajectoryBasis::new(&pair.one, bd.variable_window(Particle::One))?,
                TrajectoryBasis::new(&pair.two, bd.variable_window(Particle::Two))?,
            ],
        })
    }

    pub fn part(&self, p: Particle) -> &TrajectoryBasis {
        &self.parts[p.index()]
    }

    pub fn dim_of(&self, p: Particle) -> usize {
        3 * self.parts[p.index()].interior_len()
    }

    pub fn offset(&self, p: Particle) -> usize {
        match p {
            Particle::One => 0,
            Particle::Two => self.dim_of(Particle::One),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim_of(Particle::One) + self.dim_of(Particle::Two)
    }

    /// Window-node displacements and slopes of particle `p` for DOF vector `x`.
    pub fn window_values(&self, p: Particle, x: &[f64]) -> (Vec<Vec3>, Vec<Vec3>) {
        let b = &self.parts[p.index()];
        let off = self.offset(p);
        let (nw, ni) = (b.window_len(), b.interior_len());
        let mut pos = vec![[0.0; 3]; nw];
        for m in 0..ni {
            for c in 0..3 {
                pos[m + 1][c] = x[off + 3 * m + c];
            }
        }
        let mut vel = vec![[0.0; 3]; nw];
        for (row, v) in vel.iter_mut().enumerate() {
            let r = &b.slope_map[row * ni..(row + 1) * ni];
            for (m, coef) in r.iter().enumerate() {
                if *coef != 0.0 {
                    for c in 0..3 {
                        v[c] += coef * x[off + 3 * m + c];
                    }
                }
            }
        }
        (pos, vel)
    }

    /// Full-trajectory perturbation of particle `p` (zero outside its window).
    pub fn perturbation(&self, tr: &Trajectory, x: &[f64]) -> Perturbation {
        let p = tr.particle;
        let b = &self.parts[p.index()];
        let mut out = Perturbation::zero(&tr.times());
        let (pos, vel) = self.window_values(p, x);
        for (i, k) in (b.first..=b.last).enumerate() {
            out.b[k] = pos[i];
            out.bdot[k] = vel[i];
        }
        out
    }

    pub fn apply(&self, pair: &Pair, x: &[f64], eps: f64) -> Result<Pair> {
        if x.len() != self.dim() {
            return Err(Error::LayoutMismatch(format!("DOF vector {} vs basis {}", x.len(), self.dim())));
        }
        Pair::new(
            apply_perturbation(&pair.one, &self.perturbation(&pair.one, x), eps)?,
            apply_perturbation(&pair.two, &self.perturbation(&pair.two, x), eps)?,
        )
    }

    /// Pull a gradient over window Hermite values (per node: dS/dpos, dS/dvel)
    /// back to the DOFs of particle `p`, written into `out`.
    pub fn pull_back(&self, p: Particle, hermite: &[[f64; 6]], out: &mut [f64]) {
        let b = &self.parts[p.index()];
        let off = self.offset(p);
        let ni = b.interior_len();
        for m in 0..ni {
            for c in 0..3 {
                out[off + 3 * m + c] += hermite[m + 1][c];
            }
        }
        for (row, g) in hermite.iter().enumerate() {
            let r = &b.slope_map[row * ni..(row + 1) * ni];
            for (m, coef) in r.iter().enumerate() {
                for c in 0..3 {
                    out[off + 3 * m + c] += coef * g[3 + c];
                }
            }
        }
    }

    /// Parameter of every DOF's node, in DOF order (one entry per node).
    pub fn dof_times(&self, p: Particle) -> &[f64] {
        let b = &self.parts[p.index()];
        &b.times[1..b.window_len() - 1]
    }

    /// Random smooth coordinates: a few sine modes per component under a
    /// sin^2 envelope on each variable window. `only` restricts the support.
    pub fn smooth_random<R: rand::Rng>(&self, rng: &mut R, modes: usize, only: Option<Particle>) -> Vec<f64> {
        use std::f64::consts::PI;
        let mut x = vec![0.0; self.dim()];
        for p in [Particle::One, Particle::Two] {
            if only.is_some_and(|q| q != p) {
                continue;
            }
            let b = &self.parts[p.index()];
            let (a, z) = (b.times[0], b.times[b.window_len() - 1]);
            let coef: Vec<[f64; 3]> = (0..modes)
                .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
                .collect();
            let off = self.offset(p);
            for (m, &t) in self.dof_times(p).iter().enumerate() {
                let u = (t - a) / (z - a);
                let env = (PI * u).sin().powi(2);
                for c in 0..3 {
                    let v: f64 = coef.iter().enumerate().map(|(k, cf)| cf[c] * (PI * (k + 1) as f64 * u).sin()).sum();
                    x[off + 3 * m + c] = env * v;
                }
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spline_reproduces_cubic_with_conditions() {
        // y = (t-1)^2 (t-0) ... check boundary behaviour instead of exactness
        let t: Vec<f64> = (0..=20).map(|k| (k as f64 / 20.0).powf(1.3)).collect();
        let y: Vec<f64> = t.iter().map(|&x| (std::f64::consts::PI * x).sin()).collect();
        let mut y0 = y.clone();
        y0[0] = 0.0;
        y0[20] = 0.0;
        let s = spline_slopes(&t, &y0, false);
        assert_eq!(s[20], 0.0);
        // second derivative of the Hermite cell at t0 vanishes (natural end)
        let h = t[1] - t[0];
        let acc = (-6.0 * y0[0] - 4.0 * h * s[0] + 6.0 * y0[1] - 2.0 * h * s[1]) / (h * h);
        assert!(acc.abs() < 1e-9);
        // C2 at interior nodes
        for k in 1..20 {
            let (ha, hb) = (t[k] - t[k - 1], t[k + 1] - t[k]);
            let left = (6.0 * y0[k - 1] + 2.0 * ha * s[k - 1] - 6.0 * y0[k] + 4.0 * ha * s[k]) / (ha * ha);
            let right = (-6.0 * y0[k] - 4.0 * hb * s[k] + 6.0 * y0[k + 1] - 2.0 * hb * s[k + 1]) / (hb * hb);
            assert!((left - right).abs() < 1e-8 * (1.0 + left.abs()));
        }
    }
}
