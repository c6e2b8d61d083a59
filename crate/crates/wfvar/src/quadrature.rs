//! Composite Gauss-Legendre rules on node-aligned cells.

/// Four-point Gauss-Legendre abscissae and weights on [-1, 1].
pub const GAUSS4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

/// Quadrature points and weights on `[a, b]`.
pub fn gauss_points(a: f64, b: f64) -> [(f64, f64); 4] {
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    GAUSS4.map(|(x, w)| (m + h * x, h * w))
}

/// Cells of a sorted node list restricted to `[lo, hi]`. Window ends that
/// fall inside a cell split it, so integrands with kinks at the window ends
/// are still integrated piecewise smoothly.
pub fn cells_in_window(times: &[f64], lo: f64, hi: f64) -> Vec<(usize, f64, f64)> {
    let mut out = Vec::new();
    if !(hi > lo) {
        return out;
    }
    let tol = 1e-12 * (1.0 + hi.abs().max(lo.abs()));
    for k in 0..times.len().saturating_sub(1) {
        let a = times[k].max(lo);
        let b = times[k + 1].min(hi);
        if b - a > tol {
            out.push((k, a, b));
        }
    }
    out
}
