//! Shared fixtures for the kernel benchmarks.

use rdlab_core::field::{MetricField, Sym2Field};
use rdlab_core::grid::GridSpec;

/// 2-D grid with a quartic bump in g11, the standard benchmark datum.
pub fn bump_metric(n: usize, amplitude: f64) -> MetricField {
    let l = 1.25;
    let collar = 8.0 * l / (n as f64 - 1.0);
    let grid = GridSpec::new(2, l, n, collar).unwrap();
    let rho = 0.7;
    let field = Sym2Field::from_fn(grid, |x, i, j| {
        let r2 = (x[0] * x[0] + x[1] * x[1]) / (rho * rho);
        let bump = if r2 < 1.0 { (1.0 - r2).powi(4) } else { 0.0 };
        match (i, j) {
            (0, 0) => 1.0 + amplitude * bump,
            _ if i == j => 1.0,
            _ => 0.0,
        }
    });
    MetricField::from_sym2(field, None)
}
