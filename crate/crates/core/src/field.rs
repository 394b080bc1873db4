use crate::error::{CoreError, Result};
use crate::grid::{sym_index, GridSpec};

/// Scalar field sampled on the full lattice.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            data: vec![0.0; grid.n_nodes()],
            grid,
        }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.n_nodes());
        for node in 0..grid.n_nodes() {
            let x = grid.node_coords(node);
            data.push(f(&x[..grid.dim]));
        }
        Self { grid, data }
    }

    #[inline]
    pub fn get(&self, node: usize) -> f64 {
        self.data[node]
    }

    pub fn sup_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    /// Midpoint-rule integral `h^n * sum f`, optionally against a density.
    pub fn integrate(&self, density: Option<&ScalarField>) -> f64 {
        let cell = self.grid.spacing().powi(self.grid.dim as i32);
        match density {
            None => cell * self.data.iter().sum::<f64>(),
            Some(w) => {
                cell * self
                    .data
                    .iter()
                    .zip(&w.data)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            }
        }
    }
}

/// Field of contravariant vectors `X^k`.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub grid: GridSpec,
    pub data: Vec<f64>, // [node * dim + k]
}

impl VectorField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            data: vec![0.0; grid.n_nodes() * grid.dim],
            grid,
        }
    }

    #[inline]
    pub fn get(&self, node: usize, k: usize) -> f64 {
        self.data[node * self.grid.dim + k]
    }

    #[inline]
    pub fn set(&mut self, node: usize, k: usize, v: f64) {
        self.data[node * self.grid.dim + k] = v;
    }

    pub fn sup_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Field of symmetric 2-tensors, stored by independent components.
#[derive(Debug, Clone)]
pub struct Sym2Field {
    pub grid: GridSpec,
    pub data: Vec<f64>, // [node * sym_comps + s]
}

impl Sym2Field {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            data: vec![0.0; grid.n_nodes() * grid.sym_comps()],
            grid,
        }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64], usize, usize) -> f64) -> Self {
        let m = grid.sym_comps();
        let mut data = vec![0.0; grid.n_nodes() * m];
        for node in 0..grid.n_nodes() {
            let x = grid.node_coords(node);
            for i in 0..grid.dim {
                for j in i..grid.dim {
                    data[node * m + sym_index(grid.dim, i, j)] = f(&x[..grid.dim], i, j);
                }
            }
        }
        Self { grid, data }
    }

    #[inline]
    pub fn get(&self, node: usize, i: usize, j: usize) -> f64 {
        self.data[node * self.grid.sym_comps() + sym_index(self.grid.dim, i, j)]
    }

    #[inline]
    pub fn set(&mut self, node: usize, i: usize, j: usize, v: f64) {
        self.data[node * self.grid.sym_comps() + sym_index(self.grid.dim, i, j)] = v;
    }

    /// Max over nodes and entries of |a - b|.
    pub fn sup_entry_distance(&self, other: &Sym2Field) -> Result<f64> {
        self.grid.same_grid(&other.grid)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Frobenius norm of the tensor at a node (off-diagonal entries counted
    /// twice, as in the full matrix).
    pub fn frobenius_at(&self, node: usize) -> f64 {
        let d = self.grid.dim;
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                let v = self.get(node, i, j);
                s += v * v;
            }
        }
        s.sqrt()
    }
}

/// Symmetric eigenvalue bounds for the small matrices that appear per node.
pub(crate) fn sym_eig_bounds(dim: usize, m: &[f64; 9]) -> (f64, f64) {
    // m is a dense dim x dim symmetric matrix in row-major [i*dim + j].
    match dim {
        2 => {
            let tr = m[0] + m[3];
            let det = m[0] * m[3] - m[1] * m[2];
            let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
            (tr / 2.0 - disc, tr / 2.0 + disc)
        }
        _ => {
            // Cyclic Jacobi on a 3x3 symmetric matrix; a handful of sweeps is
            // ample at f64 precision.
            let mut a = [[m[0], m[1], m[2]], [m[3], m[4], m[5]], [m[6], m[7], m[8]]];
            for _ in 0..12 {
                let mut off = 0.0;
                for p in 0..2 {
                    for q in (p + 1)..3 {
                        off += a[p][q] * a[p][q];
                        if a[p][q].abs() < 1e-300 {
                            continue;
                        }
                        let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
                        let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                        let c = 1.0 / (t * t + 1.0).sqrt();
                        let s = t * c;
                        for k in 0..3 {
                            let akp = a[k][p];
                            let akq = a[k][q];
                            a[k][p] = c * akp - s * akq;
                            a[k][q] = s * akp + c * akq;
                        }
                        for k in 0..3 {
                            let apk = a[p][k];
                            let aqk = a[q][k];
                            a[p][k] = c * apk - s * aqk;
                            a[q][k] = s * apk + c * aqk;
                        }
                    }
                }
                if off < 1e-32 {
                    break;
                }
            }
            let evs = [a[0][0], a[1][1], a[2][2]];
            (
                evs.iter().cloned().fold(f64::INFINITY, f64::min),
                evs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            )
        }
    }
}

/// Grid of symmetric positive-definite matrices with flat-collar metadata.
#[derive(Debug, Clone)]
pub struct MetricField {
    pub field: Sym2Field,
    pub time_tag: Option<f64>,
}

impl MetricField {
    pub fn flat(grid: GridSpec) -> Self {
        let mut field = Sym2Field::zeros(grid);
        for node in 0..grid.n_nodes() {
            for i in 0..grid.dim {
                field.set(node, i, i, 1.0);
            }
        }
        Self {
            field,
            time_tag: Some(0.0),
        }
    }

    pub fn from_sym2(field: Sym2Field, time_tag: Option<f64>) -> Self {
        Self { field, time_tag }
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.field.grid
    }

    #[inline]
    pub fn get(&self, node: usize, i: usize, j: usize) -> f64 {
        self.field.get(node, i, j)
    }

    /// Dense row-major copy of the matrix at a node (unused slots zero).
    #[inline]
    pub fn matrix_at(&self, node: usize) -> [f64; 9] {
        let d = self.grid().dim;
        let mut m = [0.0; 9];
        for i in 0..d {
            for j in 0..d {
                m[i * 3 + j] = self.get(node, i, j);
            }
        }
        // Repack to [i*dim + j] for the eigen helper.
        let mut out = [0.0; 9];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = m[i * 3 + j];
            }
        }
        out
    }

    /// Smallest eigenvalue over all nodes, with its node.
    pub fn min_eigenvalue(&self) -> (usize, f64) {
        let d = self.grid().dim;
        let mut worst = (0usize, f64::INFINITY);
        for node in 0..self.grid().n_nodes() {
            let m = self.matrix_at(node);
            let (lo, _) = sym_eig_bounds(d, &m);
            if lo < worst.1 {
                worst = (node, lo);
            }
        }
        worst
    }

    /// Error unless the metric is positive definite everywhere (eigenvalue
    /// floor 1e-10; silent clamping would corrupt exponent fits).
    pub fn assert_positive(&self) -> Result<()> {
        let (node, min_eig) = self.min_eigenvalue();
        if min_eig <= 1e-10 {
            return Err(CoreError::NonInvertibleMetric { node, min_eig });
        }
        Ok(())
    }

    /// Sup over the boundary collar of |g - delta|.
    pub fn collar_deviation(&self) -> f64 {
        let g = self.grid();
        let mut sup = 0.0f64;
        for node in 0..g.n_nodes() {
            if !g.in_collar(node) {
                continue;
            }
            for i in 0..g.dim {
                for j in i..g.dim {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    sup = sup.max((self.get(node, i, j) - delta).abs());
                }
            }
        }
        sup
    }

    /// Max over nodes and entries of |g - delta|.
    pub fn sup_deviation(&self) -> f64 {
        let g = self.grid();
        let mut sup = 0.0f64;
        for node in 0..g.n_nodes() {
            for i in 0..g.dim {
                for j in i..g.dim {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    sup = sup.max((self.get(node, i, j) - delta).abs());
                }
            }
        }
        sup
    }

    /// sqrt(det g) per node, the density d(mu_g)/d(mu_delta).
    pub fn volume_density(&self) -> ScalarField {
        let g = self.grid();
        let mut out = ScalarField::zeros(*g);
        for node in 0..g.n_nodes() {
            out.data[node] = self.det_at(node).max(0.0).sqrt();
        }
        out
    }

    #[inline]
    pub fn det_at(&self, node: usize) -> f64 {
        let d = self.grid().dim;
        if d == 2 {
            let a = self.get(node, 0, 0);
            let b = self.get(node, 0, 1);
            let c = self.get(node, 1, 1);
            a * c - b * b
        } else {
            let m = |i, j| self.get(node, i, j);
            m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(1, 2))
                - m(0, 1) * (m(0, 1) * m(2, 2) - m(1, 2) * m(0, 2))
                + m(0, 2) * (m(0, 1) * m(1, 2) - m(1, 1) * m(0, 2))
        }
    }

    /// Inverse matrix at a node, written into a dense [i*dim + j] buffer.
    /// Returns the determinant.
    #[inline]
    pub fn inverse_at(&self, node: usize, inv: &mut [f64; 9]) -> Result<f64> {
        let d = self.grid().dim;
        let det = self.det_at(node);
        if !(det > 1e-30) {
            return Err(CoreError::NonInvertibleMetric {
                node,
                min_eig: det,
            });
        }
        if d == 2 {
            let a = self.get(node, 0, 0);
            let b = self.get(node, 0, 1);
            let c = self.get(node, 1, 1);
            inv[0] = c / det;
            inv[1] = -b / det;
            inv[2] = -b / det;
            inv[3] = a / det;
        } else {
            let m = |i, j| self.get(node, i, j);
            let cof = [
                m(1, 1) * m(2, 2) - m(1, 2) * m(1, 2),
                -(m(0, 1) * m(2, 2) - m(1, 2) * m(0, 2)),
                m(0, 1) * m(1, 2) - m(1, 1) * m(0, 2),
                -(m(0, 1) * m(2, 2) - m(0, 2) * m(1, 2)),
                m(0, 0) * m(2, 2) - m(0, 2) * m(0, 2),
                -(m(0, 0) * m(1, 2) - m(0, 1) * m(0, 2)),
                m(0, 1) * m(1, 2) - m(0, 2) * m(1, 1),
                -(m(0, 0) * m(1, 2) - m(0, 2) * m(0, 1)),
                m(0, 0) * m(1, 1) - m(0, 1) * m(0, 1),
            ];
            for i in 0..3 {
                for j in 0..3 {
                    inv[i * 3 + j] = cof[j * 3 + i] / det;
                }
            }
        }
        Ok(det)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::new(2, 1.0, 17, 0.5).unwrap()
    }

    #[test]
    fn flat_metric_is_identity() {
        let g = MetricField::flat(grid());
        assert_eq!(g.get(3, 0, 0), 1.0);
        assert_eq!(g.get(3, 0, 1), 0.0);
        assert_eq!(g.sup_deviation(), 0.0);
        assert_eq!(g.collar_deviation(), 0.0);
        g.assert_positive().unwrap();
    }

    #[test]
    fn inverse_2d() {
        let mut f = Sym2Field::zeros(grid());
        for node in 0..f.grid.n_nodes() {
            f.set(node, 0, 0, 2.0);
            f.set(node, 0, 1, 0.5);
            f.set(node, 1, 1, 1.0);
        }
        let m = MetricField::from_sym2(f, None);
        let mut inv = [0.0; 9];
        let det = m.inverse_at(0, &mut inv).unwrap();
        assert!((det - 1.75).abs() < 1e-15);
        // g * g^{-1} = id
        let a = 2.0 * inv[0] + 0.5 * inv[2];
        let b = 2.0 * inv[1] + 0.5 * inv[3];
        assert!((a - 1.0).abs() < 1e-14);
        assert!(b.abs() < 1e-14);
    }

    #[test]
    fn inverse_3d() {
        let g3 = GridSpec::new(3, 1.0, 16, 0.54).unwrap();
        let mut f = Sym2Field::zeros(g3);
        for node in 0..g3.n_nodes() {
            f.set(node, 0, 0, 2.0);
            f.set(node, 1, 1, 3.0);
            f.set(node, 2, 2, 1.5);
            f.set(node, 0, 1, 0.2);
            f.set(node, 1, 2, -0.1);
        }
        let m = MetricField::from_sym2(f, None);
        let mut inv = [0.0; 9];
        m.inverse_at(7, &mut inv).unwrap();
        // check g * inv = id
        let gm = m.matrix_at(7);
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += gm[i * 3 + k] * inv[k * 3 + j];
                }
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-12, "i={i} j={j} s={s}");
            }
        }
    }

    #[test]
    fn degenerate_metric_reports_node() {
        let mut f = Sym2Field::zeros(grid());
        for node in 0..f.grid.n_nodes() {
            f.set(node, 0, 0, 1.0);
            f.set(node, 1, 1, 1.0);
        }
        f.set(42, 1, 1, -1.0);
        let m = MetricField::from_sym2(f, None);
        match m.assert_positive() {
            Err(CoreError::NonInvertibleMetric { node, .. }) => assert_eq!(node, 42),
            other => panic!("expected NonInvertibleMetric, got {other:?}"),
        }
    }

    #[test]
    fn eig_bounds_3d() {
        let m = [4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0];
        let (lo, hi) = sym_eig_bounds(3, &m);
        // trace and a rough spectral sanity window
        assert!(lo > 1.5 && lo < 2.1);
        assert!(hi > 4.0 && hi < 5.0);
        assert!((lo + hi - 9.0).abs() < 3.2); // middle eigenvalue absorbs the rest
    }

    #[test]
    fn integrate_constant() {
        let g = grid();
        let f = ScalarField::from_fn(g, |_| 2.0);
        // box area is (2L)^2 up to the midpoint rule treating edge nodes as
        // full cells: h^2 * N^2
        let want = 2.0 * g.spacing().powi(2) * g.n_nodes() as f64;
        assert!((f.integrate(None) - want).abs() < 1e-12);
    }
}
