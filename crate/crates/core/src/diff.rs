//! Finite-difference derivatives on the uniform lattice.
//!
//! First derivatives are second-order centered in the interior and one-sided
//! second-order on the boundary layer. Pure second derivatives use the compact
//! three-point stencil (damping at the grid scale, which nested first
//! differences would lose); mixed second derivatives are composed from two
//! first-difference passes.

use crate::field::{ScalarField, Sym2Field, VectorField};
use crate::grid::{pair_index, GridSpec};

/// Apply `f(base)` once per lattice line along `axis`.
fn for_each_line(grid: &GridSpec, axis: usize, mut f: impl FnMut(usize)) {
    let n = grid.points_per_axis;
    match (grid.dim, axis) {
        (2, 0) => (0..n).for_each(|i1| f(i1)),
        (2, 1) => (0..n).for_each(|i0| f(i0 * n)),
        (3, 0) => (0..n * n).for_each(|r| f(r)),
        (3, 1) => {
            for i0 in 0..n {
                for i2 in 0..n {
                    f(i0 * n * n + i2);
                }
            }
        }
        _ => {
            for i0 in 0..n {
                for i1 in 0..n {
                    f((i0 * n + i1) * n);
                }
            }
        }
    }
}

/// First derivative along `axis` of the strided component
/// `src[node * src_stride + src_off]`, written to
/// `dst[node * dst_stride + dst_off]`.
pub(crate) fn d1_pass(
    grid: &GridSpec,
    axis: usize,
    src: &[f64],
    src_stride: usize,
    src_off: usize,
    dst: &mut [f64],
    dst_stride: usize,
    dst_off: usize,
) {
    let n = grid.points_per_axis;
    let st = grid.stride(axis);
    let h = grid.spacing();
    let inv2h = 1.0 / (2.0 * h);
    for_each_line(grid, axis, |base| {
        let at = |t: usize| src[(base + t * st) * src_stride + src_off];
        dst[base * dst_stride + dst_off] = (-3.0 * at(0) + 4.0 * at(1) - at(2)) * inv2h;
        for t in 1..n - 1 {
            dst[(base + t * st) * dst_stride + dst_off] = (at(t + 1) - at(t - 1)) * inv2h;
        }
        dst[(base + (n - 1) * st) * dst_stride + dst_off] =
            (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) * inv2h;
    });
}

/// Compact second derivative along `axis` (same strided layout as `d1_pass`).
pub(crate) fn d2_pass(
    grid: &GridSpec,
    axis: usize,
    src: &[f64],
    src_stride: usize,
    src_off: usize,
    dst: &mut [f64],
    dst_stride: usize,
    dst_off: usize,
) {
    let n = grid.points_per_axis;
    let st = grid.stride(axis);
    let h = grid.spacing();
    let invh2 = 1.0 / (h * h);
    for_each_line(grid, axis, |base| {
        let at = |t: usize| src[(base + t * st) * src_stride + src_off];
        dst[base * dst_stride + dst_off] =
            (2.0 * at(0) - 5.0 * at(1) + 4.0 * at(2) - at(3)) * invh2;
        for t in 1..n - 1 {
            dst[(base + t * st) * dst_stride + dst_off] =
                (at(t + 1) - 2.0 * at(t) + at(t - 1)) * invh2;
        }
        dst[(base + (n - 1) * st) * dst_stride + dst_off] =
            (2.0 * at(n - 1) - 5.0 * at(n - 2) + 4.0 * at(n - 3) - at(n - 4)) * invh2;
    });
}

/// Gradient of a scalar field: `(grad f)_k = d_k f`.
pub fn grad_scalar(f: &ScalarField) -> VectorField {
    let grid = f.grid;
    let mut out = VectorField::zeros(grid);
    for axis in 0..grid.dim {
        d1_pass(&grid, axis, &f.data, 1, 0, &mut out.data, grid.dim, axis);
    }
    out
}

/// Hessian of a scalar field as a symmetric 2-tensor field.
pub fn hess_scalar(f: &ScalarField) -> Sym2Field {
    let grid = f.grid;
    let m = grid.sym_comps();
    let mut out = Sym2Field::zeros(grid);
    let grad = grad_scalar(f);
    for a in 0..grid.dim {
        d2_pass(
            &grid,
            a,
            &f.data,
            1,
            0,
            &mut out.data,
            m,
            crate::grid::sym_index(grid.dim, a, a),
        );
        for b in (a + 1)..grid.dim {
            d1_pass(
                &grid,
                b,
                &grad.data,
                grid.dim,
                a,
                &mut out.data,
                m,
                crate::grid::sym_index(grid.dim, a, b),
            );
        }
    }
    out
}

/// Per-node array `d_k g_ij` for a symmetric 2-tensor field.
#[derive(Debug, Clone)]
pub struct Sym2Gradient {
    pub grid: GridSpec,
    pub data: Vec<f64>, // [(node * dim + axis) * sym_comps + s]
}

impl Sym2Gradient {
    #[inline]
    pub fn get(&self, node: usize, axis: usize, i: usize, j: usize) -> f64 {
        let m = self.grid.sym_comps();
        self.data[(node * self.grid.dim + axis) * m + crate::grid::sym_index(self.grid.dim, i, j)]
    }

    /// Frobenius norm over (k, i, j) with the full (i, j) matrix.
    pub fn frobenius_at(&self, node: usize) -> f64 {
        let d = self.grid.dim;
        let mut s = 0.0;
        for k in 0..d {
            for i in 0..d {
                for j in 0..d {
                    let v = self.get(node, k, i, j);
                    s += v * v;
                }
            }
        }
        s.sqrt()
    }

    pub fn sup_frobenius(&self) -> f64 {
        (0..self.grid.n_nodes()).fold(0.0f64, |m, n| m.max(self.frobenius_at(n)))
    }
}

pub fn grad_sym2(g: &Sym2Field) -> Sym2Gradient {
    let grid = g.grid;
    let m = grid.sym_comps();
    let mut data = vec![0.0; grid.n_nodes() * grid.dim * m];
    for axis in 0..grid.dim {
        for s in 0..m {
            // dst component offset for (axis, s)
            let dst_off = axis * m + s;
            d1_pass(&grid, axis, &g.data, m, s, &mut data, grid.dim * m, dst_off);
        }
    }
    Sym2Gradient { grid, data }
}

/// Per-node array `d_a d_b g_ij` (axis pair a <= b).
#[derive(Debug, Clone)]
pub struct Sym2Hessian {
    pub grid: GridSpec,
    pub data: Vec<f64>, // [(node * axis_pairs + p) * sym_comps + s]
}

impl Sym2Hessian {
    #[inline]
    pub fn get(&self, node: usize, a: usize, b: usize, i: usize, j: usize) -> f64 {
        let m = self.grid.sym_comps();
        let p = pair_index(self.grid.dim, a, b);
        self.data[(node * self.grid.axis_pairs() + p) * m
            + crate::grid::sym_index(self.grid.dim, i, j)]
    }

    /// Frobenius norm over (a, b, i, j) with full matrices in both pairs.
    pub fn frobenius_at(&self, node: usize) -> f64 {
        let d = self.grid.dim;
        let mut s = 0.0;
        for a in 0..d {
            for b in 0..d {
                for i in 0..d {
                    for j in 0..d {
                        let v = self.get(node, a, b, i, j);
                        s += v * v;
                    }
                }
            }
        }
        s.sqrt()
    }

    pub fn sup_frobenius(&self) -> f64 {
        (0..self.grid.n_nodes()).fold(0.0f64, |m, n| m.max(self.frobenius_at(n)))
    }
}

/// Second derivatives of a tensor field; pure ones by the compact stencil,
/// mixed ones by differencing the stored gradient.
pub fn hess_sym2(g: &Sym2Field, grad: &Sym2Gradient) -> Sym2Hessian {
    let grid = g.grid;
    let m = grid.sym_comps();
    let np = grid.axis_pairs();
    let mut data = vec![0.0; grid.n_nodes() * np * m];
    for a in 0..grid.dim {
        for s in 0..m {
            let p = pair_index(grid.dim, a, a);
            d2_pass(&grid, a, &g.data, m, s, &mut data, np * m, p * m + s);
        }
        for b in (a + 1)..grid.dim {
            let p = pair_index(grid.dim, a, b);
            for s in 0..m {
                // d_b of (d_a g)_s
                d1_pass(
                    &grid,
                    b,
                    &grad.data,
                    grid.dim * m,
                    a * m + s,
                    &mut data,
                    np * m,
                    p * m + s,
                );
            }
        }
    }
    Sym2Hessian { grid, data }
}

/// Per-node Jacobian `d_i X^k` of a vector field.
#[derive(Debug, Clone)]
pub struct Jacobian {
    pub grid: GridSpec,
    pub data: Vec<f64>, // [(node * dim + i) * dim + k]
}

impl Jacobian {
    #[inline]
    pub fn get(&self, node: usize, i: usize, k: usize) -> f64 {
        self.data[(node * self.grid.dim + i) * self.grid.dim + k]
    }
}

pub fn grad_vector(v: &VectorField) -> Jacobian {
    let grid = v.grid;
    let d = grid.dim;
    let mut data = vec![0.0; grid.n_nodes() * d * d];
    for axis in 0..d {
        for k in 0..d {
            d1_pass(&grid, axis, &v.data, d, k, &mut data, d * d, axis * d + k);
        }
    }
    Jacobian { grid, data }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(2, 1.0, n, 8.0 / (n as f64 - 1.0)).unwrap()
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let f = ScalarField::from_fn(grid(17), |_| 5.0);
        let g = grad_scalar(&f);
        assert!(g.sup_abs() < 1e-13);
    }

    #[test]
    fn gradient_exact_on_linear() {
        let f = ScalarField::from_fn(grid(17), |x| x[0]);
        let g = grad_scalar(&f);
        for node in 0..f.grid.n_nodes() {
            assert!((g.get(node, 0) - 1.0).abs() < 1e-12);
            assert!(g.get(node, 1).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_second_order_convergence() {
        // f = sin(pi x / L): max error vs exact derivative halves by 4x when
        // h halves.
        let l = 1.0;
        let err = |n: usize| {
            let gr = grid(n);
            let f = ScalarField::from_fn(gr, |x| (std::f64::consts::PI * x[0] / l).sin());
            let g = grad_scalar(&f);
            let mut e = 0.0f64;
            for node in 0..gr.n_nodes() {
                let x = gr.node_coords(node);
                let exact = std::f64::consts::PI / l * (std::f64::consts::PI * x[0] / l).cos();
                e = e.max((g.get(node, 0) - exact).abs());
            }
            e
        };
        let e1 = err(33);
        let e2 = err(65);
        let ratio = e1 / e2;
        assert!(ratio > 3.5, "ratio {ratio}");
    }

    #[test]
    fn hessian_exact_on_quadratic() {
        let f = ScalarField::from_fn(grid(17), |x| x[0] * x[0] + 3.0 * x[0] * x[1]);
        let h = hess_scalar(&f);
        let gr = f.grid;
        for node in 0..gr.n_nodes() {
            let idx = gr.decompose(node);
            let interior = (2..gr.points_per_axis - 2).contains(&idx[0])
                && (2..gr.points_per_axis - 2).contains(&idx[1]);
            if interior {
                assert!((h.get(node, 0, 0) - 2.0).abs() < 1e-11);
                assert!((h.get(node, 0, 1) - 3.0).abs() < 1e-11);
                assert!(h.get(node, 1, 1).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn sym2_gradient_matches_scalar_path() {
        let gr = grid(17);
        let f = |x: &[f64]| (x[0] * 1.3 + 0.2 * x[1]).sin();
        let sf = ScalarField::from_fn(gr, f);
        let gs = grad_scalar(&sf);
        let mut t = Sym2Field::zeros(gr);
        for node in 0..gr.n_nodes() {
            let x = gr.node_coords(node);
            t.set(node, 0, 1, f(&x[..2]));
        }
        let gt = grad_sym2(&t);
        for node in 0..gr.n_nodes() {
            for axis in 0..2 {
                assert!((gt.get(node, axis, 0, 1) - gs.get(node, axis)).abs() < 1e-13);
                assert!(gt.get(node, axis, 0, 0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn jacobian_of_linear_field() {
        let gr = grid(17);
        let mut v = VectorField::zeros(gr);
        for node in 0..gr.n_nodes() {
            let x = gr.node_coords(node);
            v.set(node, 0, 2.0 * x[1]);
            v.set(node, 1, -x[0]);
        }
        let j = grad_vector(&v);
        for node in 0..gr.n_nodes() {
            assert!((j.get(node, 1, 0) - 2.0).abs() < 1e-12);
            assert!((j.get(node, 0, 1) + 1.0).abs() < 1e-12);
            assert!(j.get(node, 0, 0).abs() < 1e-12);
        }
    }
}
