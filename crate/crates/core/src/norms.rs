//! Norm suite: `C^0`, `L^p`, the weighted Sobolev norm `W^{1,p}_{-tau}` and
//! (in [`crate::flow`]) the parabolic X-norm over a trajectory.

use crate::diff::grad_sym2;
use crate::error::{CoreError, Result};
use crate::field::{MetricField, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    C0,
    Lp { p: f64 },
    W1pWeighted { p: f64, tau: f64 },
    XNorm,
}

#[derive(Debug, Clone, Copy)]
pub struct NormResult {
    pub kind: NormKind,
    pub value: f64,
}

/// Sup over nodes and entries of |g_ij - h_ij|.
pub fn c0_distance(g: &MetricField, h: &MetricField) -> Result<NormResult> {
    let value = g.field.sup_entry_distance(&h.field)?;
    Ok(NormResult {
        kind: NormKind::C0,
        value,
    })
}

/// L^p norm of a scalar field by the midpoint rule.
pub fn lp_norm(f: &ScalarField, p: f64) -> Result<NormResult> {
    if !(p >= 1.0) {
        return Err(CoreError::InvalidParameter(format!("p must be >= 1, got {p}")));
    }
    let cell = f.grid.spacing().powi(f.grid.dim as i32);
    let sum: f64 = f.data.iter().map(|v| v.abs().powf(p)).sum();
    Ok(NormResult {
        kind: NormKind::Lp { p },
        value: (cell * sum).powf(1.0 / p),
    })
}

/// Weighted Sobolev norm of g - delta:
/// `( int (|g-delta| <x>^tau)^p <x>^{-n} + int (|dg| <x>^{tau+1})^p <x>^{-n} )^{1/p}`
/// with `<x> = (1 + |x|^2)^{1/2}` and pointwise Frobenius magnitudes.
pub fn weighted_w1p_norm(g: &MetricField, p: f64, tau: f64) -> Result<NormResult> {
    let grid = *g.grid();
    let n = grid.dim as f64;
    if !(p > n) {
        return Err(CoreError::InvalidParameter(format!(
            "weighted W^(1,p) norm requires p > n = {n}, got {p}"
        )));
    }
    let grad = grad_sym2(&g.field);
    let cell = grid.spacing().powi(grid.dim as i32);
    let mut sum = 0.0;
    for node in 0..grid.n_nodes() {
        let x = grid.node_coords(node);
        let r2: f64 = x[..grid.dim].iter().map(|v| v * v).sum();
        let w = (1.0 + r2).sqrt();
        let mut dev2 = 0.0;
        for i in 0..grid.dim {
            for j in 0..grid.dim {
                let delta = if i == j { 1.0 } else { 0.0 };
                let v = g.get(node, i, j) - delta;
                dev2 += v * v;
            }
        }
        let dev = dev2.sqrt();
        let dg = grad.frobenius_at(node);
        sum += ((dev * w.powf(tau)).powf(p) + (dg * w.powf(tau + 1.0)).powf(p)) * w.powf(-n);
    }
    Ok(NormResult {
        kind: NormKind::W1pWeighted { p, tau },
        value: (cell * sum).powf(1.0 / p),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Sym2Field;
    use crate::grid::GridSpec;

    fn grid() -> GridSpec {
        GridSpec::new(2, 1.0, 33, 0.25).unwrap()
    }

    fn scaled_flat(grid: GridSpec, c: f64) -> MetricField {
        let mut f = Sym2Field::zeros(grid);
        for node in 0..grid.n_nodes() {
            for i in 0..grid.dim {
                f.set(node, i, i, c);
            }
        }
        MetricField::from_sym2(f, None)
    }

    #[test]
    fn c0_of_flat_pair_is_zero() {
        let g = MetricField::flat(grid());
        assert_eq!(c0_distance(&g, &g).unwrap().value, 0.0);
    }

    #[test]
    fn c0_of_scaled_flat() {
        let g = scaled_flat(grid(), 1.1);
        let d = MetricField::flat(grid());
        let v = c0_distance(&g, &d).unwrap().value;
        assert!((v - 0.1).abs() < 1e-14);
    }

    #[test]
    fn w1p_of_flat_is_zero() {
        let g = MetricField::flat(grid());
        assert_eq!(weighted_w1p_norm(&g, 4.0, 1.0).unwrap().value, 0.0);
    }

    #[test]
    fn w1p_rejects_small_p() {
        let g = MetricField::flat(grid());
        assert!(weighted_w1p_norm(&g, 1.5, 1.0).is_err());
    }

    #[test]
    fn w1p_single_cell_quadrature() {
        // |g - delta| = a on one node, gradient contribution subtracted by
        // comparing against the analytically propagated stencil values is
        // messy; instead check the zeroth-order term alone by using tau such
        // that the first-order term is computed but then verifying against
        // the full hand quadrature.
        let grid = grid();
        let a = 0.3;
        let node = grid.flatten([16, 20, 0]);
        let mut f = Sym2Field::zeros(grid);
        for nd in 0..grid.n_nodes() {
            f.set(nd, 0, 0, 1.0);
            f.set(nd, 1, 1, 1.0);
        }
        f.set(node, 0, 0, 1.0 + a);
        let g = MetricField::from_sym2(f, None);
        let p = 4.0;
        let tau = 1.5;
        let got = weighted_w1p_norm(&g, p, tau).unwrap().value;

        // hand quadrature: zeroth-order single cell + the gradient stencil
        // cells it touches
        let h = grid.spacing();
        let n = grid.dim as f64;
        let wgt = |nd: usize| {
            let x = grid.node_coords(nd);
            (1.0 + x[0] * x[0] + x[1] * x[1]).sqrt()
        };
        let w0 = wgt(node);
        let mut sum = (a * w0.powf(tau)).powf(p) * w0.powf(-n);
        // centered first derivative sees the bump from +-1 neighbors along
        // both axes with magnitude a/(2h)
        for (axis, step) in [(0usize, grid.stride(0)), (1, grid.stride(1))] {
            let _ = axis;
            for nb in [node - step, node + step] {
                let w = wgt(nb);
                let dg = a / (2.0 * h);
                sum += (dg * w.powf(tau + 1.0)).powf(p) * w.powf(-n);
            }
        }
        let want = (h * h * sum).powf(1.0 / p);
        assert!(
            (got - want).abs() / want < 1e-12,
            "got {got:e} want {want:e}"
        );
    }

    #[test]
    fn w1p_second_order_refinement() {
        // smooth compactly supported perturbation: values converge at second
        // order, measured via Richardson differences across three grids
        let val = |npts: usize| {
            let gr = GridSpec::new(2, 1.0, npts, 0.26).unwrap();
            let mut f = Sym2Field::zeros(gr);
            for node in 0..gr.n_nodes() {
                let x = gr.node_coords(node);
                let r2 = x[0] * x[0] + x[1] * x[1];
                let bump = if r2 < 0.25 {
                    (1.0 - 4.0 * r2).powi(4) * 0.1
                } else {
                    0.0
                };
                f.set(node, 0, 0, 1.0 + bump);
                f.set(node, 1, 1, 1.0);
            }
            weighted_w1p_norm(&MetricField::from_sym2(f, None), 4.0, 1.0)
                .unwrap()
                .value
        };
        let v1 = val(33);
        let v2 = val(65);
        let v3 = val(129);
        let r = (v1 - v2).abs() / (v2 - v3).abs();
        assert!(r > 3.0, "refinement ratio {r}");
    }

    #[test]
    fn lp_norm_of_constant() {
        let f = ScalarField::from_fn(grid(), |_| 2.0);
        let v = lp_norm(&f, 2.0).unwrap().value;
        let area = grid().spacing().powi(2) * grid().n_nodes() as f64;
        assert!((v - 2.0 * area.sqrt()).abs() < 1e-12);
    }
}
