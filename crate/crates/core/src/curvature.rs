//! Pointwise curvature operators against the Euclidean background:
//! Christoffel symbols, Ricci and scalar curvature, the Riemann norm and the
//! DeTurck vector field.

use crate::diff::{grad_scalar, grad_sym2, hess_scalar, hess_sym2, Sym2Gradient};
use crate::error::Result;
use crate::field::{MetricField, ScalarField, Sym2Field, VectorField};
use crate::grid::GridSpec;

/// Per-node connection coefficients `Gamma^k_ij`, symmetric in (i, j).
#[derive(Debug, Clone)]
pub struct ConnectionField {
    pub grid: GridSpec,
    pub data: Vec<f64>, // [(node * dim + k) * sym_comps + s(i,j)]
}

impl ConnectionField {
    fn zeros(grid: GridSpec) -> Self {
        Self {
            data: vec![0.0; grid.n_nodes() * grid.dim * grid.sym_comps()],
            grid,
        }
    }

    #[inline]
    pub fn get(&self, node: usize, k: usize, i: usize, j: usize) -> f64 {
        let m = self.grid.sym_comps();
        self.data[(node * self.grid.dim + k) * m + crate::grid::sym_index(self.grid.dim, i, j)]
    }

    #[inline]
    fn set(&mut self, node: usize, k: usize, i: usize, j: usize, v: f64) {
        let m = self.grid.sym_comps();
        self.data[(node * self.grid.dim + k) * m + crate::grid::sym_index(self.grid.dim, i, j)] =
            v;
    }

    pub fn sup_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Ricci, scalar curvature and the pointwise Riemann norm of one metric.
#[derive(Debug, Clone)]
pub struct CurvatureBundle {
    pub ricci: Sym2Field,
    pub scalar: ScalarField,
    pub riem_norm: ScalarField,
}

/// Everything the flow right-hand side needs from one geometry pass.
pub(crate) struct GeometryPass {
    pub grad: Sym2Gradient,
    pub gamma: ConnectionField,
    pub ricci: Sym2Field,
    pub scalar: ScalarField,
    pub riem_norm: Option<ScalarField>,
    pub deturck: VectorField,
    /// Largest eigenvalue of g^{-1} over the grid (CFL control).
    pub max_inverse_eig: f64,
}

#[inline]
fn load_dense(g: &MetricField, node: usize, out: &mut [[f64; 3]; 3]) {
    let d = g.grid().dim;
    for i in 0..d {
        for j in 0..d {
            out[i][j] = g.get(node, i, j);
        }
    }
}

pub(crate) fn geometry_pass(g: &MetricField, need_riem: bool) -> Result<GeometryPass> {
    let grid = *g.grid();
    let d = grid.dim;
    let grad = grad_sym2(&g.field);
    let hess = hess_sym2(&g.field, &grad);

    let mut gamma = ConnectionField::zeros(grid);
    let mut ricci = Sym2Field::zeros(grid);
    let mut scalar = ScalarField::zeros(grid);
    let mut riem_norm = need_riem.then(|| ScalarField::zeros(grid));
    let mut deturck = VectorField::zeros(grid);
    let mut max_inv_eig = 0.0f64;

    let mut inv9 = [0.0f64; 9];
    for node in 0..grid.n_nodes() {
        g.inverse_at(node, &mut inv9)?;
        let mut ginv = [[0.0f64; 3]; 3];
        let mut gm = [[0.0f64; 3]; 3];
        load_dense(g, node, &mut gm);
        for i in 0..d {
            for j in 0..d {
                ginv[i][j] = inv9[i * d + j];
            }
        }
        {
            // eigenvalue bound of g^{-1}
            let mut dense = [0.0f64; 9];
            for i in 0..d {
                for j in 0..d {
                    dense[i * d + j] = ginv[i][j];
                }
            }
            let (_, hi) = crate::field::sym_eig_bounds(d, &dense);
            if hi > max_inv_eig {
                max_inv_eig = hi;
            }
        }

        let mut dg = [[[0.0f64; 3]; 3]; 3]; // dg[a][i][j]
        for a in 0..d {
            for i in 0..d {
                for j in i..d {
                    let v = grad.get(node, a, i, j);
                    dg[a][i][j] = v;
                    dg[a][j][i] = v;
                }
            }
        }
        let mut d2g = [[[[0.0f64; 3]; 3]; 3]; 3]; // d2g[a][b][i][j]
        for a in 0..d {
            for b in 0..d {
                for i in 0..d {
                    for j in i..d {
                        let v = hess.get(node, a, b, i, j);
                        d2g[a][b][i][j] = v;
                        d2g[a][b][j][i] = v;
                    }
                }
            }
        }

        // d(g^{-1})[a][l][m] = -(g^{-1} dg[a] g^{-1})
        let mut dginv = [[[0.0f64; 3]; 3]; 3];
        for a in 0..d {
            for l in 0..d {
                for m in 0..d {
                    let mut s = 0.0;
                    for p in 0..d {
                        for q in 0..d {
                            s += ginv[l][p] * dg[a][p][q] * ginv[q][m];
                        }
                    }
                    dginv[a][l][m] = -s;
                }
            }
        }

        // Gamma^k_{ij} = 1/2 g^{kl}(d_i g_{jl} + d_j g_{il} - d_l g_{ij})
        let mut gam = [[[0.0f64; 3]; 3]; 3]; // gam[k][i][j]
        for k in 0..d {
            for i in 0..d {
                for j in i..d {
                    let mut s = 0.0;
                    for l in 0..d {
                        s += ginv[k][l] * (dg[i][j][l] + dg[j][i][l] - dg[l][i][j]);
                    }
                    let v = 0.5 * s;
                    gam[k][i][j] = v;
                    gam[k][j][i] = v;
                    gamma.set(node, k, i, j, v);
                }
            }
        }

        // X^k = -g^{ij} Gamma^k_{ij}
        for k in 0..d {
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..d {
                    s += ginv[i][j] * gam[k][i][j];
                }
            }
            deturck.set(node, k, -s);
        }

        // d_a Gamma^l_{jk}, by the product rule on the closed form
        let mut dgam = [[[[0.0f64; 3]; 3]; 3]; 3]; // dgam[a][l][j][k]
        for a in 0..d {
            for l in 0..d {
                for j in 0..d {
                    for k in j..d {
                        let mut s = 0.0;
                        for m in 0..d {
                            s += dginv[a][l][m] * (dg[j][k][m] + dg[k][j][m] - dg[m][j][k])
                                + ginv[l][m]
                                    * (d2g[a][j][k][m] + d2g[a][k][j][m] - d2g[a][m][j][k]);
                        }
                        let v = 0.5 * s;
                        dgam[a][l][j][k] = v;
                        dgam[a][l][k][j] = v;
                    }
                }
            }
        }

        // R^l_{ijk} = d_i Gamma^l_{jk} - d_j Gamma^l_{ik}
        //             + Gamma^l_{ip} Gamma^p_{jk} - Gamma^l_{jp} Gamma^p_{ik}
        let mut riem = [[[[0.0f64; 3]; 3]; 3]; 3]; // riem[l][i][j][k]
        for l in 0..d {
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        let mut s = dgam[i][l][j][k] - dgam[j][l][i][k];
                        for p in 0..d {
                            s += gam[l][i][p] * gam[p][j][k] - gam[l][j][p] * gam[p][i][k];
                        }
                        riem[l][i][j][k] = s;
                    }
                }
            }
        }

        // Ric_{jk} = R^i_{ijk}; R = g^{jk} Ric_{jk} (trace identity exact by
        // construction)
        let mut sc = 0.0;
        for j in 0..d {
            for k in j..d {
                let mut s = 0.0;
                for i in 0..d {
                    s += riem[i][i][j][k];
                }
                ricci.set(node, j, k, s);
            }
        }
        for j in 0..d {
            for k in 0..d {
                sc += ginv[j][k] * ricci.get(node, j, k);
            }
        }
        scalar.data[node] = sc;

        if let Some(rn) = riem_norm.as_mut() {
            // |Rm|^2 = R_{lijk} R_{abcd} g^{la} g^{ib} g^{jc} g^{kd}
            let mut low = [[[[0.0f64; 3]; 3]; 3]; 3];
            for l in 0..d {
                for i in 0..d {
                    for j in 0..d {
                        for k in 0..d {
                            let mut s = 0.0;
                            for m in 0..d {
                                s += gm[l][m] * riem[m][i][j][k];
                            }
                            low[l][i][j][k] = s;
                        }
                    }
                }
            }
            let raise =
                |t: &[[[[f64; 3]; 3]; 3]; 3], slot: usize| -> [[[[f64; 3]; 3]; 3]; 3] {
                    let mut out = [[[[0.0f64; 3]; 3]; 3]; 3];
                    for a in 0..d {
                        for b in 0..d {
                            for c in 0..d {
                                for e in 0..d {
                                    let mut s = 0.0;
                                    for m in 0..d {
                                        let v = match slot {
                                            0 => t[m][b][c][e],
                                            1 => t[a][m][c][e],
                                            2 => t[a][b][m][e],
                                            _ => t[a][b][c][m],
                                        };
                                        let g1 = match slot {
                                            0 => ginv[a][m],
                                            1 => ginv[b][m],
                                            2 => ginv[c][m],
                                            _ => ginv[e][m],
                                        };
                                        s += g1 * v;
                                    }
                                    out[a][b][c][e] = s;
                                }
                            }
                        }
                    }
                    out
                };
            let mut up = low;
            for slot in 0..4 {
                up = raise(&up, slot);
            }
            let mut nsq = 0.0;
            for l in 0..d {
                for i in 0..d {
                    for j in 0..d {
                        for k in 0..d {
                            nsq += low[l][i][j][k] * up[l][i][j][k];
                        }
                    }
                }
            }
            rn.data[node] = nsq.max(0.0).sqrt();
        }
    }

    Ok(GeometryPass {
        grad,
        gamma,
        ricci,
        scalar,
        riem_norm,
        deturck,
        max_inverse_eig: max_inv_eig,
    })
}

/// Christoffel symbols of g against the flat background.
pub fn christoffel(g: &MetricField) -> Result<ConnectionField> {
    Ok(geometry_pass(g, false)?.gamma)
}

/// DeTurck vector field `X^k = -g^{ij} Gamma^k_{ij}`.
pub fn deturck_vector(g: &MetricField) -> Result<VectorField> {
    Ok(geometry_pass(g, false)?.deturck)
}

/// Ricci, scalar and Riemann-norm fields of one metric.
pub fn curvature(g: &MetricField) -> Result<CurvatureBundle> {
    let pass = geometry_pass(g, true)?;
    Ok(CurvatureBundle {
        ricci: pass.ricci,
        scalar: pass.scalar,
        riem_norm: pass.riem_norm.expect("requested"),
    })
}

/// Pointwise `|Ric|^2` with indices raised by g.
pub fn ricci_norm_sq(g: &MetricField, ric: &Sym2Field) -> Result<ScalarField> {
    let grid = *g.grid();
    let d = grid.dim;
    let mut out = ScalarField::zeros(grid);
    let mut inv9 = [0.0f64; 9];
    for node in 0..grid.n_nodes() {
        g.inverse_at(node, &mut inv9)?;
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                for a in 0..d {
                    for b in 0..d {
                        s += inv9[i * d + a]
                            * inv9[j * d + b]
                            * ric.get(node, i, j)
                            * ric.get(node, a, b);
                    }
                }
            }
        }
        out.data[node] = s;
    }
    Ok(out)
}

/// Laplace-Beltrami operator
/// `Delta_g f = g^{ij} d2_{ij} f + b^j d_j f` with
/// `b^j = det(g)^{-1/2} d_i (det(g)^{1/2} g^{ij})`.
pub fn laplace_beltrami(g: &MetricField, f: &ScalarField) -> Result<ScalarField> {
    let grid = *g.grid();
    g.grid().same_grid(&f.grid)?;
    let d = grid.dim;

    // coefficient fields c^{ij} = sqrt(det g) g^{ij}
    let mut coeff = Sym2Field::zeros(grid);
    let mut vol = ScalarField::zeros(grid);
    let mut inv9 = [0.0f64; 9];
    for node in 0..grid.n_nodes() {
        let det = g.inverse_at(node, &mut inv9)?;
        let w = det.sqrt();
        vol.data[node] = w;
        for i in 0..d {
            for j in i..d {
                coeff.set(node, i, j, w * inv9[i * d + j]);
            }
        }
    }
    let dcoeff = grad_sym2(&coeff);

    let gradf = grad_scalar(f);
    let hessf = hess_scalar(f);

    let mut out = ScalarField::zeros(grid);
    for node in 0..grid.n_nodes() {
        g.inverse_at(node, &mut inv9)?;
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += inv9[i * d + j] * hessf.get(node, i, j);
            }
        }
        for j in 0..d {
            let mut div = 0.0;
            for i in 0..d {
                div += dcoeff.get(node, i, i, j);
            }
            s += div / vol.data[node] * gradf.get(node, j);
        }
        out.data[node] = s;
    }
    Ok(out)
}

/// Second-derivative sup diagnostic `sup |d^2 g|` (Frobenius).
pub fn sup_hessian(g: &MetricField) -> f64 {
    let grad = grad_sym2(&g.field);
    let hess = hess_sym2(&g.field, &grad);
    hess.sup_frobenius()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn grid2(n: usize, l: f64) -> GridSpec {
        GridSpec::new(2, l, n, 8.0 * l / (n as f64 - 1.0)).unwrap()
    }

    fn conformal2(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> MetricField {
        let field = Sym2Field::from_fn(grid, |x, i, j| {
            if i == j {
                (2.0 * f(x)).exp()
            } else {
                0.0
            }
        });
        MetricField::from_sym2(field, None)
    }

    fn interior(grid: &GridSpec, node: usize, layers: usize) -> bool {
        let idx = grid.decompose(node);
        (0..grid.dim).all(|a| {
            idx[a] >= layers && idx[a] + layers < grid.points_per_axis
        })
    }

    #[test]
    fn flat_metric_has_zero_geometry() {
        let g = MetricField::flat(grid2(17, 1.0));
        let gamma = christoffel(&g).unwrap();
        assert_eq!(gamma.sup_abs(), 0.0);
        let x = deturck_vector(&g).unwrap();
        assert_eq!(x.sup_abs(), 0.0);
        let c = curvature(&g).unwrap();
        assert_eq!(c.scalar.sup_abs(), 0.0);
        assert_eq!(c.riem_norm.sup_abs(), 0.0);
    }

    #[test]
    fn constant_scaled_metric_has_zero_connection() {
        let grid = grid2(17, 1.0);
        let field = Sym2Field::from_fn(grid, |_, i, j| if i == j { 2.5 } else { 0.0 });
        let g = MetricField::from_sym2(field, None);
        let gamma = christoffel(&g).unwrap();
        assert!(gamma.sup_abs() < 1e-13);
        let c = curvature(&g).unwrap();
        assert!(c.scalar.sup_abs() < 1e-12);
    }

    #[test]
    fn conformal_christoffel_2d() {
        // g = e^{2f} delta, f = x1:
        // Gamma^k_ij = d^k_i d_j f + d^k_j d_i f - d_ij d_k f
        // so Gamma^0_00 = 1, Gamma^0_11 = -1, Gamma^1_01 = 1.
        let grid = grid2(65, 1.0);
        let g = conformal2(grid, |x| x[0]);
        let gamma = christoffel(&g).unwrap();
        for node in 0..grid.n_nodes() {
            if !interior(&grid, node, 3) {
                continue;
            }
            assert!((gamma.get(node, 0, 0, 0) - 1.0).abs() < 1e-3);
            assert!((gamma.get(node, 0, 1, 1) + 1.0).abs() < 1e-3);
            assert!((gamma.get(node, 1, 0, 1) - 1.0).abs() < 1e-3);
            assert!(gamma.get(node, 1, 0, 0).abs() < 1e-3);
        }
    }

    #[test]
    fn deturck_vanishes_for_2d_conformal() {
        // delta^{ij} Gamma^k_{ij} = (2 - n) d_k f = 0 in n = 2
        let grid = grid2(65, 1.0);
        let g = conformal2(grid, |x| 0.3 * (x[0] * 1.1 + 0.7 * x[1]).sin());
        let x = deturck_vector(&g).unwrap();
        let mut sup = 0.0f64;
        for node in 0..grid.n_nodes() {
            if interior(&grid, node, 3) {
                for k in 0..2 {
                    sup = sup.max(x.get(node, k).abs());
                }
            }
        }
        assert!(sup < 2e-3, "sup {sup}");
    }

    #[test]
    fn deturck_conformal_3d_oracle() {
        // X^k = (n - 2) e^{-2f} d_k f; n = 3, f = x0 gives X^0 = e^{-2 x0}.
        let grid = GridSpec::new(3, 1.0, 33, 0.3).unwrap();
        let field = Sym2Field::from_fn(grid, |x, i, j| {
            if i == j {
                (2.0 * x[0]).exp()
            } else {
                0.0
            }
        });
        let g = MetricField::from_sym2(field, None);
        let x = deturck_vector(&g).unwrap();
        for node in 0..grid.n_nodes() {
            if !interior(&grid, node, 3) {
                continue;
            }
            let c = grid.node_coords(node);
            let want = (-2.0 * c[0]).exp();
            assert!(
                (x.get(node, 0) - want).abs() < 5e-3 * want.max(1.0),
                "node {node}"
            );
            assert!(x.get(node, 1).abs() < 5e-3);
        }
    }

    #[test]
    fn conformal_scalar_curvature_2d() {
        // R = -2 e^{-2f} Lap f; f = (x^2 + y^2)/4 gives R(0) = -2.
        let grid = grid2(129, 1.0);
        let g = conformal2(grid, |x| (x[0] * x[0] + x[1] * x[1]) / 4.0);
        let c = curvature(&g).unwrap();
        let center = grid.flatten([64, 64, 0]);
        assert!(
            (c.scalar.get(center) + 2.0).abs() < 2e-3,
            "R(0) = {}",
            c.scalar.get(center)
        );
        // and everywhere in the interior vs the closed form
        for node in 0..grid.n_nodes() {
            if !interior(&grid, node, 4) {
                continue;
            }
            let x = grid.node_coords(node);
            let f = (x[0] * x[0] + x[1] * x[1]) / 4.0;
            let want = -2.0 * (-2.0 * f).exp(); // Lap f = 1
            assert!(
                (c.scalar.get(node) - want).abs() < 5e-3,
                "node {node}: {} vs {want}",
                c.scalar.get(node)
            );
        }
    }

    #[test]
    fn conformal_scalar_curvature_3d() {
        // R = e^{-2f} (-4 Lap f - 2 |grad f|^2)
        let grid = GridSpec::new(3, 1.0, 49, 0.25).unwrap();
        let f = |x: &[f64]| 0.1 * (x[0] + 0.5 * x[1] * x[1] - 0.3 * x[2] * x[0]);
        let field = Sym2Field::from_fn(grid, |x, i, j| {
            if i == j {
                (2.0 * f(x)).exp()
            } else {
                0.0
            }
        });
        let g = MetricField::from_sym2(field, None);
        let c = curvature(&g).unwrap();
        // five spread-out interior probe nodes
        for idx in [[10, 12, 20], [24, 24, 24], [30, 9, 14], [15, 30, 30], [33, 20, 8]] {
            let node = grid.flatten(idx);
            let x = grid.node_coords(node);
            let lap = 0.1 * (0.0 + 1.0 + 0.0); // f_xx = 0, f_yy = 0.1, f_zz = 0
            let gf = [
                0.1 * (1.0 - 0.3 * x[2]),
                0.1 * x[1],
                0.1 * (-0.3 * x[0]),
            ];
            let grad2: f64 = gf.iter().map(|v| v * v).sum();
            let want = (-2.0 * f(&x[..3])).exp() * (-4.0 * lap - 2.0 * grad2);
            assert!(
                (c.scalar.get(node) - want).abs() < 2e-3,
                "{} vs {want}",
                c.scalar.get(node)
            );
        }
    }

    #[test]
    fn trace_identity_holds_everywhere() {
        let grid = grid2(33, 1.0);
        let g = conformal2(grid, |x| 0.2 * (x[0] * x[1]).cos());
        let c = curvature(&g).unwrap();
        let mut inv9 = [0.0f64; 9];
        for node in 0..grid.n_nodes() {
            g.inverse_at(node, &mut inv9).unwrap();
            let mut tr = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    tr += inv9[i * 2 + j] * c.ricci.get(node, i, j);
                }
            }
            assert!((tr - c.scalar.get(node)).abs() <= 1e-12 * (1.0 + tr.abs()));
        }
    }

    #[test]
    fn scalar_curvature_second_order_convergence() {
        let err = |n: usize| {
            let grid = grid2(n, 1.0);
            let g = conformal2(grid, |x| 0.1 * (-(x[0] * x[0] + x[1] * x[1])).exp());
            let c = curvature(&g).unwrap();
            let mut e = 0.0f64;
            for node in 0..grid.n_nodes() {
                if !interior(&grid, node, 4) {
                    continue;
                }
                let x = grid.node_coords(node);
                let r2 = x[0] * x[0] + x[1] * x[1];
                let f = 0.1 * (-r2).exp();
                let lap = 0.1 * (-r2).exp() * (4.0 * r2 - 4.0);
                let want = -2.0 * (-2.0 * f).exp() * lap;
                e = e.max((c.scalar.get(node) - want).abs());
            }
            e
        };
        let e1 = err(33);
        let e2 = err(65);
        let slope = (e1 / e2).log2();
        assert!(slope > 1.9, "slope {slope}");
    }

    #[test]
    fn reflection_equivariance() {
        // reflect along axis 0: R field must be the reflected R field exactly
        let grid = grid2(33, 1.0);
        let field = Sym2Field::from_fn(grid, |x, i, j| {
            let bump = 0.2 * (-(x[0] - 0.2) * (x[0] - 0.2) - x[1] * x[1]).exp();
            if i == j {
                1.0 + bump
            } else {
                0.0
            }
        });
        let g = MetricField::from_sym2(field, None);
        let c = curvature(&g).unwrap();

        let n = grid.points_per_axis;
        let refl_field = Sym2Field::from_fn(grid, |x, i, j| {
            let bump = 0.2 * (-(-x[0] - 0.2) * (-x[0] - 0.2) - x[1] * x[1]).exp();
            if i == j {
                1.0 + bump
            } else {
                0.0
            }
        });
        let gr = MetricField::from_sym2(refl_field, None);
        let cr = curvature(&gr).unwrap();
        for node in 0..grid.n_nodes() {
            let idx = grid.decompose(node);
            let mirror = grid.flatten([n - 1 - idx[0], idx[1], 0]);
            let a = c.scalar.get(node);
            let b = cr.scalar.get(mirror);
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn deturck_linear_at_flat() {
        // X(delta + s k) is O(s) for small symmetric perturbations
        let grid = grid2(33, 1.0);
        let xnorm = |s: f64| {
            let field = Sym2Field::from_fn(grid, |x, i, j| {
                let bump = s * (-(x[0] * x[0] + 2.0 * x[1] * x[1])).exp();
                if i == j {
                    1.0 + bump
                } else {
                    0.3 * bump
                }
            });
            deturck_vector(&MetricField::from_sym2(field, None))
                .unwrap()
                .sup_abs()
        };
        let v1 = xnorm(1e-3);
        let v2 = xnorm(2e-3);
        let ratio = v2 / v1;
        assert!((ratio - 2.0).abs() < 0.02, "ratio {ratio}");
    }

    #[test]
    fn laplace_beltrami_flat_cases() {
        let grid = grid2(33, 1.0);
        let g = MetricField::flat(grid);
        let f = ScalarField::from_fn(grid, |x| x[0] * x[0]);
        let lap = laplace_beltrami(&g, &f).unwrap();
        for node in 0..grid.n_nodes() {
            if interior(&grid, node, 2) {
                assert!((lap.get(node) - 2.0).abs() < 1e-10);
            }
        }
        let c = ScalarField::from_fn(grid, |_| 3.0);
        let lc = laplace_beltrami(&g, &c).unwrap();
        assert!(lc.sup_abs() < 1e-11);
    }

    #[test]
    fn laplace_beltrami_conformal_2d() {
        // Delta_{e^{2f} delta} u = e^{-2f} Delta u in n = 2
        let grid = grid2(65, 1.0);
        let f = |x: &[f64]| 0.2 * (x[0] + 0.3 * x[1]);
        let g = conformal2(grid, f);
        let u = ScalarField::from_fn(grid, |x| (1.3 * x[0]).sin() * (0.9 * x[1]).cos());
        let lap = laplace_beltrami(&g, &u).unwrap();
        for node in 0..grid.n_nodes() {
            if !interior(&grid, node, 3) {
                continue;
            }
            let x = grid.node_coords(node);
            let uval = (1.3 * x[0]).sin() * (0.9 * x[1]).cos();
            let flat_lap = -(1.3f64.powi(2) + 0.9f64.powi(2)) * uval;
            let want = (-2.0 * f(&x[..2])).exp() * flat_lap;
            assert!(
                (lap.get(node) - want).abs() < 5e-3,
                "{} vs {want}",
                lap.get(node)
            );
        }
    }
}
