//! Low-regularity constructions: cutoff profiles, gluing to flat, W^{1,p}
//! cone test metrics, the distributional scalar-curvature pairing and the
//! energy functional driving the weak lower-bound experiments.

use crate::curvature::geometry_pass;
use crate::diff::grad_scalar;
use crate::error::{CoreError, Result};
use crate::field::{MetricField, ScalarField, Sym2Field, VectorField};
use crate::flow::{DistanceField, FlowTrajectory};
use crate::grid::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutoffKind {
    /// Spatial gluing cutoff, evaluated at Euclidean distance from a center.
    ChiSpace,
    /// Radial profile, evaluated at a rescaled distance argument.
    PhiRadial,
}

/// Quintic-smoothstep profile: 1 on [0, r_in], 0 on [r_out, inf), monotone
/// C^2 in between. c4 bounds both |phi'| and -phi''/phi.
#[derive(Debug, Clone, Copy)]
pub struct CutoffProfile {
    pub kind: CutoffKind,
    pub r_in: f64,
    pub r_out: f64,
    pub c4: f64,
}

fn smoothstep(u: f64) -> f64 {
    u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
}
fn smoothstep_d(u: f64) -> f64 {
    30.0 * u * u * (1.0 - u) * (1.0 - u)
}
fn smoothstep_dd(u: f64) -> f64 {
    60.0 * u * (1.0 - u) * (1.0 - 2.0 * u)
}

impl CutoffProfile {
    pub fn value(&self, r: f64) -> f64 {
        let u = (r - self.r_in) / (self.r_out - self.r_in);
        if u <= 0.0 {
            1.0
        } else if u >= 1.0 {
            0.0
        } else {
            1.0 - smoothstep(u)
        }
    }

    pub fn dvalue(&self, r: f64) -> f64 {
        let w = self.r_out - self.r_in;
        let u = (r - self.r_in) / w;
        if (0.0..=1.0).contains(&u) {
            -smoothstep_d(u) / w
        } else {
            0.0
        }
    }

    pub fn ddvalue(&self, r: f64) -> f64 {
        let w = self.r_out - self.r_in;
        let u = (r - self.r_in) / w;
        if (0.0..=1.0).contains(&u) {
            -smoothstep_dd(u) / (w * w)
        } else {
            0.0
        }
    }

    /// True where the derivative is supported, r in (r_in, r_out).
    pub fn in_transition(&self, r: f64) -> bool {
        r > self.r_in && r < self.r_out
    }
}

pub fn make_cutoff(kind: CutoffKind, r_in: f64, r_out: f64) -> Result<CutoffProfile> {
    if !(r_in >= 0.0 && r_in < r_out) {
        return Err(CoreError::InvalidParameter(format!(
            "cutoff needs 0 <= r_in < r_out, got ({r_in}, {r_out})"
        )));
    }
    // c4 = max(sup |phi'|, sup -phi''/phi); the profile equals
    // 1 - smoothstep, so both bounds follow from the fixed polynomial.
    let w = r_out - r_in;
    let mut c4 = smoothstep_d(0.5) / w; // sup |phi'| = 15/(8w)
    for k in 1..10_000 {
        let u = k as f64 / 10_000.0;
        let phi = 1.0 - smoothstep(u);
        let dd = -smoothstep_dd(u) / (w * w);
        if dd < 0.0 && phi > 0.0 {
            c4 = c4.max(-dd / phi);
        }
    }
    Ok(CutoffProfile {
        kind,
        r_in,
        r_out,
        c4,
    })
}

/// Sample a profile at Euclidean distance from a center.
pub fn cutoff_field(profile: &CutoffProfile, grid: &GridSpec, center: &[f64]) -> ScalarField {
    ScalarField::from_fn(*grid, |x| {
        let r2: f64 = x
            .iter()
            .zip(center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        profile.value(r2.sqrt())
    })
}

/// g0 = delta + chi (g_local - delta).
pub fn glue_to_flat(
    g_local: &MetricField,
    chi: &CutoffProfile,
    center: &[f64],
) -> Result<MetricField> {
    let grid = *g_local.grid();
    let chi_f = cutoff_field(chi, &grid, center);
    for node in 0..grid.n_nodes() {
        if grid.in_collar(node) && chi_f.data[node] > 0.0 {
            return Err(CoreError::SupportViolation(format!(
                "gluing cutoff reaches into the flat collar (node {node})"
            )));
        }
    }
    let field = Sym2Field::from_fn(grid, |x, i, j| {
        let node = grid.nearest_node(x);
        let delta = if i == j { 1.0 } else { 0.0 };
        delta + chi_f.data[node] * (g_local.get(node, i, j) - delta)
    });
    Ok(MetricField::from_sym2(field, g_local.time_tag))
}

/// Cone-type W^{1,p} datum: g = delta - a eta(|x-c|) |x-c|^sigma I, with a
/// smoothstep bump eta that is 1 on [0, r_in] and 0 outside r_out. The
/// gradient ~ |x-c|^{sigma-1} lies in L^p iff p(1-sigma) < n.
pub fn make_w1p_cone(
    grid: &GridSpec,
    center: &[f64],
    sigma: f64,
    amplitude: f64,
    p: f64,
    r_in: f64,
    r_out: f64,
) -> Result<MetricField> {
    let n = grid.dim as f64;
    if !(p > n) {
        return Err(CoreError::InvalidParameter(format!(
            "cone datum requires p > n = {n}, got {p}"
        )));
    }
    if !(sigma > 1.0 - n / p && sigma < 1.0) {
        return Err(CoreError::InvalidParameter(format!(
            "cone exponent must lie in (1 - n/p, 1) = ({}, 1), got {sigma}",
            1.0 - n / p
        )));
    }
    if !(amplitude >= 0.0 && amplitude < 0.5) {
        return Err(CoreError::InvalidParameter(format!(
            "cone amplitude must lie in [0, 0.5), got {amplitude}"
        )));
    }
    let eta = make_cutoff(CutoffKind::ChiSpace, r_in, r_out)?;
    let scale = r_out.powf(sigma).max(1.0);
    let field = Sym2Field::from_fn(*grid, |x, i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        let r2: f64 = x
            .iter()
            .zip(center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let r = r2.sqrt();
        delta - delta * amplitude * eta.value(r) * r.powf(sigma) / scale
    });
    Ok(MetricField::from_sym2(field, None))
}

/// The audit trail of one distributional pairing evaluation.
#[derive(Debug, Clone)]
pub struct DistributionalScalarTerms {
    pub v: VectorField,
    pub f: ScalarField,
    /// d(mu_g)/d(mu_delta) = sqrt(det g).
    pub volume_ratio: ScalarField,
    pub value: f64,
}

/// Distributional scalar curvature pairing against flat background:
/// `<<R_g, u>> = int ( -V^k d_k(u w) + F u w ) dx`, `w = sqrt(det g)`,
/// `V^k = g^{ij} g^{kl} (d_j g_il - d_l g_ij)`,
/// `F = -d_k g^{ij} G^k_ij + d_k g^{ik} G^j_ji + g^{ij}(G^k_kl G^l_ij - G^k_jl G^l_ik)`,
/// assembled from first derivatives of g only.
pub fn distributional_scalar(
    g: &MetricField,
    u: &ScalarField,
) -> Result<DistributionalScalarTerms> {
    let grid = *g.grid();
    let d = grid.dim;
    grid.same_grid(&u.grid)?;
    if u.min() < 0.0 {
        return Err(CoreError::InvalidParameter(
            "pairing test function must be nonnegative".into(),
        ));
    }
    let sup = u.sup_abs();
    for node in 0..grid.n_nodes() {
        if grid.in_collar(node) && u.data[node].abs() > 1e-14 * sup {
            return Err(CoreError::SupportViolation(format!(
                "pairing test function reaches into the collar (node {node})"
            )));
        }
    }

    let gp = geometry_pass(g, false)?;
    let volume_ratio = g.volume_density();

    let mut v = VectorField::zeros(grid);
    let mut f = ScalarField::zeros(grid);
    let mut inv9 = [0.0f64; 9];
    for node in 0..grid.n_nodes() {
        g.inverse_at(node, &mut inv9)?;
        let ginv = |i: usize, j: usize| inv9[i * d + j];
        let dg = |k: usize, i: usize, j: usize| gp.grad.get(node, k, i, j);
        let gam = |k: usize, i: usize, j: usize| gp.gamma.get(node, k, i, j);

        for k in 0..d {
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..d {
                    for l in 0..d {
                        s += ginv(i, j) * ginv(k, l) * (dg(j, i, l) - dg(l, i, j));
                    }
                }
            }
            v.set(node, k, s);
        }

        // d_k g^{ij} = -g^{ia} d_k g_ab g^{bj}
        let mut dginv = [[[0.0f64; 3]; 3]; 3];
        for k in 0..d {
            for i in 0..d {
                for j in 0..d {
                    let mut s = 0.0;
                    for a in 0..d {
                        for b in 0..d {
                            s -= ginv(i, a) * dg(k, a, b) * ginv(b, j);
                        }
                    }
                    dginv[k][i][j] = s;
                }
            }
        }
        let mut acc = 0.0;
        for k in 0..d {
            for i in 0..d {
                for j in 0..d {
                    acc -= dginv[k][i][j] * gam(k, i, j);
                }
            }
        }
        for i in 0..d {
            let mut trace = 0.0;
            for j in 0..d {
                trace += gam(j, j, i);
            }
            for k in 0..d {
                acc += dginv[k][i][k] * trace;
            }
        }
        for i in 0..d {
            for j in 0..d {
                for l in 0..d {
                    let mut tr_l = 0.0;
                    for k in 0..d {
                        tr_l += gam(k, k, l);
                    }
                    acc += ginv(i, j) * tr_l * gam(l, i, j);
                    for k in 0..d {
                        acc -= ginv(i, j) * gam(k, j, l) * gam(l, i, k);
                    }
                }
            }
        }
        f.data[node] = acc;
    }

    // -V . grad(u w) + F u w against the flat measure
    let mut uw = ScalarField::zeros(grid);
    for node in 0..grid.n_nodes() {
        uw.data[node] = u.data[node] * volume_ratio.data[node];
    }
    let duw = grad_scalar(&uw);
    let cell = grid.spacing().powi(d as i32);
    let mut value = 0.0;
    for node in 0..grid.n_nodes() {
        let mut s = f.data[node] * uw.data[node];
        for k in 0..d {
            s -= v.get(node, k) * duw.get(node, k);
        }
        value += s;
    }
    value *= cell;

    Ok(DistributionalScalarTerms {
        v,
        f,
        volume_ratio,
        value,
    })
}

/// Empirical gluing constant: |<<R_{g0},u>> - <<R_{g_local},u>>| scaled by
/// the C^0 size of the perturbation.
pub fn gluing_error_check(
    g_local: &MetricField,
    chi: &CutoffProfile,
    center: &[f64],
    u: &ScalarField,
) -> Result<f64> {
    let g0 = glue_to_flat(g_local, chi, center)?;
    let glued = distributional_scalar(&g0, u)?.value;
    let raw = distributional_scalar(g_local, u)?.value;
    let eps = g_local.sup_deviation();
    if eps == 0.0 {
        return Ok(0.0);
    }
    Ok((glued - raw).abs() / eps)
}

/// f = (R - kappa)_- = max(kappa - R, 0).
pub fn negative_part(r: &ScalarField, kappa: f64) -> ScalarField {
    ScalarField {
        grid: r.grid,
        data: r.data.iter().map(|&v| (kappa - v).max(0.0)).collect(),
    }
}

/// Radial cutoff transported along the flow: psi_t = phi(t^gamma d_t(., x0)),
/// with the support of phi' recorded for the energy inequality's error term.
#[derive(Debug, Clone)]
pub struct PsiField {
    pub psi: ScalarField,
    pub supp_dphi: Vec<bool>,
}

pub fn make_psi(profile: &CutoffProfile, dist: &DistanceField, t: f64, gamma: f64) -> PsiField {
    let grid = dist.field.grid;
    let mut psi = ScalarField::zeros(grid);
    let mut supp = vec![false; grid.n_nodes()];
    let scale = t.powf(gamma);
    for node in 0..grid.n_nodes() {
        let arg = scale * dist.field.data[node];
        psi.data[node] = profile.value(arg);
        supp[node] = profile.in_transition(arg);
    }
    PsiField {
        psi,
        supp_dphi: supp,
    }
}

/// Energy E(t) = int (R - kappa)_- phi_t psi_t dmu_t along stored slices.
#[derive(Debug, Clone)]
pub struct EnergyTrace {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub sup_f: Vec<f64>,
    /// int over supp(phi') of phi_t dmu_t, per time.
    pub phi_mass_on_supp_dphi: Vec<f64>,
    pub kappa: f64,
    pub gamma: f64,
    pub big_t: f64,
}

pub fn energy_functional(
    traj: &FlowTrajectory,
    phis: &[ScalarField],
    psis: &[PsiField],
    kappa: f64,
    gamma: f64,
    big_t: f64,
) -> Result<EnergyTrace> {
    if phis.len() != traj.slices.len() || psis.len() != traj.slices.len() {
        return Err(CoreError::InvalidParameter(format!(
            "energy needs one phi and one psi per slice ({} slices, {} phis, {} psis)",
            traj.slices.len(),
            phis.len(),
            psis.len()
        )));
    }
    let grid = *traj.grid();
    let cell = grid.spacing().powi(grid.dim as i32);
    let mut times = Vec::new();
    let mut energy = Vec::new();
    let mut sup_f = Vec::new();
    let mut phi_mass = Vec::new();
    for (((t, g), phi), psi) in traj.slices.iter().zip(phis).zip(psis) {
        grid.same_grid(&phi.grid)?;
        let bundle = crate::curvature::curvature(g)?;
        let f = negative_part(&bundle.scalar, kappa);
        let vol = g.volume_density();
        let mut e = 0.0;
        let mut mass = 0.0;
        for node in 0..grid.n_nodes() {
            e += f.data[node] * phi.data[node] * psi.psi.data[node] * vol.data[node];
            if psi.supp_dphi[node] {
                mass += phi.data[node] * vol.data[node];
            }
        }
        times.push(*t);
        energy.push(e * cell);
        sup_f.push(f.sup_abs());
        phi_mass.push(mass * cell);
    }
    Ok(EnergyTrace {
        times,
        energy,
        sup_f,
        phi_mass_on_supp_dphi: phi_mass,
        kappa,
        gamma,
        big_t,
    })
}

/// Gaussian mollification of a metric at scale rho (separable convolution,
/// renormalized at the boundary). Used by oracle tests and the
/// mollification cross-check of the pairing.
pub fn mollify_metric(g: &MetricField, rho: f64) -> MetricField {
    let grid = *g.grid();
    let h = grid.spacing();
    let half = ((3.0 * rho / h).ceil() as isize).max(1);
    let weights: Vec<f64> = (-half..=half)
        .map(|k| (-((k as f64 * h) / rho).powi(2) / 2.0).exp())
        .collect();

    let m = grid.sym_comps();
    let n = grid.points_per_axis as isize;
    let mut data = g.field.data.clone();
    for axis in 0..grid.dim {
        let st = grid.stride(axis) as isize;
        let src = data.clone();
        for node in 0..grid.n_nodes() as isize {
            let idx = grid.decompose(node as usize)[axis] as isize;
            for s in 0..m {
                let mut acc = 0.0;
                let mut norm = 0.0;
                for (w, k) in weights.iter().zip(-half..=half) {
                    let j = idx + k;
                    if (0..n).contains(&j) {
                        acc += w * src[((node + k * st) as usize) * m + s];
                        norm += w;
                    }
                }
                data[node as usize * m + s] = acc / norm;
            }
        }
    }
    MetricField::from_sym2(
        Sym2Field { grid, data },
        g.time_tag,
    )
}
