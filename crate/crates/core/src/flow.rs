//! Time integration of the DeTurck-gauged flow, the conjugate heat equation
//! and its kernel, and geodesic distance under the evolving metric.
//!
//! Scheme: explicit Heun (RK2) with dt = sigma * h^2 capped by the inverse
//! metric's largest eigenvalue; the outermost node shell is frozen (Dirichlet)
//! so one-sided stencils never feed back into the update. Undoing the gauge
//! diffeomorphism to recover the ungauged flow is out of scope.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs;
use std::path::Path;

use crate::curvature::{self, geometry_pass};
use crate::diff::{d1_pass, grad_scalar, grad_sym2, grad_vector, hess_scalar, hess_sym2};
use crate::error::{CoreError, Result};
use crate::field::{MetricField, ScalarField, Sym2Field};
use crate::fit::linear_fit;
use crate::grid::GridSpec;
use crate::norms::{NormKind, NormResult};

/// Default stability factor in dt = sigma * h^2 / max(1, sup eig g^{-1}).
pub const DEFAULT_SIGMA: f64 = 0.1;
/// Hard explicit-scheme cap enforced per step.
const SIGMA_CAP: f64 = 0.25;

/// True on the outermost node shell, which is held fixed during evolution.
#[inline]
fn frozen(grid: &GridSpec, node: usize) -> bool {
    let idx = grid.decompose(node);
    let last = grid.points_per_axis - 1;
    (0..grid.dim).any(|a| idx[a] == 0 || idx[a] == last)
}

/// Per-slice sup diagnostics recorded along a trajectory.
#[derive(Debug, Clone, Copy)]
pub struct SliceDiagnostics {
    pub time: f64,
    pub sup_dev: f64,
    pub sup_grad: f64,
    pub sup_hess: f64,
    pub sup_scalar: f64,
    pub sup_riem: f64,
}

pub fn slice_diagnostics(t: f64, g: &MetricField) -> Result<SliceDiagnostics> {
    let grad = grad_sym2(&g.field);
    let hess = hess_sym2(&g.field, &grad);
    let bundle = curvature::curvature(g)?;
    Ok(SliceDiagnostics {
        time: t,
        sup_dev: g.sup_deviation(),
        sup_grad: grad.sup_frobenius(),
        sup_hess: hess.sup_frobenius(),
        sup_scalar: bundle.scalar.sup_abs(),
        sup_riem: bundle.riem_norm.sup_abs(),
    })
}

/// The evolving metric: initial datum at t = 0 plus slices at t > 0.
#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub initial: MetricField,
    pub slices: Vec<(f64, MetricField)>,
    pub diagnostics: Vec<SliceDiagnostics>,
    pub sigma: f64,
}

impl FlowTrajectory {
    /// Assemble a trajectory from precomputed slices (diagnostics included).
    pub fn from_slices(
        initial: MetricField,
        slices: Vec<(f64, MetricField)>,
        sigma: f64,
    ) -> Result<Self> {
        let mut prev = 0.0;
        for (t, g) in &slices {
            if !(*t > prev) {
                return Err(CoreError::InvalidParameter(format!(
                    "slice times must be strictly increasing and positive, got {t}"
                )));
            }
            initial.grid().same_grid(g.grid())?;
            prev = *t;
        }
        if slices.is_empty() {
            return Err(CoreError::EmptyTrajectory);
        }
        let diagnostics = slices
            .iter()
            .map(|(t, g)| slice_diagnostics(*t, g))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            initial,
            slices,
            diagnostics,
            sigma,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        self.initial.grid()
    }

    pub fn t_end(&self) -> f64 {
        self.slices.last().map(|(t, _)| *t).unwrap_or(0.0)
    }

    /// Metric at time t by linear interpolation between stored slices (the
    /// initial datum serves as the t = 0 anchor).
    pub fn metric_at(&self, t: f64) -> Result<MetricField> {
        let hi = self.t_end();
        if !(0.0..=hi * (1.0 + 1e-12)).contains(&t) {
            return Err(CoreError::TimeOutOfRange { t, lo: 0.0, hi });
        }
        let at = |k: usize| -> (f64, &MetricField) {
            if k == 0 {
                (0.0, &self.initial)
            } else {
                let (s, ref g) = self.slices[k - 1];
                (s, g)
            }
        };
        // find bracketing pair
        let mut k = 0;
        while k < self.slices.len() && self.slices[k].0 < t {
            k += 1;
        }
        let (t1, g1) = at(k.min(self.slices.len() - 1) + 1);
        if (t1 - t).abs() <= 1e-14 * t1.max(1.0) {
            return Ok(g1.clone());
        }
        let (t0, g0) = at(k);
        if (t0 - t).abs() <= 1e-14 * t0.max(1.0) {
            return Ok(g0.clone());
        }
        let w = (t - t0) / (t1 - t0);
        let mut field = Sym2Field::zeros(*self.grid());
        for (d, (a, b)) in field
            .data
            .iter_mut()
            .zip(g0.field.data.iter().zip(&g1.field.data))
        {
            *d = a * (1.0 - w) + b * w;
        }
        Ok(MetricField::from_sym2(field, Some(t)))
    }

    /// Index of the slice at time t (within relative tolerance), if stored.
    pub fn slice_index(&self, t: f64) -> Option<usize> {
        self.slices
            .iter()
            .position(|(s, _)| (s - t).abs() <= 1e-12 * s.max(1.0))
    }

    /// Binary slice files plus a CSV manifest of times and diagnostics.
    pub fn write_checkpoints(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        {
            let mut f = fs::File::create(dir.join("initial.rdlf"))?;
            crate::io::write_metric(&mut f, &self.initial)?;
        }
        let mut manifest = String::from(
            "index,t,sup_dev,sup_grad,sup_hess,sup_scalar,sup_riem,sigma,file\n",
        );
        for (k, ((t, g), d)) in self.slices.iter().zip(&self.diagnostics).enumerate() {
            let name = format!("slice_{k:04}.rdlf");
            let mut f = fs::File::create(dir.join(&name))?;
            let mut tagged = g.clone();
            tagged.time_tag = Some(*t);
            crate::io::write_metric(&mut f, &tagged)?;
            manifest.push_str(&format!(
                "{k},{t:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{name}\n",
                d.sup_dev, d.sup_grad, d.sup_hess, d.sup_scalar, d.sup_riem, self.sigma
            ));
        }
        fs::write(dir.join("manifest.csv"), manifest)?;
        Ok(())
    }

    pub fn read_checkpoints(dir: &Path) -> Result<Self> {
        let initial = {
            let mut f = fs::File::open(dir.join("initial.rdlf"))?;
            crate::io::read_metric(&mut f)?
        };
        let manifest = fs::read_to_string(dir.join("manifest.csv"))?;
        let mut slices = Vec::new();
        let mut diagnostics = Vec::new();
        let mut sigma = DEFAULT_SIGMA;
        for line in manifest.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 9 {
                return Err(CoreError::Format(format!("bad manifest row: {line}")));
            }
            let num = |i: usize| -> Result<f64> {
                cols[i]
                    .parse::<f64>()
                    .map_err(|e| CoreError::Format(format!("manifest field {i}: {e}")))
            };
            let t = num(1)?;
            sigma = num(7)?;
            diagnostics.push(SliceDiagnostics {
                time: t,
                sup_dev: num(2)?,
                sup_grad: num(3)?,
                sup_hess: num(4)?,
                sup_scalar: num(5)?,
                sup_riem: num(6)?,
            });
            let mut f = fs::File::open(dir.join(cols[8]))?;
            slices.push((t, crate::io::read_metric(&mut f)?));
        }
        if slices.is_empty() {
            return Err(CoreError::EmptyTrajectory);
        }
        Ok(Self {
            initial,
            slices,
            diagnostics,
            sigma,
        })
    }
}

/// Right-hand side of the gauged flow,
/// `-2 Ric_ij - (X^k d_k g_ij + g_kj d_i X^k + g_ik d_j X^k)`,
/// zero on the frozen shell. Also returns the inverse-metric eigenvalue cap.
fn flow_rhs(g: &MetricField) -> Result<(Sym2Field, f64)> {
    let grid = *g.grid();
    let d = grid.dim;
    let gp = geometry_pass(g, false)?;
    let jac = grad_vector(&gp.deturck);
    let mut rhs = Sym2Field::zeros(grid);
    for node in 0..grid.n_nodes() {
        if frozen(&grid, node) {
            continue;
        }
        for i in 0..d {
            for j in i..d {
                let mut v = -2.0 * gp.ricci.get(node, i, j);
                for k in 0..d {
                    v -= gp.deturck.get(node, k) * gp.grad.get(node, k, i, j);
                    v -= g.get(node, k, j) * jac.get(node, i, k)
                        + g.get(node, i, k) * jac.get(node, j, k);
                }
                rhs.set(node, i, j, v);
            }
        }
    }
    Ok((rhs, gp.max_inverse_eig))
}

/// One Heun step of the gauged flow.
pub fn rdtf_step(g: &MetricField, dt: f64) -> Result<MetricField> {
    let grid = *g.grid();
    let h = grid.spacing();
    let (k1, max_inv) = flow_rhs(g)?;
    let limit = SIGMA_CAP * h * h / max_inv.max(1.0);
    if !(dt > 0.0) || dt > limit {
        return Err(CoreError::CflViolation { dt, limit });
    }
    let t0 = g.time_tag.unwrap_or(0.0);

    let mut mid = g.field.clone();
    for (m, k) in mid.data.iter_mut().zip(&k1.data) {
        *m += dt * k;
    }
    let gmid = MetricField::from_sym2(mid, Some(t0 + dt));
    check_positive(&gmid, t0 + dt)?;

    let (k2, _) = flow_rhs(&gmid)?;
    let mut out = g.field.clone();
    for ((o, a), b) in out.data.iter_mut().zip(&k1.data).zip(&k2.data) {
        *o += 0.5 * dt * (a + b);
    }
    let gout = MetricField::from_sym2(out, Some(t0 + dt));
    check_positive(&gout, t0 + dt)?;
    Ok(gout)
}

fn check_positive(g: &MetricField, time: f64) -> Result<()> {
    g.assert_positive().map_err(|e| match e {
        CoreError::NonInvertibleMetric { node, min_eig } => CoreError::PositivityLoss {
            node,
            min_eig,
            time,
        },
        other => other,
    })
}

/// Evolve g0 and record slices (with diagnostics) at the snapshot times.
pub fn run_flow(g0: &MetricField, t_end: f64, snapshot_times: &[f64]) -> Result<FlowTrajectory> {
    run_flow_sigma(g0, t_end, snapshot_times, DEFAULT_SIGMA)
}

pub fn run_flow_sigma(
    g0: &MetricField,
    t_end: f64,
    snapshot_times: &[f64],
    sigma: f64,
) -> Result<FlowTrajectory> {
    let dev = g0.sup_deviation();
    if !(dev < 1.0) {
        return Err(CoreError::InvalidParameter(format!(
            "initial sup|g0 - delta| must be < 1, got {dev:.3e}"
        )));
    }
    if !(sigma > 0.0 && sigma <= SIGMA_CAP) {
        return Err(CoreError::InvalidParameter(format!(
            "sigma must be in (0, {SIGMA_CAP}], got {sigma}"
        )));
    }
    if snapshot_times.is_empty() {
        return Err(CoreError::EmptyTrajectory);
    }
    let mut prev = 0.0;
    for &s in snapshot_times {
        if !(s > prev && s <= t_end * (1.0 + 1e-12)) {
            return Err(CoreError::InvalidParameter(format!(
                "snapshot times must be increasing in (0, t_end], got {s}"
            )));
        }
        prev = s;
    }
    g0.assert_positive()?;

    let grid = *g0.grid();
    let h = grid.spacing();
    let mut g = g0.clone();
    g.time_tag = Some(0.0);
    let mut t = 0.0;
    let mut slices = Vec::with_capacity(snapshot_times.len());
    let mut diagnostics = Vec::with_capacity(snapshot_times.len());
    for &target in snapshot_times {
        // recompute the step cap from the current metric
        let (_, max_inv) = flow_rhs(&g)?;
        let dt_base = sigma * h * h / max_inv.max(1.0);
        let nsteps = ((target - t) / dt_base).ceil().max(1.0) as usize;
        let dt = (target - t) / nsteps as f64;
        for _ in 0..nsteps {
            g = rdtf_step(&g, dt)?;
        }
        t = target;
        g.time_tag = Some(t);
        diagnostics.push(slice_diagnostics(t, &g)?);
        slices.push((t, g.clone()));
    }
    let mut initial = g0.clone();
    initial.time_tag = Some(0.0);
    Ok(FlowTrajectory {
        initial,
        slices,
        diagnostics,
        sigma,
    })
}

/// Frozen-coefficient background at one time: inverse metric, Laplacian drift,
/// gauge vector, scalar curvature and volume density.
pub(crate) struct Background {
    pub grid: GridSpec,
    pub ginv: Vec<f64>,   // [node * dim * dim]
    pub drift: Vec<f64>,  // b^j, [node * dim]
    pub x: Vec<f64>,      // X^k, [node * dim]
    pub scalar: ScalarField,
}

impl Background {
    pub fn new(g: &MetricField) -> Result<Self> {
        let grid = *g.grid();
        let d = grid.dim;
        let gp = geometry_pass(g, false)?;
        let volume = g.volume_density();
        let mut ginv = vec![0.0; grid.n_nodes() * d * d];
        let mut coeff = vec![0.0; grid.n_nodes() * d * d]; // sqrt(det) g^{ij}
        let mut inv9 = [0.0f64; 9];
        for node in 0..grid.n_nodes() {
            g.inverse_at(node, &mut inv9)?;
            let w = volume.data[node];
            for i in 0..d {
                for j in 0..d {
                    ginv[(node * d + i) * d + j] = inv9[i * d + j];
                    coeff[(node * d + i) * d + j] = w * inv9[i * d + j];
                }
            }
        }
        // b^j = (1/sqrt det) d_i (sqrt(det) g^{ij})
        let mut div = vec![0.0; grid.n_nodes() * d];
        let mut tmp = vec![0.0; grid.n_nodes()];
        for j in 0..d {
            for i in 0..d {
                d1_pass(&grid, i, &coeff, d * d, i * d + j, &mut tmp, 1, 0);
                for node in 0..grid.n_nodes() {
                    div[node * d + j] += tmp[node];
                }
            }
        }
        for node in 0..grid.n_nodes() {
            for j in 0..d {
                div[node * d + j] /= volume.data[node];
            }
        }
        Ok(Self {
            grid,
            ginv,
            drift: div,
            x: gp.deturck.data,
            scalar: gp.scalar,
        })
    }

    /// `Delta_g phi + x_sign * X^k d_k phi - r_coeff * R * phi`,
    /// zero on the frozen shell.
    pub fn apply(&self, phi: &ScalarField, x_sign: f64, r_coeff: f64) -> ScalarField {
        let grid = self.grid;
        let d = grid.dim;
        let grad = grad_scalar(phi);
        let hess = hess_scalar(phi);
        let mut out = ScalarField::zeros(grid);
        for node in 0..grid.n_nodes() {
            if frozen(&grid, node) {
                continue;
            }
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..d {
                    s += self.ginv[(node * d + i) * d + j] * hess.get(node, i, j);
                }
            }
            for j in 0..d {
                s += (self.drift[node * d + j] + x_sign * self.x[node * d + j])
                    * grad.get(node, j);
            }
            out.data[node] = s - r_coeff * self.scalar.data[node] * phi.data[node];
        }
        out
    }
}

/// Residual of the scalar-curvature evolution identity at a stored slice:
/// `dR/dt - (Delta_g R - X^k d_k R + 2 |Ric|^2)`.
pub fn scalar_evolution_residual(traj: &FlowTrajectory, t: f64) -> Result<ScalarField> {
    let k = traj
        .slice_index(t)
        .ok_or(CoreError::TimeOutOfRange {
            t,
            lo: traj.slices.first().map(|s| s.0).unwrap_or(0.0),
            hi: traj.t_end(),
        })?;
    if k == 0 || k + 1 >= traj.slices.len() {
        return Err(CoreError::TimeOutOfRange {
            t,
            lo: traj.slices[0].0,
            hi: traj.t_end(),
        });
    }
    let grid = *traj.grid();
    let (tm, ref gm) = traj.slices[k - 1];
    let (t0, ref g0) = traj.slices[k];
    let (tp, ref gp) = traj.slices[k + 1];
    let rm = curvature::curvature(gm)?.scalar;
    let bundle = curvature::curvature(g0)?;
    let rp = curvature::curvature(gp)?.scalar;

    let bg = Background::new(g0)?;
    let lap = bg.apply(&bundle.scalar, -1.0, 0.0); // Delta R - X . grad R
    let ric2 = curvature::ricci_norm_sq(g0, &bundle.ricci)?;

    // non-uniform centered time difference
    let (dm, dp) = (t0 - tm, tp - t0);
    let mut out = ScalarField::zeros(grid);
    for node in 0..grid.n_nodes() {
        if frozen(&grid, node) {
            continue;
        }
        let dtr = ((rp.data[node] - bundle.scalar.data[node]) / dp * dm
            + (bundle.scalar.data[node] - rm.data[node]) / dm * dp)
            / (dm + dp);
        out.data[node] = dtr - (lap.data[node] + 2.0 * ric2.data[node]);
    }
    Ok(out)
}

fn substep_count(traj: &FlowTrajectory, span: f64, at: f64) -> Result<usize> {
    let g = traj.metric_at(at)?;
    let gp = geometry_pass(&g, false)?;
    let h = traj.grid().spacing();
    let dt_base = traj.sigma * h * h / gp.max_inverse_eig.max(1.0);
    Ok((span / dt_base).ceil().max(1.0) as usize)
}

/// Solve the conjugate (backward) equation
/// `d_t phi = -Delta_g phi + R phi - X^k d_k phi` from terminal data at T
/// down to time t.
pub fn conjugate_heat_solve(
    traj: &FlowTrajectory,
    terminal: &ScalarField,
    big_t: f64,
    t: f64,
) -> Result<ScalarField> {
    if !(t > 0.0 && t < big_t) {
        return Err(CoreError::TimeOutOfRange {
            t,
            lo: 0.0,
            hi: big_t,
        });
    }
    traj.grid().same_grid(&terminal.grid)?;
    if terminal.min() < 0.0 {
        return Err(CoreError::InvalidParameter(
            "conjugate terminal data must be nonnegative".into(),
        ));
    }
    let grid = *traj.grid();
    let sup = terminal.sup_abs();
    for node in 0..grid.n_nodes() {
        if grid.in_collar(node) && terminal.data[node].abs() > 1e-12 * sup {
            return Err(CoreError::SupportViolation(format!(
                "terminal data must vanish on the flat collar (node {node})"
            )));
        }
    }

    let n = substep_count(traj, big_t - t, big_t)?;
    let ds = (big_t - t) / n as f64;
    let mut phi = terminal.clone();
    // backward in time: phi(s - ds) = phi(s) + ds * (Delta phi + X.grad phi - R phi)
    let mut bg = Background::new(&traj.metric_at(big_t)?)?;
    for j in 0..n {
        let s2 = big_t - (j + 1) as f64 * ds;
        let bg2 = Background::new(&traj.metric_at(s2.max(t))?)?;
        let k1 = bg.apply(&phi, 1.0, 1.0);
        let mut star = phi.clone();
        for (p, k) in star.data.iter_mut().zip(&k1.data) {
            *p += ds * k;
        }
        let k2 = bg2.apply(&star, 1.0, 1.0);
        for ((p, a), b) in phi.data.iter_mut().zip(&k1.data).zip(&k2.data) {
            *p += 0.5 * ds * (a + b);
        }
        bg = bg2;
    }
    Ok(phi)
}

/// Heat kernel as a density field against the evolving volume measure.
#[derive(Debug, Clone)]
pub struct KernelField {
    pub source_node: usize,
    pub source_time: f64,
    pub target_time: f64,
    /// K(x) representing the kernel against d(mu_t).
    pub density: ScalarField,
    /// Volume density sqrt(det g(t)) used to integrate K.
    pub volume: ScalarField,
    pub mass: f64,
}

/// Forward solve `d_t w = Delta_g w - X^k d_k w` from arbitrary initial data
/// at time s, reported at time t > s.
pub fn forward_heat_solve(
    traj: &FlowTrajectory,
    initial: &ScalarField,
    s: f64,
    t: f64,
) -> Result<ScalarField> {
    if !(s < t) {
        return Err(CoreError::TimeOutOfRange {
            t: s,
            lo: 0.0,
            hi: t,
        });
    }
    traj.grid().same_grid(&initial.grid)?;
    let n = substep_count(traj, t - s, s)?;
    let ds = (t - s) / n as f64;
    let mut w = initial.clone();
    let mut bg = Background::new(&traj.metric_at(s)?)?;
    for j in 0..n {
        let s2 = s + (j + 1) as f64 * ds;
        let bg2 = Background::new(&traj.metric_at(s2.min(t))?)?;
        let k1 = bg.apply(&w, -1.0, 0.0);
        let mut star = w.clone();
        for (p, k) in star.data.iter_mut().zip(&k1.data) {
            *p += ds * k;
        }
        let k2 = bg2.apply(&star, -1.0, 0.0);
        for ((p, a), b) in w.data.iter_mut().zip(&k1.data).zip(&k2.data) {
            *p += 0.5 * ds * (a + b);
        }
        bg = bg2;
    }
    Ok(w)
}

/// Forward solve from a unit-mass grid hat at (y, s), reported at time t.
pub fn heat_kernel(traj: &FlowTrajectory, y: usize, s: f64, t: f64) -> Result<KernelField> {
    let grid = *traj.grid();
    if grid.in_collar(y) {
        return Err(CoreError::SupportViolation(format!(
            "kernel source node {y} lies in the flat collar"
        )));
    }
    let gs = traj.metric_at(s)?;
    let hpow = grid.spacing().powi(grid.dim as i32);
    let mut hat = ScalarField::zeros(grid);
    hat.data[y] = 1.0 / (hpow * gs.volume_density().data[y]);
    let w = forward_heat_solve(traj, &hat, s, t)?;
    let volume = traj.metric_at(t)?.volume_density();
    let mass = w.integrate(Some(&volume));
    Ok(KernelField {
        source_node: y,
        source_time: s,
        target_time: t,
        density: w,
        volume,
        mass,
    })
}

/// Fit the kernel tail `int_{|x-y|>r} K dmu <= C2 exp(-r^2/(D (t-s)))`
/// over the given radii; returns (C2, D).
pub fn kernel_tail_fit(kernel: &KernelField, radii: &[f64]) -> Result<(f64, f64)> {
    let grid = kernel.density.grid;
    let y = grid.node_coords(kernel.source_node);
    let cell = grid.spacing().powi(grid.dim as i32);
    let mut r2s = Vec::new();
    let mut logs = Vec::new();
    for &r in radii {
        let mut tail = 0.0;
        for node in 0..grid.n_nodes() {
            let x = grid.node_coords(node);
            let d2: f64 = (0..grid.dim).map(|a| (x[a] - y[a]).powi(2)).sum();
            if d2 > r * r {
                tail += kernel.density.data[node].max(0.0) * kernel.volume.data[node];
            }
        }
        let tail = tail * cell;
        if tail > 0.0 {
            r2s.push(r * r);
            logs.push(tail.ln());
        }
    }
    let fit = linear_fit(&r2s, &logs)?;
    let span = kernel.target_time - kernel.source_time;
    if !(fit.slope < 0.0) {
        return Err(CoreError::InvalidParameter(
            "kernel tail does not decay over the requested radii".into(),
        ));
    }
    Ok((fit.intercept.exp(), -1.0 / (fit.slope * span)))
}

/// Grid-graph distance field from a base node.
#[derive(Debug, Clone)]
pub struct DistanceField {
    pub base: usize,
    pub time: Option<f64>,
    pub field: ScalarField,
}

struct HeapEntry {
    dist: f64,
    node: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.dist == other.dist
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap, we want the nearest node first
        other.dist.total_cmp(&self.dist)
    }
}

/// Shortest-path distance on the 3^n-stencil graph; each edge is measured in
/// the average of the endpoint metrics.
pub fn geodesic_distance(g: &MetricField, x0: usize) -> Result<DistanceField> {
    g.assert_positive()?;
    let grid = *g.grid();
    let d = grid.dim;
    let h = grid.spacing();
    let n = grid.points_per_axis as isize;

    let mut offsets: Vec<[isize; 3]> = Vec::new();
    let lim = |a: usize| if a < d { 1isize } else { 0 };
    for o0 in -lim(0)..=lim(0) {
        for o1 in -lim(1)..=lim(1) {
            for o2 in -lim(2)..=lim(2) {
                if (o0, o1, o2) != (0, 0, 0) {
                    offsets.push([o0, o1, o2]);
                }
            }
        }
    }

    let mut dist = vec![f64::INFINITY; grid.n_nodes()];
    dist[x0] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(HeapEntry {
        dist: 0.0,
        node: x0,
    });
    while let Some(HeapEntry { dist: du, node: u }) = heap.pop() {
        if du > dist[u] {
            continue;
        }
        let iu = grid.decompose(u);
        for off in &offsets {
            let mut iv = [0isize; 3];
            let mut ok = true;
            for a in 0..3 {
                iv[a] = iu[a] as isize + off[a];
                if a < d && !(0..n).contains(&iv[a]) {
                    ok = false;
                }
            }
            if !ok {
                continue;
            }
            let v = grid.flatten([iv[0] as usize, iv[1] as usize, iv[2] as usize]);
            let mut q = 0.0;
            for i in 0..d {
                for j in 0..d {
                    let gm = 0.5 * (g.get(u, i, j) + g.get(v, i, j));
                    q += gm * (off[i] as f64 * h) * (off[j] as f64 * h);
                }
            }
            let alt = du + q.max(0.0).sqrt();
            if alt < dist[v] {
                dist[v] = alt;
                heap.push(HeapEntry { dist: alt, node: v });
            }
        }
    }
    Ok(DistanceField {
        base: x0,
        time: g.time_tag,
        field: ScalarField {
            grid,
            data: dist,
        },
    })
}

/// Parabolic norm of h = g - delta over the trajectory:
/// sup-in-time L-infinity plus the scale-invariant gradient terms
/// `r^{-n/2} ||dh||_{L^2(B(x,r) x (0, r^2))}` and
/// `r^{2/(n+4)} ||dh||_{L^{n+4}(B(x,r) x (r^2/2, r^2))}`
/// over a dyadic ladder of radii; base points are subsampled.
pub fn x_norm(traj: &FlowTrajectory) -> Result<NormResult> {
    let grid = *traj.grid();
    let nd = grid.dim as f64;
    let nn = grid.n_nodes();
    let pexp = nd + 4.0;

    let mut sup_linf = 0.0f64;
    // cumulative time integrals per node: int_0^{t_k} |dh|^2 and |dh|^{n+4}
    let m = traj.slices.len();
    let mut cum2 = vec![0.0; nn * (m + 1)];
    let mut cump = vec![0.0; nn * (m + 1)];
    let mut times = vec![0.0; m + 1];
    let mut prev2 = vec![0.0; nn];
    let mut prevp = vec![0.0; nn];
    for (k, (t, g)) in traj.slices.iter().enumerate() {
        sup_linf = sup_linf.max(g.sup_deviation());
        let grad = grad_sym2(&g.field);
        let dt = t - times[k];
        times[k + 1] = *t;
        for node in 0..nn {
            let f = grad.frobenius_at(node);
            let v2 = f * f;
            let vp = f.powf(pexp);
            // first interval uses the first slice's value back to t = 0
            let (a2, ap) = if k == 0 {
                (v2, vp)
            } else {
                (0.5 * (v2 + prev2[node]), 0.5 * (vp + prevp[node]))
            };
            cum2[node * (m + 1) + k + 1] = cum2[node * (m + 1) + k] + dt * a2;
            cump[node * (m + 1) + k + 1] = cump[node * (m + 1) + k] + dt * ap;
            prev2[node] = v2;
            prevp[node] = vp;
        }
    }
    let t_max = traj.t_end();
    let interp = |cum: &[f64], node: usize, t: f64| -> f64 {
        let base = node * (m + 1);
        let mut k = 1;
        while k <= m && times[k] < t {
            k += 1;
        }
        let k = k.min(m);
        let (t0, t1) = (times[k - 1], times[k]);
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
        cum[base + k - 1] * (1.0 - w) + cum[base + k] * w
    };

    let h = grid.spacing();
    let mut radii = Vec::new();
    let mut r = 2.0 * h;
    let rmax = grid.half_width.min(t_max.sqrt());
    while r <= rmax {
        radii.push(r);
        r *= 2.0;
    }

    let stride = (grid.points_per_axis / 16).max(1);
    let mut sup_terms = 0.0f64;
    for node in (0..nn).step_by(stride) {
        let xc = grid.node_coords(node);
        for &r in &radii {
            let mut s2 = 0.0;
            let mut sp = 0.0;
            for other in 0..nn {
                let x = grid.node_coords(other);
                let d2: f64 = (0..grid.dim).map(|a| (x[a] - xc[a]).powi(2)).sum();
                if d2 <= r * r {
                    s2 += interp(&cum2, other, r * r);
                    sp += interp(&cump, other, r * r) - interp(&cump, other, 0.5 * r * r);
                }
            }
            let cell = h.powi(grid.dim as i32);
            let term1 = r.powf(-nd / 2.0) * (cell * s2).sqrt();
            let term2 = r.powf(2.0 / pexp) * (cell * sp).powf(1.0 / pexp);
            sup_terms = sup_terms.max(term1 + term2);
        }
    }
    Ok(NormResult {
        kind: NormKind::XNorm,
        value: sup_linf + sup_terms,
    })
}

/// Numerical barrier margin for the distance function along a smooth flow:
/// at sampled nodes with d >= r0, returns the minimum of
/// `(d_t - Delta) d + (n-1) (2 K r0 / 3 + 1/r0) + 5h`
/// where K bounds the Ricci eigenvalues on B(x0, r0).
pub fn distance_barrier_margin(
    traj: &FlowTrajectory,
    x0: usize,
    r0: f64,
    slice_index: usize,
) -> Result<f64> {
    if slice_index == 0 || slice_index + 1 >= traj.slices.len() {
        return Err(CoreError::TimeOutOfRange {
            t: slice_index as f64,
            lo: 1.0,
            hi: (traj.slices.len().max(2) - 2) as f64,
        });
    }
    let grid = *traj.grid();
    let nd = grid.dim as f64;
    let (tm, ref gm) = traj.slices[slice_index - 1];
    let (_t0, ref g0) = traj.slices[slice_index];
    let (tp, ref gp) = traj.slices[slice_index + 1];
    let dm = geodesic_distance(gm, x0)?;
    let d0 = geodesic_distance(g0, x0)?;
    let dp = geodesic_distance(gp, x0)?;

    let bg = Background::new(g0)?;
    let lap = bg.apply(&d0.field, 0.0, 0.0);

    // Ricci eigenvalue bound on the ball via a Frobenius envelope
    let bundle = curvature::curvature(g0)?;
    let mut kbound = 0.0f64;
    for node in 0..grid.n_nodes() {
        if d0.field.data[node] <= r0 {
            kbound = kbound.max(bundle.ricci.frobenius_at(node));
        }
    }
    let rhs = -(nd - 1.0) * (2.0 * kbound * r0 / 3.0 + 1.0 / r0) - 5.0 * grid.spacing();

    // The graph distance is piecewise linear between the stencil rays from
    // x0 and carries convex kinks (positive Laplacian spikes of size ~1/h)
    // on the rays themselves; sample only wedge interiors, where the true
    // barrier property is visible.
    let xc = grid.node_coords(x0);
    let dtheta_base = 4.0 * grid.spacing();
    let sup_dev = g0.sup_deviation();
    let mut margin = f64::INFINITY;
    for node in 0..grid.n_nodes() {
        if frozen(&grid, node) || grid.in_collar(node) || d0.field.data[node] < r0 {
            continue;
        }
        let x = grid.node_coords(node);
        let dx: Vec<f64> = (0..grid.dim).map(|a| x[a] - xc[a]).collect();
        let r: f64 = dx.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dtheta = dtheta_base / r + sup_dev;
        let on_kink = if grid.dim == 2 {
            let theta = dx[1].atan2(dx[0]);
            let q = theta / (std::f64::consts::PI / 4.0);
            (q - q.round()).abs() * (std::f64::consts::PI / 4.0) < dtheta
        } else {
            // kink faces are planes spanned by pairs of stencil directions
            let u = [dx[0] / r, dx[1] / r, dx[2] / r];
            let mut dirs = Vec::new();
            for a in -1i32..=1 {
                for b in -1i32..=1 {
                    for c in -1i32..=1 {
                        if (a, b, c) != (0, 0, 0) {
                            let n = ((a * a + b * b + c * c) as f64).sqrt();
                            dirs.push([a as f64 / n, b as f64 / n, c as f64 / n]);
                        }
                    }
                }
            }
            let mut hit = false;
            'outer: for (i, v) in dirs.iter().enumerate() {
                for w in &dirs[i + 1..] {
                    let nrm = [
                        v[1] * w[2] - v[2] * w[1],
                        v[2] * w[0] - v[0] * w[2],
                        v[0] * w[1] - v[1] * w[0],
                    ];
                    let len: f64 = nrm.iter().map(|z| z * z).sum::<f64>().sqrt();
                    if len < 1e-12 {
                        continue;
                    }
                    let dist =
                        (u[0] * nrm[0] + u[1] * nrm[1] + u[2] * nrm[2]).abs() / len;
                    if dist < dtheta {
                        hit = true;
                        break 'outer;
                    }
                }
            }
            hit
        };
        if on_kink {
            continue;
        }
        let dtd = (dp.field.data[node] - dm.field.data[node]) / (tp - tm);
        margin = margin.min(dtd - lap.data[node] - rhs);
    }
    Ok(margin)
}
