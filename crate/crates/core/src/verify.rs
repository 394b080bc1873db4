//! Experiment harness: shrinking-ball lower-bound estimation, decay-exponent
//! fits, the heat-kernel double-integral check and the end-to-end
//! lower-bound pipeline over a stored trajectory.

use crate::curvature;
use crate::diff::grad_sym2;
use crate::error::{CoreError, Result};
use crate::field::{MetricField, ScalarField};
use crate::fit::{linear_fit, loglog_fit, FitReport};
use crate::flow::{
    conjugate_heat_solve, forward_heat_solve, geodesic_distance, heat_kernel, kernel_tail_fit,
    FlowTrajectory,
};
use crate::grid::GridSpec;
use crate::weak::{
    distributional_scalar, energy_functional, make_cutoff, make_psi, make_w1p_cone,
    mollify_metric, CutoffKind, EnergyTrace, PsiField,
};

/// Default C-ladder approximating the infimum over all C > 0.
pub const DEFAULT_C_LADDER: [f64; 5] = [0.5, 1.0, 2.0, 4.0, 8.0];

/// Predicted decay exponent of the lower-bound deficit,
/// `lambda = -1 - (2 beta - 1) gamma`, positive for admissible (beta, gamma).
pub fn predicted_lambda(beta: f64, gamma: f64) -> f64 {
    -1.0 - (2.0 * beta - 1.0) * gamma
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 0.5) {
        return Err(CoreError::InvalidParameter(format!(
            "beta must lie strictly in (0, 1/2), got {beta}"
        )));
    }
    Ok(())
}

/// Ladder of shrinking balls: radii r_i = (t/2^i)^beta, i = 1..=depth, with
/// accumulated radii converging to t^beta / (2^beta - 1).
#[derive(Debug, Clone)]
pub struct ShrinkingBallSchedule {
    pub x: usize,
    pub beta: f64,
    pub t: f64,
    pub radii: Vec<f64>,
    pub rho_partial: Vec<f64>,
    pub rho_infinity: f64,
}

impl ShrinkingBallSchedule {
    pub fn new(x: usize, beta: f64, t: f64, depth: usize) -> Result<Self> {
        check_beta(beta)?;
        if !(t > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "base time must be positive, got {t}"
            )));
        }
        if depth == 0 {
            return Err(CoreError::InvalidParameter("schedule depth must be >= 1".into()));
        }
        let rho_infinity = t.powf(beta) / (2f64.powf(beta) - 1.0);
        let mut radii = Vec::with_capacity(depth);
        let mut rho_partial = Vec::with_capacity(depth);
        let mut acc = 0.0;
        for i in 1..=depth {
            let r = (t / 2f64.powi(i as i32)).powf(beta);
            acc += r;
            if acc > rho_infinity * (1.0 + 1e-10) {
                return Err(CoreError::InvalidParameter(format!(
                    "accumulated radius {acc:e} exceeds the closed form {rho_infinity:e}"
                )));
            }
            radii.push(r);
            rho_partial.push(acc);
        }
        Ok(Self {
            x,
            beta,
            t,
            radii,
            rho_partial,
            rho_infinity,
        })
    }
}

/// Partial sums S_k of the replay tail series
/// `sum_i (2^i / t) exp(-r_i^2 / (D t / 2^i))` with r_i = (t/2^i)^beta.
pub fn tail_series(t: f64, beta: f64, d: f64, depth: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(depth);
    let mut acc = 0.0;
    for i in 1..=depth {
        let ti = t / 2f64.powi(i as i32);
        let r = ti.powf(beta);
        acc += (1.0 / ti) * (-r * r / (d * ti)).exp();
        out.push(acc);
    }
    out
}

fn euclid2(a: &[f64; 3], b: &[f64; 3], dim: usize) -> f64 {
    (0..dim).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum()
}

/// Node of smallest value within the Euclidean ball around `center`, with
/// the value. The ball is clipped to the box.
fn ball_argmin(
    f: &ScalarField,
    grid: &GridSpec,
    center: &[f64; 3],
    radius: f64,
) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    let r2 = radius * radius;
    for node in 0..grid.n_nodes() {
        let x = grid.node_coords(node);
        if euclid2(&x, center, grid.dim) <= r2 && f.data[node] < best.1 {
            best = (node, f.data[node]);
        }
    }
    best
}

/// One beta-weak lower-bound estimation: per-C raw infima over the smallest
/// stored t-decade plus a linear-in-t extrapolation to t = 0.
#[derive(Debug, Clone)]
pub struct BetaWeakEstimate {
    pub x: usize,
    pub beta: f64,
    pub c_ladder: Vec<f64>,
    /// min over the decade of the ball-infimum of R, per C.
    pub raw: Vec<f64>,
    /// linear-in-t extrapolation of the ball-infimum to t = 0, per C.
    pub extrapolated: Vec<f64>,
    pub t_decade: (f64, f64),
    /// inf over the ladder of the extrapolated values — the headline number.
    pub value: f64,
}

/// Estimate `inf_C liminf_{t->0} inf_{B(x, C t^beta)} R(g_t)` from the stored
/// slices in the smallest available t-decade.
pub fn beta_weak_estimate(
    traj: &FlowTrajectory,
    x: usize,
    beta: f64,
    c_ladder: &[f64],
) -> Result<BetaWeakEstimate> {
    check_beta(beta)?;
    if c_ladder.is_empty() || c_ladder.iter().any(|&c| !(c > 0.0)) {
        return Err(CoreError::InvalidParameter(
            "C-ladder must be nonempty with positive entries".into(),
        ));
    }
    let grid = *traj.grid();
    let h = grid.spacing();
    let t1 = traj.slices[0].0;
    let decade: Vec<&(f64, MetricField)> = traj
        .slices
        .iter()
        .filter(|(t, _)| *t <= 10.0 * t1 * (1.0 + 1e-12))
        .collect();
    for &c in c_ladder {
        if c * t1.powf(beta) < h {
            return Err(CoreError::ResolutionFloor(format!(
                "ball radius {:.3e} at t = {t1:.3e} (C = {c}) is below one cell {h:.3e}",
                c * t1.powf(beta)
            )));
        }
    }
    let center = grid.node_coords(x);
    let scalars: Vec<(f64, ScalarField)> = decade
        .iter()
        .map(|(t, g)| Ok((*t, curvature::curvature(g)?.scalar)))
        .collect::<Result<Vec<_>>>()?;

    let mut ladder: Vec<f64> = c_ladder.to_vec();
    ladder.sort_by(f64::total_cmp);
    let mut raw = Vec::new();
    let mut extrapolated = Vec::new();
    for &c in &ladder {
        let mut ts = Vec::new();
        let mut infs = Vec::new();
        for (t, r) in &scalars {
            let (_, inf) = ball_argmin(r, &grid, &center, c * t.powf(beta));
            ts.push(*t);
            infs.push(inf);
        }
        let raw_c = infs.iter().cloned().fold(f64::INFINITY, f64::min);
        let extrap_c = if ts.len() >= 2 {
            linear_fit(&ts, &infs)?.intercept
        } else {
            raw_c
        };
        raw.push(raw_c);
        extrapolated.push(extrap_c);
    }
    // larger balls can only lower the infimum — exact by construction
    for w in raw.windows(2) {
        debug_assert!(w[1] <= w[0] + 1e-15);
    }
    let value = extrapolated.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(BetaWeakEstimate {
        x,
        beta,
        c_ladder: ladder,
        raw,
        extrapolated,
        t_decade: (t1, scalars.last().map(|(t, _)| *t).unwrap_or(t1)),
        value,
    })
}

/// Fit the deficit `max(kappa - R(x, t), 0)` against t in log-log; a
/// vanishing deficit is reported as "bound slack" and passes.
pub fn lower_bound_decay_fit(
    traj: &FlowTrajectory,
    x: usize,
    kappa: f64,
    beta: f64,
) -> Result<FitReport> {
    check_beta(beta)?;
    let mut ts = Vec::new();
    let mut deficits = Vec::new();
    for (t, g) in &traj.slices {
        let r = curvature::curvature(g)?.scalar;
        ts.push(*t);
        deficits.push((kappa - r.data[x]).max(0.0));
    }
    let scale = kappa.abs().max(1.0);
    let name = format!("lower_bound_decay(beta={beta})");
    if deficits.iter().all(|&d| d <= 1e-12 * scale) {
        return Ok(FitReport {
            name: format!("{name} [bound slack]"),
            predicted_exponent: 0.0,
            fitted_exponent: 0.0,
            stderr: 0.0,
            constant: 0.0,
            t_lo: ts[0],
            t_hi: *ts.last().unwrap(),
            n_samples: ts.len(),
            tolerance: 0.0,
            pass: true,
        });
    }
    let (tp, dp): (Vec<f64>, Vec<f64>) = ts
        .iter()
        .zip(&deficits)
        .filter(|(_, &d)| d > 1e-14 * scale)
        .map(|(&t, &d)| (t, d))
        .unzip();
    if tp.len() < 8 {
        return Err(CoreError::InvalidParameter(format!(
            "{name}: deficit fit needs >= 8 positive samples, got {}",
            tp.len()
        )));
    }
    let (lo, hi) = (tp[0], *tp.last().unwrap());
    if !(hi / lo >= 10f64.powf(1.5)) {
        return Err(CoreError::InvalidParameter(format!(
            "{name}: deficit fit needs >= 1.5 decades, got [{lo:.3e}, {hi:.3e}]"
        )));
    }
    let fit = loglog_fit(&tp, &dp)?;
    Ok(FitReport {
        name,
        predicted_exponent: 0.0,
        fitted_exponent: fit.slope,
        stderr: fit.stderr_slope,
        constant: fit.intercept.exp(),
        t_lo: lo,
        t_hi: hi,
        n_samples: fit.n_samples,
        tolerance: 0.0,
        // the deficit must vanish as t -> 0, i.e. decay with positive power
        pass: fit.slope > 0.0,
    })
}

/// Replay of the shrinking-ball argmin chain with its numeric side checks.
#[derive(Debug, Clone)]
pub struct IterationReplay {
    pub schedule: ShrinkingBallSchedule,
    /// (x_k, a_k) with a_k = inf over B(x_{k-1}, r_k) of R(., t/2^k).
    pub chain: Vec<(usize, f64)>,
    /// Fitted constants: C1 from t sup|R| diagnostics, (C2, D) from a
    /// kernel-tail fit.
    pub c1: f64,
    pub c2: f64,
    pub d: f64,
    /// Partial sums of the tail series for the fitted D.
    pub tail_partial: Vec<f64>,
    /// Every x_k stayed inside B(x, rho_k).
    pub chain_in_ball: bool,
    /// R(x, t) >= a_k - 2 C1 C2 S_k at every depth.
    pub lower_bound_ok: bool,
}

pub fn iteration_replay(
    traj: &FlowTrajectory,
    x: usize,
    beta: f64,
    t: f64,
) -> Result<IterationReplay> {
    check_beta(beta)?;
    let grid = *traj.grid();
    let h = grid.spacing();
    if !(t > 0.0 && t <= traj.t_end() * (1.0 + 1e-12)) {
        return Err(CoreError::TimeOutOfRange {
            t,
            lo: 0.0,
            hi: traj.t_end(),
        });
    }
    let mut depth = 0;
    while depth < 40 && (t / 2f64.powi(depth as i32 + 1)).powf(beta) >= 2.0 * h {
        depth += 1;
    }
    if depth == 0 {
        return Err(CoreError::ResolutionFloor(format!(
            "first ball radius {:.3e} is below 2h = {:.3e}",
            (t / 2.0).powf(beta),
            2.0 * h
        )));
    }
    let schedule = ShrinkingBallSchedule::new(x, beta, t, depth)?;

    let base = grid.node_coords(x);
    let r_at = |time: f64| -> Result<ScalarField> {
        Ok(curvature::curvature(&traj.metric_at(time)?)?.scalar)
    };
    let r_xt = r_at(t)?.data[x];

    let mut chain = Vec::with_capacity(depth);
    let mut prev = x;
    let mut chain_in_ball = true;
    for k in 1..=depth {
        let rk = schedule.radii[k - 1];
        let center = grid.node_coords(prev);
        let scalars = r_at(t / 2f64.powi(k as i32))?;
        let (xk, ak) = ball_argmin(&scalars, &grid, &center, rk);
        let drift = euclid2(&grid.node_coords(xk), &base, grid.dim).sqrt();
        // one-cell slack: the argmin snaps to grid nodes
        if drift > schedule.rho_partial[k - 1] + h {
            chain_in_ball = false;
        }
        chain.push((xk, ak));
        prev = xk;
    }

    // C1: sup over slices of t * sup|R|
    let c1 = traj
        .diagnostics
        .iter()
        .map(|d| d.time * d.sup_scalar)
        .fold(0.0f64, f64::max);
    // (C2, D): Gaussian tail fit of the kernel from (x, t/4) to t
    let rmax = grid.half_width - grid.collar_width;
    let kernel = heat_kernel(traj, x, t / 4.0, t)?;
    let radii: Vec<f64> = [0.35, 0.5, 0.65, 0.8].iter().map(|f| f * rmax).collect();
    let (c2, d) = kernel_tail_fit(&kernel, &radii)?;

    let tail_partial = tail_series(t, beta, d, depth);
    let scale = r_xt.abs().max(1.0);
    let lower_bound_ok = chain.iter().zip(&tail_partial).all(|((_, ak), sk)| {
        r_xt >= ak - 2.0 * c1 * c2 * sk - 1e-12 * scale
    });

    Ok(IterationReplay {
        schedule,
        chain,
        c1,
        c2,
        d,
        tail_partial,
        chain_in_ball,
        lower_bound_ok,
    })
}

/// Euclidean ball or annulus used as an integration region.
#[derive(Debug, Clone, Copy)]
pub struct RegionSpec {
    pub center: [f64; 3],
    pub inner: f64,
    pub outer: f64,
}

impl RegionSpec {
    pub fn ball(center: [f64; 3], radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(CoreError::InvalidParameter(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        Ok(Self {
            center,
            inner: 0.0,
            outer: radius,
        })
    }

    pub fn annulus(center: [f64; 3], inner: f64, outer: f64) -> Result<Self> {
        if !(inner > 0.0 && inner < outer) {
            return Err(CoreError::InvalidParameter(format!(
                "annulus needs 0 < inner < outer, got ({inner}, {outer})"
            )));
        }
        Ok(Self {
            center,
            inner,
            outer,
        })
    }

    fn contains(&self, x: &[f64; 3], dim: usize) -> bool {
        let d2 = euclid2(x, &self.center, dim);
        d2 >= self.inner * self.inner && d2 <= self.outer * self.outer
    }
}

/// Exact Euclidean distance between two ball/annulus regions.
pub fn region_distance(a: &RegionSpec, b: &RegionSpec, dim: usize) -> f64 {
    let d = euclid2(&a.center, &b.center, dim).sqrt();
    (d - a.outer - b.outer)
        .max(a.inner - (d + b.outer))
        .max(b.inner - (d + a.outer))
        .max(0.0)
}

fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        2 => std::f64::consts::PI,
        _ => 4.0 * std::f64::consts::PI / 3.0,
    }
}

/// Outcome of the kernel double-integral check.
#[derive(Debug, Clone)]
pub struct DaviesReport {
    pub lhs: f64,
    pub volume_u1: f64,
    pub volume_u2: f64,
    pub set_distance: f64,
    /// Smallest c2 making the Gaussian factor admit the measured mass.
    pub c2_eps: f64,
    /// Time-ratio exponent engaged only if the Gaussian factor cannot.
    pub c3_eps: f64,
    pub rhs: f64,
    pub volume_bound_ok: bool,
    pub pass: bool,
}

/// Check the kernel double-integral upper bound
/// `int_{U2} int_{U1} K(y,T;x,t) dmu_T(y) dmu_t(x)
///  <= (T/t)^{c3/2} exp(-d^2/(2(1+c2)^2(T-t))) Vol_T(U1)^{1/2} Vol_t(U2)^{1/2}`
/// with the smallest fitted (c2, c3); U1 is sampled at time T, U2 at time t.
pub fn davies_check(
    traj: &FlowTrajectory,
    u1: &RegionSpec,
    u2: &RegionSpec,
    t: f64,
    big_t: f64,
) -> Result<DaviesReport> {
    if !(t > 0.0 && t < big_t && big_t <= traj.t_end() * (1.0 + 1e-12)) {
        return Err(CoreError::TimeOutOfRange {
            t,
            lo: 0.0,
            hi: traj.t_end(),
        });
    }
    let grid = *traj.grid();
    let dim = grid.dim;
    let dist = region_distance(u1, u2, dim);
    if !(dist > 0.0) {
        return Err(CoreError::InvalidParameter(
            "regions overlap: the double-integral bound needs disjoint sets".into(),
        ));
    }
    let cell = grid.spacing().powi(dim as i32);

    // forward-solve the indicator of U2 from t, then integrate over U1 at T
    let mut ind = ScalarField::zeros(grid);
    for node in 0..grid.n_nodes() {
        if u2.contains(&grid.node_coords(node), dim) {
            ind.data[node] = 1.0;
        }
    }
    let w = forward_heat_solve(traj, &ind, t, big_t)?;
    let vol_t = traj.metric_at(t)?.volume_density();
    let vol_big = traj.metric_at(big_t)?.volume_density();
    let mut lhs = 0.0;
    let mut v1 = 0.0;
    let mut v2 = 0.0;
    for node in 0..grid.n_nodes() {
        let x = grid.node_coords(node);
        if u1.contains(&x, dim) {
            lhs += w.data[node].max(0.0) * vol_big.data[node];
            v1 += vol_big.data[node];
        }
        if u2.contains(&x, dim) {
            v2 += vol_t.data[node];
        }
    }
    lhs *= cell;
    v1 *= cell;
    v2 *= cell;

    let span = big_t - t;
    let base = (v1 * v2).sqrt();
    let gauss = (-dist * dist / (2.0 * span)).exp();
    let (mut c2_eps, mut c3_eps) = (0.0f64, 0.0f64);
    if lhs > base * gauss {
        if lhs < base {
            c2_eps = ((dist * dist) / (2.0 * span * (base / lhs).ln()))
                .sqrt()
                .max(1.0)
                - 1.0;
        } else {
            c3_eps = 2.0 * (lhs / (base * gauss)).ln() / (big_t / t).ln();
        }
    }
    let rhs = (big_t / t).powf(c3_eps / 2.0)
        * (-dist * dist / (2.0 * (1.0 + c2_eps).powi(2) * span)).exp()
        * base;

    // proof-side volume envelopes, with 5% quadrature slack
    let omega = unit_ball_volume(dim);
    let envelope = |v: f64, r: f64| {
        v <= (1.0 + c2_eps).powf(dim as f64 / 2.0) * omega * r.powi(dim as i32) * 1.05
    };
    let volume_bound_ok = envelope(v1, u1.outer) && envelope(v2, u2.outer);

    let pass = lhs <= rhs * (1.0 + 1e-9) && volume_bound_ok && c2_eps <= 1.0 && c3_eps <= 5.0;
    Ok(DaviesReport {
        lhs,
        volume_u1: v1,
        volume_u2: v2,
        set_distance: dist,
        c2_eps,
        c3_eps,
        rhs,
        volume_bound_ok,
        pass,
    })
}

/// Parameters of the cone-type low-regularity datum driving the pipeline.
#[derive(Debug, Clone, Copy)]
pub struct ConeParams {
    pub grid: GridSpec,
    pub center: [f64; 3],
    pub sigma: f64,
    pub amplitude: f64,
    pub p: f64,
    pub r_in: f64,
    pub r_out: f64,
}

impl ConeParams {
    pub fn build(&self) -> Result<MetricField> {
        make_w1p_cone(
            &self.grid,
            &self.center[..self.grid.dim],
            self.sigma,
            self.amplitude,
            self.p,
            self.r_in,
            self.r_out,
        )
    }
}

/// Full audit of the end-to-end weak lower-bound pipeline.
#[derive(Debug, Clone)]
pub struct PipelineReport {
    /// C^0 size of the initial perturbation.
    pub epsilon: f64,
    /// min over the test-function battery of <<R_g, u>> - kappa int u dmu.
    pub battery_min: f64,
    pub battery_ok: bool,
    /// Weak-vs-mollified pairing gap per unit epsilon.
    pub c3_fit: f64,
    /// Cutoff-profile constant bounding |phi'| and -phi''/phi.
    pub c4: f64,
    /// Fitted error-term constant in the energy differential inequality.
    pub c5_fit: f64,
    pub admissibility_lhs: f64,
    pub admissibility_rhs: f64,
    pub admissibility_ok: bool,
    pub energy: EnergyTrace,
    pub energy_nonneg: bool,
    /// Linear-in-t extrapolation of E to t = 0 (clamped at 0).
    pub limit_energy: f64,
    pub limit_ok: bool,
    pub gronwall_ok: bool,
    /// Headline beta-weak estimate at the base point.
    pub final_estimate: f64,
    pub final_ok: bool,
    pub pass: bool,
}

fn battery_bump(grid: GridSpec, center: [f64; 3], radius: f64) -> ScalarField {
    ScalarField::from_fn(grid, |x| {
        let r2: f64 = x
            .iter()
            .zip(&center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / (radius * radius);
        if r2 < 1.0 {
            (1.0 - r2).powi(4)
        } else {
            0.0
        }
    })
}

/// Run the full chain: battery gate on the initial pairing, flow, conjugate
/// solutions, transported cutoffs, energy trace with its differential
/// inequality, and the final shrinking-ball estimate.
pub fn lower_bound_pipeline(
    cone: &ConeParams,
    kappa: f64,
    beta: f64,
    gamma: f64,
    eta: f64,
    t_ladder: &[f64],
) -> Result<PipelineReport> {
    check_beta(beta)?;
    if !(gamma > 0.0) {
        return Err(CoreError::InvalidParameter(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    if !(eta > 0.0) {
        return Err(CoreError::InvalidParameter(format!(
            "eta must be positive, got {eta}"
        )));
    }
    if t_ladder.len() < 3 {
        return Err(CoreError::InvalidParameter(
            "the time ladder needs >= 3 snapshot times".into(),
        ));
    }
    let g0 = cone.build()?;
    let grid = *g0.grid();
    let h = grid.spacing();
    let n = grid.dim as f64;
    let epsilon = g0.sup_deviation();

    // test-function battery around the cone center
    let margin = grid.half_width - grid.collar_width - 2.0 * h;
    let rb = (1.5 * cone.r_out).min(margin);
    let off = (0.3 * cone.r_out).min(margin - 0.6 * rb);
    let mut centers_radii = vec![
        (cone.center, 0.5 * rb),
        (cone.center, 0.75 * rb),
        (cone.center, rb),
    ];
    let mut shifted = cone.center;
    shifted[0] += off;
    centers_radii.push((shifted, 0.6 * rb));
    shifted[0] = cone.center[0] - off;
    centers_radii.push((shifted, 0.6 * rb));

    let vol0 = g0.volume_density();
    let g_moll = mollify_metric(&g0, 4.0 * h);
    let scalar_moll = curvature::curvature(&g_moll)?.scalar;
    let vol_moll = g_moll.volume_density();
    let mut battery_min = f64::INFINITY;
    let mut c3_fit = 0.0f64;
    for (c, r) in &centers_radii {
        let u = battery_bump(grid, *c, *r);
        let direct = distributional_scalar(&g0, &u)?.value;
        let mass = u.integrate(Some(&vol0));
        battery_min = battery_min.min(direct - kappa * mass);
        let mut ru = ScalarField::zeros(grid);
        for node in 0..grid.n_nodes() {
            ru.data[node] = scalar_moll.data[node] * u.data[node];
        }
        let classical = ru.integrate(Some(&vol_moll));
        if epsilon > 0.0 {
            c3_fit = c3_fit.max((direct - classical).abs() / epsilon);
        }
    }
    let battery_ok = battery_min >= -1e-8 * (1.0 + kappa.abs());

    // admissibility gate before any fitting
    let admissibility_rhs = (1.0 / (2.0 * gamma)) * ((n * gamma + c3_fit * epsilon) / 2.0 + 1.0);
    let admissibility_ok = eta > admissibility_rhs;

    let big_t = *t_ladder.last().unwrap();
    let traj = crate::flow::run_flow(&g0, big_t, t_ladder)?;

    // conjugate solutions from the central battery bump, transported cutoffs
    let terminal = battery_bump(grid, cone.center, rb);
    let profile = make_cutoff(CutoffKind::PhiRadial, 0.5, 1.0)?;
    let c4 = profile.c4;
    let x0 = grid.nearest_node(&cone.center[..grid.dim]);
    let mut phis: Vec<ScalarField> = Vec::with_capacity(traj.slices.len());
    let mut psis: Vec<PsiField> = Vec::with_capacity(traj.slices.len());
    for (t, g) in &traj.slices {
        let phi = if *t < big_t * (1.0 - 1e-12) {
            conjugate_heat_solve(&traj, &terminal, big_t, *t)?
        } else {
            terminal.clone()
        };
        phis.push(phi);
        let dist = geodesic_distance(g, x0)?;
        psis.push(make_psi(&profile, &dist, *t, gamma));
    }
    let energy = energy_functional(&traj, &phis, &psis, kappa, gamma, big_t)?;
    let e_scale = energy.energy.iter().cloned().fold(1e-12, f64::max);
    let energy_nonneg = energy.energy.iter().all(|&e| e >= -1e-9 * e_scale);

    // differential inequality dE/dt <= c4 t^{2 gamma} E + c5 eps t^{-2} M(t)
    let mut c5_fit = 0.0f64;
    let mut gronwall_ok = true;
    let m = energy.times.len();
    for k in 1..m - 1 {
        let (tm, t0, tp) = (energy.times[k - 1], energy.times[k], energy.times[k + 1]);
        let (em, e0, ep) = (energy.energy[k - 1], energy.energy[k], energy.energy[k + 1]);
        let dedt = ((ep - e0) / (tp - t0) * (t0 - tm) + (e0 - em) / (t0 - tm) * (tp - t0))
            / (tp - tm);
        let excess = dedt - c4 * t0.powf(2.0 * gamma) * e0;
        if excess <= 1e-9 * e_scale.max(1.0) {
            continue;
        }
        let mass = energy.phi_mass_on_supp_dphi[k];
        if epsilon > 0.0 && mass > 0.0 {
            c5_fit = c5_fit.max(excess * t0 * t0 / (epsilon * mass));
        } else {
            gronwall_ok = false;
        }
    }

    // extrapolated initial energy against the fitted weak-gap constant
    let t1 = energy.times[0];
    let decade: Vec<usize> = (0..m)
        .filter(|&k| energy.times[k] <= 10.0 * t1 * (1.0 + 1e-12))
        .collect();
    let limit_energy = if decade.len() >= 2 {
        let ts: Vec<f64> = decade.iter().map(|&k| energy.times[k]).collect();
        let es: Vec<f64> = decade.iter().map(|&k| energy.energy[k]).collect();
        linear_fit(&ts, &es)?.intercept.max(0.0)
    } else {
        energy.energy[0]
    };
    let limit_ok = limit_energy <= 5.0 * c3_fit * epsilon + 1e-9;

    // final shrinking-ball estimate; C entries below the resolution floor
    // are dropped before the call
    let ladder: Vec<f64> = DEFAULT_C_LADDER
        .iter()
        .cloned()
        .filter(|c| c * t1.powf(beta) >= h)
        .collect();
    let bw = if ladder.is_empty() {
        beta_weak_estimate(&traj, x0, beta, &DEFAULT_C_LADDER)?
    } else {
        beta_weak_estimate(&traj, x0, beta, &ladder)?
    };
    let final_estimate = bw.value;
    let final_ok = final_estimate >= kappa - 0.15;

    let pass = battery_ok
        && admissibility_ok
        && energy_nonneg
        && gronwall_ok
        && limit_ok
        && final_ok;
    Ok(PipelineReport {
        epsilon,
        battery_min,
        battery_ok,
        c3_fit,
        c4,
        c5_fit,
        admissibility_lhs: eta,
        admissibility_rhs,
        admissibility_ok,
        energy,
        energy_nonneg,
        limit_energy,
        limit_ok,
        gronwall_ok,
        final_estimate,
        final_ok,
        pass,
    })
}

fn trivial_report(name: &str, predicted: f64, ts: &[f64], tolerance: f64) -> FitReport {
    FitReport {
        name: format!("{name} [identically zero]"),
        predicted_exponent: predicted,
        fitted_exponent: predicted,
        stderr: 0.0,
        constant: 0.0,
        t_lo: ts.iter().cloned().fold(f64::INFINITY, f64::min),
        t_hi: ts.iter().cloned().fold(0.0, f64::max),
        n_samples: ts.len(),
        tolerance,
        pass: true,
    }
}

/// Three decay fits of gradient-level quantities along the flow:
/// ball integral of |dg|^p (predicted exponent 0), sup|dg| (predicted
/// -n/(2p)) and sup|d2g| (predicted -(n/(4p) + 3/4)).
pub fn w1p_estimates_check(
    traj: &FlowTrajectory,
    p: f64,
    a_bound: f64,
) -> Result<Vec<FitReport>> {
    let grid = *traj.grid();
    let n = grid.dim as f64;
    if !(p > n) {
        return Err(CoreError::InvalidParameter(format!(
            "gradient estimates require p > n = {n}, got {p}"
        )));
    }
    let radius = 1.0f64.min(0.8 * grid.half_width);
    let center = [0.0; 3];
    let cell = grid.spacing().powi(grid.dim as i32);
    let ball: Vec<usize> = (0..grid.n_nodes())
        .filter(|&node| euclid2(&grid.node_coords(node), &center, grid.dim) <= radius * radius)
        .collect();
    let ball_integral = |g: &MetricField| -> f64 {
        let grad = grad_sym2(&g.field);
        ball.iter()
            .map(|&node| grad.frobenius_at(node).powf(p))
            .sum::<f64>()
            * cell
    };
    let q0 = ball_integral(&traj.initial);
    if q0 > a_bound {
        return Err(CoreError::InvalidParameter(format!(
            "initial ball gradient integral {q0:.3e} exceeds the budget {a_bound:.3e}"
        )));
    }

    let ts: Vec<f64> = traj.slices.iter().map(|(t, _)| *t).collect();
    let ints: Vec<f64> = traj.slices.iter().map(|(_, g)| ball_integral(g)).collect();
    let grads: Vec<f64> = traj.diagnostics.iter().map(|d| d.sup_grad).collect();
    let hesses: Vec<f64> = traj.diagnostics.iter().map(|d| d.sup_hess).collect();

    let tol = 0.15;
    let specs = [
        ("w1p_ball_integral", 0.0, ints),
        ("w1p_sup_grad", -n / (2.0 * p), grads),
        ("w1p_sup_hess", -(n / (4.0 * p) + 0.75), hesses),
    ];
    let mut out = Vec::with_capacity(3);
    for (name, predicted, vals) in specs {
        if vals.iter().all(|&v| v <= 1e-14) {
            out.push(trivial_report(name, predicted, &ts, tol));
        } else {
            out.push(FitReport::check(name, predicted, &ts, &vals, tol)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Sym2Field;
    use crate::flow::run_flow;

    fn grid2(n: usize, l: f64) -> GridSpec {
        GridSpec::new(2, l, n, 8.0 * l / (n as f64 - 1.0)).unwrap()
    }

    fn bump_metric(grid: GridSpec, amplitude: f64) -> MetricField {
        let l = grid.half_width;
        let field = Sym2Field::from_fn(grid, |x, i, j| {
            let r2: f64 = x.iter().map(|v| v * v).sum::<f64>() / (l * l / 4.0);
            let bump = if r2 < 1.0 {
                (1.0 - r2).powi(4) * amplitude
            } else {
                0.0
            };
            if i == j {
                1.0 + if i == 0 { bump } else { 0.0 }
            } else {
                0.0
            }
        });
        MetricField::from_sym2(field, Some(0.0))
    }

    #[test]
    fn schedule_partial_sums_match_closed_form() {
        let (beta, t) = (0.3, 0.01);
        let s = ShrinkingBallSchedule::new(0, beta, t, 60).unwrap();
        // partial sum plus the exact geometric remainder recovers the
        // closed form
        let remainder = t.powf(beta) * 2f64.powf(-61.0 * beta) / (1.0 - 2f64.powf(-beta));
        let last = *s.rho_partial.last().unwrap() + remainder;
        assert!(
            (last - s.rho_infinity).abs() < 1e-10 * s.rho_infinity,
            "partial + remainder {last:e} vs closed form {:e}",
            s.rho_infinity
        );
        for (k, rho) in s.rho_partial.iter().enumerate() {
            assert!(*rho <= s.rho_infinity * (1.0 + 1e-10), "depth {k}");
        }
        assert!(ShrinkingBallSchedule::new(0, 0.5, 0.01, 5).is_err());
        assert!(ShrinkingBallSchedule::new(0, 0.0, 0.01, 5).is_err());
    }

    #[test]
    fn lambda_formula_direct_values() {
        assert!((predicted_lambda(0.25, 3.0) - 0.5).abs() < 1e-15);
        assert!((predicted_lambda(0.3, 5.0) - 1.0).abs() < 1e-15);
        // at the admissibility edge gamma = 1/(1 - 2 beta) the exponent is 0
        let beta = 0.2;
        assert!(predicted_lambda(beta, 1.0 / (1.0 - 2.0 * beta)).abs() < 1e-12);
    }

    #[test]
    fn tail_series_bounded_by_power_law() {
        let (beta, gamma, d) = (0.25, 3.0, 8.0);
        let lambda = predicted_lambda(beta, gamma);
        assert!((lambda - 0.5).abs() < 1e-15);
        let ts = [1e-2, 5e-3, 2e-3, 1e-3, 1e-4];
        let s_at = |t: f64| *tail_series(t, beta, d, 60).last().unwrap();
        let c3 = s_at(ts[0]) / ts[0].powf(lambda);
        for &t in &ts[1..] {
            assert!(
                s_at(t) <= c3 * t.powf(lambda) * (1.0 + 1e-9),
                "t = {t}: {} vs {}",
                s_at(t),
                c3 * t.powf(lambda)
            );
        }
    }

    #[test]
    fn beta_weak_flat_is_zero_and_monotone() {
        let grid = grid2(33, 1.0);
        let flat = MetricField::flat(grid);
        let snaps: Vec<f64> = (1..=5).map(|k| 0.002 * k as f64).collect();
        let traj = run_flow(&flat, 0.01, &snaps).unwrap();
        let x = grid.flatten([16, 16, 0]);
        let est = beta_weak_estimate(&traj, x, 0.25, &DEFAULT_C_LADDER).unwrap();
        assert!(est.value.abs() < 1e-10, "flat estimate {}", est.value);
        for w in est.raw.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
        for r in &est.raw {
            assert!(r.abs() < 1e-10);
        }
    }

    #[test]
    fn beta_weak_tracks_classical_minimum() {
        let grid = grid2(33, 1.0);
        let g0 = bump_metric(grid, 0.2);
        let snaps: Vec<f64> = (1..=6).map(|k| 0.002 * k as f64).collect();
        let traj = run_flow(&g0, 0.012, &snaps).unwrap();
        let x = grid.flatten([16, 16, 0]);
        let est = beta_weak_estimate(&traj, x, 0.25, &DEFAULT_C_LADDER).unwrap();
        // raw infima never lie below the global minimum of R over the decade
        let mut global_min = f64::INFINITY;
        for (t, g) in &traj.slices {
            if *t <= 10.0 * snaps[0] {
                global_min = global_min.min(
                    curvature::curvature(g)
                        .unwrap()
                        .scalar
                        .data
                        .iter()
                        .cloned()
                        .fold(f64::INFINITY, f64::min),
                );
            }
        }
        for r in &est.raw {
            assert!(*r >= global_min - 1e-12);
        }
        assert!(est.raw.last().unwrap() - global_min <= 1e-9);
        for w in est.raw.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
    }

    #[test]
    fn beta_weak_reports_resolution_floor() {
        let grid = grid2(33, 1.0);
        let flat = MetricField::flat(grid);
        let traj = run_flow(&flat, 0.002, &[0.001, 0.002]).unwrap();
        let x = grid.flatten([16, 16, 0]);
        assert!(matches!(
            beta_weak_estimate(&traj, x, 0.25, &[0.01]),
            Err(CoreError::ResolutionFloor(_))
        ));
    }

    #[test]
    fn decay_fit_flat_reports_bound_slack() {
        let grid = grid2(17, 1.0);
        let flat = MetricField::flat(grid);
        let snaps: Vec<f64> = (1..=8).map(|k| 0.001 * k as f64).collect();
        let traj = run_flow(&flat, 0.008, &snaps).unwrap();
        let x = grid.flatten([8, 8, 0]);
        let r = lower_bound_decay_fit(&traj, x, 0.0, 0.25).unwrap();
        assert!(r.pass);
        assert!(r.name.contains("bound slack"));

        // a constant positive deficit does not decay: fit exists and fails
        let snaps: Vec<f64> = (0..10).map(|k| 1e-4 * 2.2f64.powi(k)).collect();
        let t_end = *snaps.last().unwrap();
        let traj = run_flow(&flat, t_end, &snaps).unwrap();
        let r = lower_bound_decay_fit(&traj, x, 1.0, 0.25).unwrap();
        assert!(!r.pass);
        assert!(r.fitted_exponent.abs() < 1e-8);
    }

    #[test]
    fn iteration_replay_flat_chain_is_zero() {
        let grid = grid2(33, 1.0);
        let flat = MetricField::flat(grid);
        let snaps: Vec<f64> = (1..=5).map(|k| 0.004 * k as f64).collect();
        let traj = run_flow(&flat, 0.02, &snaps).unwrap();
        let x = grid.flatten([16, 16, 0]);
        let rep = iteration_replay(&traj, x, 0.25, 0.02).unwrap();
        assert!(!rep.chain.is_empty());
        for (_, ak) in &rep.chain {
            assert!(ak.abs() < 1e-10);
        }
        assert!(rep.chain_in_ball);
        assert!(rep.lower_bound_ok);
        assert!(rep.c1.abs() < 1e-8);
        assert!(rep.d > 0.0);
        // accumulated radii honour the closed form
        let last = *rep.schedule.rho_partial.last().unwrap();
        assert!(last <= rep.schedule.rho_infinity * (1.0 + 1e-10));
    }

    #[test]
    fn davies_flat_matches_two_cell_oracle() {
        // deep Gaussian tails are dispersion-sensitive; a fine grid keeps
        // the discrete solve within 10% of the exact kernel sum
        let grid = GridSpec::new(2, 1.0, 97, 8.0 / 96.0).unwrap();
        let flat = MetricField::flat(grid);
        let traj = run_flow(&flat, 0.025, &[0.0125, 0.025]).unwrap();
        let u1 = RegionSpec::ball([-0.4, 0.0, 0.0], 0.15).unwrap();
        let u2 = RegionSpec::ball([0.4, 0.0, 0.0], 0.15).unwrap();
        let (t, big_t) = (0.005, 0.025);
        let rep = davies_check(&traj, &u1, &u2, t, big_t).unwrap();
        assert!((rep.set_distance - 0.5).abs() < 1e-12);
        assert_eq!(rep.c2_eps, 0.0);
        assert_eq!(rep.c3_eps, 0.0);
        assert!(rep.pass, "lhs {} rhs {}", rep.lhs, rep.rhs);

        // oracle: exact Gaussian summed over the same discrete node sets
        let s = big_t - t;
        let cell = grid.spacing().powi(2);
        let mut oracle = 0.0;
        for a in 0..grid.n_nodes() {
            let xa = grid.node_coords(a);
            if !u2.contains(&xa, 2) {
                continue;
            }
            for b in 0..grid.n_nodes() {
                let xb = grid.node_coords(b);
                if !u1.contains(&xb, 2) {
                    continue;
                }
                let d2 = euclid2(&xa, &xb, 2);
                oracle += (-d2 / (4.0 * s)).exp() / (4.0 * std::f64::consts::PI * s);
            }
        }
        oracle *= cell * cell;
        assert!(
            (rep.lhs - oracle).abs() / oracle < 0.1,
            "numeric {:.4e}, oracle {oracle:.4e}",
            rep.lhs
        );
    }

    #[test]
    fn davies_rejects_overlap() {
        let grid = grid2(33, 1.0);
        let flat = MetricField::flat(grid);
        let traj = run_flow(&flat, 0.01, &[0.01]).unwrap();
        let u1 = RegionSpec::ball([0.0, 0.0, 0.0], 0.3).unwrap();
        let u2 = RegionSpec::annulus([0.0, 0.0, 0.0], 0.25, 0.5).unwrap();
        assert!(davies_check(&traj, &u1, &u2, 0.002, 0.01).is_err());
    }

    #[test]
    fn davies_holds_on_curved_trajectory() {
        let grid = grid2(33, 1.0);
        let g0 = bump_metric(grid, 0.1);
        let traj = run_flow(&g0, 0.03, &[0.01, 0.02, 0.03]).unwrap();
        let u1 = RegionSpec::ball([-0.35, 0.0, 0.0], 0.12).unwrap();
        let u2 = RegionSpec::ball([0.35, 0.1, 0.0], 0.12).unwrap();
        for (t, big_t) in [(0.004, 0.02), (0.006, 0.024), (0.01, 0.03)] {
            let rep = davies_check(&traj, &u1, &u2, t, big_t).unwrap();
            assert!(rep.pass, "(t, T) = ({t}, {big_t}): {rep:?}");
            assert!(rep.c2_eps <= 0.5, "c2 = {}", rep.c2_eps);
        }
    }

    #[test]
    fn pipeline_flat_cone_passes_trivially() {
        let grid = grid2(33, 1.25);
        let cone = ConeParams {
            grid,
            center: [0.0; 3],
            sigma: 0.6,
            amplitude: 0.0,
            p: 4.0,
            r_in: 0.2,
            r_out: 0.4,
        };
        let ladder: Vec<f64> = (1..=6).map(|k| 0.002 * k as f64).collect();
        let rep = lower_bound_pipeline(&cone, 0.0, 0.25, 3.0, 2.0, &ladder).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert_eq!(rep.epsilon, 0.0);
        assert!(rep.battery_min.abs() < 1e-10);
        assert!(rep.energy.energy.iter().all(|&e| e.abs() < 1e-12));
        assert!(rep.limit_energy.abs() < 1e-10);
        assert!(rep.final_estimate.abs() < 1e-8);
    }

    #[test]
    fn pipeline_admissibility_gate() {
        let grid = grid2(33, 1.25);
        let cone = ConeParams {
            grid,
            center: [0.0; 3],
            sigma: 0.6,
            amplitude: 0.0,
            p: 4.0,
            r_in: 0.2,
            r_out: 0.4,
        };
        let ladder: Vec<f64> = (1..=6).map(|k| 0.002 * k as f64).collect();
        // gate threshold for gamma = 3, n = 2, c3 eps = 0 is 2/3
        let rep = lower_bound_pipeline(&cone, 0.0, 0.25, 3.0, 0.5, &ladder).unwrap();
        assert!(!rep.admissibility_ok);
        assert!(!rep.pass);
        assert!((rep.admissibility_rhs - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn w1p_flat_is_trivially_zero() {
        let grid = grid2(17, 1.0);
        let flat = MetricField::flat(grid);
        let snaps: Vec<f64> = (0..9).map(|k| 1e-4 * 10f64.powf(1.75 * k as f64 / 8.0)).collect();
        let t_end = *snaps.last().unwrap();
        let traj = run_flow(&flat, t_end, &snaps).unwrap();
        let reports = w1p_estimates_check(&traj, 4.0, 1.0).unwrap();
        assert_eq!(reports.len(), 3);
        for r in &reports {
            assert!(r.pass, "{}", r.summary());
            assert_eq!(r.constant, 0.0);
        }
        assert!((reports[1].predicted_exponent + 0.25).abs() < 1e-15);
        assert!((reports[2].predicted_exponent + 0.875).abs() < 1e-15);
    }

    #[test]
    fn w1p_checks_budget_and_produces_fits() {
        let grid = grid2(33, 1.0);
        let g0 = bump_metric(grid, 0.2);
        let snaps: Vec<f64> = (0..9).map(|k| 2e-4 * 10f64.powf(1.6 * k as f64 / 8.0)).collect();
        let t_end = *snaps.last().unwrap();
        let traj = run_flow(&g0, t_end, &snaps).unwrap();
        assert!(matches!(
            w1p_estimates_check(&traj, 4.0, 1e-12),
            Err(CoreError::InvalidParameter(_))
        ));
        let reports = w1p_estimates_check(&traj, 4.0, 10.0).unwrap();
        assert_eq!(reports.len(), 3);
        assert!((reports[0].predicted_exponent).abs() < 1e-15);
        for r in &reports {
            assert!(r.n_samples >= 8);
            assert!(r.t_hi / r.t_lo >= 10f64.powf(1.5));
        }
    }
}
