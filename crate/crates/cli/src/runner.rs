//! Experiment execution: build the datum, run the flow once, dispatch the
//! requested experiments and write CSV/text reports plus the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdlab_core::field::Sym2Field;
use rdlab_core::fit::FitReport;
use rdlab_core::flow::{run_flow_sigma, FlowTrajectory};
use rdlab_core::verify;
use rdlab_core::{GridSpec, MetricField};
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentSpec, MetricConfig};

#[derive(Debug, Serialize)]
pub struct ExperimentResult {
    pub name: String,
    pub status: String,
    pub wall_ms: u128,
    pub outputs: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    pub experiments: Vec<ExperimentResult>,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn all_passed(&self) -> bool {
        self.experiments.iter().all(|e| e.status == "pass")
    }
}

fn build_metric(cfg: &ExperimentConfig, grid: GridSpec) -> Result<MetricField> {
    Ok(match &cfg.metric {
        MetricConfig::Flat => MetricField::flat(grid),
        MetricConfig::Bump { amplitude, radius } => {
            let (a, r) = (*amplitude, *radius);
            let field = Sym2Field::from_fn(grid, |x, i, j| {
                let r2: f64 = x.iter().map(|v| v * v).sum::<f64>() / (r * r);
                let bump = if r2 < 1.0 { a * (1.0 - r2).powi(4) } else { 0.0 };
                let delta = if i == j { 1.0 } else { 0.0 };
                delta + if (i, j) == (0, 0) { bump } else { 0.0 }
            });
            MetricField::from_sym2(field, Some(0.0))
        }
        MetricConfig::Cone { .. } => cfg.cone_params()?.build()?,
    })
}

fn fit_csv_header() -> &'static str {
    "name,predicted,fitted,stderr,constant,t_lo,t_hi,n_samples,tolerance,pass\n"
}

fn fit_csv_row(r: &FitReport) -> String {
    format!(
        "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{:.12e},{}\n",
        r.name,
        r.predicted_exponent,
        r.fitted_exponent,
        r.stderr,
        r.constant,
        r.t_lo,
        r.t_hi,
        r.n_samples,
        r.tolerance,
        r.pass
    )
}

struct Reporter<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl<'a> Reporter<'a> {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.dir.join(name), contents)?;
        self.files.push(name.to_string());
        Ok(())
    }
}

/// True iff the experiment's checks passed; writes its CSV and text report.
fn run_experiment(
    spec: &ExperimentSpec,
    cfg: &ExperimentConfig,
    traj: &FlowTrajectory,
    x0: usize,
    rep: &mut Reporter,
) -> Result<bool> {
    let name = spec.name();
    match spec {
        ExperimentSpec::BetaWeakEstimate {
            beta,
            kappa,
            c_ladder,
            tolerance,
        } => {
            let est = verify::beta_weak_estimate(traj, x0, *beta, c_ladder)?;
            let mut csv = String::from("C,raw,extrapolated\n");
            for ((c, r), e) in est.c_ladder.iter().zip(&est.raw).zip(&est.extrapolated) {
                let _ = writeln!(csv, "{c:.12e},{r:.12e},{e:.12e}");
            }
            rep.write(&format!("{name}.csv"), &csv)?;
            let pass = est.value >= kappa - tolerance;
            rep.write(
                &format!("{name}.txt"),
                &format!(
                    "beta = {beta}, base node = {x0}\nt-decade: [{:.6e}, {:.6e}]\nheadline estimate: {:.6e}\ntarget kappa = {kappa} (tolerance {tolerance}) -> {}\n",
                    est.t_decade.0,
                    est.t_decade.1,
                    est.value,
                    if pass { "pass" } else { "FAIL" }
                ),
            )?;
            Ok(pass)
        }
        ExperimentSpec::LowerBoundDecayFit { beta, kappa } => {
            let fit = verify::lower_bound_decay_fit(traj, x0, *kappa, *beta)?;
            let mut csv = String::from(fit_csv_header());
            csv.push_str(&fit_csv_row(&fit));
            rep.write(&format!("{name}.csv"), &csv)?;
            rep.write(&format!("{name}.txt"), &format!("{}\n", fit.summary()))?;
            Ok(fit.pass)
        }
        ExperimentSpec::IterationReplay { beta, t } => {
            let replay = verify::iteration_replay(traj, x0, *beta, *t)?;
            let mut csv = String::from("k,x_k,a_k,r_k,rho_k,tail_partial\n");
            for (k, ((xk, ak), (r, (rho, tail)))) in replay
                .chain
                .iter()
                .zip(
                    replay.schedule.radii.iter().zip(
                        replay
                            .schedule
                            .rho_partial
                            .iter()
                            .zip(&replay.tail_partial),
                    ),
                )
                .enumerate()
            {
                let _ = writeln!(
                    csv,
                    "{},{xk},{ak:.12e},{r:.12e},{rho:.12e},{tail:.12e}",
                    k + 1
                );
            }
            rep.write(&format!("{name}.csv"), &csv)?;
            let pass = replay.chain_in_ball && replay.lower_bound_ok;
            rep.write(
                &format!("{name}.txt"),
                &format!(
                    "beta = {beta}, t = {t}, depth = {}\nrho_infinity = {:.6e}\nfitted C1 = {:.6e}, C2 = {:.6e}, D = {:.6e}\nchain in ball: {}\nlower bound at all depths: {}\n-> {}\n",
                    replay.chain.len(),
                    replay.schedule.rho_infinity,
                    replay.c1,
                    replay.c2,
                    replay.d,
                    replay.chain_in_ball,
                    replay.lower_bound_ok,
                    if pass { "pass" } else { "FAIL" }
                ),
            )?;
            Ok(pass)
        }
        ExperimentSpec::DaviesCheck {
            u1,
            u2,
            pairs,
            random_pairs,
        } => {
            let r1 = u1.to_region()?;
            let r2 = u2.to_region()?;
            let mut all_pairs = pairs.clone();
            if *random_pairs > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                let t_end = traj.t_end();
                for _ in 0..*random_pairs {
                    let big_t = t_end * rng.gen_range(0.4..1.0);
                    let t = big_t * rng.gen_range(0.1..0.6);
                    all_pairs.push((t, big_t));
                }
            }
            let mut csv = String::from(
                "t,T,lhs,rhs,set_distance,c2_eps,c3_eps,volume_u1,volume_u2,volume_bound_ok,pass\n",
            );
            let mut pass = true;
            for (t, big_t) in &all_pairs {
                let d = verify::davies_check(traj, &r1, &r2, *t, *big_t)?;
                let _ = writeln!(
                    csv,
                    "{t:.12e},{big_t:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{}",
                    d.lhs,
                    d.rhs,
                    d.set_distance,
                    d.c2_eps,
                    d.c3_eps,
                    d.volume_u1,
                    d.volume_u2,
                    d.volume_bound_ok,
                    d.pass
                );
                pass &= d.pass;
            }
            rep.write(&format!("{name}.csv"), &csv)?;
            rep.write(
                &format!("{name}.txt"),
                &format!(
                    "{} (t, T) pairs -> {}\n",
                    all_pairs.len(),
                    if pass { "pass" } else { "FAIL" }
                ),
            )?;
            Ok(pass)
        }
        ExperimentSpec::Theorem45Pipeline {
            beta,
            gamma,
            eta,
            kappa,
        } => {
            let cone = cfg.cone_params()?;
            let snaps = cfg.flow.snapshots.times(cfg.flow.t_end);
            let report =
                verify::lower_bound_pipeline(&cone, *kappa, *beta, *gamma, *eta, &snaps)?;
            let mut csv = String::from("t,energy,sup_f,phi_mass_on_supp_dphi\n");
            for k in 0..report.energy.times.len() {
                let _ = writeln!(
                    csv,
                    "{:.12e},{:.12e},{:.12e},{:.12e}",
                    report.energy.times[k],
                    report.energy.energy[k],
                    report.energy.sup_f[k],
                    report.energy.phi_mass_on_supp_dphi[k]
                );
            }
            rep.write(&format!("{name}.csv"), &csv)?;
            rep.write(
                &format!("{name}.txt"),
                &format!(
                    "epsilon = {:.6e}\nbattery min = {:.6e} ({})\nadmissibility: eta = {} vs threshold {:.6e} ({})\nfitted c3 = {:.6e}, c4 = {:.6e}, c5 = {:.6e}\nenergy nonnegative: {}\nlimit energy = {:.6e} ({})\ndifferential inequality: {}\nfinal estimate = {:.6e} ({})\n-> {}\n",
                    report.epsilon,
                    report.battery_min,
                    if report.battery_ok { "ok" } else { "FAIL" },
                    report.admissibility_lhs,
                    report.admissibility_rhs,
                    if report.admissibility_ok { "ok" } else { "FAIL" },
                    report.c3_fit,
                    report.c4,
                    report.c5_fit,
                    report.energy_nonneg,
                    report.limit_energy,
                    if report.limit_ok { "ok" } else { "FAIL" },
                    if report.gronwall_ok { "ok" } else { "FAIL" },
                    report.final_estimate,
                    if report.final_ok { "ok" } else { "FAIL" },
                    if report.pass { "pass" } else { "FAIL" }
                ),
            )?;
            Ok(report.pass)
        }
        ExperimentSpec::W1pEstimatesCheck { p, a_bound } => {
            let fits = verify::w1p_estimates_check(traj, *p, *a_bound)?;
            let mut csv = String::from(fit_csv_header());
            let mut txt = String::new();
            let mut pass = true;
            for f in &fits {
                csv.push_str(&fit_csv_row(f));
                let _ = writeln!(txt, "{}", f.summary());
                pass &= f.pass;
            }
            rep.write(&format!("{name}.csv"), &csv)?;
            rep.write(&format!("{name}.txt"), &txt)?;
            Ok(pass)
        }
    }
}

/// Execute a validated config; returns the manifest (already written).
pub fn run(cfg: &ExperimentConfig, config_text: &str, out_root: Option<&str>) -> Result<RunManifest> {
    let grid = cfg.grid_spec()?;
    let g0 = build_metric(cfg, grid)?;
    let snaps = cfg.flow.snapshots.times(cfg.flow.t_end);
    let traj = run_flow_sigma(&g0, cfg.flow.t_end, &snaps, cfg.flow.sigma_cfl)?;

    let dir: PathBuf = match out_root {
        Some(root) => Path::new(root).join(&cfg.output_dir),
        None => PathBuf::from(&cfg.output_dir),
    };
    fs::create_dir_all(&dir)?;
    let mut rep = Reporter {
        dir: &dir,
        files: Vec::new(),
    };

    // shared flow diagnostics
    let mut diag = String::from("t,sup_dev,sup_grad,sup_hess,sup_scalar,sup_riem\n");
    for d in &traj.diagnostics {
        let _ = writeln!(
            diag,
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            d.time, d.sup_dev, d.sup_grad, d.sup_hess, d.sup_scalar, d.sup_riem
        );
    }
    rep.write("flow_diagnostics.csv", &diag)?;

    let center = match &cfg.metric {
        MetricConfig::Cone { center, .. } => *center,
        _ => [0.0; 3],
    };
    let x0 = grid.nearest_node(&center[..grid.dim]);

    let mut results = Vec::new();
    for spec in &cfg.experiments {
        let started = Instant::now();
        let n_before = rep.files.len();
        let status = match run_experiment(spec, cfg, &traj, x0, &mut rep) {
            Ok(true) => "pass".to_string(),
            Ok(false) => "fail".to_string(),
            Err(e) => format!("error: {e} (experiment {})", spec.name()),
        };
        results.push(ExperimentResult {
            name: spec.name().to_string(),
            status,
            wall_ms: started.elapsed().as_millis(),
            outputs: rep.files[n_before..].to_vec(),
        });
    }

    let mut files = rep.files.clone();
    files.push("manifest.json".to_string());
    let manifest = RunManifest {
        config_hash: crate::config::config_hash(config_text),
        version: env!("CARGO_PKG_VERSION").to_string(),
        experiments: results,
        files,
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).map_err(|e| anyhow!("manifest: {e}"))?,
    )?;
    Ok(manifest)
}
