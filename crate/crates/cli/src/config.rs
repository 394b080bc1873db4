//! JSON experiment configuration: parsing, fail-fast validation and hashing.

use anyhow::{anyhow, bail, Result};
use rdlab_core::verify::{ConeParams, RegionSpec, DEFAULT_C_LADDER};
use rdlab_core::GridSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub dim: usize,
    pub half_width: f64,
    pub points_per_axis: usize,
    pub collar_width: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum MetricConfig {
    /// The Euclidean metric.
    Flat,
    /// delta + amplitude * smooth compact bump in the (0,0) entry.
    Bump { amplitude: f64, radius: f64 },
    /// Cone-type low-regularity datum.
    Cone {
        sigma: f64,
        amplitude: f64,
        p: f64,
        r_in: f64,
        r_out: f64,
        #[serde(default)]
        center: [f64; 3],
    },
}

fn default_sigma_cfl() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowConfig {
    pub t_end: f64,
    #[serde(default = "default_sigma_cfl")]
    pub sigma_cfl: f64,
    pub snapshots: SnapshotRule,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SnapshotRule {
    /// `count` times spaced geometrically from t_start to t_end.
    Geometric { t_start: f64, count: usize },
    /// `count` times spaced linearly from t_end/count to t_end.
    Linear { count: usize },
}

impl SnapshotRule {
    pub fn times(&self, t_end: f64) -> Vec<f64> {
        match self {
            SnapshotRule::Geometric { t_start, count } => (0..*count)
                .map(|k| {
                    t_start * (t_end / t_start).powf(k as f64 / (*count as f64 - 1.0))
                })
                .collect(),
            SnapshotRule::Linear { count } => (1..=*count)
                .map(|k| t_end * k as f64 / *count as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionConfig {
    pub center: [f64; 3],
    #[serde(default)]
    pub inner: f64,
    pub outer: f64,
}

impl RegionConfig {
    pub fn to_region(&self) -> Result<RegionSpec> {
        if self.inner > 0.0 {
            Ok(RegionSpec::annulus(self.center, self.inner, self.outer)?)
        } else {
            Ok(RegionSpec::ball(self.center, self.outer)?)
        }
    }
}

fn default_tolerance() -> f64 {
    0.15
}

fn default_c_ladder() -> Vec<f64> {
    DEFAULT_C_LADDER.to_vec()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ExperimentSpec {
    BetaWeakEstimate {
        beta: f64,
        #[serde(default)]
        kappa: f64,
        #[serde(default = "default_c_ladder")]
        c_ladder: Vec<f64>,
        #[serde(default = "default_tolerance")]
        tolerance: f64,
    },
    LowerBoundDecayFit {
        beta: f64,
        #[serde(default)]
        kappa: f64,
    },
    IterationReplay {
        beta: f64,
        t: f64,
    },
    DaviesCheck {
        u1: RegionConfig,
        u2: RegionConfig,
        pairs: Vec<(f64, f64)>,
        #[serde(default)]
        random_pairs: usize,
    },
    Theorem45Pipeline {
        beta: f64,
        gamma: f64,
        eta: f64,
        #[serde(default)]
        kappa: f64,
    },
    W1pEstimatesCheck {
        p: f64,
        #[serde(rename = "A")]
        a_bound: f64,
    },
}

impl ExperimentSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentSpec::BetaWeakEstimate { .. } => "beta_weak_estimate",
            ExperimentSpec::LowerBoundDecayFit { .. } => "lower_bound_decay_fit",
            ExperimentSpec::IterationReplay { .. } => "iteration_replay",
            ExperimentSpec::DaviesCheck { .. } => "davies_check",
            ExperimentSpec::Theorem45Pipeline { .. } => "theorem45_pipeline",
            ExperimentSpec::W1pEstimatesCheck { .. } => "w1p_estimates_check",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub metric: MetricConfig,
    pub flow: FlowConfig,
    pub experiments: Vec<ExperimentSpec>,
    pub output_dir: String,
    #[serde(default)]
    pub seed: u64,
}

fn check_beta(name: &str, beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 0.5) {
        bail!("{name}: beta = {beta} is invalid; beta must lie strictly in (0, 1/2)");
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| anyhow!("config parse error: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        Ok(GridSpec::new(
            self.grid.dim,
            self.grid.half_width,
            self.grid.points_per_axis,
            self.grid.collar_width,
        )?)
    }

    /// Cone parameters for the pipeline: the configured cone, or a flat
    /// (zero-amplitude) default shape for non-cone metrics.
    pub fn cone_params(&self) -> Result<ConeParams> {
        let grid = self.grid_spec()?;
        Ok(match &self.metric {
            MetricConfig::Cone {
                sigma,
                amplitude,
                p,
                r_in,
                r_out,
                center,
            } => ConeParams {
                grid,
                center: *center,
                sigma: *sigma,
                amplitude: *amplitude,
                p: *p,
                r_in: *r_in,
                r_out: *r_out,
            },
            _ => {
                let r_out = 0.4 * (grid.half_width - grid.collar_width);
                ConeParams {
                    grid,
                    center: [0.0; 3],
                    sigma: 0.6,
                    amplitude: 0.0,
                    p: 4.0,
                    r_in: 0.5 * r_out,
                    r_out,
                }
            }
        })
    }

    /// Every downstream precondition, checked before any run starts; errors
    /// name the violated constraint.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid_spec().map_err(|e| anyhow!("grid: {e}"))?;
        let n = grid.dim as f64;

        match &self.metric {
            MetricConfig::Flat => {}
            MetricConfig::Bump { amplitude, radius } => {
                if !(amplitude.abs() < 1.0) {
                    bail!("metric.amplitude = {amplitude} is invalid; |g0 - delta| must be < 1");
                }
                if !(*radius > 0.0
                    && *radius < grid.half_width - grid.collar_width)
                {
                    bail!(
                        "metric.radius = {radius} is invalid; the bump must fit strictly inside the flat collar"
                    );
                }
            }
            MetricConfig::Cone {
                sigma,
                amplitude,
                p,
                r_in,
                r_out,
                ..
            } => {
                if !(*p > n) {
                    bail!("metric.p = {p} is invalid; the cone datum requires p > n = {n}");
                }
                if !(*sigma > 1.0 - n / p && *sigma < 1.0) {
                    bail!(
                        "metric.sigma = {sigma} is invalid; the cone exponent must lie in (1 - n/p, 1) = ({}, 1)",
                        1.0 - n / p
                    );
                }
                if !(*amplitude >= 0.0 && *amplitude < 0.5) {
                    bail!("metric.amplitude = {amplitude} is invalid; it must lie in [0, 0.5)");
                }
                if !(*r_in >= 0.0 && *r_in < *r_out) {
                    bail!("metric cutoff radii ({r_in}, {r_out}) are invalid; need 0 <= r_in < r_out");
                }
                if !(*r_out < grid.half_width - grid.collar_width) {
                    bail!(
                        "metric.r_out = {r_out} is invalid; the cone must vanish before the flat collar at {}",
                        grid.half_width - grid.collar_width
                    );
                }
            }
        }

        if !(self.flow.t_end > 0.0) {
            bail!("flow.t_end = {} is invalid; it must be positive", self.flow.t_end);
        }
        if !(self.flow.sigma_cfl > 0.0 && self.flow.sigma_cfl <= 0.25) {
            bail!(
                "flow.sigma_cfl = {} is invalid; the stability factor must lie in (0, 0.25]",
                self.flow.sigma_cfl
            );
        }
        match &self.flow.snapshots {
            SnapshotRule::Geometric { t_start, count } => {
                if !(*t_start > 0.0 && *t_start < self.flow.t_end) {
                    bail!(
                        "flow.snapshots.t_start = {t_start} is invalid; need 0 < t_start < t_end"
                    );
                }
                if *count < 3 {
                    bail!("flow.snapshots.count = {count} is invalid; need >= 3 snapshots");
                }
            }
            SnapshotRule::Linear { count } => {
                if *count < 3 {
                    bail!("flow.snapshots.count = {count} is invalid; need >= 3 snapshots");
                }
            }
        }

        if self.experiments.is_empty() {
            bail!("experiments list is empty; nothing to run");
        }
        for spec in &self.experiments {
            let name = spec.name();
            match spec {
                ExperimentSpec::BetaWeakEstimate { beta, c_ladder, .. } => {
                    check_beta(name, *beta)?;
                    if c_ladder.is_empty() || c_ladder.iter().any(|c| !(*c > 0.0)) {
                        bail!("{name}: the C-ladder must be nonempty with positive entries");
                    }
                }
                ExperimentSpec::LowerBoundDecayFit { beta, .. } => check_beta(name, *beta)?,
                ExperimentSpec::IterationReplay { beta, t } => {
                    check_beta(name, *beta)?;
                    if !(*t > 0.0 && *t <= self.flow.t_end) {
                        bail!("{name}: t = {t} is invalid; need 0 < t <= flow.t_end");
                    }
                }
                ExperimentSpec::DaviesCheck {
                    u1,
                    u2,
                    pairs,
                    random_pairs,
                } => {
                    let r1 = u1.to_region().map_err(|e| anyhow!("{name}: U1: {e}"))?;
                    let r2 = u2.to_region().map_err(|e| anyhow!("{name}: U2: {e}"))?;
                    if !(rdlab_core::verify::region_distance(&r1, &r2, grid.dim) > 0.0) {
                        bail!("{name}: U1 and U2 overlap; the regions must be disjoint");
                    }
                    if pairs.is_empty() && *random_pairs == 0 {
                        bail!("{name}: no (t, T) pairs requested");
                    }
                    for (t, big_t) in pairs {
                        if !(*t > 0.0 && t < big_t && *big_t <= self.flow.t_end) {
                            bail!("{name}: pair ({t}, {big_t}) is invalid; need 0 < t < T <= flow.t_end");
                        }
                    }
                }
                ExperimentSpec::Theorem45Pipeline {
                    beta, gamma, eta, ..
                } => {
                    check_beta(name, *beta)?;
                    if !(*gamma > 1.0 / (1.0 - 2.0 * beta)) {
                        bail!(
                            "{name}: gamma = {gamma} is invalid; admissibility requires gamma > 1/(1 - 2 beta) = {}",
                            1.0 / (1.0 - 2.0 * beta)
                        );
                    }
                    if !(*eta > 0.0) {
                        bail!("{name}: eta = {eta} is invalid; it must be positive");
                    }
                }
                ExperimentSpec::W1pEstimatesCheck { p, a_bound } => {
                    if !(*p > n) {
                        bail!("{name}: p = {p} is invalid; the gradient estimates require p > n = {n}");
                    }
                    if !(*a_bound > 0.0) {
                        bail!("{name}: A = {a_bound} is invalid; the gradient budget must be positive");
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn config_hash(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
