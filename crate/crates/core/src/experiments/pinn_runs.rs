//! Network training runs over several seeds, error reports against a
//! spectral reference, and the bound check between them.

use crate::net::MlpParams;
use crate::pinn::{generalization_error, minimal_constant, total_error, train, ErrorReport, TrainConfig};
use crate::pinn::report::bound_check;
use crate::pinn::train::HistoryRecord;
use crate::io::{read_field, read_net};
use crate::sqg::{SolverConfig, SqgSolver, Trajectory};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Spectral reference for the total error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    pub solver: SolverConfig,
    pub out_every: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig {
                n: 64,
                ..SolverConfig::default()
            },
            out_every: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PinnRunConfig {
    pub train: TrainConfig,
    /// Each seed sets both the network initialization and the sampling.
    pub seeds: Vec<u64>,
    pub reference: Option<ReferenceConfig>,
    /// Largest allowed ratio of the minimal bound constants across seeds.
    pub max_constant_spread: f64,
    /// Required `E_G(initial) / E_G(final)`.
    pub min_reduction: f64,
}

impl Default for PinnRunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::smoke(),
            seeds: vec![42],
            reference: Some(ReferenceConfig::default()),
            max_constant_spread: 10.0,
            min_reduction: 10.0,
        }
    }
}

impl PinnRunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if let Some(r) = &self.reference {
            if !(r.out_every > 0.0) {
                return Err(Error::Config("reference output interval must be positive".into()));
            }
        }
        self.train.validate()
    }

    fn for_seed(&self, seed: u64) -> TrainConfig {
        let mut t = self.train.clone();
        t.net_seed = seed;
        t.residual.seed = seed;
        t
    }
}

/// Flattened history row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    pub train_objective: f64,
    pub validation_e_g: f64,
    pub best_e_g: f64,
    pub interior_sq: f64,
    pub initial_sq: f64,
    pub boundary_sq: f64,
    pub periodicity_sq: f64,
    pub penalty_sq: f64,
}

impl From<&HistoryRecord> for HistoryRow {
    fn from(h: &HistoryRecord) -> Self {
        let v = &h.validation;
        Self {
            step: h.step,
            train_objective: h.train_objective,
            validation_e_g: h.validation_e_g,
            best_e_g: h.best_e_g,
            interior_sq: v.interior,
            initial_sq: v.initial,
            boundary_sq: v.boundary,
            periodicity_sq: v.periodicity,
            penalty_sq: v.penalty,
        }
    }
}

/// `E` and `E_G` of one network, with the minimal bound constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub step: usize,
    pub e: f64,
    pub e_g: f64,
    pub c_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub initial: ErrorReport,
    pub checkpoints: Vec<(usize, ErrorReport)>,
    pub last: ErrorReport,
    /// `E_G` of the initial network over that of the final one.
    pub reduction: f64,
    pub train_wall_time: f64,
    /// `(E, E_G)` at each checkpoint and at the end, when a reference is set.
    pub bound_points: Vec<BoundPoint>,
    /// For each later point with smaller `E_G` and larger `E`, whether `E`
    /// stays within the bound evaluated with the earlier point's minimal
    /// constant.
    pub envelope_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PinnRunOutcome {
    pub seeds: Vec<SeedOutcome>,
    /// Max over min of the final minimal constants across seeds.
    pub constant_spread: Option<f64>,
    pub checks: Vec<(String, bool)>,
    pub all_pass: bool,
}

/// Per-seed artifacts to be written by the caller.
pub struct SeedArtifacts {
    pub seed: u64,
    pub net: MlpParams,
    pub checkpoints: Vec<(usize, MlpParams)>,
    pub history: Vec<HistoryRow>,
}

pub fn reference_trajectory(cfg: &TrainConfig, r: &ReferenceConfig) -> Result<Trajectory> {
    let solver = SqgSolver::new(r.solver.clone())?;
    let psi0 = cfg.initial.sample(r.solver.n)?;
    solver.solve(&psi0, cfg.residual.t_final, r.out_every)
}

/// Error report of `net`, with the total error when a reference is given.
pub fn report_network(net: &MlpParams, cfg: &TrainConfig, reference: Option<&Trajectory>) -> Result<ErrorReport> {
    let psi0 = cfg.initial.sample(cfg.grid)?;
    let mut r = generalization_error(net, &psi0, &cfg.residual, &cfg.report)?;
    if let Some(traj) = reference {
        r.e_total = Some(total_error(net, traj, cfg.residual.s_index, cfg.residual.t_final)?);
    }
    Ok(r)
}

/// Error report of a saved network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PinnReportConfig {
    /// Residual, initial-datum and quadrature settings of the run.
    pub train: TrainConfig,
    pub checkpoint: PathBuf,
    /// Directory of field snapshots from a solver run, for the total error.
    pub reference_dir: Option<PathBuf>,
}

impl Default for PinnReportConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::smoke(),
            checkpoint: PathBuf::new(),
            reference_dir: None,
        }
    }
}

/// Snapshots `*.sqgf` in `dir`, ordered by time.
pub fn load_trajectory(dir: &Path) -> Result<Trajectory> {
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    names.retain(|p| p.extension().is_some_and(|e| e == "sqgf"));
    names.sort();
    let mut snapshots = names
        .iter()
        .map(|p| read_field(p).map(|s| (s.time, s.field)))
        .collect::<Result<Vec<_>>>()?;
    if snapshots.is_empty() {
        return Err(Error::Config(format!("no snapshots in {}", dir.display())));
    }
    snapshots.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(Trajectory {
        snapshots,
        telemetry: Vec::new(),
        steps: 0,
    })
}

pub fn run_pinn_report(cfg: &PinnReportConfig) -> Result<ErrorReport> {
    cfg.train.validate()?;
    let net = read_net(&cfg.checkpoint)?;
    let reference = cfg.reference_dir.as_deref().map(load_trajectory).transpose()?;
    report_network(&net, &cfg.train, reference.as_ref())
}

/// The envelope condition along a sequence of `(E, E_G)` points: a later
/// point with smaller `E_G` and larger `E` must stay within the bound taken
/// with the earlier point's minimal constant.
pub fn envelope_holds(points: &[BoundPoint], lambda: f64) -> bool {
    points.iter().enumerate().all(|(i, early)| {
        points[i + 1..].iter().all(|late| {
            if late.e_g >= early.e_g || late.e <= early.e {
                return true;
            }
            match early.c_min {
                Some(c) => bound_check(late.e, late.e_g, lambda, c).holds,
                None => true,
            }
        })
    })
}

/// Ratio of the largest to the smallest constant; `None` unless all are
/// finite and positive.
pub fn constant_spread(constants: &[Option<f64>]) -> Option<f64> {
    let c: Vec<f64> = constants.iter().copied().collect::<Option<_>>()?;
    let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = c.iter().copied().fold(0.0, f64::max);
    (lo > 0.0 && hi.is_finite()).then(|| hi / lo)
}

pub fn run_pinn(cfg: &PinnRunConfig) -> Result<(PinnRunOutcome, Vec<SeedArtifacts>)> {
    cfg.validate()?;
    let reference = cfg
        .reference
        .as_ref()
        .map(|r| reference_trajectory(&cfg.train, r))
        .transpose()?;
    let lambda = cfg.train.residual.lambda;
    let mut seeds = Vec::new();
    let mut artifacts = Vec::new();
    for &seed in &cfg.seeds {
        let tc = cfg.for_seed(seed);
        let net0 = MlpParams::new(&tc.layers, seed)?;
        let initial = report_network(&net0, &tc, None)?;
        let out = train(net0, &tc)?;
        let mut checkpoints = Vec::new();
        for (step, net) in &out.checkpoints {
            let mut r = report_network(net, &tc, reference.as_ref())?;
            r.step_count = *step;
            checkpoints.push((*step, r));
        }
        let mut last = report_network(&out.net, &tc, reference.as_ref())?;
        last.step_count = out.steps;
        last.wall_time = out.wall_time;

        let bound_points: Vec<BoundPoint> = checkpoints
            .iter()
            .map(|(s, r)| (*s, r))
            .chain(std::iter::once((out.steps, &last)))
            .filter_map(|(step, r)| {
                r.e_total.map(|e| BoundPoint {
                    step,
                    e,
                    e_g: r.e_g,
                    c_min: minimal_constant(e, r.e_g, lambda),
                })
            })
            .collect();
        seeds.push(SeedOutcome {
            seed,
            initial,
            reduction: initial.e_g / last.e_g,
            checkpoints,
            last,
            train_wall_time: out.wall_time,
            envelope_ok: envelope_holds(&bound_points, lambda),
            bound_points,
        });
        artifacts.push(SeedArtifacts {
            seed,
            net: out.net,
            checkpoints: out.checkpoints,
            history: out.history.iter().map(HistoryRow::from).collect(),
        });
    }

    let mut checks = vec![(
        "reduction".to_string(),
        seeds.iter().all(|s| s.reduction >= cfg.min_reduction),
    )];
    let constant_spread = if reference.is_some() {
        let finals: Vec<Option<f64>> = seeds
            .iter()
            .map(|s| s.bound_points.last().and_then(|p| p.c_min))
            .collect();
        let spread = constant_spread(&finals);
        checks.push((
            "constant-spread".to_string(),
            spread.is_some_and(|r| r < cfg.max_constant_spread),
        ));
        checks.push(("envelope".to_string(), seeds.iter().all(|s| s.envelope_ok)));
        spread
    } else {
        None
    };
    checks.push((
        "rss-identity".to_string(),
        seeds
            .iter()
            .flat_map(|s| std::iter::once(&s.last).chain(s.checkpoints.iter().map(|c| &c.1)))
            .all(|r| r.rss_defect() <= 1e-12),
    ));
    Ok((
        PinnRunOutcome {
            all_pass: checks.iter().all(|c| c.1),
            seeds,
            constant_spread,
            checks,
        },
        artifacts,
    ))
}
