//! Solver runs: a single integration with snapshots and telemetry, and the
//! convergence study (exact eigenmode, self-convergence in `dt` and `N`,
//! energy ledger).

use crate::sqg::{InitialData, SolverConfig, SqgSolver, Telemetry, Trajectory};
use crate::spectral::GridField;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub solver: SolverConfig,
    pub initial: InitialData,
    pub t_final: f64,
    pub out_every: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig {
                n: 64,
                energy_ledger: true,
                ..SolverConfig::default()
            },
            initial: InitialData::Smoke,
            t_final: 1.0,
            out_every: 0.25,
        }
    }
}

pub fn run_solve(cfg: &SolveConfig) -> Result<Trajectory> {
    let solver = SqgSolver::new(cfg.solver.clone())?;
    let psi0 = cfg.initial.sample(cfg.solver.n)?;
    solver.solve(&psi0, cfg.t_final, cfg.out_every)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub n: usize,
    pub initial: InitialData,
    pub t_final: f64,
    /// Fixed steps, each half the previous.
    pub dts: Vec<f64>,
    /// Grid sizes for the spatial study, each twice the previous.
    pub grid_sizes: Vec<usize>,
    pub eigenmode_t_final: f64,
    pub eigenmode_dt: f64,
    /// Single-step sizes for the ledger study, each half the previous.
    pub ledger_dts: Vec<f64>,
    pub eigenmode_tolerance: f64,
    pub min_order: f64,
    pub mean_tolerance: f64,
    pub min_ledger_order: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            n: 64,
            initial: InitialData::Random {
                seed: 7,
                kmax: 6,
                h1_norm: 4.0,
            },
            t_final: 0.5,
            dts: vec![0.02, 0.01, 0.005, 0.0025],
            grid_sizes: vec![16, 32, 64, 128],
            eigenmode_t_final: 1.0,
            eigenmode_dt: 0.01,
            ledger_dts: vec![0.04, 0.02, 0.01, 0.005],
            eigenmode_tolerance: 1e-7,
            min_order: 3.8,
            mean_tolerance: 1e-10,
            min_ledger_order: 4.5,
        }
    }
}

impl ConvergenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dts.len() < 3 || self.ledger_dts.len() < 2 || self.grid_sizes.len() < 2 {
            return Err(Error::Config("need at least three dt levels, two ledger steps and two grids".into()));
        }
        let halving = |v: &[f64]| v.windows(2).all(|w| (w[0] - 2.0 * w[1]).abs() <= 1e-12 * w[0]);
        if !halving(&self.dts) || !halving(&self.ledger_dts) {
            return Err(Error::Config("step sequences must halve".into()));
        }
        if !self.grid_sizes.windows(2).all(|w| w[1] == 2 * w[0]) {
            return Err(Error::Config("grid sizes must double".into()));
        }
        if !(self.t_final > 0.0 && self.eigenmode_t_final > 0.0 && self.eigenmode_dt > 0.0) {
            return Err(Error::Config("times and steps must be positive".into()));
        }
        Ok(())
    }
}

/// One row of the convergence table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub study: String,
    pub parameter: f64,
    pub error: f64,
    /// Observed order against the previous row of the same study.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub eigenmode_error: f64,
    pub rows: Vec<ConvergenceRow>,
    /// Smallest observed `dt` order.
    pub dt_order: f64,
    /// Smallest observed ledger order.
    pub ledger_order: f64,
    pub l2_monotone: bool,
    pub max_abs_mean: f64,
    pub checks: Vec<(String, bool)>,
    pub all_pass: bool,
}

fn max_diff(a: &GridField, b: &GridField) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// `f` on the grid of size `n` when `f.n()` is a multiple of `n`.
fn restrict(f: &GridField, n: usize) -> Result<GridField> {
    let r = f.n() / n;
    let v: Vec<f64> = (0..n)
        .flat_map(|j| (0..n).map(move |k| (j, k)))
        .map(|(j, k)| f.values()[r * j * f.n() + r * k])
        .collect();
    GridField::new(n, v)
}

fn orders(study: &str, params: &[f64], errors: &[f64], rows: &mut Vec<ConvergenceRow>) -> f64 {
    let mut worst = f64::INFINITY;
    for (i, (&p, &e)) in params.iter().zip(errors).enumerate() {
        let order = (i > 0).then(|| (errors[i - 1] / e).log2());
        if let Some(o) = order {
            worst = worst.min(o);
        }
        rows.push(ConvergenceRow {
            study: study.into(),
            parameter: p,
            error: e,
            order,
        });
    }
    worst
}

fn telemetry_checks(t: &[Telemetry], monotone: &mut bool, mean: &mut f64) {
    *monotone &= t.windows(2).all(|w| w[1].l2 <= w[0].l2 * (1.0 + 1e-13));
    *mean = t.iter().fold(*mean, |m, r| m.max(r.mean.abs()));
}

pub fn run_convergence(cfg: &ConvergenceConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut monotone = true;
    let mut max_mean = 0.0f64;
    let fixed = |n: usize, dt: f64, ledger: bool| {
        SqgSolver::new(SolverConfig {
            n,
            dt_fixed: Some(dt),
            dt_max: dt,
            energy_ledger: ledger,
            ..SolverConfig::default()
        })
    };

    // e^{-t} cos x1 is an exact solution: the nonlinearity vanishes
    let psi = InitialData::Cos1.sample(cfg.n)?;
    let traj = fixed(cfg.n, cfg.eigenmode_dt, false)?.solve(&psi, cfg.eigenmode_t_final, cfg.eigenmode_t_final)?;
    telemetry_checks(&traj.telemetry, &mut monotone, &mut max_mean);
    let want = psi.map(|v| v * (-cfg.eigenmode_t_final).exp());
    let eigenmode_error = max_diff(traj.at(cfg.eigenmode_t_final).expect("final snapshot"), &want);

    // self-convergence in dt: differences of successive levels
    let psi0 = cfg.initial.sample(cfg.n)?;
    let mut finals = Vec::new();
    for &dt in &cfg.dts {
        let tr = fixed(cfg.n, dt, false)?.solve(&psi0, cfg.t_final, cfg.t_final)?;
        telemetry_checks(&tr.telemetry, &mut monotone, &mut max_mean);
        finals.push(tr.at(cfg.t_final).expect("final snapshot").clone());
    }
    let errs: Vec<f64> = finals.windows(2).map(|w| max_diff(&w[0], &w[1])).collect();
    let dt_order = orders("dt", &cfg.dts[..errs.len()], &errs, &mut rows);

    // spatial: each grid against the finest, on the coarse points
    let dt = *cfg.dts.last().expect("validated");
    let mut fields = Vec::new();
    for &n in &cfg.grid_sizes {
        let tr = fixed(n, dt, false)?.solve(&cfg.initial.sample(n)?, cfg.t_final, cfg.t_final)?;
        telemetry_checks(&tr.telemetry, &mut monotone, &mut max_mean);
        fields.push(tr.at(cfg.t_final).expect("final snapshot").clone());
    }
    let finest = fields.last().expect("validated");
    let mut space = Vec::new();
    for (f, &n) in fields.iter().zip(&cfg.grid_sizes).take(fields.len() - 1) {
        space.push(max_diff(f, &restrict(finest, n)?));
    }
    let sizes: Vec<f64> = cfg.grid_sizes.iter().map(|&n| n as f64).collect();
    orders("n", &sizes[..space.len()], &space, &mut rows);

    // one-step ledger residual from the same datum
    let solver = fixed(cfg.n, cfg.ledger_dts[0], true)?;
    let ledger: Vec<f64> = cfg
        .ledger_dts
        .iter()
        .map(|&h| solver.ledger_step(&psi0, h).map(f64::abs))
        .collect::<Result<_>>()?;
    let ledger_order = orders("ledger", &cfg.ledger_dts, &ledger, &mut rows);

    let checks = vec![
        ("eigenmode".to_string(), eigenmode_error <= cfg.eigenmode_tolerance),
        ("dt-order".to_string(), dt_order >= cfg.min_order),
        ("l2-monotone".to_string(), monotone),
        ("mean".to_string(), max_mean <= cfg.mean_tolerance),
        ("ledger-order".to_string(), ledger_order >= cfg.min_ledger_order),
    ];
    Ok(ConvergenceReport {
        eigenmode_error,
        rows,
        dt_order,
        ledger_order,
        l2_monotone: monotone,
        max_abs_mean: max_mean,
        all_pass: checks.iter().all(|c| c.1),
        checks,
    })
}
