//! Experiment drivers: each run takes a validated configuration, writes its
//! outputs atomically and records a manifest.

pub mod pinn_runs;
pub mod sqg_runs;
pub mod verify;

pub use pinn_runs::{run_pinn, run_pinn_report, PinnReportConfig, PinnRunConfig, PinnRunOutcome};
pub use sqg_runs::{run_convergence, run_solve, ConvergenceConfig, SolveConfig};
pub use verify::{run_verify_ops, VerifyConfig, VerifyReport};

use crate::io::{self, FieldSnapshot, Manifest};
use crate::pinn::report::bound_check;
use crate::pinn::ErrorReport;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::Path;

/// Bound check on saved reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundCheckConfig {
    /// Reports in training order; each must carry the total error.
    pub reports: Vec<ErrorReport>,
    /// Constant to test; the minimal one is always reported.
    pub constant: Option<f64>,
    pub max_constant_spread: f64,
}

impl Default for BoundCheckConfig {
    fn default() -> Self {
        Self {
            reports: Vec::new(),
            constant: None,
            max_constant_spread: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheckRow {
    pub index: usize,
    pub e: f64,
    pub e_g: f64,
    pub lambda: f64,
    pub c_min: Option<f64>,
    pub holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheckOutcome {
    pub rows: Vec<BoundCheckRow>,
    pub constant_spread: Option<f64>,
    pub all_pass: bool,
}

pub fn run_bound_check(cfg: &BoundCheckConfig) -> Result<BoundCheckOutcome> {
    if cfg.reports.is_empty() {
        return Err(Error::Config("no reports to check".into()));
    }
    let mut rows = Vec::new();
    for (index, r) in cfg.reports.iter().enumerate() {
        let e = r
            .e_total
            .ok_or_else(|| Error::Config(format!("report {index} has no total error")))?;
        let c = cfg.constant.unwrap_or(0.0);
        let v = bound_check(e, r.e_g, r.lambda, c);
        rows.push(BoundCheckRow {
            index,
            e,
            e_g: r.e_g,
            lambda: r.lambda,
            c_min: v.c_min,
            holds: cfg.constant.map(|_| v.holds),
        });
    }
    let constants: Vec<Option<f64>> = rows.iter().map(|r| r.c_min).collect();
    let constant_spread = pinn_runs::constant_spread(&constants);
    let finite = rows.iter().all(|r| r.c_min.is_some_and(f64::is_finite));
    let holds = rows.iter().all(|r| r.holds != Some(false));
    let spread_ok = rows.len() < 2 || constant_spread.is_some_and(|s| s < cfg.max_constant_spread);
    Ok(BoundCheckOutcome {
        all_pass: finite && holds && spread_ok,
        rows,
        constant_spread,
    })
}

/// Any experiment, tagged by kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    VerifyOps(VerifyConfig),
    SqgSolve(SolveConfig),
    SqgConvergence(ConvergenceConfig),
    PinnTrain(PinnRunConfig),
    PinnReport(PinnReportConfig),
    BoundCheck(BoundCheckConfig),
}

impl ExperimentConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::VerifyOps(_) => "verify-ops",
            Self::SqgSolve(_) => "sqg-solve",
            Self::SqgConvergence(_) => "sqg-convergence",
            Self::PinnTrain(_) => "pinn-train",
            Self::PinnReport(_) => "pinn-report",
            Self::BoundCheck(_) => "bound-check",
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// What a run wrote and whether its checks passed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub kind: String,
    pub all_pass: bool,
    pub files: Vec<String>,
    pub summary: Value,
}

fn seed_of(cfg: &ExperimentConfig) -> Option<u64> {
    match cfg {
        ExperimentConfig::VerifyOps(c) => Some(c.seed),
        ExperimentConfig::PinnTrain(c) => c.seeds.first().copied(),
        _ => None,
    }
}

/// Runs `cfg`, writing outputs and `manifest.json` into `out`.
pub fn execute(cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary> {
    let mut files = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> Result<()> {
        io::write_atomic(&out.join(&name), &bytes)?;
        files.push(name);
        Ok(())
    };
    let (all_pass, summary) = match cfg {
        ExperimentConfig::VerifyOps(c) => {
            let r = run_verify_ops(c)?;
            put("verify_ops.json".into(), io::json_bytes(&r)?)?;
            put("verify_ops.csv".into(), io::csv_bytes(&r.rows())?)?;
            (r.all_pass, serde_json::to_value(&r)?)
        }
        ExperimentConfig::SqgSolve(c) => {
            let traj = run_solve(c)?;
            for (k, (time, field)) in traj.snapshots.iter().enumerate() {
                let snap = FieldSnapshot {
                    time: *time,
                    field: field.clone(),
                };
                put(format!("snapshot_{k:04}.sqgf"), io::encode_field(&snap))?;
            }
            put("telemetry.csv".into(), io::csv_bytes(&traj.telemetry)?)?;
            let last = traj.telemetry.last().copied();
            let monotone = traj.telemetry.windows(2).all(|w| w[1].l2 <= w[0].l2 * (1.0 + 1e-13));
            let s = serde_json::json!({ "steps": traj.steps, "last": last, "l2_monotone": monotone });
            put("summary.json".into(), io::json_bytes(&s)?)?;
            (monotone, s)
        }
        ExperimentConfig::SqgConvergence(c) => {
            let r = run_convergence(c)?;
            put("convergence.json".into(), io::json_bytes(&r)?)?;
            put("convergence.csv".into(), io::csv_bytes(&r.rows)?)?;
            (r.all_pass, serde_json::to_value(&r)?)
        }
        ExperimentConfig::PinnTrain(c) => {
            let (r, artifacts) = run_pinn(c)?;
            for a in &artifacts {
                put(format!("net_seed{}.tnet", a.seed), io::encode_net(&a.net))?;
                for (step, net) in &a.checkpoints {
                    put(format!("net_seed{}_step{step}.tnet", a.seed), io::encode_net(net))?;
                }
                put(format!("history_seed{}.csv", a.seed), io::csv_bytes(&a.history)?)?;
            }
            for s in &r.seeds {
                put(format!("report_seed{}.json", s.seed), io::json_bytes(&s.last)?)?;
            }
            put("pinn_summary.json".into(), io::json_bytes(&r)?)?;
            (r.all_pass, serde_json::to_value(&r)?)
        }
        ExperimentConfig::PinnReport(c) => {
            let r = run_pinn_report(c)?;
            put("report.json".into(), io::json_bytes(&r)?)?;
            (r.rss_defect() <= 1e-12, serde_json::to_value(r)?)
        }
        ExperimentConfig::BoundCheck(c) => {
            let r = run_bound_check(c)?;
            put("bound_check.json".into(), io::json_bytes(&r)?)?;
            (r.all_pass, serde_json::to_value(&r)?)
        }
    };
    let mut manifest = Manifest::new(cfg.kind(), cfg, seed_of(cfg))?;
    manifest.record(out, &files)?;
    manifest.write(out)?;
    files.push("manifest.json".into());
    Ok(RunSummary {
        kind: cfg.kind().into(),
        all_pass,
        files,
        summary,
    })
}
