//! `sqgnet`: kernels, operators, the SQG solver and network experiments from
//! the command line.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails, 2 for invalid
//! input or configuration, 3 for numerical failures.

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sqgnet::boxfn::{BoxFunction, TrigPolynomial};
use sqgnet::experiments::{self, ExperimentConfig, PinnReportConfig, RunSummary};
use sqgnet::io;
use sqgnet::kernels::{dump_rows, PeriodizedKernel};
use sqgnet::net::{DerivativeQuery, MlpParams};
use sqgnet::nonlocal::NonlocalOperator;
use sqgnet::pinn::ErrorReport;
use sqgnet::probes::ProbeFunction;
use sqgnet::quadrature::QuadratureConfig;
use sqgnet::spectral::grid_coord;
use sqgnet::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sqgnet", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Periodized kernels K and R* on a cell-centred grid of T², as CSV.
    KernelDump {
        #[arg(long, default_value_t = 32)]
        n: usize,
        /// Lattice truncation radius.
        #[arg(long, default_value_t = 64)]
        m: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Applies Λ̃ and R̃ to a test function on a uniform grid of T².
    OpApply(OpApply),
    /// Integrates the SQG equation, or runs the convergence study when the
    /// config has kind "sqg-convergence".
    SqgSolve(RunArgs),
    /// Numerical checks of the operator properties.
    VerifyOps {
        #[command(flatten)]
        run: RunArgs,
        /// Negative control: flip the sign of both kernels.
        #[arg(long)]
        debug_tamper_kernel: bool,
        /// Negative control: set every tolerance to zero.
        #[arg(long)]
        debug_zero_tolerance: bool,
    },
    /// Trains networks and reports their errors.
    PinnTrain {
        #[command(flatten)]
        run: RunArgs,
        /// Overrides the seeds, comma separated.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Error report of a saved network.
    PinnReport {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Directory of solver snapshots for the total error.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Minimal constants of the error bound for saved reports.
    BoundCheck {
        #[command(flatten)]
        run: RunArgs,
        /// Report files in training order.
        #[arg(long = "report")]
        reports: Vec<PathBuf>,
        /// Constant to test.
        #[arg(long)]
        constant: Option<f64>,
    },
    /// Writes a freshly initialized network checkpoint.
    NetInit {
        #[arg(long, value_delimiter = ',', default_value = "3,64,64,64,1")]
        layers: Vec<usize>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluates a network or one of its derivatives at a point.
    NetEval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// `t,x1,x2`.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        point: Vec<f64>,
        /// Derivative orders in `t,x1,x2`.
        #[arg(long, value_delimiter = ',', default_value = "0,0,0")]
        alpha: Vec<u32>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON with a "kind" field); defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Print the effective config and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum TestFunction {
    /// Random trigonometric polynomial; exact Λ and R are reported too.
    Trig,
    /// Random non-periodic probe.
    Probe,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    Default,
    Reduced,
    Refined,
}

#[derive(Args)]
struct OpApply {
    #[arg(long, value_enum, default_value = "trig")]
    function: TestFunction,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Target points per side.
    #[arg(long, default_value_t = 8)]
    grid: usize,
    #[arg(long, value_enum, default_value = "default")]
    quadrature: Rule,
    #[arg(long, default_value_t = 64)]
    m: usize,
    #[arg(long)]
    debug_tamper_kernel: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct OpRow {
    x1: f64,
    x2: f64,
    lambda: f64,
    r1: f64,
    r2: f64,
    lambda_exact: Option<f64>,
    r1_exact: Option<f64>,
    r2_exact: Option<f64>,
}

/// `println!` that tolerates a closed stdout, as when piped into `head`.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

enum Outcome {
    Pass,
    Fail,
}

fn main() -> ExitCode {
    sqgnet::init_threads_from_env();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let numerical = e.chain().any(|c| {
                c.downcast_ref::<Error>().is_some_and(|e| {
                    !matches!(e, Error::Config(_) | Error::Format(_) | Error::Io(_) | Error::Json(_))
                })
            });
            ExitCode::from(if numerical { 3 } else { 2 })
        }
    }
}

fn load_config(path: Option<&Path>, default: ExperimentConfig, accepted: &[&str]) -> anyhow::Result<ExperimentConfig> {
    let Some(p) = path else { return Ok(default) };
    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    let cfg = ExperimentConfig::from_json(&text).with_context(|| format!("parsing {}", p.display()))?;
    if !accepted.contains(&cfg.kind()) {
        return Err(Error::Config(format!("config kind {} does not fit this command (expected {})", cfg.kind(), accepted.join(" or "))).into());
    }
    Ok(cfg)
}

fn finish(run: &RunArgs, cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    if run.print_config {
        say!("{}", serde_json::to_string_pretty(cfg)?);
        return Ok(Outcome::Pass);
    }
    let summary = experiments::execute(cfg, &run.out)?;
    print_summary(&summary);
    Ok(if summary.all_pass { Outcome::Pass } else { Outcome::Fail })
}

fn print_summary(s: &RunSummary) {
    match s.summary.get("verdicts").and_then(|v| v.as_array()) {
        Some(verdicts) => {
            for v in verdicts {
                let pass = v["pass"].as_bool().unwrap_or(false);
                say!("{:<20} {}  {}", v["property"].as_str().unwrap_or("?"), if pass { "PASS" } else { "FAIL" }, v["detail"].as_str().unwrap_or(""));
            }
        }
        None => {
            if let Some(checks) = s.summary.get("checks").and_then(|v| v.as_array()) {
                for c in checks {
                    let pass = c[1].as_bool().unwrap_or(false);
                    say!("{:<20} {}", c[0].as_str().unwrap_or("?"), if pass { "PASS" } else { "FAIL" });
                }
            }
        }
    }
    say!("{}: {} ({} files)", s.kind, if s.all_pass { "PASS" } else { "FAIL" }, s.files.len());
}

fn run(cmd: Command) -> anyhow::Result<Outcome> {
    match cmd {
        Command::KernelDump { n, m, out } => {
            if n == 0 || n % 2 == 1 {
                bail!(Error::Config("n must be even and positive".into()));
            }
            io::write_csv(&out, &dump_rows(n, m)?)?;
            Ok(Outcome::Pass)
        }
        Command::OpApply(a) => op_apply(&a),
        Command::SqgSolve(run) => {
            let default = ExperimentConfig::SqgSolve(Default::default());
            let cfg = load_config(run.config.as_deref(), default, &["sqg-solve", "sqg-convergence"])?;
            finish(&run, &cfg)
        }
        Command::VerifyOps {
            run,
            debug_tamper_kernel,
            debug_zero_tolerance,
        } => {
            let default = ExperimentConfig::VerifyOps(Default::default());
            let mut cfg = load_config(run.config.as_deref(), default, &["verify-ops"])?;
            if let ExperimentConfig::VerifyOps(v) = &mut cfg {
                v.tamper_kernel |= debug_tamper_kernel;
                if debug_zero_tolerance {
                    v.tolerance_scale = 0.0;
                }
            }
            finish(&run, &cfg)
        }
        Command::PinnTrain { run, seeds, steps } => {
            let default = ExperimentConfig::PinnTrain(Default::default());
            let mut cfg = load_config(run.config.as_deref(), default, &["pinn-train"])?;
            if let ExperimentConfig::PinnTrain(p) = &mut cfg {
                if let Some(s) = seeds {
                    p.seeds = s;
                }
                if let Some(n) = steps {
                    p.train.steps = n;
                    p.train.checkpoints.retain(|&c| c <= n);
                }
            }
            finish(&run, &cfg)
        }
        Command::PinnReport {
            run,
            checkpoint,
            reference,
        } => {
            let default = ExperimentConfig::PinnReport(PinnReportConfig::default());
            let mut cfg = load_config(run.config.as_deref(), default, &["pinn-report"])?;
            if let ExperimentConfig::PinnReport(p) = &mut cfg {
                if let Some(c) = checkpoint {
                    p.checkpoint = c;
                }
                if reference.is_some() {
                    p.reference_dir = reference;
                }
                if p.checkpoint.as_os_str().is_empty() && !run.print_config {
                    bail!(Error::Config("a checkpoint is required".into()));
                }
            }
            finish(&run, &cfg)
        }
        Command::BoundCheck { run, reports, constant } => {
            let default = ExperimentConfig::BoundCheck(Default::default());
            let mut cfg = load_config(run.config.as_deref(), default, &["bound-check"])?;
            if let ExperimentConfig::BoundCheck(b) = &mut cfg {
                for p in &reports {
                    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    let r: ErrorReport = serde_json::from_str(&text).map_err(Error::from).with_context(|| format!("parsing {}", p.display()))?;
                    b.reports.push(r);
                }
                if constant.is_some() {
                    b.constant = constant;
                }
            }
            finish(&run, &cfg)
        }
        Command::NetInit { layers, seed, out } => {
            let net = MlpParams::new(&layers, seed)?;
            io::write_net(&out, &net)?;
            say!("{} parameters", net.len());
            Ok(Outcome::Pass)
        }
        Command::NetEval { checkpoint, point, alpha } => {
            if point.len() != 3 || alpha.len() != 3 {
                bail!(Error::Config("point and alpha take three values".into()));
            }
            let net = io::read_net(&checkpoint)?;
            let q = DerivativeQuery {
                point: [point[0], point[1], point[2]],
                alpha: [alpha[0], alpha[1], alpha[2]],
            };
            let v = net.eval(q)?;
            say!("{}", serde_json::json!({ "point": point, "alpha": alpha, "value": v }));
            Ok(Outcome::Pass)
        }
    }
}

fn op_apply(a: &OpApply) -> anyhow::Result<Outcome> {
    use rand::SeedableRng;
    if a.grid == 0 {
        bail!(Error::Config("grid must be positive".into()));
    }
    let quad = match a.quadrature {
        Rule::Default => QuadratureConfig::default(),
        Rule::Reduced => QuadratureConfig::reduced(),
        Rule::Refined => QuadratureConfig::default().refined(),
    };
    let mut kernel = PeriodizedKernel::new(a.m);
    if a.debug_tamper_kernel {
        kernel = kernel.tampered();
    }
    let op = NonlocalOperator::cached(&quad, kernel)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed);
    let trig = matches!(a.function, TestFunction::Trig).then(|| TrigPolynomial::random(&mut rng, 6, 8));
    let probe = ProbeFunction::random(&mut rng, 4, 3.0, 0.5);
    let f: &dyn BoxFunction = match &trig {
        Some(t) => t,
        None => &probe,
    };
    let mut rows = Vec::with_capacity(a.grid * a.grid);
    for i in 0..a.grid {
        for j in 0..a.grid {
            let x = [grid_coord(i, a.grid), grid_coord(j, a.grid)];
            let (lam, r) = op.apply_both(f, x)?;
            let exact = trig.as_ref().map(|t| (t.lambda(x), t.riesz(x)));
            rows.push(OpRow {
                x1: x[0],
                x2: x[1],
                lambda: lam,
                r1: r[0],
                r2: r[1],
                lambda_exact: exact.map(|e| e.0),
                r1_exact: exact.map(|e| e.1[0]),
                r2_exact: exact.map(|e| e.1[1]),
            });
        }
    }
    io::write_csv(&a.out, &rows)?;
    Ok(Outcome::Pass)
}
