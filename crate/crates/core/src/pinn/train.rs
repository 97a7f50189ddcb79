//! Monte Carlo minimization of the generalization error with Adam.

use super::residuals::{boundary_residual, pde_residual, periodicity_residual, sobolev_density, Face, Sink};
use super::{Collocation, ReportConfig, ResidualConfig, SpaceTimeFunction};
use crate::kernels::PeriodizedKernel;
use crate::net::adam::{adam_step, AdamConfig, AdamState};
use crate::net::{DerivativeSeed, MlpParams};
use crate::nonlocal::NonlocalOperator;
use crate::spectral::GridField;
use crate::sqg::InitialData;
use crate::{Error, Point2, Result, PI, TWO_PI};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Instant;

/// Multipliers on the squared components in the training objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComponentWeights {
    pub interior: f64,
    pub initial: f64,
    pub boundary: f64,
    pub periodicity: f64,
    pub penalty: f64,
}

impl Default for ComponentWeights {
    fn default() -> Self {
        Self {
            interior: 1.0,
            initial: 1.0,
            boundary: 1.0,
            periodicity: 1.0,
            penalty: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub residual: ResidualConfig,
    pub initial: InitialData,
    /// Grid size of the initial datum.
    pub grid: usize,
    pub layers: Vec<usize>,
    pub net_seed: u64,
    pub steps: usize,
    pub adam: AdamConfig,
    /// The learning rate decays exponentially from `adam.lr` to
    /// `adam.lr · lr_final_ratio` over the run.
    pub lr_final_ratio: f64,
    /// Validation interval in steps.
    pub log_every: usize,
    pub validation: Collocation,
    pub weights: ComponentWeights,
    pub report: ReportConfig,
    /// Steps, multiples of `log_every`, at which the best-seen network is
    /// kept in [`TrainOutcome::checkpoints`].
    pub checkpoints: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            residual: ResidualConfig::default(),
            initial: InitialData::Smoke,
            grid: 64,
            layers: MlpParams::default_architecture(),
            net_seed: 42,
            steps: 2000,
            adam: AdamConfig::default(),
            lr_final_ratio: 1.0,
            log_every: 50,
            validation: Collocation {
                interior: 128,
                initial: 256,
                boundary: 128,
                periodicity: 128,
                penalty: 128,
            },
            weights: ComponentWeights::default(),
            report: ReportConfig::default(),
            checkpoints: Vec::new(),
        }
    }
}

impl TrainConfig {
    /// Small network and short run on `cos x1 + 0.5 sin x2`, `T = 0.5`.
    pub fn smoke() -> Self {
        Self {
            residual: ResidualConfig {
                lambda: 1e-3,
                ..ResidualConfig::default()
            },
            layers: vec![3, 32, 32, 1],
            steps: 1500,
            adam: AdamConfig {
                lr: 3e-3,
                ..AdamConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.residual.validate()?;
        self.report.validate()?;
        if self.grid < 4 || self.steps == 0 || self.log_every == 0 {
            return Err(Error::Config("grid ≥ 4, steps ≥ 1 and log_every ≥ 1 required".into()));
        }
        if !(self.adam.lr > 0.0 && self.lr_final_ratio > 0.0) {
            return Err(Error::Config("learning rate and its final ratio must be positive".into()));
        }
        let v = &self.validation;
        if [v.interior, v.initial, v.boundary, v.periodicity, v.penalty].contains(&0) {
            return Err(Error::Config("validation counts must be at least 1".into()));
        }
        if let Some(c) = self.checkpoints.iter().find(|&&c| c > self.steps || c % self.log_every != 0) {
            return Err(Error::Config(format!("checkpoint {c} is not a logging step")));
        }
        MlpParams::zeros(&self.layers).map(|_| ())
    }
}

/// Collocation points of one Monte Carlo estimate.
#[derive(Debug, Clone)]
pub struct Batch {
    pub interior: Vec<[f64; 3]>,
    /// Indices into the initial-datum grid.
    pub initial: Vec<usize>,
    /// `(t, u)`: time and face coordinate.
    pub boundary: Vec<[f64; 2]>,
    /// `(t, x)` with `x ∈ 2T²`.
    pub periodicity: Vec<[f64; 3]>,
    pub penalty: Vec<[f64; 3]>,
}

impl Batch {
    pub fn sample(rng: &mut ChaCha8Rng, counts: &Collocation, t_final: f64, grid: usize) -> Self {
        let mut tx = |n: usize, half: f64| -> Vec<[f64; 3]> {
            (0..n)
                .map(|_| {
                    [
                        rng.random_range(0.0..t_final),
                        rng.random_range(-half..half),
                        rng.random_range(-half..half),
                    ]
                })
                .collect()
        };
        let interior = tx(counts.interior, PI);
        let periodicity = tx(counts.periodicity, TWO_PI);
        let penalty = tx(counts.penalty, PI);
        let initial = (0..counts.initial).map(|_| rng.random_range(0..grid * grid)).collect();
        let boundary = (0..counts.boundary)
            .map(|_| [rng.random_range(0.0..t_final), rng.random_range(-PI..PI)])
            .collect();
        Self {
            interior,
            initial,
            boundary,
            periodicity,
            penalty,
        }
    }
}

/// Monte Carlo estimates of the squared components `E_i², E_t², E_b²,
/// E_per², E_p²`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SquaredComponents {
    pub interior: f64,
    pub initial: f64,
    pub boundary: f64,
    pub periodicity: f64,
    pub penalty: f64,
}

impl SquaredComponents {
    /// `Σ w_c E_c²` with the penalty multiplied by `λ`.
    pub fn objective(&self, w: &ComponentWeights, lambda: f64) -> f64 {
        w.interior * self.interior
            + w.initial * self.initial
            + w.boundary * self.boundary
            + w.periodicity * self.periodicity
            + w.penalty * lambda * self.penalty
    }
}

/// Everything the loss needs besides the network.
pub struct LossContext {
    pub op: Arc<NonlocalOperator>,
    pub psi0: GridField,
    pub residual: ResidualConfig,
    pub weights: ComponentWeights,
}

impl LossContext {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            op: NonlocalOperator::cached(
                &cfg.residual.quadrature,
                PeriodizedKernel::new(cfg.residual.truncation_radius),
            )?,
            psi0: cfg.initial.sample(cfg.grid)?,
            residual: cfg.residual.clone(),
            weights: cfg.weights,
        })
    }

    /// Component estimates on `batch`; with `grad`, also the gradient of the
    /// weighted objective with respect to the parameters of `net`. Families
    /// with zero weight are not evaluated and read as zero.
    pub fn evaluate(&self, net: &MlpParams, batch: &Batch, grad: bool) -> Result<(SquaredComponents, Option<Vec<f64>>)> {
        let f: &dyn SpaceTimeFunction = net;
        let s = self.residual.s_index;
        let t_final = self.residual.t_final;
        let w = &self.weights;
        let lambda = self.residual.lambda;
        let area = 4.0 * PI * PI;

        // Each family: `vol · mean` of the pointwise values, and seeds for
        // `multiplier · vol · mean`, reduced in point order.
        fn run<P: Sync>(
            points: &[P],
            vol: f64,
            multiplier: f64,
            grad: bool,
            g: impl Fn(&P, Option<&mut Sink>) -> Result<f64> + Sync,
        ) -> Result<(f64, Vec<DerivativeSeed>)> {
            if multiplier == 0.0 {
                return Ok((0.0, Vec::new()));
            }
            let weight = multiplier * vol / points.len() as f64;
            let parts: Vec<(f64, Vec<DerivativeSeed>)> = points
                .par_iter()
                .map(|p| {
                    let mut seeds = Vec::new();
                    let v = if grad {
                        g(p, Some(&mut Sink { seeds: &mut seeds, weight }))?
                    } else {
                        g(p, None)?
                    };
                    Ok((v, seeds))
                })
                .collect::<Result<_>>()?;
            let mut total = 0.0;
            let mut all = Vec::new();
            for (v, seeds) in parts {
                total += v;
                all.extend(seeds);
            }
            Ok((vol * total / points.len() as f64, all))
        }

        let mut comps = SquaredComponents::default();
        let mut seeds = Vec::new();
        let op = &*self.op;

        let vol = t_final * area;
        let (v, sd) = run(&batch.interior, vol, w.interior, grad, |p, sink| {
            let r = pde_residual(op, f, p[0], [p[1], p[2]], sink)?;
            Ok(r * r)
        })?;
        comps.interior = v;
        seeds.extend(sd);

        let n = self.psi0.n();
        let psi0 = &self.psi0;
        let (v, sd) = run(&batch.initial, area, w.initial, grad, |&i, sink| {
            let x: Point2 = psi0.point(i / n, i % n);
            let r = f.eval(0.0, x, [0, 0, 0]) - psi0.values()[i];
            if let Some(s) = sink {
                s.seeds.push(DerivativeSeed {
                    point: [0.0, x[0], x[1]],
                    alpha: [0, 0, 0],
                    weight: s.weight * 2.0 * r,
                });
            }
            Ok(r * r)
        })?;
        comps.initial = v;
        seeds.extend(sd);

        let vol = t_final * TWO_PI;
        let (v, sd) = run(&batch.boundary, vol, w.boundary, grad, |p, mut sink| {
            Ok(boundary_residual(f, s, p[0], Face::X2, p[1], sink.as_deref_mut())?
                + boundary_residual(f, s, p[0], Face::X1, p[1], sink)?)
        })?;
        comps.boundary = v;
        seeds.extend(sd);

        let vol = t_final * 4.0 * area;
        let (v, sd) = run(&batch.periodicity, vol, w.periodicity, grad, |p, sink| {
            periodicity_residual(f, s, p[0], [p[1], p[2]], sink)
        })?;
        comps.periodicity = v;
        seeds.extend(sd);

        let vol = t_final * area;
        let (v, sd) = run(&batch.penalty, vol, w.penalty * lambda, grad, |p, sink| {
            sobolev_density(f, s + 3, p[0], [p[1], p[2]], sink)
        })?;
        comps.penalty = v;
        seeds.extend(sd);

        let gradient = grad.then(|| net.param_gradient(&seeds));
        Ok((comps, gradient))
    }
}

/// One validation record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub step: usize,
    /// Weighted objective on the training batch of this step.
    pub train_objective: f64,
    pub validation: SquaredComponents,
    /// Validation value of the weighted objective, square-rooted.
    pub validation_e_g: f64,
    /// Smallest `validation_e_g` so far.
    pub best_e_g: f64,
}

pub struct TrainOutcome {
    /// Best parameters seen on the validation set.
    pub net: MlpParams,
    pub history: Vec<HistoryRecord>,
    /// Best-seen parameters at each requested checkpoint step.
    pub checkpoints: Vec<(usize, MlpParams)>,
    pub steps: usize,
    pub wall_time: f64,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Runs Adam on the weighted objective from `net0`, resampling the
/// collocation batch every step from the master seed.
pub fn train(net0: MlpParams, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let ctx = LossContext::new(cfg)?;
    let start = Instant::now();
    let seed = cfg.residual.seed;
    let validation = Batch::sample(&mut stream(seed, 0), &cfg.validation, cfg.residual.t_final, cfg.grid);
    let mut net = net0;
    let mut state = AdamState::new(net.len());
    let mut best = net.clone();
    let mut best_e_g = f64::INFINITY;
    let mut history = Vec::new();
    let mut checkpoints = Vec::new();
    for step in 0..=cfg.steps {
        let batch = Batch::sample(
            &mut stream(seed, step as u64 + 1),
            &cfg.residual.collocation,
            cfg.residual.t_final,
            cfg.grid,
        );
        let (comps, grad) = ctx.evaluate(&net, &batch, step < cfg.steps)?;
        let objective = comps.objective(&ctx.weights, ctx.residual.lambda);
        if !objective.is_finite() {
            return Err(Error::Divergence {
                step,
                detail: format!("objective is {objective}"),
            });
        }
        if step % cfg.log_every == 0 || step == cfg.steps {
            let (val, _) = ctx.evaluate(&net, &validation, false)?;
            let e_g = val.objective(&ctx.weights, ctx.residual.lambda).sqrt();
            if e_g < best_e_g {
                best_e_g = e_g;
                best = net.clone();
            }
            history.push(HistoryRecord {
                step,
                train_objective: objective,
                validation: val,
                validation_e_g: e_g,
                best_e_g,
            });
            if cfg.checkpoints.contains(&step) {
                checkpoints.push((step, best.clone()));
            }
        }
        if let Some(g) = grad {
            let adam = AdamConfig {
                lr: cfg.adam.lr * cfg.lr_final_ratio.powf(step as f64 / cfg.steps as f64),
                ..cfg.adam
            };
            adam_step(net.params_mut(), &g, &mut state, &adam).map_err(|e| Error::Divergence {
                step,
                detail: e.to_string(),
            })?;
        }
    }
    Ok(TrainOutcome {
        net: best,
        history,
        checkpoints,
        steps: cfg.steps,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
