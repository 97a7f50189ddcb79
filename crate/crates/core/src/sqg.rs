//! Pseudospectral solver for `∂_t ψ + R^⊥ψ·∇ψ + Λψ = 0` on `T²`.
//!
//! State lives in Fourier space as the unnormalized DFT of the grid values.
//! Products are dealiased by the 2/3 rule (modes with `3|n_i| ≥ N` are
//! removed from both factors and from the product), and the linear term is
//! integrated exactly with the factor `e^{-|n|t}`:
//!
//! ```text
//! E  = e^{-|n| dt/2}
//! k1 = N(u)
//! k2 = N(E (u + dt/2 k1))
//! k3 = N(E u + dt/2 k2)
//! k4 = N(E² u + dt E k3)
//! u' = E² u + dt/6 (E² k1 + 2E (k2 + k3) + k4)
//! ```

use crate::spectral::{wavenumber, Fft2, GridField};
use crate::{Error, Result, TWO_PI};
use rand::{Rng, SeedableRng};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::sync::Arc;

type Spectrum = Vec<Complex64>;

const HISTORY_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub n: usize,
    pub cfl: f64,
    /// Upper limit on the step; the CFL rule may force smaller steps.
    pub dt_max: f64,
    /// Fixed step instead of CFL-adaptive stepping.
    pub dt_fixed: Option<f64>,
    /// Sobolev index of the `H^s` telemetry and of the energy ledger.
    pub s: f64,
    /// Track the per-step energy ledger (costs three extra products per step).
    pub energy_ledger: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n: 256,
            cfl: 0.5,
            dt_max: 0.01,
            dt_fixed: None,
            s: 1.0,
            energy_ledger: false,
        }
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Telemetry {
    pub t: f64,
    pub l2: f64,
    pub h1: f64,
    pub hs: f64,
    /// `‖Λ^{s+1/2}ψ‖²`.
    pub dissipation_rate: f64,
    pub mean: f64,
    /// Energy-ledger residual of the step that ended at `t` (zero for the
    /// initial record or when the ledger is off).
    pub ledger_residual: f64,
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub field: GridField,
    pub time: f64,
    pub dt: f64,
    pub history: VecDeque<Telemetry>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<(f64, GridField)>,
    pub telemetry: Vec<Telemetry>,
    pub steps: usize,
}

impl Trajectory {
    /// Snapshot whose time is within `1e-12` of `t`.
    pub fn at(&self, t: f64) -> Option<&GridField> {
        self.snapshots
            .iter()
            .find(|(s, _)| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
            .map(|(_, f)| f)
    }
}

pub struct SqgSolver {
    config: SolverConfig,
    plan: Arc<Fft2>,
    n1: Vec<f64>,
    n2: Vec<f64>,
    abs_n: Vec<f64>,
    keep: Vec<bool>,
}

impl SqgSolver {
    pub fn new(config: SolverConfig) -> Result<Self> {
        let n = config.n;
        if n < 4 || !n.is_multiple_of(2) {
            return Err(Error::Config(format!("grid size must be even and ≥ 4, got {n}")));
        }
        if !(config.cfl > 0.0 && config.dt_max > 0.0) {
            return Err(Error::Config("cfl and dt_max must be positive".into()));
        }
        let mut n1 = Vec::with_capacity(n * n);
        let mut n2 = Vec::with_capacity(n * n);
        let mut keep = Vec::with_capacity(n * n);
        for j in 0..n {
            for k in 0..n {
                let (a, b) = (wavenumber(j, n), wavenumber(k, n));
                n1.push(a as f64);
                n2.push(b as f64);
                keep.push(3 * a.unsigned_abs() < n as u64 && 3 * b.unsigned_abs() < n as u64);
            }
        }
        let abs_n = n1.iter().zip(&n2).map(|(a, b)| a.hypot(*b)).collect();
        Ok(Self {
            plan: Fft2::get(n),
            config,
            n1,
            n2,
            abs_n,
            keep,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    fn to_spectrum(&self, f: &GridField) -> Result<Spectrum> {
        if f.n() != self.config.n {
            return Err(Error::Config(format!(
                "field has N = {}, solver expects {}",
                f.n(),
                self.config.n
            )));
        }
        Ok(self.plan.forward(f.values()))
    }

    fn to_field(&self, s: &Spectrum) -> GridField {
        GridField::new(self.config.n, self.plan.inverse_real(s.clone()))
            .expect("solver grid is valid")
            .project_mean_zero()
    }

    fn physical(&self, s: &Spectrum, m: impl Fn(usize) -> Complex64) -> Vec<f64> {
        let spec: Spectrum = s
            .iter()
            .enumerate()
            .map(|(i, c)| if self.keep[i] { c * m(i) } else { Complex64::new(0.0, 0.0) })
            .collect();
        self.plan.inverse_real(spec)
    }

    /// `P(R^⊥a · ∇b)`, dealiased.
    fn advect(&self, a: &Spectrum, b: &Spectrum) -> Spectrum {
        let i = Complex64::new(0.0, 1.0);
        let riesz = |i_: usize, along: &[f64]| {
            if self.abs_n[i_] == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                i * (along[i_] / self.abs_n[i_])
            }
        };
        let u1 = self.physical(a, |k| -riesz(k, &self.n2));
        let u2 = self.physical(a, |k| riesz(k, &self.n1));
        let g1 = self.physical(b, |k| i * self.n1[k]);
        let g2 = self.physical(b, |k| i * self.n2[k]);
        let prod: Vec<f64> = (0..u1.len())
            .map(|k| u1[k] * g1[k] + u2[k] * g2[k])
            .collect();
        let mut out = self.plan.forward(&prod);
        for (k, c) in out.iter_mut().enumerate() {
            if !self.keep[k] || k == 0 {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        out
    }

    fn nonlinear(&self, u: &Spectrum) -> Spectrum {
        let mut b = self.advect(u, u);
        b.iter_mut().for_each(|c| *c = -*c);
        b
    }

    /// `-P(R^⊥ψ·∇ψ) - Λψ`.
    pub fn rhs(&self, psi: &GridField) -> Result<GridField> {
        require_mean_zero(psi)?;
        let u = self.to_spectrum(psi)?;
        let mut r = self.nonlinear(&u);
        for (k, c) in r.iter_mut().enumerate() {
            *c -= u[k] * self.abs_n[k];
        }
        Ok(self.to_field(&r))
    }

    /// The advective part `-P(R^⊥ψ·∇ψ)` alone.
    pub fn advection(&self, psi: &GridField) -> Result<GridField> {
        let u = self.to_spectrum(psi)?;
        Ok(self.to_field(&self.nonlinear(&u)))
    }

    /// Largest `|R^⊥ψ|` on the grid.
    fn max_velocity(&self, u: &Spectrum) -> f64 {
        let i = Complex64::new(0.0, 1.0);
        let m = |along: &Vec<f64>, k: usize| {
            if self.abs_n[k] == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                i * (along[k] / self.abs_n[k])
            }
        };
        let u1 = self.physical(u, |k| m(&self.n2, k));
        let u2 = self.physical(u, |k| m(&self.n1, k));
        u1.iter()
            .zip(&u2)
            .fold(0.0f64, |acc, (a, b)| acc.max(a.hypot(*b)))
    }

    /// `cfl·Δx / max|u|` (infinite for a motionless field).
    pub fn cfl_limit(&self, psi: &GridField) -> Result<f64> {
        let u = self.to_spectrum(psi)?;
        Ok(self.cfl_limit_spec(&u))
    }

    fn cfl_limit_spec(&self, u: &Spectrum) -> f64 {
        let vmax = self.max_velocity(u);
        let dx = TWO_PI / self.config.n as f64;
        if vmax == 0.0 {
            f64::INFINITY
        } else {
            self.config.cfl * dx / vmax
        }
    }

    fn rk4(&self, u: &Spectrum, dt: f64) -> Spectrum {
        let e: Vec<f64> = self.abs_n.iter().map(|a| (-a * dt / 2.0).exp()).collect();
        let len = u.len();
        let h = dt / 2.0;
        let k1 = self.nonlinear(u);
        let s2: Spectrum = (0..len).map(|k| (u[k] + k1[k] * h) * e[k]).collect();
        let k2 = self.nonlinear(&s2);
        let s3: Spectrum = (0..len).map(|k| u[k] * e[k] + k2[k] * h).collect();
        let k3 = self.nonlinear(&s3);
        let s4: Spectrum = (0..len)
            .map(|k| u[k] * (e[k] * e[k]) + k3[k] * (dt * e[k]))
            .collect();
        let k4 = self.nonlinear(&s4);
        (0..len)
            .map(|k| {
                let e2 = e[k] * e[k];
                let mut v = u[k] * e2
                    + (k1[k] * e2 + (k2[k] + k3[k]) * (2.0 * e[k]) + k4[k]) * (dt / 6.0);
                if !self.keep[k] || k == 0 {
                    v = Complex64::new(0.0, 0.0);
                }
                v
            })
            .collect()
    }

    fn check_dt(&self, u: &Spectrum, dt: f64) -> Result<()> {
        let limit = self.cfl_limit_spec(u);
        if !(dt > 0.0) || dt > limit {
            return Err(Error::StepSize { dt, limit });
        }
        Ok(())
    }

    /// One integrating-factor RK4 step of size `dt`.
    pub fn step(&self, state: &SolverState, dt: f64) -> Result<SolverState> {
        require_mean_zero(&state.field)?;
        let u = self.to_spectrum(&state.field)?;
        self.check_dt(&u, dt)?;
        let next = self.rk4(&u, dt);
        let residual = if self.config.energy_ledger {
            self.ledger_residual(&u, &next, dt)
        } else {
            0.0
        };
        let mut history = state.history.clone();
        push_capped(&mut history, self.telemetry(&next, state.time + dt, residual));
        Ok(SolverState {
            field: self.to_field(&next),
            time: state.time + dt,
            dt,
            history,
        })
    }

    pub fn initial_state(&self, psi0: &GridField) -> Result<SolverState> {
        require_mean_zero(psi0)?;
        let u = self.to_spectrum(psi0)?;
        let mut history = VecDeque::new();
        history.push_back(self.telemetry(&u, 0.0, 0.0));
        Ok(SolverState {
            field: psi0.clone(),
            time: 0.0,
            dt: 0.0,
            history,
        })
    }

    /// Integrates to `t_final`, recording snapshots at every multiple of
    /// `out_every` (and at `t_final`) and telemetry at every step.
    pub fn solve(&self, psi0: &GridField, t_final: f64, out_every: f64) -> Result<Trajectory> {
        require_mean_zero(psi0)?;
        if !(t_final >= 0.0 && out_every > 0.0) {
            return Err(Error::Config("final time and output interval must be positive".into()));
        }
        let mut u = self.to_spectrum(psi0)?;
        for (k, c) in u.iter_mut().enumerate() {
            if !self.keep[k] || k == 0 {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        let mut outputs = Vec::new();
        let mut k = 1usize;
        while (k as f64) * out_every < t_final * (1.0 - 1e-12) {
            outputs.push(k as f64 * out_every);
            k += 1;
        }
        outputs.push(t_final);

        let mut t = 0.0;
        let mut steps = 0usize;
        let mut telemetry = vec![self.telemetry(&u, 0.0, 0.0)];
        let mut snapshots = vec![(0.0, self.to_field(&u))];
        for &target in &outputs {
            while t < target * (1.0 - 1e-14) - 1e-300 {
                let remaining = target - t;
                let dt = match self.config.dt_fixed {
                    Some(h) => {
                        if remaining < h * (1.0 + 1e-9) {
                            remaining
                        } else {
                            h
                        }
                    }
                    None => {
                        let limit = 0.999 * self.cfl_limit_spec(&u);
                        let h = self.config.dt_max.min(limit);
                        // land on the output time without a sliver step
                        let count = (remaining / h).ceil().max(1.0);
                        remaining / count
                    }
                };
                self.check_dt(&u, dt)?;
                let next = self.rk4(&u, dt);
                let residual = if self.config.energy_ledger {
                    self.ledger_residual(&u, &next, dt)
                } else {
                    0.0
                };
                if next.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                    return Err(Error::Divergence {
                        step: steps,
                        detail: format!("non-finite field at t = {}", t + dt),
                    });
                }
                u = next;
                t = if (t + dt - target).abs() <= 1e-12 * target.max(1.0) {
                    target
                } else {
                    t + dt
                };
                steps += 1;
                telemetry.push(self.telemetry(&u, t, residual));
            }
            snapshots.push((target, self.to_field(&u)));
        }
        Ok(Trajectory {
            snapshots,
            telemetry,
            steps,
        })
    }

    // Parseval on unnormalized DFT values.
    fn weighted_norm_sq(&self, u: &Spectrum, w: impl Fn(usize) -> f64) -> f64 {
        let n4 = (self.config.n as f64).powi(4);
        TWO_PI * TWO_PI * u.iter().enumerate().map(|(k, c)| w(k) * c.norm_sqr()).sum::<f64>() / n4
    }

    fn inner(&self, a: &Spectrum, b: &Spectrum, w: impl Fn(usize) -> f64) -> f64 {
        let n4 = (self.config.n as f64).powi(4);
        TWO_PI * TWO_PI
            * a.iter()
                .zip(b)
                .enumerate()
                .map(|(k, (x, y))| w(k) * (x.conj() * y).re)
                .sum::<f64>()
            / n4
    }

    fn lam_pow(&self, k: usize, p: f64) -> f64 {
        if self.abs_n[k] == 0.0 {
            0.0
        } else {
            self.abs_n[k].powf(p)
        }
    }

    fn telemetry(&self, u: &Spectrum, t: f64, ledger_residual: f64) -> Telemetry {
        let s = self.config.s;
        let r2 = |k: usize| self.abs_n[k] * self.abs_n[k];
        Telemetry {
            t,
            l2: self.weighted_norm_sq(u, |_| 1.0).sqrt(),
            h1: self.weighted_norm_sq(u, |k| 1.0 + r2(k)).sqrt(),
            hs: self.weighted_norm_sq(u, |k| (1.0 + r2(k)).powf(s)).sqrt(),
            dissipation_rate: self.weighted_norm_sq(u, |k| self.lam_pow(k, 2.0 * s + 1.0)),
            mean: u[0].re / (self.config.n * self.config.n) as f64,
            ledger_residual,
        }
    }

    /// `½‖Λ^sψ‖²`.
    pub fn energy(&self, u: &Spectrum) -> f64 {
        0.5 * self.weighted_norm_sq(u, |k| self.lam_pow(k, 2.0 * self.config.s))
    }

    /// `(D, dD/dt)` with `d/dt ½‖Λ^sψ‖² = -D`, exact for the semi-discrete
    /// system.
    fn dissipation_and_rate(&self, u: &Spectrum) -> (f64, f64) {
        let s = self.config.s;
        let b = self.advect(u, u);
        let ut: Spectrum = (0..u.len()).map(|k| -b[k] - u[k] * self.abs_n[k]).collect();
        let w2s = |k: usize| self.lam_pow(k, 2.0 * s);
        let d = self.weighted_norm_sq(u, |k| self.lam_pow(k, 2.0 * s + 1.0)) + self.inner(u, &b, w2s);
        let b1 = self.advect(&ut, u);
        let b2 = self.advect(u, &ut);
        let cross: Spectrum = b1.iter().zip(&b2).map(|(x, y)| x + y).collect();
        let dd = 2.0 * self.inner(u, &ut, |k| self.lam_pow(k, 2.0 * s + 1.0))
            + self.inner(&ut, &b, w2s)
            + self.inner(u, &cross, w2s);
        (d, dd)
    }

    /// `E1 - E0 + dt/2 (D0 + D1) + dt²/12 (D0' - D1')`; the trapezoid rule
    /// with endpoint correction makes this `O(dt⁵)` for a fourth-order step.
    fn ledger_residual(&self, u0: &Spectrum, u1: &Spectrum, dt: f64) -> f64 {
        let (d0, dd0) = self.dissipation_and_rate(u0);
        let (d1, dd1) = self.dissipation_and_rate(u1);
        self.energy(u1) - self.energy(u0) + dt / 2.0 * (d0 + d1) + dt * dt / 12.0 * (dd0 - dd1)
    }

    /// Energy-ledger residual of a single step of size `dt` from `psi`.
    pub fn ledger_step(&self, psi: &GridField, dt: f64) -> Result<f64> {
        let u = self.to_spectrum(psi)?;
        self.check_dt(&u, dt)?;
        Ok(self.ledger_residual(&u, &self.rk4(&u, dt), dt))
    }
}

fn push_capped(h: &mut VecDeque<Telemetry>, t: Telemetry) {
    if h.len() == HISTORY_CAP {
        h.pop_front();
    }
    h.push_back(t);
}

fn require_mean_zero(f: &GridField) -> Result<()> {
    if f.mean().abs() > 1e-10 * f.max_abs().max(1e-300) && f.mean().abs() > 1e-14 {
        return Err(Error::Invertibility(format!(
            "SQG data must have zero mean, got {:e}",
            f.mean()
        )));
    }
    Ok(())
}

/// Named initial data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    /// `cos(x1)`, an exact decaying solution.
    Cos1,
    /// `cos(x1) + 0.5 sin(x2)`.
    Smoke,
    /// Band-limited random field with prescribed `H¹` norm.
    Random { seed: u64, kmax: u32, h1_norm: f64 },
}

impl InitialData {
    pub fn parse_preset(name: &str) -> Option<Self> {
        match name {
            "cos1" => Some(Self::Cos1),
            "smoke" => Some(Self::Smoke),
            "random" => Some(Self::Random {
                seed: 7,
                kmax: 6,
                h1_norm: 2.0,
            }),
            _ => None,
        }
    }

    pub fn sample(&self, n: usize) -> Result<GridField> {
        match self {
            Self::Cos1 => GridField::from_fn(n, |x, _| x.cos()),
            Self::Smoke => GridField::from_fn(n, |x, y| x.cos() + 0.5 * y.sin()),
            Self::Random { seed, kmax, h1_norm } => random_field(n, *seed, *kmax, *h1_norm),
        }
        .map(GridField::project_mean_zero)
    }
}

/// `Σ a_n cos(n·x) + b_n sin(n·x)` over `0 < |n|_∞ ≤ kmax` with amplitudes
/// decaying like `|n|^-2`, scaled to the requested `H¹` norm.
pub fn random_field(n: usize, seed: u64, kmax: u32, h1_norm: f64) -> Result<GridField> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let k = kmax as i64;
    let mut modes = Vec::new();
    for n1 in 0..=k {
        for n2 in -k..=k {
            if n1 == 0 && n2 <= 0 {
                continue;
            }
            let r2 = (n1 * n1 + n2 * n2) as f64;
            let a = rng.random_range(-1.0..1.0) / r2;
            let b = rng.random_range(-1.0..1.0) / r2;
            modes.push((n1 as f64, n2 as f64, a, b));
        }
    }
    let f = GridField::from_fn(n, |x, y| {
        modes
            .iter()
            .map(|&(p, q, a, b)| {
                let (s, c) = (p * x + q * y).sin_cos();
                a * c + b * s
            })
            .sum()
    })?;
    let norm = crate::spectral::sobolev_norm(&f, 1.0);
    Ok(f.map(|v| v * h1_norm / norm))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solver(n: usize, dt: Option<f64>) -> SqgSolver {
        SqgSolver::new(SolverConfig {
            n,
            dt_fixed: dt,
            dt_max: 0.05,
            ..SolverConfig::default()
        })
        .unwrap()
    }

    fn max_diff(a: &GridField, b: &GridField) -> f64 {
        a.values()
            .iter()
            .zip(b.values())
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn rhs_of_cosine_is_pure_decay() {
        let s = solver(32, None);
        let f = InitialData::Cos1.sample(32).unwrap();
        let r = s.rhs(&f).unwrap();
        assert!(max_diff(&r, &f.map(|v| -v)) < 1e-13);
        assert!(s.rhs(&GridField::zeros(32).unwrap()).unwrap().max_abs() == 0.0);
        let bad = GridField::from_fn(32, |x, _| 1.0 + x.cos()).unwrap();
        assert!(s.rhs(&bad).is_err());
    }

    #[test]
    fn advection_is_skew() {
        let s = solver(32, None);
        let f = random_field(32, 3, 5, 1.0).unwrap().project_mean_zero();
        let a = s.advection(&f).unwrap();
        assert!(f.inner(&a).abs() < 1e-10);
    }

    #[test]
    fn eigenmode_decays_exactly() {
        let s = solver(32, Some(0.05));
        let f = InitialData::Cos1.sample(32).unwrap();
        let traj = s.solve(&f, 1.0, 0.5).unwrap();
        let want = f.map(|v| v * (-1.0f64).exp());
        assert!(max_diff(traj.at(1.0).unwrap(), &want) < 1e-12);
    }

    #[test]
    fn cfl_violation_is_reported() {
        let s = solver(32, None);
        let f = random_field(32, 1, 4, 50.0).unwrap();
        let st = s.initial_state(&f).unwrap();
        let limit = s.cfl_limit(&f).unwrap();
        assert!(matches!(s.step(&st, 2.0 * limit), Err(Error::StepSize { .. })));
        assert!(s.step(&st, 0.5 * limit).is_ok());
    }

    #[test]
    fn zero_stays_zero() {
        let s = solver(16, Some(0.1));
        let z = GridField::zeros(16).unwrap();
        let tr = s.solve(&z, 0.5, 0.25).unwrap();
        assert_eq!(tr.at(0.5).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn random_field_has_requested_norm() {
        let f = random_field(32, 9, 4, 3.0).unwrap();
        assert!((crate::spectral::sobolev_norm(&f, 1.0) - 3.0).abs() < 1e-12);
        assert!(f.mean().abs() < 1e-14);
    }
}
