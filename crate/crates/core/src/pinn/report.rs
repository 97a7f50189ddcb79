//! Generalization error, total error and the a posteriori bound relating them.

use super::function::{SpaceTimeFunction, TimeSlice};
use super::residuals::{boundary_residual, pde_residual, periodicity_residual, sobolev_density, Face};
use super::ResidualConfig;
use crate::boxfn::BoxFunction;
use crate::gauss::gauss_legendre_on;
use crate::kernels::PeriodizedKernel;
use crate::nonlocal::NonlocalOperator;
use crate::quadrature::QuadratureConfig;
use crate::spectral::{sobolev_norm, GridField};
use crate::sqg::Trajectory;
use crate::{Error, Point2, Result, PI, TWO_PI};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Components of the generalization error and the total error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub s_index: u32,
    pub e_g_i: f64,
    pub e_g_t: f64,
    pub e_g_b: f64,
    pub e_g_per: f64,
    pub e_g_p: f64,
    pub e_g: f64,
    pub e_total: Option<f64>,
    pub lambda: f64,
    pub wall_time: f64,
    pub step_count: usize,
}

impl ErrorReport {
    /// Root-sum-square assembly `E_G² = E_i² + E_t² + E_b² + E_per² + λE_p²`.
    pub fn assemble(s_index: u32, lambda: f64, parts: [f64; 5]) -> Self {
        let [i, t, b, per, p] = parts;
        Self {
            s_index,
            e_g_i: i,
            e_g_t: t,
            e_g_b: b,
            e_g_per: per,
            e_g_p: p,
            e_g: (i * i + t * t + b * b + per * per + lambda * p * p).sqrt(),
            e_total: None,
            lambda,
            wall_time: 0.0,
            step_count: 0,
        }
    }

    /// Relative defect of the root-sum-square identity.
    pub fn rss_defect(&self) -> f64 {
        let sum = self.e_g_i.powi(2)
            + self.e_g_t.powi(2)
            + self.e_g_b.powi(2)
            + self.e_g_per.powi(2)
            + self.lambda * self.e_g_p.powi(2);
        (self.e_g * self.e_g - sum).abs() / sum.max(f64::MIN_POSITIVE)
    }
}

/// Deterministic quadrature used for reported errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Gauss nodes in time.
    pub time_nodes: usize,
    /// Gauss nodes per axis on `T²` for the PDE residual and the penalty.
    pub space_nodes: usize,
    /// Gauss nodes along each face.
    pub face_nodes: usize,
    /// Gauss nodes per axis on `2T²` for the periodicity residual.
    pub shift_nodes: usize,
    /// Grid size for `H^s` norms of the PDE residual when `s > 0`.
    pub residual_grid: usize,
    pub quadrature: QuadratureConfig,
    pub truncation_radius: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            time_nodes: 4,
            space_nodes: 16,
            face_nodes: 24,
            shift_nodes: 32,
            residual_grid: 16,
            quadrature: QuadratureConfig::default(),
            truncation_radius: 64,
        }
    }
}

impl ReportConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("time_nodes", self.time_nodes),
            ("space_nodes", self.space_nodes),
            ("face_nodes", self.face_nodes),
            ("shift_nodes", self.shift_nodes),
            ("residual_grid", self.residual_grid),
            ("truncation_radius", self.truncation_radius),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        self.quadrature.validate()
    }
}

fn square_rule(n: usize, half: f64) -> Vec<(Point2, f64)> {
    let (x, w) = gauss_legendre_on(n, -half, half);
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(([x[i], x[j]], w[i] * w[j]));
        }
    }
    out
}

/// Sum of `w · g(t, x)` over a product rule, in a fixed order.
fn integrate(
    times: &(Vec<f64>, Vec<f64>),
    space: &[(Point2, f64)],
    g: impl Fn(f64, Point2) -> Result<f64> + Sync,
) -> Result<f64> {
    let mut jobs = Vec::with_capacity(times.0.len() * space.len());
    for (t, wt) in times.0.iter().zip(&times.1) {
        for (x, wx) in space {
            jobs.push((*t, *x, wt * wx));
        }
    }
    let parts: Vec<f64> = jobs
        .par_iter()
        .map(|&(t, x, w)| g(t, x).map(|v| w * v))
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum())
}

/// `E_t = ‖ψ(0) − ψ₀‖_{H^s}` from samples on the grid of `psi0`.
pub fn initial_residual_norm(f: &dyn SpaceTimeFunction, psi0: &GridField, s: u32) -> Result<f64> {
    let n = psi0.n();
    let points: Vec<[f64; 3]> = (0..n * n)
        .map(|i| {
            let x = psi0.point(i / n, i % n);
            [0.0, x[0], x[1]]
        })
        .collect();
    let mut vals = vec![0.0; points.len()];
    f.values_at(&points, &mut vals);
    for (v, p) in vals.iter_mut().zip(psi0.values()) {
        *v -= p;
    }
    Ok(sobolev_norm(&GridField::new(n, vals)?, s as f64))
}

/// `(∫₀ᵀ ‖ℛ_i(t)‖²_{H^s} dt)^{1/2}`.
pub fn interior_error(op: &NonlocalOperator, f: &dyn SpaceTimeFunction, s: u32, t_final: f64, rc: &ReportConfig) -> Result<f64> {
    let times = gauss_legendre_on(rc.time_nodes, 0.0, t_final);
    if s == 0 {
        let space = square_rule(rc.space_nodes, PI);
        return Ok(integrate(&times, &space, |t, x| {
            pde_residual(op, f, t, x, None).map(|r| r * r)
        })?
        .sqrt());
    }
    let n = rc.residual_grid;
    let mut total = 0.0;
    for (t, wt) in times.0.iter().zip(&times.1) {
        let vals: Vec<f64> = (0..n * n)
            .into_par_iter()
            .map(|i| {
                let x = [crate::spectral::grid_coord(i / n, n), crate::spectral::grid_coord(i % n, n)];
                pde_residual(op, f, *t, x, None)
            })
            .collect::<Result<_>>()?;
        total += wt * sobolev_norm(&GridField::new(n, vals)?, s as f64).powi(2);
    }
    Ok(total.sqrt())
}

/// `(∫₀ᵀ ∫ ℛ_{b,1} dx1 + ∫ ℛ_{b,2} dx2 dt)^{1/2}`.
pub fn boundary_error(f: &dyn SpaceTimeFunction, s: u32, t_final: f64, rc: &ReportConfig) -> Result<f64> {
    let times = gauss_legendre_on(rc.time_nodes, 0.0, t_final);
    let (u, w) = gauss_legendre_on(rc.face_nodes, -PI, PI);
    let line: Vec<(Point2, f64)> = u.iter().zip(&w).map(|(u, w)| ([*u, 0.0], *w)).collect();
    Ok(integrate(&times, &line, |t, x| {
        Ok(boundary_residual(f, s, t, Face::X2, x[0], None)? + boundary_residual(f, s, t, Face::X1, x[0], None)?)
    })?
    .sqrt())
}

/// `(∫₀ᵀ ∫_{2T²} ℛ_per dx dt)^{1/2}`.
pub fn periodicity_error(f: &dyn SpaceTimeFunction, s: u32, t_final: f64, rc: &ReportConfig) -> Result<f64> {
    let times = gauss_legendre_on(rc.time_nodes, 0.0, t_final);
    let space = square_rule(rc.shift_nodes, TWO_PI);
    Ok(integrate(&times, &space, |t, x| periodicity_residual(f, s, t, x, None))?.sqrt())
}

/// `(∫₀ᵀ ‖ψ(t)‖²_{H^k} dt)^{1/2}` from exact derivatives.
pub fn penalty_norm(f: &dyn SpaceTimeFunction, k: u32, t_final: f64, rc: &ReportConfig) -> Result<f64> {
    let times = gauss_legendre_on(rc.time_nodes, 0.0, t_final);
    let space = square_rule(rc.space_nodes, PI);
    Ok(integrate(&times, &space, |t, x| sobolev_density(f, k, t, x, None))?.sqrt())
}

/// All components of the generalization error at full resolution.
pub fn generalization_error(
    f: &dyn SpaceTimeFunction,
    psi0: &GridField,
    cfg: &ResidualConfig,
    rc: &ReportConfig,
) -> Result<ErrorReport> {
    cfg.validate()?;
    rc.validate()?;
    let op = NonlocalOperator::cached(&rc.quadrature, PeriodizedKernel::new(rc.truncation_radius))?;
    let s = cfg.s_index;
    let t = cfg.t_final;
    let parts = [
        interior_error(&op, f, s, t, rc)?,
        initial_residual_norm(f, psi0, s)?,
        boundary_error(f, s, t, rc)?,
        periodicity_error(f, s, t, rc)?,
        penalty_norm(f, s + 3, t, rc)?,
    ];
    Ok(ErrorReport::assemble(s, cfg.lambda, parts))
}

/// `(∫₀ᵀ ‖ψ(t) − f(t)‖²_{H^s} dt)^{1/2}` against a trajectory, `f` sampled
/// on the trajectory's grid at each snapshot, trapezoid rule in time.
pub fn total_error(f: &dyn SpaceTimeFunction, reference: &Trajectory, s: u32, t_final: f64) -> Result<f64> {
    let snaps: Vec<&(f64, GridField)> = reference
        .snapshots
        .iter()
        .filter(|(t, _)| *t <= t_final * (1.0 + 1e-12))
        .collect();
    let covers = snaps.first().is_some_and(|s| s.0 == 0.0)
        && snaps.last().is_some_and(|s| (s.0 - t_final).abs() <= 1e-12 * t_final.max(1.0));
    if !covers || snaps.len() < 2 {
        return Err(Error::TimeRange(format!(
            "reference does not have snapshots at 0 and {t_final}"
        )));
    }
    let sq: Vec<f64> = snaps
        .iter()
        .map(|(t, psi)| {
            let slice = TimeSlice { f, t: *t };
            let n = psi.n();
            let pts: Vec<Point2> = (0..n * n).map(|i| psi.point(i / n, i % n)).collect();
            let mut vals = vec![0.0; pts.len()];
            slice.values_at(&pts, &mut vals);
            let diff: Vec<f64> = psi.values().iter().zip(&vals).map(|(a, b)| a - b).collect();
            Ok(sobolev_norm(&GridField::new(n, diff)?, s as f64).powi(2))
        })
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    for k in 1..snaps.len() {
        total += 0.5 * (snaps[k].0 - snaps[k - 1].0) * (sq[k] + sq[k - 1]);
    }
    Ok(total.sqrt())
}

/// Outcome of testing `E² ≤ C·E_G²·(1 + 1/√λ)·exp(C + E_G/√λ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundVerdict {
    pub holds: bool,
    /// Smallest constant for which the bound holds; `None` when no finite
    /// constant works (`E_G = 0 < E`).
    pub c_min: Option<f64>,
    /// Right-hand side at the tested constant.
    pub rhs: f64,
}

/// Right-hand side of the bound.
pub fn bound_rhs(e_g: f64, lambda: f64, c: f64) -> f64 {
    let sl = lambda.sqrt();
    c * e_g * e_g * (1.0 + 1.0 / sl) * (c + e_g / sl).exp()
}

/// Smallest `C` with `E² ≤ bound_rhs(E_G, λ, C)`.
pub fn minimal_constant(e: f64, e_g: f64, lambda: f64) -> Option<f64> {
    if e == 0.0 {
        return Some(0.0);
    }
    if e_g == 0.0 {
        return None;
    }
    let sl = lambda.sqrt();
    // log C + C = r, with the left side increasing in C
    let r = 2.0 * e.ln() - 2.0 * e_g.ln() - (1.0 + 1.0 / sl).ln() - e_g / sl;
    let h = |u: f64| u + u.exp() - r;
    let mut hi = r.max(1.0);
    let mut lo = r.min(0.0) - 1.0;
    while h(lo) > 0.0 {
        lo = 2.0 * lo - 1.0;
    }
    while h(hi) < 0.0 {
        hi = 2.0 * hi + 1.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi.exp())
}

pub fn bound_check(e: f64, e_g: f64, lambda: f64, c: f64) -> BoundVerdict {
    let rhs = bound_rhs(e_g, lambda, c);
    BoundVerdict {
        holds: e * e <= rhs,
        c_min: minimal_constant(e, e_g, lambda),
        rhs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pinn::function::DecayingModes;
    use crate::sqg::{InitialData, SolverConfig, SqgSolver};

    #[test]
    fn rss_assembly() {
        let r = ErrorReport::assemble(0, 4.0, [1.0, 1.0, 1.0, 1.0, 1.0]);
        assert!((r.e_g - 8f64.sqrt()).abs() < 1e-15);
        let r = ErrorReport::assemble(0, 1e-3, [0.0, 0.7, 0.0, 0.0, 0.0]);
        assert_eq!(r.e_g, 0.7);
        assert!(r.rss_defect() < 1e-15);
    }

    #[test]
    fn minimal_constant_solves_the_bound() {
        for (e, eg, l) in [(1.0, 0.1, 1e-3), (0.01, 0.5, 1e-4), (3.0, 2.0, 1.0), (1e-6, 1e-3, 1e-2)] {
            let c = minimal_constant(e, eg, l).unwrap();
            assert!((bound_rhs(eg, l, c) / (e * e) - 1.0).abs() < 1e-10, "{e} {eg} {l} {c}");
            assert!(bound_check(e, eg, l, c * 1.001).holds);
            assert!(!bound_check(e, eg, l, c * 0.999).holds);
        }
        assert_eq!(minimal_constant(0.0, 0.3, 1e-3), Some(0.0));
        assert!(bound_check(0.0, 0.3, 1e-3, 0.0).holds);
        assert_eq!(minimal_constant(0.2, 0.0, 1e-3), None);
        assert!(!bound_check(0.2, 0.0, 1e-3, 10.0).holds);
    }

    #[test]
    fn exact_solution_has_small_generalization_error() {
        let f = DecayingModes::smoke();
        let psi0 = InitialData::Smoke.sample(32).unwrap();
        let cfg = ResidualConfig {
            t_final: 0.5,
            ..Default::default()
        };
        let rc = ReportConfig {
            space_nodes: 12,
            time_nodes: 8,
            shift_nodes: 8,
            ..Default::default()
        };
        let r = generalization_error(&f, &psi0, &cfg, &rc).unwrap();
        assert!(r.e_g_i < 1e-8 && r.e_g_t < 1e-12 && r.e_g_b < 1e-12 && r.e_g_per < 1e-10, "{r:?}");
        // ‖ψ(t)‖²_{H³} = 8·(2π² + π²/2)e^{-2t}
        let expect = (8.0 * 2.5 * PI * PI * (1.0 - (-1.0f64).exp()) / 2.0).sqrt();
        assert!((r.e_g_p - expect).abs() < 1e-9 * expect, "{} {expect}", r.e_g_p);
    }

    #[test]
    fn total_error_against_decaying_cosine() {
        struct Zero;
        impl SpaceTimeFunction for Zero {
            fn extent(&self) -> u32 {
                8
            }
            fn max_derivative_order(&self) -> u32 {
                4
            }
            fn eval(&self, _: f64, _: Point2, _: [u32; 3]) -> f64 {
                0.0
            }
        }
        let solver = SqgSolver::new(SolverConfig { n: 16, dt_fixed: Some(0.01), ..Default::default() }).unwrap();
        let psi0 = InitialData::Cos1.sample(16).unwrap();
        let t: f64 = 0.5;
        let exact = (PI * PI * (1.0 - (-2.0 * t).exp())).sqrt();
        let coarse = total_error(&Zero, &solver.solve(&psi0, t, 0.05).unwrap(), 0, t).unwrap();
        let fine = total_error(&Zero, &solver.solve(&psi0, t, 0.025).unwrap(), 0, t).unwrap();
        assert!((coarse - exact).abs() < 1e-3 * exact);
        assert!((coarse - fine).abs() < 1e-2 * fine);
        let traj = solver.solve(&psi0, t, 0.05).unwrap();
        assert!(total_error(&DecayingModes::cos1(), &traj, 1, t).unwrap() < 1e-8);
        assert!(matches!(total_error(&Zero, &traj, 0, 0.73), Err(Error::TimeRange(_))));
    }
}
