//! Functions of `(t, x1, x2)` that residuals can be evaluated on: networks,
//! closed-form solutions, and solver trajectories interpolated in time.

use crate::boxfn::{cos_derivative, BoxFunction, TrigInterpolant, TrigPolynomial};
use crate::net::MlpParams;
use crate::sqg::{SqgSolver, Trajectory};
use crate::{Error, Point2, Result};
use rustfft::num_complex::Complex64;
use std::collections::HashMap;

/// A smooth function of time and space with derivative queries.
/// Multi-indices are `(α_t, α_1, α_2)`.
pub trait SpaceTimeFunction: Send + Sync {
    /// Spatial extent `r`: queries are valid on `[-rπ, rπ]²`.
    fn extent(&self) -> u32;
    fn max_derivative_order(&self) -> u32;
    fn eval(&self, t: f64, x: Point2, alpha: [u32; 3]) -> f64;

    fn eval_many(&self, t: f64, x: Point2, alphas: &[[u32; 3]], out: &mut [f64]) {
        for (o, a) in out.iter_mut().zip(alphas) {
            *o = self.eval(t, x, *a);
        }
    }

    /// Values at points `(t, x1, x2)`.
    fn values_at(&self, points: &[[f64; 3]], out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(points) {
            *o = self.eval(p[0], [p[1], p[2]], [0, 0, 0]);
        }
    }
}

/// `x ↦ f(t, x)` as a [`BoxFunction`].
pub struct TimeSlice<'a> {
    pub f: &'a dyn SpaceTimeFunction,
    pub t: f64,
}

impl BoxFunction for TimeSlice<'_> {
    fn extent(&self) -> u32 {
        self.f.extent()
    }
    fn max_derivative_order(&self) -> u32 {
        self.f.max_derivative_order()
    }
    fn eval_unchecked(&self, x: Point2, alpha: [u32; 2]) -> f64 {
        self.f.eval(self.t, x, [0, alpha[0], alpha[1]])
    }
    fn values_at(&self, points: &[Point2], out: &mut [f64]) {
        let p: Vec<[f64; 3]> = points.iter().map(|x| [self.t, x[0], x[1]]).collect();
        self.f.values_at(&p, out);
    }
    fn value_and_gradient(&self, x: Point2) -> [f64; 3] {
        let mut out = [0.0; 3];
        self.f
            .eval_many(self.t, x, &[[0, 0, 0], [0, 1, 0], [0, 0, 1]], &mut out);
        out
    }
}

/// Networks are defined on all of `R³`; this extent covers every query the
/// residuals make.
const NET_EXTENT: u32 = 1 << 16;

impl SpaceTimeFunction for MlpParams {
    fn extent(&self) -> u32 {
        NET_EXTENT
    }
    fn max_derivative_order(&self) -> u32 {
        MlpParams::max_order(self)
    }
    fn eval(&self, t: f64, x: Point2, alpha: [u32; 3]) -> f64 {
        let order = alpha.iter().sum::<u32>() as usize;
        self.jet([t, x[0], x[1]], order).d(alpha)
    }
    fn eval_many(&self, t: f64, x: Point2, alphas: &[[u32; 3]], out: &mut [f64]) {
        let order = alphas
            .iter()
            .map(|a| a.iter().sum::<u32>() as usize)
            .max()
            .unwrap_or(0);
        let jet = self.jet([t, x[0], x[1]], order);
        for (o, a) in out.iter_mut().zip(alphas) {
            *o = jet.d(*a);
        }
    }
    fn values_at(&self, points: &[[f64; 3]], out: &mut [f64]) {
        out.copy_from_slice(&self.forward_batch(points));
    }
}

/// `Σ a e^{-|k| t} cos(k·x + p)`: the linear evolution of a trigonometric
/// polynomial. It solves the full equation whenever the advection term
/// vanishes, e.g. when all wave vectors share one length.
#[derive(Debug, Clone)]
pub struct DecayingModes {
    pub initial: TrigPolynomial,
}

impl DecayingModes {
    pub fn new(initial: TrigPolynomial) -> Self {
        Self { initial }
    }

    /// `e^{-t}(cos x1 + 0.5 sin x2)`.
    pub fn smoke() -> Self {
        Self::new(TrigPolynomial::new(vec![
            TrigPolynomial::cos(1.0, [1, 0], 0.0),
            TrigPolynomial::cos(0.5, [0, 1], -std::f64::consts::FRAC_PI_2),
        ]))
    }

    /// `e^{-t} cos x1`.
    pub fn cos1() -> Self {
        Self::new(TrigPolynomial::new(vec![TrigPolynomial::cos(1.0, [1, 0], 0.0)]))
    }
}

impl SpaceTimeFunction for DecayingModes {
    fn extent(&self) -> u32 {
        NET_EXTENT
    }
    fn max_derivative_order(&self) -> u32 {
        u32::MAX
    }
    fn eval(&self, t: f64, x: Point2, alpha: [u32; 3]) -> f64 {
        self.initial
            .terms
            .iter()
            .map(|term| {
                let k = [term.k[0] as f64, term.k[1] as f64];
                let rate = -k[0].hypot(k[1]);
                term.amplitude
                    * rate.powi(alpha[0] as i32)
                    * (rate * t).exp()
                    * cos_derivative(k, term.phase, x, [alpha[1], alpha[2]])
            })
            .sum()
    }
}

/// A solver trajectory as a smooth function: trigonometric interpolation in
/// space, cubic Hermite interpolation in time with the solver's own time
/// derivative at each snapshot.
pub struct ReferenceSolution {
    times: Vec<f64>,
    keys: Vec<(i64, i64)>,
    values: Vec<Vec<Complex64>>,
    rates: Vec<Vec<Complex64>>,
    extent: u32,
}

impl ReferenceSolution {
    /// Modes below `rel_cutoff` times the largest coefficient over the whole
    /// trajectory are dropped.
    pub fn new(traj: &Trajectory, solver: &SqgSolver, extent: u32, rel_cutoff: f64) -> Result<Self> {
        if traj.snapshots.len() < 2 {
            return Err(Error::TimeRange("need at least two snapshots".into()));
        }
        let mut value_modes = Vec::new();
        let mut rate_modes = Vec::new();
        for (_, f) in &traj.snapshots {
            value_modes.push(TrigInterpolant::new(f, 1, 0));
            rate_modes.push(TrigInterpolant::new(&solver.rhs(f)?, 1, 0));
        }
        let max = value_modes
            .iter()
            .flat_map(|m| m.modes().iter().map(|c| c.2.norm()))
            .fold(0.0f64, f64::max);
        let mut index: HashMap<(i64, i64), usize> = HashMap::new();
        let mut keys = Vec::new();
        for m in value_modes.iter().chain(&rate_modes) {
            for &(a, b, c) in m.modes() {
                if c.norm() > rel_cutoff * max && !index.contains_key(&(a, b)) {
                    index.insert((a, b), keys.len());
                    keys.push((a, b));
                }
            }
        }
        let gather = |m: &TrigInterpolant| {
            let mut v = vec![Complex64::new(0.0, 0.0); keys.len()];
            for &(a, b, c) in m.modes() {
                if let Some(&i) = index.get(&(a, b)) {
                    v[i] += c;
                }
            }
            v
        };
        Ok(Self {
            times: traj.snapshots.iter().map(|s| s.0).collect(),
            values: value_modes.iter().map(gather).collect(),
            rates: rate_modes.iter().map(gather).collect(),
            keys,
            extent,
        })
    }

    pub fn time_range(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    pub fn mode_count(&self) -> usize {
        self.keys.len()
    }

    /// `∂_t^{α_t}` of the interpolant's coefficients at `t`; `t` is clamped
    /// to the trajectory.
    fn coefficients_at(&self, t: f64, alpha_t: u32) -> Vec<(i64, i64, Complex64)> {
        let last = self.times.len() - 1;
        let t = t.clamp(self.times[0], self.times[last]);
        let i = match self.times.partition_point(|&s| s <= t) {
            0 => 0,
            p => (p - 1).min(last - 1),
        };
        let h = self.times[i + 1] - self.times[i];
        let tau = (t - self.times[i]) / h;
        // Hermite basis as cubic coefficients in τ: h00, h10, h01, h11.
        let basis: [[f64; 4]; 4] = [
            [1.0, 0.0, -3.0, 2.0],
            [0.0, 1.0, -2.0, 1.0],
            [0.0, 0.0, 3.0, -2.0],
            [0.0, 0.0, -1.0, 1.0],
        ];
        let w = basis.map(|mut c| {
            for _ in 0..alpha_t {
                c = [c[1], 2.0 * c[2], 3.0 * c[3], 0.0];
            }
            (c[0] + tau * (c[1] + tau * (c[2] + tau * c[3]))) / h.powi(alpha_t as i32)
        });
        let (a0, b0, a1, b1) = (w[0], w[1] * h, w[2], w[3] * h);
        self.keys
            .iter()
            .enumerate()
            .map(|(k, &(n1, n2))| {
                let c = self.values[i][k] * a0
                    + self.rates[i][k] * b0
                    + self.values[i + 1][k] * a1
                    + self.rates[i + 1][k] * b1;
                (n1, n2, c)
            })
            .collect()
    }

    fn slice(&self, t: f64, alpha_t: u32) -> TrigInterpolant {
        TrigInterpolant::from_modes(self.coefficients_at(t, alpha_t), self.extent, u32::MAX)
    }
}

impl SpaceTimeFunction for ReferenceSolution {
    fn extent(&self) -> u32 {
        self.extent
    }
    fn max_derivative_order(&self) -> u32 {
        u32::MAX
    }
    fn eval(&self, t: f64, x: Point2, alpha: [u32; 3]) -> f64 {
        self.slice(t, alpha[0]).eval_unchecked(x, [alpha[1], alpha[2]])
    }
    fn eval_many(&self, t: f64, x: Point2, alphas: &[[u32; 3]], out: &mut [f64]) {
        let mut cache: Vec<(u32, TrigInterpolant)> = Vec::new();
        for (o, a) in out.iter_mut().zip(alphas) {
            let pos = match cache.iter().position(|c| c.0 == a[0]) {
                Some(p) => p,
                None => {
                    cache.push((a[0], self.slice(t, a[0])));
                    cache.len() - 1
                }
            };
            *o = cache[pos].1.eval_unchecked(x, [a[1], a[2]]);
        }
    }
    fn values_at(&self, points: &[[f64; 3]], out: &mut [f64]) {
        let mut current: Option<(f64, TrigInterpolant)> = None;
        for (o, p) in out.iter_mut().zip(points) {
            if current.as_ref().is_none_or(|c| c.0 != p[0]) {
                current = Some((p[0], self.slice(p[0], 0)));
            }
            *o = current.as_ref().unwrap().1.eval_unchecked([p[1], p[2]], [0, 0]);
        }
    }
}
