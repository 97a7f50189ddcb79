//! Functions on extended boxes `nT² = [-nπ, nπ]²` with exact partial
//! derivatives up to a declared order.

use crate::gauss::composite_gauss;
use crate::spectral::{self, GridField};
use crate::{Error, Point2, Result, PI};
use rustfft::num_complex::Complex64;
use std::sync::Arc;

pub trait BoxFunction: Send + Sync {
    /// `n` such that the function lives on `[-nπ, nπ]²`.
    fn extent(&self) -> u32;

    fn max_derivative_order(&self) -> u32;

    /// `∂^α f(x)` without domain or order checks.
    fn eval_unchecked(&self, x: Point2, alpha: [u32; 2]) -> f64;

    fn eval(&self, x: Point2, alpha: [u32; 2]) -> Result<f64> {
        check_query(self.extent(), self.max_derivative_order(), x, alpha)?;
        Ok(self.eval_unchecked(x, alpha))
    }

    /// Values at many points; points are assumed to be inside the box.
    fn values_at(&self, points: &[Point2], out: &mut [f64]) {
        for (o, &p) in out.iter_mut().zip(points) {
            *o = self.eval_unchecked(p, [0, 0]);
        }
    }

    /// `(f, ∂₁f, ∂₂f)` at `x`.
    fn value_and_gradient(&self, x: Point2) -> [f64; 3] {
        [
            self.eval_unchecked(x, [0, 0]),
            self.eval_unchecked(x, [1, 0]),
            self.eval_unchecked(x, [0, 1]),
        ]
    }
}

pub fn check_query(extent: u32, max_order: u32, x: Point2, alpha: [u32; 2]) -> Result<()> {
    if alpha[0] + alpha[1] > max_order {
        return Err(Error::Capability(format!(
            "derivative order {} exceeds supported order {max_order}",
            alpha[0] + alpha[1]
        )));
    }
    check_extent(extent, x)
}

pub fn check_extent(extent: u32, x: Point2) -> Result<()> {
    let half = extent as f64 * PI * (1.0 + 1e-13);
    if !(x[0].abs() <= half && x[1].abs() <= half) {
        return Err(Error::Domain(format!(
            "point ({}, {}) outside {extent}T²",
            x[0], x[1]
        )));
    }
    Ok(())
}

impl<F: BoxFunction + ?Sized> BoxFunction for Arc<F> {
    fn extent(&self) -> u32 {
        (**self).extent()
    }
    fn max_derivative_order(&self) -> u32 {
        (**self).max_derivative_order()
    }
    fn eval_unchecked(&self, x: Point2, alpha: [u32; 2]) -> f64 {
        (**self).eval_unchecked(x, alpha)
    }
    fn values_at(&self, points: &[Point2], out: &mut [f64]) {
        (**self).values_at(points, out)
    }
    fn value_and_gradient(&self, x: Point2) -> [f64; 3] {
        (**self).value_and_gradient(x)
    }
}

impl<F: BoxFunction + ?Sized> BoxFunction for &F {
    fn extent(&self) -> u32 {
        (**self).extent()
    }
    fn max_derivative_order(&self) -> u32 {
        (**self).max_derivative_order()
    }
    fn eval_unchecked(&self, x: Point2, alpha: [u32; 2]) -> f64 {
        (**self).eval_unchecked(x, alpha)
    }
    fn values_at(&self, points: &[Point2], out: &mut [f64]) {
        (**self).values_at(points, out)
    }
    fn value_and_gradient(&self, x: Point2) -> [f64; 3] {
        (**self).value_and_gradient(x)
    }
}

#[inline]
fn i_pow(k: u32) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Trigonometric interpolant of a grid field, summed exactly.
#[derive(Debug, Clone)]
pub struct TrigInterpolant {
    extent: u32,
    max_order: u32,
    kmax: i64,
    modes: Vec<(i64, i64, Complex64)>,
}

impl TrigInterpolant {
    pub fn new(f: &GridField, extent: u32, max_order: u32) -> Self {
        let n = f.n() as i64;
        let nyq = -n / 2;
        let mut modes = Vec::new();
        // Nyquist modes are split evenly between ±N/2 so the interpolant is
        // real away from the grid.
        for (n1, n2, c) in spectral::coefficients(f, 1e-14) {
            let a: &[i64] = if n1 == nyq { &[nyq, -nyq] } else { &[n1] };
            let b: &[i64] = if n2 == nyq { &[nyq, -nyq] } else { &[n2] };
            let share = 1.0 / (a.len() * b.len()) as f64;
            for &m1 in a {
                for &m2 in b {
                    modes.push((m1, m2, c * share));
                }
            }
        }
        let kmax = modes
            .iter()
            .fold(0, |m, &(a, b, _)| m.max(a.abs()).max(b.abs()));
        Self {
            extent,
            max_order,
            kmax,
            modes,
        }
    }

    /// Builds the sum `Σ c_n e^{in·x}` directly from modes. The caller is
    /// responsible for conjugate symmetry.
    pub fn from_modes(modes: Vec<(i64, i64, Complex64)>, extent: u32, max_order: u32) -> Self {
        let kmax = modes
            .iter()
            .fold(0, |m, &(a, b, _)| m.max(a.abs()).max(b.abs()));
        Self {
            extent,
            max_order,
            kmax,
            modes,
        }
    }

    pub fn modes(&self) -> &[(i64, i64, Complex64)] {
        &self.modes
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    fn phases(&self, x: f64) -> Vec<Complex64> {
        let k = self.kmax as usize;
        let mut out = vec![Complex64::new(0.0, 0.0); 2 * k + 1];
        for (m, slot) in out.iter_mut().enumerate() {
            let w = m as f64 - k as f64;
            let (s, c) = (w * x).sin_cos();
            *slot = Complex64::new(c, s);
        }
        out
    }
}

impl BoxFunction for TrigInterpolant {
    fn extent(&self) -> u32 {
        self.extent
    }
    fn max_derivative_order(&self) -> u32 {
        self.max_order
    }
    fn eval_unchecked(&self, x: Point2, alpha: [u32; 2]) -> f64 {
        let e1 = self.phases(x[0]);
        let e2 = self.phases(x[1]);
        let k = self.kmax;
        let scale = i_pow(alpha[0] + alpha[1]);
        let mut acc = Complex64::new(0.0, 0.0);
        for &(n1, n2, c) in &self.modes {
            let d = (n1 as f64).powi(alpha[0] as i32) * (n2 as f64).powi(alpha[1] as i32);
            acc += c * d * e1[(n1 + k) as usize] * e2[(n2 + k) as usize];
        }
        (acc * scale).re
    }
}

/// A finite sum `Σ a cos(k·x + p)` with integer wave vectors; periodic, with
/// exact derivatives and exact `Λ`, `R`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TrigPolynomial {
    pub terms: Vec<TrigTerm>,
    pub extent: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TrigTerm {
    pub amplitude: f64,
    pub k: [i32; 2],
    pub phase: f64,
}

impl TrigPolynomial {
    pub fn new(terms: Vec<TrigTerm>) -> Self {
        Self { terms, extent: 8 }
    }

    pub fn cos(amplitude: f64, k: [i32; 2], phase: f64) -> TrigTerm {
        TrigTerm {
            amplitude,
            k,
            phase,
        }
    }

    /// Random polynomial with `terms` modes of sup-frequency at most `kmax`.
    pub fn random<R: rand::Rng>(rng: &mut R, terms: usize, kmax: i32) -> Self {
        let mut out = Vec::with_capacity(terms);
        while out.len() < terms {
            let k = [rng.random_range(-kmax..=kmax), rng.random_range(-kmax..=kmax)];
            if k == [0, 0] {
                continue;
            }
            out.push(TrigTerm {
                amplitude: rng.random_range(-1.0..1.0),
                k,
                phase: rng.random_range(0.0..crate::TWO_PI),
            });
        }
        Self::new(out)
    }

    /// `Λφ(x)`.
    pub fn lambda(&self, x: Point2) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let r = ((t.k[0] * t.k[0] + t.k[1] * t.k[1]) as f64).sqrt();
                t.amplitude * r * (t.k[0] as f64 * x[0] + t.k[1] as f64 * x[1] + t.phase).cos()
            })
            .sum()
    }

    /// `Rφ(x) = ∇Λ^{-1}φ(x)`; the zero mode contributes nothing.
    pub fn riesz(&self, x: Point2) -> Point2 {
        let mut out = [0.0, 0.0];
        for t in &self.terms {
            if t.k == [0, 0] {
                continue;
            }
            let r = ((t.k[0] * t.k[0] + t.k[1] * t.k[1]) as f64).sqrt();
            let s = (t.k[0] as f64 * x[0] + t.k[1] as f64 * x[1] + t.phase).sin();
            out[0] -= t.amplitude * t.k[0] as f64 / r * s;
            out[1] -= t.amplitude * t.k[1] as f64 / r * s;
        }
        out
    }

    pub fn sample(&self, n: usize) -> Result<GridField> {
        GridField::from_fn(n, |a, b| self.eval_unchecked([a, b], [0, 0]))
    }
}

/// `∂^α cos(k·x + p) = k1^a1 k2^a2 cos(k·x + p + |α|π/2)`.
#[inline]
pub fn cos_derivative(omega: [f64; 2], phase: f64, x: Point2, alpha: [u32; 2]) -> f64 {
    let order = alpha[0] + alpha[1];
    let arg = omega[0] * x[0] + omega[1] * x[1] + phase;
    let base = match order % 4 {
        0 => arg.cos(),
        1 => -arg.sin(),
        2 => -arg.cos(),
        _ => arg.sin(),
    };
    omega[0].powi(alpha[0] as i32) * omega[1].powi(alpha[1] as i32) * base
}

impl BoxFunction for TrigPolynomial {
    fn extent(&self) -> u32 {
        self.extent
    }
    fn max_derivative_order(&self) -> u32 {
        u32::MAX
    }
    fn eval_unchecked(&self, x: Point2, alpha: [u32; 2]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.amplitude
                    * cos_derivative([t.k[0] as f64, t.k[1] as f64], t.phase, x, alpha)
            })
            .sum()
    }
}

/// `Σ_i a_i f_i`, defined where every part is.
#[derive(Clone)]
pub struct Combination {
    parts: Vec<(f64, Arc<dyn BoxFunction>)>,
}

impl Combination {
    pub fn new(parts: Vec<(f64, Arc<dyn BoxFunction>)>) -> Self {
        Self { parts }
    }

    pub fn difference(a: Arc<dyn BoxFunction>, b: Arc<dyn BoxFunction>) -> Self {
        Self::new(vec![(1.0, a), (-1.0, b)])
    }
}

impl BoxFunction for Combination {
    fn extent(&self) -> u32 {
        self.parts.iter().map(|p| p.1.extent()).min().unwrap_or(u32::MAX)
    }
    fn max_derivative_order(&self) -> u32 {
        self.parts
            .iter()
            .map(|p| p.1.max_derivative_order())
            .min()
            .unwrap_or(u32::MAX)
    }
    fn eval_unchecked(&self, x: Point2, alpha: [u32; 2]) -> f64 {
        self.parts
            .iter()
            .map(|(a, f)| a * f.eval_unchecked(x, alpha))
            .sum()
    }
    fn values_at(&self, points: &[Point2], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut buf = vec![0.0; points.len()];
        for (a, f) in &self.parts {
            f.values_at(points, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += a * b;
            }
        }
    }
}

/// A constant function.
#[derive(Debug, Clone, Copy)]
pub struct Constant {
    pub value: f64,
    pub extent: u32,
}

impl BoxFunction for Constant {
    fn extent(&self) -> u32 {
        self.extent
    }
    fn max_derivative_order(&self) -> u32 {
        u32::MAX
    }
    fn eval_unchecked(&self, _x: Point2, alpha: [u32; 2]) -> f64 {
        if alpha == [0, 0] {
            self.value
        } else {
            0.0
        }
    }
}

/// All multi-indices of total order exactly `k`.
pub fn multi_indices(k: u32) -> impl Iterator<Item = [u32; 2]> {
    (0..=k).rev().map(move |a| [a, k - a])
}

/// `max_{|α|≤k} sup |∂^α f|` over `[-rπ, rπ]²`, sampled on an `m × m` grid
/// including the boundary.
pub fn w_k_inf_norm(f: &dyn BoxFunction, k: u32, r: u32, m: usize) -> f64 {
    let half = r as f64 * PI;
    let mut best = 0.0f64;
    for i in 0..m {
        let x1 = -half + 2.0 * half * i as f64 / (m - 1) as f64;
        for j in 0..m {
            let x2 = -half + 2.0 * half * j as f64 / (m - 1) as f64;
            for order in 0..=k {
                for alpha in multi_indices(order) {
                    best = best.max(f.eval_unchecked([x1, x2], alpha).abs());
                }
            }
        }
    }
    best
}

/// `‖f‖_{L²([-rπ, rπ]²)}` by composite Gauss quadrature.
pub fn l2_norm_on_box(f: &dyn BoxFunction, r: u32, panels_per_period: usize) -> f64 {
    let half = r as f64 * PI;
    let (x, w) = composite_gauss(8, panels_per_period * r as usize, -half, half);
    let mut points = Vec::with_capacity(x.len() * x.len());
    for &a in &x {
        for &b in &x {
            points.push([a, b]);
        }
    }
    let mut vals = vec![0.0; points.len()];
    f.values_at(&points, &mut vals);
    let mut acc = 0.0;
    for (i, wa) in w.iter().enumerate() {
        for (j, wb) in w.iter().enumerate() {
            let v = vals[i * x.len() + j];
            acc += wa * wb * v * v;
        }
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn interpolant_reproduces_grid_and_is_periodic() {
        let poly = TrigPolynomial::new(vec![
            TrigPolynomial::cos(1.0, [1, 0], 0.0),
            TrigPolynomial::cos(0.3, [2, -3], 0.7),
            TrigPolynomial::cos(0.1, [8, 1], 0.2),
        ]);
        let g = poly.sample(16).unwrap();
        let f = TrigInterpolant::new(&g, 3, 4);
        for j in 0..16 {
            for k in 0..16 {
                let p = g.point(j, k);
                assert!((f.eval(p, [0, 0]).unwrap() - g.values()[j * 16 + k]).abs() < 1e-13);
            }
        }
        let x = [0.37, -1.1];
        let a = f.eval(x, [1, 1]).unwrap();
        let b = f.eval([x[0] + crate::TWO_PI, x[1]], [1, 1]).unwrap();
        assert!((a - b).abs() < 1e-11);
        // band-limited below Nyquist: exact derivatives off the grid
        let g32 = poly.sample(32).unwrap();
        let f32 = TrigInterpolant::new(&g32, 3, 4);
        for alpha in [[0, 0], [1, 0], [0, 2], [2, 1]] {
            let want = poly.eval_unchecked(x, alpha);
            assert!((f32.eval_unchecked(x, alpha) - want).abs() < 1e-11 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn derivative_of_cosine() {
        let g = GridField::from_fn(16, |x, _| x.cos()).unwrap();
        let f = TrigInterpolant::new(&g, 2, 2);
        assert!(f.eval([0.0, 0.0], [1, 0]).unwrap().abs() < 1e-14);
        assert!((f.eval([PI / 2.0, 0.0], [1, 0]).unwrap() + 1.0).abs() < 1e-14);
    }

    #[test]
    fn query_checks() {
        let g = GridField::from_fn(8, |x, _| x.cos()).unwrap();
        let f = TrigInterpolant::new(&g, 2, 2);
        assert!(matches!(f.eval([7.0, 0.0], [0, 0]), Err(Error::Domain(_))));
        assert!(matches!(f.eval([0.0, 0.0], [2, 1]), Err(Error::Capability(_))));
        assert!(f.eval([2.0 * PI, -2.0 * PI], [1, 1]).is_ok());
    }

    #[test]
    fn trig_polynomial_operators() {
        let p = TrigPolynomial::new(vec![TrigPolynomial::cos(1.0, [1, 0], 0.0)]);
        let r = p.riesz([PI / 2.0, 0.0]);
        assert!((r[0] + 1.0).abs() < 1e-15 && r[1].abs() < 1e-15);
        let q = TrigPolynomial::new(vec![TrigPolynomial::cos(1.0, [0, 1], -PI / 2.0)]);
        let r = q.riesz([0.0, 0.0]);
        assert!(r[0].abs() < 1e-15 && (r[1] - 1.0).abs() < 1e-15);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let t = TrigPolynomial::random(&mut rng, 4, 8);
        let g = t.sample(32).unwrap();
        let lam = spectral::lambda_pow(&g, 1.0).unwrap();
        for j in (0..32).step_by(5) {
            for k in (0..32).step_by(7) {
                assert!((t.lambda(g.point(j, k)) - lam.values()[j * 32 + k]).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn box_norms() {
        let c = Constant {
            value: 2.0,
            extent: 3,
        };
        let l2 = l2_norm_on_box(&c, 2, 2);
        assert!((l2 - 2.0 * 4.0 * PI).abs() < 1e-12);
        let p = TrigPolynomial::new(vec![TrigPolynomial::cos(1.0, [2, 0], 0.0)]);
        assert!((w_k_inf_norm(&p, 2, 1, 9) - 4.0).abs() < 1e-12);
    }
}
