//! Periodic operators on uniform grids of `T²` as Fourier multipliers.
//!
//! Grid points are `x_jk = (-π + 2πj/N, -π + 2πk/N)`, stored at
//! `values[j*N + k]` (x2 fastest). Wavenumbers run over `-N/2..N/2-1`.
//! The unnormalized DFT `F_n` relates to the Fourier coefficients of the
//! trigonometric interpolant by `c_n = (-1)^(n1+n2) F_n / N²`.

use crate::{Error, Result, TWO_PI};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Real scalar field on the `N × N` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    n: usize,
    values: Vec<f64>,
    mean_zero: bool,
}

impl GridField {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::Config(format!("grid size must be even and ≥ 2, got {n}")));
        }
        if values.len() != n * n {
            return Err(Error::Config(format!(
                "expected {} values for N = {n}, got {}",
                n * n,
                values.len()
            )));
        }
        Ok(Self {
            n,
            values,
            mean_zero: false,
        })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(n, vec![0.0; n * n])
    }

    pub fn from_fn(n: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(n * n);
        for j in 0..n {
            let x1 = grid_coord(j, n);
            for k in 0..n {
                values.push(f(x1, grid_coord(k, n)));
            }
        }
        Self::new(n, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_mean_zero(&self) -> bool {
        self.mean_zero
    }

    pub fn point(&self, j: usize, k: usize) -> [f64; 2] {
        [grid_coord(j, self.n), grid_coord(k, self.n)]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Subtracts the mean and marks the field mean-zero.
    pub fn project_mean_zero(mut self) -> Self {
        let m = self.mean();
        self.values.iter_mut().for_each(|v| *v -= m);
        self.mean_zero = true;
        self
    }

    /// Marks the field mean-zero after checking it numerically.
    pub fn assert_mean_zero(mut self) -> Result<Self> {
        if !mean_is_negligible(&self) {
            return Err(Error::Invertibility(format!(
                "field mean {:e} is not zero",
                self.mean()
            )));
        }
        self.mean_zero = true;
        Ok(self)
    }

    /// `∫_{T²} f dx` by the trapezoid rule (spectrally exact for band-limited f).
    pub fn integral(&self) -> f64 {
        let h = TWO_PI / self.n as f64;
        h * h * self.values.iter().sum::<f64>()
    }

    /// `∫_{T²} f g dx`.
    pub fn inner(&self, other: &GridField) -> f64 {
        assert_eq!(self.n, other.n, "grid size mismatch");
        let h = TWO_PI / self.n as f64;
        h * h * self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField {
            n: self.n,
            values: self.values.iter().map(|&v| f(v)).collect(),
            mean_zero: false,
        }
    }

    pub fn zip_with(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> GridField {
        assert_eq!(self.n, other.n, "grid size mismatch");
        GridField {
            n: self.n,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            mean_zero: false,
        }
    }
}

fn mean_is_negligible(f: &GridField) -> bool {
    f.mean().abs() <= 1e-12 * f.max_abs().max(f64::MIN_POSITIVE)
}

/// `-π + 2πj/N`.
#[inline]
pub fn grid_coord(j: usize, n: usize) -> f64 {
    -crate::PI + TWO_PI * j as f64 / n as f64
}

/// Signed wavenumber of DFT index `j`.
#[inline]
pub fn wavenumber(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Cached 2-D complex FFT of size `N × N`.
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    /// Shared plan for size `n`.
    pub fn get(n: usize) -> Arc<Fft2> {
        static PLANS: OnceLock<Mutex<HashMap<usize, Arc<Fft2>>>> = OnceLock::new();
        let mut map = PLANS.get_or_init(Default::default).lock().unwrap();
        map.entry(n)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                Arc::new(Fft2 {
                    n,
                    forward: planner.plan_fft_forward(n),
                    inverse: planner.plan_fft_inverse(n),
                })
            })
            .clone()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        plan.process(data);
        transpose(data, n);
        plan.process(data);
        transpose(data, n);
    }

    /// Unnormalized forward DFT of real samples.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        data
    }

    /// Inverse DFT including the `1/N²` factor; returns the real part.
    pub fn inverse_real(&self, mut data: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut data, &self.inverse);
        let scale = 1.0 / (self.n * self.n) as f64;
        data.iter().map(|c| c.re * scale).collect()
    }
}

fn transpose(data: &mut [Complex64], n: usize) {
    for j in 0..n {
        for k in (j + 1)..n {
            data.swap(j * n + k, k * n + j);
        }
    }
}

/// Multiplies the spectrum of `f` by `m(n1, n2)`.
pub fn apply_multiplier(f: &GridField, m: impl Fn(i64, i64) -> Complex64) -> GridField {
    let n = f.n;
    let plan = Fft2::get(n);
    let mut spec = plan.forward(&f.values);
    for j in 0..n {
        let n1 = wavenumber(j, n);
        for k in 0..n {
            spec[j * n + k] *= m(n1, wavenumber(k, n));
        }
    }
    GridField {
        n,
        values: plan.inverse_real(spec),
        mean_zero: false,
    }
}

fn ensure_mean_zero(f: &GridField, what: &str) -> Result<()> {
    if f.mean_zero || mean_is_negligible(f) {
        Ok(())
    } else {
        Err(Error::Invertibility(format!(
            "{what} needs a mean-zero field, mean is {:e}",
            f.mean()
        )))
    }
}

/// `Λ^s f`: multiplier `|n|^s`, zero mode mapped to zero (`s = 0` is the
/// identity).
pub fn lambda_pow(f: &GridField, s: f64) -> Result<GridField> {
    if s < 0.0 {
        ensure_mean_zero(f, "negative power of Λ")?;
    }
    if s == 0.0 {
        return Ok(f.clone());
    }
    let mut out = apply_multiplier(f, |n1, n2| {
        if n1 == 0 && n2 == 0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(((n1 * n1 + n2 * n2) as f64).powf(0.5 * s), 0.0)
        }
    });
    out.mean_zero = true;
    Ok(out)
}

/// `(i n1)^a1 (i n2)^a2`, with the Nyquist mode dropped along any axis
/// differentiated an odd number of times.
fn derivative_symbol(n1: i64, n2: i64, alpha: [u32; 2], n: usize) -> Complex64 {
    let nyq = -(n as i64 / 2);
    if (alpha[0] % 2 == 1 && n1 == nyq) || (alpha[1] % 2 == 1 && n2 == nyq) {
        return Complex64::new(0.0, 0.0);
    }
    let i = Complex64::new(0.0, 1.0);
    (i * n1 as f64).powu(alpha[0]) * (i * n2 as f64).powu(alpha[1])
}

/// Spectral partial derivative `∂^α f`.
pub fn derivative(f: &GridField, alpha: [u32; 2]) -> GridField {
    let n = f.n;
    let mut out = apply_multiplier(f, |n1, n2| derivative_symbol(n1, n2, alpha, n));
    out.mean_zero = alpha != [0, 0] || f.mean_zero;
    out
}

pub fn gradient(f: &GridField) -> [GridField; 2] {
    [derivative(f, [1, 0]), derivative(f, [0, 1])]
}

pub fn divergence(u: &[GridField; 2]) -> GridField {
    let a = derivative(&u[0], [1, 0]);
    let b = derivative(&u[1], [0, 1]);
    a.zip_with(&b, |x, y| x + y)
}

fn riesz_component(f: &GridField, axis: usize) -> GridField {
    let n = f.n;
    let nyq = -(n as i64 / 2);
    let mut out = apply_multiplier(f, |n1, n2| {
        let along = if axis == 0 { n1 } else { n2 };
        if (n1 == 0 && n2 == 0) || along == nyq {
            return Complex64::new(0.0, 0.0);
        }
        let r = ((n1 * n1 + n2 * n2) as f64).sqrt();
        Complex64::new(0.0, along as f64 / r)
    });
    out.mean_zero = true;
    out
}

/// `R f = ∇Λ^{-1} f`, multiplier `i n/|n|`.
pub fn riesz(f: &GridField) -> Result<[GridField; 2]> {
    ensure_mean_zero(f, "Riesz transform")?;
    Ok([riesz_component(f, 0), riesz_component(f, 1)])
}

/// `R^⊥ f = (-R₂ f, R₁ f)`.
pub fn riesz_perp(f: &GridField) -> Result<[GridField; 2]> {
    let [r1, r2] = riesz(f)?;
    Ok([r2.map(|v| -v), r1])
}

/// Visits `(n1, n2, |c_n|²)` for every grid mode.
fn for_each_power(f: &GridField, mut visit: impl FnMut(i64, i64, f64)) {
    let n = f.n;
    let spec = Fft2::get(n).forward(&f.values);
    let scale = 1.0 / ((n * n) as f64 * (n * n) as f64);
    for j in 0..n {
        let n1 = wavenumber(j, n);
        for k in 0..n {
            visit(n1, wavenumber(k, n), spec[j * n + k].norm_sqr() * scale);
        }
    }
}

/// Bessel-potential norm `(4π² Σ (1+|n|²)^s |c_n|²)^{1/2}`.
pub fn sobolev_norm(f: &GridField, s: f64) -> f64 {
    let mut acc = 0.0;
    for_each_power(f, |n1, n2, p| {
        acc += (1.0 + (n1 * n1 + n2 * n2) as f64).powf(s) * p;
    });
    (TWO_PI * TWO_PI * acc).sqrt()
}

/// `(Σ_{|α|≤k} ‖∂^α f‖²_{L²})^{1/2}`, each multi-index counted once. Agrees
/// with [`sobolev_norm`] for `k ≤ 1` only.
pub fn sobolev_norm_derivative_sum(f: &GridField, k: u32) -> f64 {
    let mut acc = 0.0;
    for_each_power(f, |n1, n2, p| {
        let (a, b) = ((n1 * n1) as f64, (n2 * n2) as f64);
        let mut w = 0.0;
        for order in 0..=k {
            for i in 0..=order {
                w += a.powi(i as i32) * b.powi((order - i) as i32);
            }
        }
        acc += w * p;
    });
    (TWO_PI * TWO_PI * acc).sqrt()
}

/// `‖Λ^s f‖_{L²}` (the zero mode counts only for `s = 0`).
pub fn homogeneous_norm(f: &GridField, s: f64) -> f64 {
    let mut acc = 0.0;
    for_each_power(f, |n1, n2, p| {
        let r2 = (n1 * n1 + n2 * n2) as f64;
        if s == 0.0 {
            acc += p;
        } else if r2 > 0.0 {
            acc += r2.powf(s) * p;
        }
    });
    (TWO_PI * TWO_PI * acc).sqrt()
}

/// Fourier coefficients `c_n` of the trigonometric interpolant, with
/// wavenumbers, dropping modes below `rel_cutoff · max|c|`.
pub fn coefficients(f: &GridField, rel_cutoff: f64) -> Vec<(i64, i64, Complex64)> {
    let n = f.n;
    let spec = Fft2::get(n).forward(&f.values);
    let scale = 1.0 / (n * n) as f64;
    let max = spec.iter().fold(0.0f64, |m, c| m.max(c.norm())) * scale;
    let mut out = Vec::new();
    for j in 0..n {
        let n1 = wavenumber(j, n);
        for k in 0..n {
            let n2 = wavenumber(k, n);
            let sign = if (n1 + n2).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let c = spec[j * n + k] * (sign * scale);
            if c.norm() > rel_cutoff * max {
                out.push((n1, n2, c));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::PI;

    fn max_diff(a: &GridField, b: &GridField) -> f64 {
        a.values
            .iter()
            .zip(&b.values)
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    fn sample(n: usize) -> GridField {
        GridField::from_fn(n, |x, y| {
            (x + 0.3).sin() * (2.0 * y).cos() + 0.4 * (3.0 * x - y).cos() - 0.2 * (5.0 * y).sin()
        })
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let f = sample(32);
        let plan = Fft2::get(32);
        let back = plan.inverse_real(plan.forward(f.values()));
        let g = GridField::new(32, back).unwrap();
        assert!(max_diff(&f, &g) <= 1e-12 * f.max_abs());
    }

    #[test]
    fn lambda_eigenfunctions() {
        let f = GridField::from_fn(32, |x, _| x.cos()).unwrap();
        assert!(max_diff(&lambda_pow(&f, 1.0).unwrap(), &f) < 1e-13);
        let g = GridField::from_fn(32, |x, y| (2.0 * x).cos() * y.cos()).unwrap();
        let expect = g.map(|v| 5.0 * v);
        assert!(max_diff(&lambda_pow(&g, 2.0).unwrap(), &expect) < 1e-12);
        let h = sample(32);
        let a = lambda_pow(&lambda_pow(&h, 0.5).unwrap(), 0.5).unwrap();
        assert!(max_diff(&a, &lambda_pow(&h, 1.0).unwrap()) < 1e-12);
    }

    #[test]
    fn negative_power_needs_mean_zero() {
        let f = GridField::from_fn(16, |x, _| 1.0 + x.cos()).unwrap();
        assert!(matches!(lambda_pow(&f, -1.0), Err(Error::Invertibility(_))));
        assert!(matches!(riesz(&f), Err(Error::Invertibility(_))));
        assert!(lambda_pow(&f.project_mean_zero(), -1.0).is_ok());
    }

    #[test]
    fn riesz_of_cosine() {
        let f = GridField::from_fn(32, |x, _| x.cos()).unwrap();
        let [r1, r2] = riesz(&f).unwrap();
        let want = GridField::from_fn(32, |x, _| -x.sin()).unwrap();
        assert!(max_diff(&r1, &want) < 1e-13);
        assert!(r2.max_abs() < 1e-13);
        let [p1, p2] = riesz_perp(&f).unwrap();
        assert!(p1.max_abs() < 1e-13);
        assert!(max_diff(&p2, &want) < 1e-13);

        // finite differences of Λ^{-1} f as a second opinion
        let inv = lambda_pow(&f, -1.0).unwrap();
        let h = TWO_PI / 32.0;
        let n = 32;
        for j in 0..n {
            let jp = (j + 1) % n;
            let jm = (j + n - 1) % n;
            let fd = (inv.values[jp * n] - inv.values[jm * n]) / (2.0 * h);
            assert!((fd - r1.values[j * n]).abs() < 1e-2);
        }
    }

    #[test]
    fn riesz_is_gradient_of_inverse_lambda() {
        let f = sample(32).project_mean_zero();
        let [r1, r2] = riesz(&f).unwrap();
        let [g1, g2] = gradient(&lambda_pow(&f, -1.0).unwrap());
        assert!(max_diff(&r1, &g1) < 1e-12);
        assert!(max_diff(&r2, &g2) < 1e-12);
        assert!(divergence(&riesz_perp(&f).unwrap()).max_abs() < 1e-10);
    }

    #[test]
    fn lambda_commutes_with_derivatives() {
        let f = sample(32);
        for alpha in [[1, 0], [0, 2], [1, 1]] {
            let a = derivative(&lambda_pow(&f, 1.0).unwrap(), alpha);
            let b = lambda_pow(&derivative(&f, alpha), 1.0).unwrap();
            assert!(max_diff(&a, &b) < 1e-10);
        }
    }

    #[test]
    fn sobolev_norms_of_cosine() {
        let f = GridField::from_fn(32, |x, _| x.cos()).unwrap();
        assert!((sobolev_norm(&f, 0.0) - PI * 2f64.sqrt()).abs() < 1e-12);
        assert!((sobolev_norm(&f, 1.0) - 2.0 * PI).abs() < 1e-12);
        assert!((f.inner(&f) - 2.0 * PI * PI).abs() < 1e-12);
        assert_eq!(sobolev_norm(&GridField::zeros(16).unwrap(), 2.0), 0.0);
    }

    #[test]
    fn parseval_and_derivative_sum() {
        let f = sample(32);
        let l2 = sobolev_norm(&f, 0.0);
        assert!((l2 * l2 - f.inner(&f)).abs() < 1e-10 * l2 * l2);
        // k = 1: Bessel and derivative-sum coincide
        let [a, b] = gradient(&f);
        let direct = (f.inner(&f) + a.inner(&a) + b.inner(&b)).sqrt();
        assert!((sobolev_norm_derivative_sum(&f, 1) - direct).abs() < 1e-10 * direct);
        assert!((sobolev_norm(&f, 1.0) - direct).abs() < 1e-10 * direct);
        // k = 2: derivative-sum by explicit derivatives
        let mut acc = 0.0;
        for alpha in [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]] {
            let d = derivative(&f, alpha);
            acc += d.inner(&d);
        }
        assert!((sobolev_norm_derivative_sum(&f, 2) - acc.sqrt()).abs() < 1e-10 * acc.sqrt());
    }

    #[test]
    fn coefficients_of_known_series() {
        let f = GridField::from_fn(16, |x, y| 3.0 * x.cos() + (2.0 * y).sin()).unwrap();
        let c = coefficients(&f, 1e-14);
        assert_eq!(c.len(), 4);
        for (n1, n2, v) in c {
            match (n1, n2) {
                (1, 0) | (-1, 0) => assert!((v - Complex64::new(1.5, 0.0)).norm() < 1e-14),
                (0, 2) => assert!((v - Complex64::new(0.0, -0.5)).norm() < 1e-14),
                (0, -2) => assert!((v - Complex64::new(0.0, 0.5)).norm() < 1e-14),
                other => panic!("unexpected mode {other:?}"),
            }
        }
    }
}
