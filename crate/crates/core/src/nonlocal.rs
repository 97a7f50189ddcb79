//! `Λ̃φ(x) = P.V.∫_{T²} (φ(x) - φ(x+y)) K(y) dy` and
//! `R̃φ(x) = P.V.∫_{T²} φ(x+y) R*(y) dy` for functions that need not be
//! periodic.
//!
//! With reflection-paired nodes the integrands collapse to
//! `(2φ(x) - φ(x+y) - φ(x-y)) K(y)` and `(φ(x+y) - φ(x-y)) R*(y)`, which is
//! the gradient-subtracted principal value taken exactly. The excised disc
//! `|y| < ε` is replaced by its leading Taylor term: `-εΔφ(x)/4` for `Λ̃`
//! and `ε∇φ(x)/2` for `R̃`.

use crate::boxfn::BoxFunction;
use crate::gauss::{gauss_legendre_on, tensor_gauss_square};
use crate::kernels::PeriodizedKernel;
use crate::quadrature::{PvQuadrature, QuadratureConfig};
use crate::spectral::{self, GridField};
use crate::{Error, Point2, Result, PI, TWO_PI};
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Quadrature rule with kernel values tabulated at its nodes.
pub struct NonlocalOperator {
    quad: PvQuadrature,
    kernel: PeriodizedKernel,
    /// `K(y)` at each pair node.
    k_table: Vec<f64>,
    /// `R*(y)` at each pair node.
    r_table: Vec<Point2>,
    /// Offsets `±y` of all pair nodes, `+y` first.
    offsets: Vec<Point2>,
    /// `Σ w |K|`, for the roundoff floor.
    k_abs_mass: f64,
}

/// Result of an operator application together with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimated<T> {
    pub value: T,
    pub error: f64,
}

impl NonlocalOperator {
    pub fn new(config: QuadratureConfig, kernel: PeriodizedKernel) -> Result<Self> {
        let quad = PvQuadrature::new(config)?;
        let nodes: Vec<_> = quad.nodes().copied().collect();
        let table: Vec<(f64, Point2)> = nodes
            .par_iter()
            .map(|n| {
                let k = kernel.free_k(n.y) + kernel.lattice_k(n.y);
                let f = kernel.free_r(n.y);
                let l = kernel.lattice_r(n.y);
                (n.w * k, [n.w * (f[0] + l[0]), n.w * (f[1] + l[1])])
            })
            .collect();
        let mut offsets = Vec::with_capacity(2 * nodes.len());
        offsets.extend(nodes.iter().map(|n| n.y));
        offsets.extend(nodes.iter().map(|n| [-n.y[0], -n.y[1]]));
        let k_abs_mass = 2.0 * table.iter().map(|t| t.0.abs()).sum::<f64>();
        Ok(Self {
            quad,
            kernel,
            k_table: table.iter().map(|t| t.0).collect(),
            r_table: table.iter().map(|t| t.1).collect(),
            offsets,
            k_abs_mass,
        })
    }

    /// Shared operator for `(config, kernel)`; tables are built once.
    pub fn cached(config: &QuadratureConfig, kernel: PeriodizedKernel) -> Result<Arc<Self>> {
        type Cache = Mutex<HashMap<(String, usize, u64), Arc<NonlocalOperator>>>;
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let key = (
            config.cache_key(),
            kernel.truncation_radius,
            kernel.sign.to_bits(),
        );
        if let Some(op) = CACHE.get_or_init(Default::default).lock().unwrap().get(&key) {
            return Ok(op.clone());
        }
        let op = Arc::new(Self::new(config.clone(), kernel)?);
        CACHE
            .get_or_init(Default::default)
            .lock()
            .unwrap()
            .entry(key)
            .or_insert(op.clone());
        Ok(op)
    }

    /// Default quadrature with the default truncation radius `M = 64`.
    pub fn default_operator() -> Arc<Self> {
        Self::cached(&QuadratureConfig::default(), PeriodizedKernel::new(64))
            .expect("default operator builds")
    }

    pub fn quadrature(&self) -> &PvQuadrature {
        &self.quad
    }

    pub fn kernel(&self) -> PeriodizedKernel {
        self.kernel
    }

    pub fn offsets(&self) -> &[Point2] {
        &self.offsets
    }

    /// Weighted kernel values `w·K(y)` and `w·R*(y)` per pair node, in the
    /// order of the `+y` half of [`Self::offsets`].
    pub fn tables(&self) -> (&[f64], &[Point2]) {
        (&self.k_table, &self.r_table)
    }

    /// Signed inner-disc radius entering the `ε∇φ/2` and `εΔφ/4` terms.
    pub fn disc_correction(&self) -> f64 {
        self.kernel.sign * self.quad.inner_cutoff
    }

    fn check(&self, phi: &dyn BoxFunction, x: Point2) -> Result<()> {
        let sup = x[0].abs().max(x[1].abs());
        let need = (sup / PI - 1e-12).max(0.0).ceil() as u32 + 1;
        if phi.extent() < need {
            return Err(Error::Domain(format!(
                "evaluation at ({}, {}) needs extent {need}, function has {}",
                x[0],
                x[1],
                phi.extent()
            )));
        }
        if phi.max_derivative_order() < 1 {
            return Err(Error::Capability(
                "nonlocal operators need first derivatives".into(),
            ));
        }
        Ok(())
    }

    /// Combines `φ(x)`, `∇φ(x)`, `Δφ(x)` (if available) and `φ(x ± y)` into
    /// `(Λ̃φ(x), R̃φ(x))`.
    pub fn combine(&self, center: [f64; 3], laplacian: Option<f64>, shifted: &[f64]) -> (f64, Point2) {
        let half = self.k_table.len();
        let (plus, minus) = shifted.split_at(half);
        let phi_x = center[0];
        let mut lam = 0.0;
        let mut r = [0.0, 0.0];
        for i in 0..half {
            let (a, b) = (plus[i], minus[i]);
            lam += ((phi_x - a) + (phi_x - b)) * self.k_table[i];
            let d = a - b;
            r[0] += d * self.r_table[i][0];
            r[1] += d * self.r_table[i][1];
        }
        let eps = self.quad.inner_cutoff;
        if let Some(l) = laplacian {
            lam -= self.kernel.sign * eps * l / 4.0;
        }
        r[0] += self.kernel.sign * eps * center[1] / 2.0;
        r[1] += self.kernel.sign * eps * center[2] / 2.0;
        (lam, r)
    }

    fn gather(&self, phi: &dyn BoxFunction, x: Point2) -> Vec<f64> {
        let points: Vec<Point2> = self
            .offsets
            .iter()
            .map(|y| [x[0] + y[0], x[1] + y[1]])
            .collect();
        let mut vals = vec![0.0; points.len()];
        phi.values_at(&points, &mut vals);
        vals
    }

    fn laplacian(phi: &dyn BoxFunction, x: Point2) -> Option<f64> {
        (phi.max_derivative_order() >= 2)
            .then(|| phi.eval_unchecked(x, [2, 0]) + phi.eval_unchecked(x, [0, 2]))
    }

    /// `(Λ̃φ(x), R̃φ(x))` from one set of function evaluations.
    pub fn apply_both(&self, phi: &dyn BoxFunction, x: Point2) -> Result<(f64, Point2)> {
        self.check(phi, x)?;
        let center = phi.value_and_gradient(x);
        let vals = self.gather(phi, x);
        Ok(self.combine(center, Self::laplacian(phi, x), &vals))
    }

    pub fn lambda_tilde(&self, phi: &dyn BoxFunction, x: Point2) -> Result<f64> {
        Ok(self.apply_both(phi, x)?.0)
    }

    pub fn riesz_tilde(&self, phi: &dyn BoxFunction, x: Point2) -> Result<Point2> {
        Ok(self.apply_both(phi, x)?.1)
    }

    pub fn lambda_tilde_field(&self, phi: &dyn BoxFunction, targets: &[Point2]) -> Result<Vec<f64>> {
        targets
            .par_iter()
            .map(|&x| self.lambda_tilde(phi, x))
            .collect()
    }

    pub fn riesz_tilde_field(&self, phi: &dyn BoxFunction, targets: &[Point2]) -> Result<Vec<Point2>> {
        targets
            .par_iter()
            .map(|&x| self.riesz_tilde(phi, x))
            .collect()
    }

    /// `Λ̃φ(x)` with an error estimate: the change under halving the angular
    /// resolution, the size of the dropped disc term when `Δφ` is not
    /// available, and a roundoff floor.
    pub fn lambda_tilde_estimated(&self, phi: &dyn BoxFunction, x: Point2) -> Result<Estimated<f64>> {
        let coarse = Self::cached(&self.quad.config.half_angular(), self.kernel)?;
        let (v, _) = self.apply_both(phi, x)?;
        let (vc, _) = coarse.apply_both(phi, x)?;
        let phi_x = phi.eval_unchecked(x, [0, 0]);
        let mut err = (v - vc).abs() + 64.0 * f64::EPSILON * self.k_abs_mass * phi_x.abs().max(1.0);
        if phi.max_derivative_order() < 2 {
            err += self.quad.inner_cutoff * second_difference_bound(phi, x) / 4.0;
        }
        Ok(Estimated { value: v, error: err })
    }

    /// `R̃φ(x)` with an error estimate as for [`Self::lambda_tilde_estimated`].
    pub fn riesz_tilde_estimated(&self, phi: &dyn BoxFunction, x: Point2) -> Result<Estimated<Point2>> {
        let coarse = Self::cached(&self.quad.config.half_angular(), self.kernel)?;
        let (_, v) = self.apply_both(phi, x)?;
        let (_, vc) = coarse.apply_both(phi, x)?;
        let err = (v[0] - vc[0]).hypot(v[1] - vc[1]) + 1e-14 * v[0].hypot(v[1]).max(1.0);
        Ok(Estimated { value: v, error: err })
    }

    /// `∫_{T²} φ Λ̃φ dx` on an `n × n` Gauss grid.
    pub fn coercivity_inner_product(&self, phi: &dyn BoxFunction, n: usize) -> Result<f64> {
        if phi.extent() < 2 {
            return Err(Error::Domain("coercivity product needs extent ≥ 2".into()));
        }
        let (pts, w): (Vec<Point2>, Vec<f64>) = tensor_gauss_square(n, PI).into_iter().unzip();
        let lam = self.lambda_tilde_field(phi, &pts)?;
        Ok(pts
            .iter()
            .zip(&w)
            .zip(&lam)
            .map(|((&p, &wi), &l)| wi * phi.eval_unchecked(p, [0, 0]) * l)
            .sum())
    }
}

/// `|Δφ(x)|` by a five-point stencil, for functions without second
/// derivatives.
fn second_difference_bound(phi: &dyn BoxFunction, x: Point2) -> f64 {
    let h = 1e-3;
    let f = |a: f64, b: f64| phi.eval_unchecked([x[0] + a, x[1] + b], [0, 0]);
    ((f(h, 0.0) + f(-h, 0.0) + f(0.0, h) + f(0.0, -h) - 4.0 * f(0.0, 0.0)) / (h * h)).abs()
}

/// Trapezoid weights over `[-r, r]` with `intervals` steps.
fn trap(intervals: usize, r: f64) -> (Vec<f64>, Vec<f64>) {
    crate::gauss::trapezoid_weights(intervals, 2.0 * r)
        .into_iter()
        .enumerate()
        .map(|(i, w)| (-r + 2.0 * r * i as f64 / intervals as f64, w))
        .unzip()
}

/// Samples `f` on the uniform grid `lo + h·(i, j)`, `0 ≤ i, j ≤ count - 1`.
fn sample_square(f: &dyn BoxFunction, lo: f64, h: f64, count: usize) -> Vec<f64> {
    let mut points = Vec::with_capacity(count * count);
    for i in 0..count {
        for j in 0..count {
            points.push([lo + h * i as f64, lo + h * j as f64]);
        }
    }
    let mut out = vec![0.0; points.len()];
    f.values_at(&points, &mut out);
    out
}

/// `‖g‖_{H¹}` over a square sampled on an `n × n` grid with spacing `h`:
/// second-order differences (one-sided at the edges) and the trapezoid rule.
pub fn h1_norm_sampled(g: &[f64], n: usize, h: f64) -> f64 {
    let at = |i: usize, j: usize| g[i * n + j];
    let d = |v: &dyn Fn(usize) -> f64, i: usize| -> f64 {
        if i == 0 {
            (-3.0 * v(0) + 4.0 * v(1) - v(2)) / (2.0 * h)
        } else if i == n - 1 {
            (3.0 * v(n - 1) - 4.0 * v(n - 2) + v(n - 3)) / (2.0 * h)
        } else {
            (v(i + 1) - v(i - 1)) / (2.0 * h)
        }
    };
    let w = |i: usize| if i == 0 || i == n - 1 { 0.5 * h } else { h };
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v = at(i, j);
            let d1 = d(&|k| at(k, j), i);
            let d2 = d(&|k| at(i, k), j);
            acc += w(i) * w(j) * (v * v + d1 * d1 + d2 * d2);
        }
    }
    acc.sqrt()
}

/// Terms of the coercivity-correction bound, before the constant.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SecondBoundTerms {
    /// `‖ψ - ψ̂‖²_{L²(5T²)}`.
    pub l2_sq: f64,
    /// `‖ψ̂²(·+2πe_i) - ψ̂²‖_{H¹(2T²)}`, `i = 1, 2`.
    pub square_shift: [f64; 2],
    /// `‖ψ̂(·+2πe_i) - ψ̂‖_{H¹(2T²)}`, `i = 1, 2`.
    pub shift: [f64; 2],
    pub psi_sup: f64,
    pub grad_sup: f64,
}

impl SecondBoundTerms {
    pub fn bracket(&self) -> f64 {
        self.l2_sq
            + self.square_shift[0]
            + self.square_shift[1]
            + (self.psi_sup + self.grad_sup) * (self.shift[0] + self.shift[1])
    }
}

/// Evaluates the bound terms with `m` samples per period.
pub fn secondbound_terms(psi: &GridField, psi_hat: &dyn BoxFunction, m: usize) -> Result<SecondBoundTerms> {
    if psi_hat.extent() < 5 {
        return Err(Error::Domain(format!(
            "approximant extent {} is below the required 5",
            psi_hat.extent()
        )));
    }
    let psi_box = crate::boxfn::TrigInterpolant::new(psi, 6, 1);
    let h = TWO_PI / m as f64;

    let (x, w) = trap(5 * m, 5.0 * PI);
    let count = x.len();
    let a = sample_square(&psi_box, -5.0 * PI, h, count);
    let b = sample_square(psi_hat, -5.0 * PI, h, count);
    let mut l2_sq = 0.0;
    for i in 0..count {
        for j in 0..count {
            let d = a[i * count + j] - b[i * count + j];
            l2_sq += w[i] * w[j] * d * d;
        }
    }

    // ψ̂ on [-2π, 4π]²; shifts by 2π are index shifts by m
    let big = 3 * m + 1;
    let s = sample_square(psi_hat, -2.0 * PI, h, big);
    let n = 2 * m + 1;
    let shift_diff = |di: usize, dj: usize, sq: bool| -> Vec<f64> {
        let mut g = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let u = s[(i + di) * big + j + dj];
                let v = s[i * big + j];
                g.push(if sq { u * u - v * v } else { u - v });
            }
        }
        g
    };
    let square_shift = [
        h1_norm_sampled(&shift_diff(m, 0, true), n, h),
        h1_norm_sampled(&shift_diff(0, m, true), n, h),
    ];
    let shift = [
        h1_norm_sampled(&shift_diff(m, 0, false), n, h),
        h1_norm_sampled(&shift_diff(0, m, false), n, h),
    ];

    let [g1, g2] = spectral::gradient(psi);
    let grad_sup = g1
        .values()
        .iter()
        .zip(g2.values())
        .fold(0.0f64, |acc, (a, b)| acc.max(a.hypot(*b)));
    Ok(SecondBoundTerms {
        l2_sq,
        square_shift,
        shift,
        psi_sup: psi.max_abs(),
        grad_sup,
    })
}

/// `C·[…]`, the right-hand side of the coercivity-correction bound with the
/// universal constant replaced by `c_probe`.
pub fn secondbound_rhs(psi: &GridField, psi_hat: &dyn BoxFunction, c_probe: f64, m: usize) -> Result<f64> {
    Ok(c_probe * secondbound_terms(psi, psi_hat, m)?.bracket())
}

/// `∮_{∂T²} n(x)·P.V.∫_{T²} y φ(x+y)² / |y|³ dy dσ(x)`, a diagnostic for the
/// boundary term in the coercivity argument.
pub fn boundary_flux(op: &NonlocalOperator, phi: &dyn BoxFunction, order: usize) -> Result<f64> {
    if phi.extent() < 2 {
        return Err(Error::Domain("boundary flux needs extent ≥ 2".into()));
    }
    let (ts, tw) = gauss_legendre_on(order, -PI, PI);
    let eps = op.quad.inner_cutoff;
    let nodes: Vec<_> = op.quad.nodes().copied().collect();
    let field = |x: Point2| -> Point2 {
        let vals = op.gather(phi, x);
        let half = nodes.len();
        let mut f = [0.0, 0.0];
        for (i, n) in nodes.iter().enumerate() {
            let d = vals[i] * vals[i] - vals[half + i] * vals[half + i];
            let r3 = (n.y[0] * n.y[0] + n.y[1] * n.y[1]).powf(1.5);
            f[0] += n.w * d * n.y[0] / r3;
            f[1] += n.w * d * n.y[1] / r3;
        }
        let [v, d1, d2] = phi.value_and_gradient(x);
        f[0] += TWO_PI * eps * v * d1;
        f[1] += TWO_PI * eps * v * d2;
        f
    };
    let mut total = 0.0;
    for (t, w) in ts.iter().zip(&tw) {
        total += w * (field([PI, *t])[0] - field([-PI, *t])[0]);
        total += w * (field([*t, PI])[1] - field([*t, -PI])[1]);
    }
    Ok(total)
}
