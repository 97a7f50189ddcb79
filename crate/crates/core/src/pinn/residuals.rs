//! Pointwise residuals. Each function returns the residual at one point and,
//! given a [`Sink`], appends the seeds whose weighted derivative sum is the
//! gradient of `weight · value` (of `weight · value²` for the signed PDE
//! residual) with respect to the function's values and derivatives.

use super::function::SpaceTimeFunction;
use crate::net::DerivativeSeed;
use crate::nonlocal::NonlocalOperator;
use crate::{Error, Point2, Result, PI, TWO_PI};

pub struct Sink<'a> {
    pub seeds: &'a mut Vec<DerivativeSeed>,
    pub weight: f64,
}

impl Sink<'_> {
    #[inline]
    fn push(&mut self, t: f64, x: Point2, alpha: [u32; 3], coeff: f64) {
        self.seeds.push(DerivativeSeed {
            point: [t, x[0], x[1]],
            alpha,
            weight: self.weight * coeff,
        });
    }
}

/// Spatial multi-indices with `|α| ≤ k`, lifted to `(0, α1, α2)`.
pub fn spatial_indices(k: u32) -> Vec<[u32; 3]> {
    (0..=k)
        .flat_map(crate::boxfn::multi_indices)
        .map(|a| [0, a[0], a[1]])
        .collect()
}

fn require(f: &dyn SpaceTimeFunction, sup: f64, order: u32, what: &str) -> Result<()> {
    let need = (sup / PI - 1e-12).max(0.0).ceil() as u32;
    if f.extent() < need {
        return Err(Error::Domain(format!(
            "{what} reaches |x| = {sup:.3}, beyond extent {}",
            f.extent()
        )));
    }
    if f.max_derivative_order() < order {
        return Err(Error::Capability(format!(
            "{what} needs derivatives of order {order}, function provides {}",
            f.max_derivative_order()
        )));
    }
    Ok(())
}

fn sup_norm(x: Point2) -> f64 {
    x[0].abs().max(x[1].abs())
}

/// `ℛ_i = ∂_tψ + R̃^⊥ψ·∇ψ + Λ̃ψ` at `(t, x)` with `R̃^⊥ = (−R̃₂, R̃₁)`.
/// The sink receives the gradient of `weight · ℛ_i²`.
pub fn pde_residual(
    op: &NonlocalOperator,
    f: &dyn SpaceTimeFunction,
    t: f64,
    x: Point2,
    sink: Option<&mut Sink>,
) -> Result<f64> {
    require(f, sup_norm(x) + PI, 2, "PDE residual")?;
    const ALPHAS: [[u32; 3]; 6] = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0, 2, 0], [0, 0, 2]];
    let mut d = [0.0; 6];
    f.eval_many(t, x, &ALPHAS, &mut d);
    let points: Vec<[f64; 3]> = op
        .offsets()
        .iter()
        .map(|y| [t, x[0] + y[0], x[1] + y[1]])
        .collect();
    let mut vals = vec![0.0; points.len()];
    f.values_at(&points, &mut vals);
    let (lam, r) = op.combine([d[0], d[2], d[3]], Some(d[4] + d[5]), &vals);
    let res = d[1] - r[1] * d[2] + r[0] * d[3] + lam;
    if let Some(s) = sink {
        let c = 2.0 * res;
        let (k_table, r_table) = op.tables();
        let eps = op.disc_correction();
        let half = k_table.len();
        for i in 0..half {
            let adv = -r_table[i][1] * d[2] + r_table[i][0] * d[3];
            let p = points[i];
            let m = points[i + half];
            s.push(t, [p[1], p[2]], [0, 0, 0], c * (-k_table[i] + adv));
            s.push(t, [m[1], m[2]], [0, 0, 0], c * (-k_table[i] - adv));
        }
        let k_sum: f64 = k_table.iter().sum();
        s.push(t, x, [0, 0, 0], c * 2.0 * k_sum);
        s.push(t, x, [1, 0, 0], c);
        s.push(t, x, [0, 1, 0], c * (-r[1] + eps * d[3] / 2.0));
        s.push(t, x, [0, 0, 1], c * (r[0] - eps * d[2] / 2.0));
        s.push(t, x, [0, 2, 0], c * (-eps / 4.0));
        s.push(t, x, [0, 0, 2], c * (-eps / 4.0));
    }
    Ok(res)
}

/// Which pair of opposite faces a boundary residual compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    /// `x2 = ±π`, parametrized by `x1` (the first split term).
    X2,
    /// `x1 = ±π`, parametrized by `x2`.
    X1,
}

/// `Σ_{|α|≤s} (D^αψ(on +π face) − D^αψ(on −π face))²` at face coordinate `u`.
pub fn boundary_residual(
    f: &dyn SpaceTimeFunction,
    s: u32,
    t: f64,
    face: Face,
    u: f64,
    sink: Option<&mut Sink>,
) -> Result<f64> {
    let (plus, minus) = match face {
        Face::X2 => ([u, PI], [u, -PI]),
        Face::X1 => ([PI, u], [-PI, u]),
    };
    require(f, sup_norm(plus), s, "boundary residual")?;
    let alphas = spatial_indices(s);
    let mut a = vec![0.0; alphas.len()];
    let mut b = vec![0.0; alphas.len()];
    f.eval_many(t, plus, &alphas, &mut a);
    f.eval_many(t, minus, &alphas, &mut b);
    let mut total = 0.0;
    let mut sink = sink;
    for (k, alpha) in alphas.iter().enumerate() {
        let diff = a[k] - b[k];
        total += diff * diff;
        if let Some(s) = sink.as_deref_mut() {
            s.push(t, plus, *alpha, 2.0 * diff);
            s.push(t, minus, *alpha, -2.0 * diff);
        }
    }
    Ok(total)
}

/// The three shift blocks of the periodicity residual at `(t, x)`,
/// `x ∈ [-2π, 2π]²`.
pub fn periodicity_residual(
    f: &dyn SpaceTimeFunction,
    s: u32,
    t: f64,
    x: Point2,
    sink: Option<&mut Sink>,
) -> Result<f64> {
    require(f, sup_norm(x) + 2.0 * TWO_PI, s + 1, "periodicity residual")?;
    let low = spatial_indices(s);
    let high = spatial_indices(s + 1);
    let index = |a: [u32; 3]| high.iter().position(|h| *h == a).unwrap();
    let mut at_x = vec![0.0; high.len()];
    f.eval_many(t, x, &high, &mut at_x);
    let mut sink = sink;
    let mut total = 0.0;

    // shifts by 2π(k, m), |k|, |m| ≤ 2
    let mut shifted = Vec::with_capacity(24);
    for k in -2..=2i32 {
        for m in -2..=2i32 {
            if k != 0 || m != 0 {
                shifted.push([x[0] - TWO_PI * k as f64, x[1] - TWO_PI * m as f64]);
            }
        }
    }
    let mut vals = vec![0.0; low.len()];
    for y in &shifted {
        f.eval_many(t, *y, &low, &mut vals);
        for (j, alpha) in low.iter().enumerate() {
            let diff = at_x[index(*alpha)] - vals[j];
            total += diff * diff;
            if let Some(s) = sink.as_deref_mut() {
                s.push(t, x, *alpha, 2.0 * diff);
                s.push(t, *y, *alpha, -2.0 * diff);
            }
        }
    }

    // unit shifts, one more derivative, and shifts of squared derivatives
    let mut at_y = vec![0.0; high.len()];
    for e in [[TWO_PI, 0.0], [0.0, TWO_PI]] {
        let y = [x[0] + e[0], x[1] + e[1]];
        f.eval_many(t, y, &high, &mut at_y);
        for (j, alpha) in high.iter().enumerate() {
            let diff = at_x[j] - at_y[j];
            total += diff * diff;
            if let Some(s) = sink.as_deref_mut() {
                s.push(t, x, *alpha, 2.0 * diff);
                s.push(t, y, *alpha, -2.0 * diff);
            }
        }
        for alpha in &low {
            let g = index(*alpha);
            // β = 0
            let diff = at_y[g] * at_y[g] - at_x[g] * at_x[g];
            total += diff * diff;
            if let Some(s) = sink.as_deref_mut() {
                s.push(t, y, *alpha, 2.0 * diff * 2.0 * at_y[g]);
                s.push(t, x, *alpha, -2.0 * diff * 2.0 * at_x[g]);
            }
            // |β| = 1: D_l(g²) = 2 g ∂_l g
            for l in 0..2 {
                let mut up = *alpha;
                up[1 + l] += 1;
                let h = index(up);
                let diff = 2.0 * (at_y[g] * at_y[h] - at_x[g] * at_x[h]);
                total += diff * diff;
                if let Some(s) = sink.as_deref_mut() {
                    let c = 2.0 * diff * 2.0;
                    s.push(t, y, *alpha, c * at_y[h]);
                    s.push(t, y, up, c * at_y[g]);
                    s.push(t, x, *alpha, -c * at_x[h]);
                    s.push(t, x, up, -c * at_x[g]);
                }
            }
        }
    }
    Ok(total)
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Weights `c_α` with `Σ_α c_α ‖D^α f‖² = Σ_n (1+|n|²)^k |f̂_n|²` for
/// periodic `f`: `c_α = C(k, |α|) · |α|!/α!`.
pub fn sobolev_weights(k: u32) -> Vec<([u32; 3], f64)> {
    spatial_indices(k)
        .into_iter()
        .map(|a| {
            let j = a[1] + a[2];
            (a, binomial(k, j) * binomial(j, a[1]))
        })
        .collect()
}

/// `Σ_α c_α (D^αψ)²` at `(t, x)` with the `H^k` weights above; integrating
/// over `T²` gives `‖ψ(t)‖²_{H^k}` for periodic `ψ`.
pub fn sobolev_density(
    f: &dyn SpaceTimeFunction,
    k: u32,
    t: f64,
    x: Point2,
    sink: Option<&mut Sink>,
) -> Result<f64> {
    require(f, sup_norm(x), k, "Sobolev density")?;
    let w = sobolev_weights(k);
    let alphas: Vec<[u32; 3]> = w.iter().map(|p| p.0).collect();
    let mut d = vec![0.0; alphas.len()];
    f.eval_many(t, x, &alphas, &mut d);
    let mut sink = sink;
    let mut total = 0.0;
    for ((alpha, c), v) in w.iter().zip(&d) {
        total += c * v * v;
        if let Some(s) = sink.as_deref_mut() {
            s.push(t, x, *alpha, 2.0 * c * v);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxfn::TrigPolynomial;
    use crate::pinn::function::DecayingModes;

    /// `a + b·x1` in space, constant in time.
    struct Affine {
        a: f64,
        b: f64,
    }

    impl SpaceTimeFunction for Affine {
        fn extent(&self) -> u32 {
            100
        }
        fn max_derivative_order(&self) -> u32 {
            u32::MAX
        }
        fn eval(&self, _t: f64, x: Point2, alpha: [u32; 3]) -> f64 {
            match alpha {
                [0, 0, 0] => self.a + self.b * x[0],
                [0, 1, 0] => self.b,
                _ => 0.0,
            }
        }
    }

    #[test]
    fn constants_have_no_residual() {
        let op = NonlocalOperator::default_operator();
        let c = Affine { a: 2.5, b: 0.0 };
        assert!(pde_residual(&op, &c, 0.1, [0.3, -0.7], None).unwrap().abs() < 1e-12);
        assert_eq!(boundary_residual(&c, 1, 0.1, Face::X1, 0.4, None).unwrap(), 0.0);
        assert_eq!(periodicity_residual(&c, 1, 0.2, [1.0, -5.0], None).unwrap(), 0.0);
    }

    #[test]
    fn exact_solution_has_small_pde_residual() {
        let op = NonlocalOperator::default_operator();
        let f = DecayingModes::smoke();
        for x in [[0.0, 0.0], [1.3, -2.9], [-3.0, 3.1]] {
            let r = pde_residual(&op, &f, 0.4, x, None).unwrap();
            assert!(r.abs() < 1e-9, "{r}");
        }
    }

    #[test]
    fn linear_function_face_mismatch() {
        let f = Affine { a: 0.0, b: 1.0 };
        let r = boundary_residual(&f, 0, 0.0, Face::X1, 0.2, None).unwrap();
        assert!((r - 4.0 * PI * PI).abs() < 1e-12);
        assert_eq!(boundary_residual(&f, 0, 0.0, Face::X2, 0.2, None).unwrap(), 0.0);
        // first derivatives agree on opposite faces
        let r1 = boundary_residual(&f, 1, 0.0, Face::X1, 0.2, None).unwrap();
        assert!((r1 - r).abs() < 1e-12);
    }

    #[test]
    fn linear_function_shift_blocks() {
        let f = Affine { a: 0.0, b: 1.0 };
        // independent loop for the first block at x = 0
        let mut block1 = 0.0;
        for k in -2..=2 {
            for _m in -2..=2 {
                let d = 0.0 - (0.0 - TWO_PI * k as f64);
                block1 += d * d;
            }
        }
        assert!((block1 - 200.0 * PI * PI).abs() < 1e-9);
        // unit shift in x1: value differs by 2π, slope agrees; squares:
        // (x+2π)² − x² = 4π² at x = 0, D_1: 2(2π) − 0 = 4π
        let block2 = 4.0 * PI * PI;
        let block3 = (4.0 * PI * PI).powi(2) + (4.0 * PI).powi(2);
        let r = periodicity_residual(&f, 0, 0.0, [0.0, 0.0], None).unwrap();
        assert!((r - (block1 + block2 + block3)).abs() < 1e-9, "{r}");
    }

    #[test]
    fn periodic_functions_have_no_shift_residual() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let f = DecayingModes::new(TrigPolynomial::random(&mut rng, 6, 4));
        for _ in 0..100 {
            let t = rng.random_range(0.0..1.0);
            let x = [rng.random_range(-TWO_PI..TWO_PI), rng.random_range(-TWO_PI..TWO_PI)];
            let r = periodicity_residual(&f, 1, t, x, None).unwrap();
            assert!(r < 1e-20 * (1.0 + x[0].abs() + x[1].abs()).powi(2) + 1e-18, "{r}");
            let u = rng.random_range(-PI..PI);
            assert!(boundary_residual(&f, 1, t, Face::X1, u, None).unwrap() < 1e-20);
        }
    }

    #[test]
    fn sobolev_weights_match_fourier_symbol() {
        // cos(2x1 + 3x2): ‖·‖²_{H^k} = 2π²(1 + 13)^k
        let f = DecayingModes::new(TrigPolynomial::new(vec![TrigPolynomial::cos(1.0, [2, 3], 0.4)]));
        for k in 0..=4u32 {
            let w = sobolev_weights(k);
            // average over a full period of the squared derivative is 1/2
            // times the symbol, so the density integrates to
            let sum: f64 = w
                .iter()
                .map(|(a, c)| c * 2f64.powi(2 * a[1] as i32) * 3f64.powi(2 * a[2] as i32))
                .sum();
            assert!((sum - 14f64.powi(k as i32)).abs() < 1e-9 * sum);
            let _ = sobolev_density(&f, k, 0.0, [0.1, 0.2], None).unwrap();
        }
    }

    #[test]
    fn capability_and_extent_errors() {
        struct Low;
        impl SpaceTimeFunction for Low {
            fn extent(&self) -> u32 {
                2
            }
            fn max_derivative_order(&self) -> u32 {
                1
            }
            fn eval(&self, _: f64, _: Point2, _: [u32; 3]) -> f64 {
                0.0
            }
        }
        let op = NonlocalOperator::cached(&crate::quadrature::QuadratureConfig::reduced(), crate::kernels::PeriodizedKernel::new(8)).unwrap();
        assert!(matches!(pde_residual(&op, &Low, 0.0, [0.0, 0.0], None), Err(Error::Capability(_))));
        assert!(matches!(periodicity_residual(&Low, 0, 0.0, [0.0, 0.0], None), Err(Error::Domain(_))));
        assert!(matches!(sobolev_density(&Low, 3, 0.0, [0.0, 0.0], None), Err(Error::Capability(_))));
    }
}
