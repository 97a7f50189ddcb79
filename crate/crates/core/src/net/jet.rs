//! Truncated multivariate Taylor polynomials in `(t, x1, x2)`.
//!
//! A jet of order `K` stores `c_β` for `|β| ≤ K` so that
//! `f(p + h) = Σ c_β h^β + O(|h|^{K+1})`; hence `∂^β f(p) = β! c_β`.
//! Arithmetic is exact on these truncations, so pushing jets through the
//! network yields the same derivatives as nested dual numbers.

use std::sync::OnceLock;

pub const VARS: usize = 3;
pub const MAX_ORDER: usize = 4;

#[derive(Debug)]
pub struct JetSpace {
    pub order: usize,
    pub monomials: Vec<[u32; VARS]>,
    /// `β!` per monomial.
    pub factorial: Vec<f64>,
    /// `(i, j, k)` with `β_i + β_j = β_k`.
    table: Vec<(u16, u16, u16)>,
    /// Taylor coefficients `P_m / m!` of tanh derivatives as polynomials
    /// in `y = tanh`, `m = 0..=order`.
    tanh_poly: Vec<Vec<f64>>,
}

fn fact(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

impl JetSpace {
    fn build(order: usize) -> Self {
        let mut monomials = Vec::new();
        for deg in 0..=order as u32 {
            for a in (0..=deg).rev() {
                for b in (0..=deg - a).rev() {
                    monomials.push([a, b, deg - a - b]);
                }
            }
        }
        let factorial = monomials
            .iter()
            .map(|m| m.iter().map(|&e| fact(e)).product())
            .collect();
        let mut table = Vec::new();
        for (i, a) in monomials.iter().enumerate() {
            for (j, b) in monomials.iter().enumerate() {
                let sum = [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
                if let Some(k) = monomials.iter().position(|m| *m == sum) {
                    table.push((i as u16, j as u16, k as u16));
                }
            }
        }
        // P_0 = y, P_{m+1} = P_m' (1 - y²)
        let mut polys: Vec<Vec<f64>> = vec![vec![0.0, 1.0]];
        for m in 0..order {
            let p = &polys[m];
            let dp: Vec<f64> = (1..p.len()).map(|i| i as f64 * p[i]).collect();
            let mut next = vec![0.0; dp.len() + 2];
            for (i, c) in dp.iter().enumerate() {
                next[i] += c;
                next[i + 2] -= c;
            }
            polys.push(next);
        }
        let tanh_poly = polys
            .into_iter()
            .enumerate()
            .map(|(m, p)| p.into_iter().map(|c| c / fact(m as u32)).collect())
            .collect();
        Self {
            order,
            monomials,
            factorial,
            table,
            tanh_poly,
        }
    }

    /// Shared space of the given order (`≤ MAX_ORDER`).
    pub fn get(order: usize) -> &'static JetSpace {
        static SPACES: OnceLock<Vec<JetSpace>> = OnceLock::new();
        assert!(order <= MAX_ORDER, "jet order {order} exceeds {MAX_ORDER}");
        &SPACES.get_or_init(|| (0..=MAX_ORDER).map(Self::build).collect())[order]
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn index(&self, alpha: [u32; VARS]) -> Option<usize> {
        self.monomials.iter().position(|m| *m == alpha)
    }

    /// `out = a ⋆ b`.
    pub fn mul(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for &(i, j, k) in &self.table {
            out[k as usize] += a[i as usize] * b[j as usize];
        }
    }

    /// `out += gᵀ ū`: the adjoint of `u = g ⋆ z` with respect to `z`.
    pub fn mul_transpose_add(&self, g: &[f64], ubar: &[f64], out: &mut [f64]) {
        for &(i, j, k) in &self.table {
            out[j as usize] += g[i as usize] * ubar[k as usize];
        }
    }

    /// `out = tanh(z)` by Horner in the non-constant part of `z`.
    pub fn tanh(&self, z: &[f64], out: &mut [f64]) {
        let y = z[0].tanh();
        let n = self.len();
        if self.order == 0 {
            out[0] = y;
            return;
        }
        let coeff = |m: usize| -> f64 {
            self.tanh_poly[m]
                .iter()
                .rev()
                .fold(0.0, |acc, c| acc * y + c)
        };
        let mut delta = z.to_vec();
        delta[0] = 0.0;
        let mut r = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        r[0] = coeff(self.order);
        for m in (0..self.order).rev() {
            self.mul(&delta, &r, &mut tmp);
            tmp[0] += coeff(m);
            std::mem::swap(&mut r, &mut tmp);
        }
        out.copy_from_slice(&r);
    }

    /// `1 - y ⋆ y`, the jet of `tanh'` at the argument whose tanh is `y`.
    pub fn tanh_slope(&self, y: &[f64], out: &mut [f64]) {
        self.mul(y, y, out);
        out.iter_mut().for_each(|o| *o = -*o);
        out[0] += 1.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(JetSpace::get(0).len(), 1);
        assert_eq!(JetSpace::get(1).len(), 4);
        assert_eq!(JetSpace::get(2).len(), 10);
        assert_eq!(JetSpace::get(3).len(), 20);
        assert_eq!(JetSpace::get(4).len(), 35);
        let s = JetSpace::get(2);
        assert_eq!(s.monomials[0], [0, 0, 0]);
        assert_eq!(s.index([1, 0, 0]), Some(1));
    }

    #[test]
    fn tanh_jet_matches_derivatives() {
        // single variable: z = a + h e_1
        let s = JetSpace::get(4);
        let a = 0.37;
        let mut z = vec![0.0; s.len()];
        z[0] = a;
        z[s.index([0, 1, 0]).unwrap()] = 1.0;
        let mut out = vec![0.0; s.len()];
        s.tanh(&z, &mut out);
        let y = a.tanh();
        let d = [
            y,
            1.0 - y * y,
            -2.0 * y + 2.0 * y.powi(3),
            -2.0 + 8.0 * y * y - 6.0 * y.powi(4),
            16.0 * y - 40.0 * y.powi(3) + 24.0 * y.powi(5),
        ];
        for (m, want) in d.iter().enumerate() {
            let idx = s.index([0, m as u32, 0]).unwrap();
            assert!((out[idx] * s.factorial[idx] - want).abs() < 1e-13);
        }
    }

    #[test]
    fn product_rule() {
        let s = JetSpace::get(3);
        // (1 + h0)(2 + h1) = 2 + 2h0 + h1 + h0h1
        let mut a = vec![0.0; s.len()];
        let mut b = vec![0.0; s.len()];
        a[0] = 1.0;
        a[s.index([1, 0, 0]).unwrap()] = 1.0;
        b[0] = 2.0;
        b[s.index([0, 1, 0]).unwrap()] = 1.0;
        let mut c = vec![0.0; s.len()];
        s.mul(&a, &b, &mut c);
        assert_eq!(c[0], 2.0);
        assert_eq!(c[s.index([1, 0, 0]).unwrap()], 2.0);
        assert_eq!(c[s.index([0, 1, 0]).unwrap()], 1.0);
        assert_eq!(c[s.index([1, 1, 0]).unwrap()], 1.0);
        assert_eq!(c.iter().filter(|v| **v != 0.0).count(), 4);
    }
}
