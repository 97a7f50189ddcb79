//! Smooth non-periodic test functions: incommensurate cosines plus a
//! quadratic drift, with every derivative exact.

use crate::boxfn::{cos_derivative, BoxFunction};
use crate::{Point2, PI};
use rand::Rng;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ProbeFunction {
    /// `(amplitude, ω, phase)` of each cosine.
    pub waves: Vec<(f64, [f64; 2], f64)>,
    /// Coefficients of `(x1/π)^i (x2/π)^j` for `i + j ≤ 2`, in the order
    /// `1, x1, x2, x1², x1x2, x2²`.
    pub drift: [f64; 6],
    pub extent: u32,
}

const DRIFT_POWERS: [[u32; 2]; 6] = [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]];

impl ProbeFunction {
    /// `waves` random cosines with `|ω_i| ≤ max_freq`, plus a random drift of
    /// size `drift_scale`.
    pub fn random<R: Rng>(rng: &mut R, waves: usize, max_freq: f64, drift_scale: f64) -> Self {
        let waves = (0..waves)
            .map(|_| {
                (
                    rng.random_range(-1.0..1.0),
                    [
                        rng.random_range(-max_freq..max_freq),
                        rng.random_range(-max_freq..max_freq),
                    ],
                    rng.random_range(0.0..crate::TWO_PI),
                )
            })
            .collect();
        let mut drift = [0.0; 6];
        for d in drift.iter_mut() {
            *d = drift_scale * rng.random_range(-1.0..1.0);
        }
        Self {
            waves,
            drift,
            extent: 6,
        }
    }

    fn drift_derivative(&self, x: Point2, alpha: [u32; 2]) -> f64 {
        let mut acc = 0.0;
        for (c, p) in self.drift.iter().zip(DRIFT_POWERS) {
            if alpha[0] > p[0] || alpha[1] > p[1] {
                continue;
            }
            let mut term = *c / PI.powi((p[0] + p[1]) as i32);
            for axis in 0..2 {
                let (e, a) = (p[axis], alpha[axis]);
                // d^a/dx^a x^e = e!/(e-a)! x^(e-a)
                let falling: u32 = ((e - a + 1)..=e).product();
                term *= falling as f64 * x[axis].powi((e - a) as i32);
            }
            acc += term;
        }
        acc
    }
}

impl BoxFunction for ProbeFunction {
    fn extent(&self) -> u32 {
        self.extent
    }
    fn max_derivative_order(&self) -> u32 {
        u32::MAX
    }
    fn eval_unchecked(&self, x: Point2, alpha: [u32; 2]) -> f64 {
        let waves: f64 = self
            .waves
            .iter()
            .map(|&(a, w, p)| a * cos_derivative(w, p, x, alpha))
            .sum();
        waves + self.drift_derivative(x, alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let f = ProbeFunction::random(&mut rng, 3, 2.5, 0.5);
        let x = [0.4, -1.3];
        let h = 1e-5;
        for alpha in [[0, 0], [1, 0], [0, 1], [1, 1], [2, 0]] {
            let d1 = (f.eval_unchecked([x[0] + h, x[1]], alpha)
                - f.eval_unchecked([x[0] - h, x[1]], alpha))
                / (2.0 * h);
            let want = f.eval_unchecked(x, [alpha[0] + 1, alpha[1]]);
            assert!((d1 - want).abs() < 1e-6 * (1.0 + want.abs()), "{alpha:?}");
            let d2 = (f.eval_unchecked([x[0], x[1] + h], alpha)
                - f.eval_unchecked([x[0], x[1] - h], alpha))
                / (2.0 * h);
            let want = f.eval_unchecked(x, [alpha[0], alpha[1] + 1]);
            assert!((d2 - want).abs() < 1e-6 * (1.0 + want.abs()), "{alpha:?}");
        }
        assert_eq!(f.eval_unchecked(x, [3, 0]), {
            f.waves.iter().map(|&(a, w, p)| a * cos_derivative(w, p, x, [3, 0])).sum::<f64>()
        });
    }
}
