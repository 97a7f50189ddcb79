//! Reflection-paired quadrature on `T² \ {|y| < ε}` for principal-value
//! integrals with kernels homogeneous of degree `-3`.
//!
//! The disc `ε < |y| ≤ π` is split into geometrically graded rings with a
//! Gauss–Legendre rule in `r` and the trapezoid rule in `θ`; the rest of
//! `T²` is covered by four sectors `|θ - jπ/2| ≤ π/4`, `π ≤ r ≤ π/cos(θ - jπ/2)`,
//! each with a tensor Gauss rule. Every node `y` is stored once and stands
//! for the pair `{y, -y}` with a common weight, so odd integrands cancel
//! exactly.

use crate::gauss::gauss_legendre_on;
use crate::{Error, Point2, Result, PI, TWO_PI};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    pub inner_cutoff: f64,
    /// Ring count; when absent it follows from `ring_ratio`.
    pub ring_count: Option<usize>,
    pub ring_ratio: f64,
    /// Angular frequency the rings must resolve, per unit radius.
    pub bandwidth: f64,
    pub min_angular: usize,
    /// Fixed angular count per ring (overrides the bandwidth rule).
    pub angular_nodes: Option<usize>,
    /// Fixed Gauss order per ring (overrides the bandwidth rule).
    pub radial_order: Option<usize>,
    pub corner_angular: usize,
    pub corner_radial: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            inner_cutoff: 1e-4,
            ring_count: None,
            ring_ratio: 1.5,
            bandwidth: 12.0,
            min_angular: 16,
            angular_nodes: None,
            radial_order: None,
            corner_angular: 48,
            corner_radial: 16,
        }
    }
}

impl QuadratureConfig {
    /// Cheap rule for training: 8 rings × 16 angles.
    pub fn reduced() -> Self {
        Self {
            ring_count: Some(8),
            angular_nodes: Some(16),
            radial_order: Some(3),
            corner_angular: 8,
            corner_radial: 4,
            ..Self::default()
        }
    }

    /// Twice the rings and twice the angular nodes everywhere.
    pub fn refined(&self) -> Self {
        let rings = self.resolved_ring_count();
        Self {
            ring_count: Some(2 * rings),
            bandwidth: 2.0 * self.bandwidth,
            min_angular: 2 * self.min_angular,
            angular_nodes: self.angular_nodes.map(|n| 2 * n),
            corner_angular: 2 * self.corner_angular,
            corner_radial: 2 * self.corner_radial,
            ..self.clone()
        }
    }

    /// Half the angular nodes; the comparison rule for error estimates.
    pub fn half_angular(&self) -> Self {
        Self {
            bandwidth: 0.5 * self.bandwidth,
            min_angular: (self.min_angular / 2).max(4),
            angular_nodes: self.angular_nodes.map(|n| (n / 2).max(4)),
            corner_angular: (self.corner_angular / 2).max(2),
            ..self.clone()
        }
    }

    pub fn resolved_ring_count(&self) -> usize {
        self.ring_count.unwrap_or_else(|| {
            ((PI / self.inner_cutoff).ln() / self.ring_ratio.ln()).ceil() as usize
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inner_cutoff > 0.0 && self.inner_cutoff < PI) {
            return Err(Error::Config("inner cutoff must lie in (0, π)".into()));
        }
        if self.ring_count.is_none() && !(self.ring_ratio > 1.0) {
            return Err(Error::Config("ring ratio must exceed 1".into()));
        }
        if self.ring_count == Some(0) || self.corner_angular == 0 || self.corner_radial == 0 {
            return Err(Error::Config("quadrature counts must be positive".into()));
        }
        if self.angular_nodes.is_some_and(|n| n < 4 || n % 4 != 0) {
            return Err(Error::Config("angular node count must be a positive multiple of 4".into()));
        }
        Ok(())
    }

    /// Stable identity for caches.
    pub fn cache_key(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ring {
    pub r_in: f64,
    pub r_out: f64,
    pub radial_order: usize,
    pub angular_nodes: usize,
}

/// Node standing for `{y, -y}`, each with weight `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairNode {
    pub y: Point2,
    pub w: f64,
}

#[derive(Debug, Clone)]
pub struct PvQuadrature {
    pub config: QuadratureConfig,
    pub rings: Vec<Ring>,
    pub inner_cutoff: f64,
    /// Disc nodes, ring by ring.
    pub disc: Vec<PairNode>,
    /// Start of each ring's nodes in `disc`.
    pub ring_offsets: Vec<usize>,
    pub corner: Vec<PairNode>,
}

fn round_up4(n: usize) -> usize {
    n.div_ceil(4) * 4
}

/// Smallest Gauss order whose Taylor-type error bound for `e^{ikr}` on an
/// interval of length `h` falls below `tol`.
fn radial_order_for(h: f64, k: f64, tol: f64) -> usize {
    let z = k * h / 2.0 + 1.0;
    let mut q = 2usize;
    loop {
        let mut log_err = 2.0 * q as f64 * z.ln();
        for i in 1..=(2 * q) {
            log_err -= (i as f64).ln();
        }
        if log_err < tol.ln() || q >= 40 {
            return q;
        }
        q += 1;
    }
}

/// `(x, y) -> (-y, x)`.
#[inline]
fn rot90(p: Point2) -> Point2 {
    [-p[1], p[0]]
}

impl PvQuadrature {
    pub fn new(config: QuadratureConfig) -> Result<Self> {
        config.validate()?;
        let eps = config.inner_cutoff;
        let nr = config.resolved_ring_count();
        let mut rings: Vec<Ring> = Vec::with_capacity(nr);
        let mut disc = Vec::new();
        let mut ring_offsets = Vec::with_capacity(nr);
        for i in 0..nr {
            let r_in = if i == 0 { eps } else { rings[i - 1].r_out };
            let r_out = if i + 1 == nr {
                PI
            } else {
                eps * (PI / eps).powf((i + 1) as f64 / nr as f64)
            };
            let angular = match config.angular_nodes {
                Some(n) => n,
                None => round_up4(
                    config
                        .min_angular
                        .max((r_out * config.bandwidth).ceil() as usize + 24),
                ),
            };
            let q = config
                .radial_order
                .unwrap_or_else(|| radial_order_for(r_out - r_in, config.bandwidth, 1e-13).max(4));
            ring_offsets.push(disc.len());
            let (rs, rw) = gauss_legendre_on(q, r_in, r_out);
            let dtheta = TWO_PI / angular as f64;
            // first quadrant, then its 90° rotation; the other half-plane is
            // the implicit reflection
            let mut quadrant = Vec::with_capacity(q * angular / 4);
            for p in 0..angular / 4 {
                let theta = (p as f64 + 0.5) * dtheta;
                let (s, c) = theta.sin_cos();
                for (r, w) in rs.iter().zip(&rw) {
                    quadrant.push(PairNode {
                        y: [r * c, r * s],
                        w: w * r * dtheta,
                    });
                }
            }
            disc.extend(quadrant.iter().copied());
            disc.extend(quadrant.iter().map(|n| PairNode {
                y: rot90(n.y),
                w: n.w,
            }));
            rings.push(Ring {
                r_in,
                r_out,
                radial_order: q,
                angular_nodes: angular,
            });
        }

        let (ts, tw) = gauss_legendre_on(config.corner_angular, -PI / 4.0, PI / 4.0);
        let (ss, sw) = gauss_legendre_on(config.corner_radial, 0.0, 1.0);
        let mut sector = Vec::with_capacity(ts.len() * ss.len());
        for (t, wt) in ts.iter().zip(&tw) {
            let (sn, cs) = t.sin_cos();
            let rho = PI / cs;
            for (s, ws) in ss.iter().zip(&sw) {
                let r = PI + s * (rho - PI);
                sector.push(PairNode {
                    y: [r * cs, r * sn],
                    w: wt * ws * r * (rho - PI),
                });
            }
        }
        let mut corner = sector.clone();
        corner.extend(sector.iter().map(|n| PairNode {
            y: rot90(n.y),
            w: n.w,
        }));

        Ok(Self {
            config,
            rings,
            inner_cutoff: eps,
            disc,
            ring_offsets,
            corner,
        })
    }

    pub fn default_rule() -> Self {
        Self::new(QuadratureConfig::default()).expect("default config is valid")
    }

    /// All pair nodes, disc first.
    pub fn nodes(&self) -> impl Iterator<Item = &PairNode> {
        self.disc.iter().chain(&self.corner)
    }

    pub fn pair_count(&self) -> usize {
        self.disc.len() + self.corner.len()
    }

    /// Total area represented by the rule (both members of each pair).
    pub fn total_weight(&self) -> f64 {
        2.0 * self.nodes().map(|n| n.w).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_layout() {
        let q = PvQuadrature::default_rule();
        assert_eq!(q.rings[0].r_in, 1e-4);
        assert_eq!(q.rings.last().unwrap().r_out, PI);
        for w in q.rings.windows(2) {
            assert_eq!(w[0].r_out, w[1].r_in);
            assert!(w[1].r_in > w[0].r_in);
            assert!(w[1].r_out / w[1].r_in <= 1.5 + 1e-12);
        }
        for r in &q.rings {
            assert_eq!(r.angular_nodes % 4, 0);
        }
    }

    #[test]
    fn area_is_exact() {
        for (cfg, tol) in [
            (QuadratureConfig::default(), 1e-12),
            (QuadratureConfig::reduced(), 1e-6),
        ] {
            let q = PvQuadrature::new(cfg).unwrap();
            let eps = q.inner_cutoff;
            let want = TWO_PI * TWO_PI - PI * eps * eps;
            let err = (q.total_weight() - want).abs() / want;
            assert!(err < tol, "{err:e}");
        }
    }

    #[test]
    fn odd_kernel_cancels_exactly() {
        let q = PvQuadrature::default_rule();
        let mut s = [0.0, 0.0];
        for n in q.nodes() {
            let r3 = (n.y[0] * n.y[0] + n.y[1] * n.y[1]).powf(1.5);
            for i in 0..2 {
                let f = n.y[i] / r3;
                // pair contribution f(y) + f(-y)
                s[i] += n.w * (f + (-n.y[i]) / r3);
            }
        }
        assert_eq!(s, [0.0, 0.0]);
    }

    #[test]
    fn integrates_smooth_functions() {
        // ∫_{T² \ B_ε} cos(y1) cos(2 y2) dy = -π ε² ... ≈ 0 minus the tiny disc
        let q = PvQuadrature::default_rule();
        let mut s = 0.0;
        for n in q.nodes() {
            let f = |y: Point2| (3.0 * y[0]).cos() * (2.0 * y[1]).cos() + y[0] * y[0];
            s += n.w * (f(n.y) + f([-n.y[0], -n.y[1]]));
        }
        let eps: f64 = 1e-4;
        let want = TWO_PI * (2.0 * PI.powi(3) / 3.0) - PI * eps * eps - PI * eps.powi(4) / 4.0;
        assert!((s - want).abs() < 1e-10 * want, "{s} {want}");
    }

    #[test]
    fn homogeneous_integral_near_origin() {
        // ∫_{ε<|y|≤π} |y|^-1 dy = 2π(π - ε)
        let q = PvQuadrature::default_rule();
        let s: f64 = q
            .disc
            .iter()
            .map(|n| 2.0 * n.w / n.y[0].hypot(n.y[1]))
            .sum();
        let want = TWO_PI * (PI - 1e-4);
        assert!((s - want).abs() < 1e-12 * want);
    }

    #[test]
    fn refined_and_half_rules() {
        let base = QuadratureConfig::default();
        let fine = PvQuadrature::new(base.refined()).unwrap();
        let coarse = PvQuadrature::new(base.half_angular()).unwrap();
        let b = PvQuadrature::new(base).unwrap();
        assert_eq!(fine.rings.len(), 2 * b.rings.len());
        assert!(coarse.pair_count() < b.pair_count());
        assert!(QuadratureConfig {
            angular_nodes: Some(6),
            ..QuadratureConfig::reduced()
        }
        .validate()
        .is_err());
    }
}
