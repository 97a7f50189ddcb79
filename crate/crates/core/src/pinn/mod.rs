//! Physics-informed approximation of the critical SQG equation: residuals,
//! error functionals, training, and the a posteriori error bound.

pub mod function;
pub mod report;
pub mod residuals;
pub mod train;

use crate::quadrature::QuadratureConfig;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

pub use function::{DecayingModes, ReferenceSolution, SpaceTimeFunction, TimeSlice};
pub use report::{bound_check, generalization_error, minimal_constant, total_error, BoundVerdict, ErrorReport, ReportConfig};
pub use train::{train, TrainConfig, TrainOutcome};

/// Points per residual family in one Monte Carlo batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Collocation {
    pub interior: usize,
    pub initial: usize,
    pub boundary: usize,
    pub periodicity: usize,
    pub penalty: usize,
}

impl Default for Collocation {
    fn default() -> Self {
        Self {
            interior: 32,
            initial: 64,
            boundary: 32,
            periodicity: 32,
            penalty: 32,
        }
    }
}

/// What the error functionals are measured against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResidualConfig {
    /// Regularity index `s` of every `H^s` norm.
    pub s_index: u32,
    /// Weight `λ` of the `H^{s+3}` penalty.
    pub lambda: f64,
    pub t_final: f64,
    pub collocation: Collocation,
    /// Rule for `Λ̃`, `R̃` inside the training loss.
    pub quadrature: QuadratureConfig,
    /// Lattice truncation radius of the training kernels.
    pub truncation_radius: usize,
    pub seed: u64,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        Self {
            s_index: 0,
            lambda: 1e-4,
            t_final: 0.5,
            collocation: Collocation::default(),
            quadrature: QuadratureConfig::reduced(),
            truncation_radius: 16,
            seed: 0,
        }
    }
}

impl ResidualConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::Config(format!("t_final must be positive, got {}", self.t_final)));
        }
        let c = &self.collocation;
        if [c.interior, c.initial, c.boundary, c.periodicity, c.penalty].contains(&0) {
            return Err(Error::Config("collocation counts must be at least 1".into()));
        }
        if self.s_index + 3 > crate::net::jet::MAX_ORDER as u32 {
            return Err(Error::Capability(format!(
                "s = {} needs derivatives of order {}, networks provide {}",
                self.s_index,
                self.s_index + 3,
                crate::net::jet::MAX_ORDER
            )));
        }
        if self.truncation_radius == 0 {
            return Err(Error::Config("truncation_radius must be positive".into()));
        }
        self.quadrature.validate()
    }
}
