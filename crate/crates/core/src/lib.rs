//! Nonlocal operators on non-periodic functions and their use in
//! physics-informed approximation of the critical SQG equation.
//!
//! The crate is organized bottom-up:
//!
//! * [`kernels`]: periodized Calderón–Zygmund kernels `K` and `R*` by
//!   truncated lattice summation with certified tail bounds.
//! * [`spectral`]: exact periodic operators (`Λ^s`, Riesz transforms,
//!   Sobolev norms) as Fourier multipliers on uniform grids.
//! * [`quadrature`], [`boxfn`], [`nonlocal`]: principal-value quadrature
//!   for `Λ̃` and `R̃` applied to functions that need not be periodic.
//! * [`sqg`]: integrating-factor RK4 pseudospectral solver.
//! * [`net`]: tanh networks with exact input derivatives, parameter
//!   gradients and Adam.
//! * [`pinn`]: residuals, error functionals, training and bound checks.
//! * [`io`], [`experiments`]: file formats and experiment drivers.

pub mod boxfn;
pub mod error;
pub mod experiments;
pub mod gauss;
pub mod io;
pub mod kernels;
pub mod net;
pub mod nonlocal;
pub mod pinn;
pub mod probes;
pub mod quadrature;
pub mod sqg;
pub mod spectral;

pub use error::{Error, Result};

/// A point of the plane, `(x1, x2)`.
pub type Point2 = [f64; 2];

/// Half-width of the fundamental box `T² = [-π, π]²`.
pub const PI: f64 = std::f64::consts::PI;
pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Configures the global rayon pool from `SQGNET_THREADS` if set.
/// Later calls are no-ops.
pub fn init_threads_from_env() {
    if let Some(n) = std::env::var("SQGNET_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}
