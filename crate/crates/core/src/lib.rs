//! Harmonic identification of continuous-time linear time-periodic systems.
//!
//! A T-periodic system `ẋ = A(t)x + B(t)u` is identified through the Fourier
//! coefficients (phasors) of `A` and `B`. Sampled trajectories are turned into
//! sliding-window phasors, the central harmonic strip
//! `Ẋ₀ = Σ A_k X_{-k} + Σ B_k U_{-k}` is stacked into a least-squares problem,
//! and the pseudo-inverse solution yields the phasor families directly.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command-line
//! front end and batch orchestration live in the `ltpid` crate.
//!
//! Module map:
//!
//! * [`periodic`]: phasor families of periodic matrices ([`PeriodicMatrix`]),
//!   random and reference systems.
//! * [`simulate`]: sampling grids, inputs, fixed-step integrators, measurement noise.
//! * [`harmonic`]: sliding phasors, `Ẋ₀`, window norms, reconstruction.
//! * [`identify`]: regression assembly, informativity, pseudo-inverse solve.
//! * [`validate`]: phasor-space error and fresh-trajectory validation.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;
pub mod harmonic;
pub mod identify;
pub mod linalg;
pub mod periodic;
pub mod rng;
pub mod simulate;
pub mod validate;

pub use error::{Error, Result};
pub use harmonic::{PhasorFrame, Quadrature};
pub use identify::{IdentifiedModel, Informativity, RegressionData};
pub use periodic::{PeriodicMatrix, SeriesKind};
pub use simulate::{InputSignal, Integrator, SampledTrajectory, SamplingGrid};
pub use validate::{PhasorStack, ValidationReport};

/// Complex scalar used for phasors.
pub type C64 = nalgebra::Complex<f64>;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
/// Dense real matrix.
pub type RMatrix = nalgebra::DMatrix<f64>;
/// Dense real column vector.
pub type RVector = nalgebra::DVector<f64>;
