//! Fast–slow stochastic systems driven by the fractional Laplacian: spectral
//! discretization, noise generation, integrators, random slow manifolds by
//! Lyapunov–Perron iteration, exponential tracking and parameter estimation.
//!
//! Every numerical type is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod linalg;
pub mod manifold;
pub mod noise;
pub mod propagator;
pub mod scalar;
pub mod spectral;
pub mod tracking;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type SpectralOperator = spectral::SpectralOperator<f64>;
pub type ModelSpec = dynamics::ModelSpec<f64>;
pub type Trajectory = dynamics::Trajectory<f64>;
pub type HypothesisReport = dynamics::HypothesisReport<f64>;
pub type WienerPath = noise::WienerPath<f64>;
pub type OuPath = noise::OuPath<f64>;
pub type NoiseRealization = noise::NoiseRealization<f64>;
pub type LpConfig = manifold::LpConfig<f64>;
pub type ManifoldSolution = manifold::ManifoldSolution<f64>;
pub type TrackingConfig = tracking::TrackingConfig<f64>;
pub type TrackingReport = tracking::TrackingReport<f64>;
pub type EstimationProblem = estimation::EstimationProblem<f64>;
pub type EstimationResult = estimation::EstimationResult<f64>;
pub type Observation = estimation::Observation<f64>;
