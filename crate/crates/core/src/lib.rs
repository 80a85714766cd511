//! Simulation and verification toolkit for non-local diffusion equations
//! with time delay.
//!
//! The jump process `X` jumps at the times of a nonhomogeneous Poisson
//! process with intensity `λ(t) = ∫ α(t,θ) Q(dθ,dz)`; at a jump time `T` it
//! moves to `X(T⁻+Θ) + Z`, i.e. it re-reads its own past. Its law solves the
//! measure-valued delay equation
//!
//! ```text
//! ∂ₜu(t,dx) = ∫ α(t,θ) [u(t+θ, dx−z) − u(t,dx)] Q(dθ,dz)
//! ```
//!
//! and, rescaled as `(X(t) − Kt)/√t`, converges to a centred Gaussian with
//! covariance `Σ = D₀/(1+Γ)`.
//!
//! Modules:
//! - [`strip_measure`]: the jump measure `Q` with moments and samplers
//! - [`rate_policy`]: rate families `α(t,θ)` and thinning envelopes
//! - [`dde`]: scalar linear delay equation and its dominant root
//! - [`asymptotics`]: `Γ`, `K`, `D₀`, `Σ`, the limit law and recentring path
//! - [`simulator`]: trajectories and reproducible parallel ensembles
//! - [`lattice`]: exact law on integer lattices for atomic scenarios
//! - [`verify`]: statistical checks of the limit theorems
//! - [`scenario`]: declarative scenario files
//! - [`stats`], [`quadrature`], [`output`]: numerical utilities

pub mod asymptotics;
pub mod dde;
pub mod error;
pub mod lattice;
pub mod output;
pub mod quadrature;
pub mod rate_policy;
pub mod scenario;
pub mod simulator;
pub mod stats;
pub mod strip_measure;
pub mod verify;

pub use asymptotics::{AsymptoticConstants, LimitLaw, RecentringPath};
pub use dde::{DelayKernel, DenseSolution, History};
pub use error::{Error, Result};
pub use lattice::{LatticeEvolution, LatticeLaw};
pub use rate_policy::{BaseRate, RatePolicy};
pub use scenario::{Model, Overrides, Scenario};
pub use simulator::{EnsembleResult, EnsembleSpec, InitialCondition, Sampler, Trajectory};
pub use strip_measure::{JumpMarginal, StripMeasure, ThetaMeasure};
pub use verify::GofReport;
