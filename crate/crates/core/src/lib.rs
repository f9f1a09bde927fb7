//! Sterile-insect-technique population control: compartment dynamics,
//! feedback release laws, Lyapunov certificates, a fixed-step integrator
//! and the reproducible experiment harness built on them.
//!
//! The crate is organized around the closed loop `dz/dt = H(z, u(z))`:
//!
//! * [`model`] — parameters, states, vector fields, offspring numbers,
//!   equilibria, local linearization at extinction;
//! * [`controller`] — the release policies `u(z)` and the gain thresholds
//!   that make each of them stabilizing;
//! * [`certificates`] — Lyapunov functions, their analytic flow
//!   derivatives, decay constants, and the trapping region `M(kappa)`;
//! * [`integrate`] — fixed-step fourth-order integration with positivity
//!   clamping and event interpolation;
//! * [`experiments`] — scenarios, gain-sweep tables, robustness Monte
//!   Carlo, basin-of-attraction evidence;
//! * [`certify`] — sampling-based verification suites over the
//!   certificates;
//! * [`rng`] — the counter-based generator that keeps every stochastic
//!   study replayable.
//!
//! All functions are pure and all values immutable after construction;
//! everything can be shared freely across threads.

pub mod certificates;
pub mod certify;
pub mod controller;
pub mod experiments;
pub mod integrate;
pub mod model;
pub mod rng;

pub use controller::Controller;
pub use integrate::{IntegratorConfig, Trajectory};
pub use model::{ModelParams, State, WildState};
