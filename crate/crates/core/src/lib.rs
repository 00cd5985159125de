//! Simulation and optimization toolkit for controlled mean-field
//! (McKean-Vlasov) stochastic differential equations.
//!
//! The state dynamics and costs depend on the state and on its mean, which
//! an interacting particle system approximates by the empirical average.
//! Controls come in two flavors: strict (action-valued) and relaxed
//! (probability-measure-valued over a finite action grid). Relaxed dynamics
//! are driven by an orthogonal martingale measure built from one independent
//! Brownian motion per action cell, whose covariance measure is the relaxed
//! control itself.
//!
//! The crate provides:
//!
//! - benchmark problems with independent deterministic reference solutions
//!   ([`problem`], [`mod@reference`]),
//! - strict/relaxed controls, their embedding, distance, and rapid-switching
//!   (chattering) approximations ([`controls`]),
//! - the particle simulator and martingale-measure diagnostics ([`sim`]),
//! - Monte Carlo cost estimation and relaxed-vs-chattered gap tables
//!   ([`cost`]),
//! - regression-based backward solvers for the first- and second-order
//!   adjoint equations ([`bsde`]),
//! - Hamiltonian and maximum-principle residual checks ([`smp`]),
//! - a successive-approximation optimizer over relaxed controls
//!   ([`optimizer`]).
//!
//! Everything random flows from a single seed through counter-based streams,
//! so results are bit-identical for any worker count.

// `!(x > 0.0)` style guards are deliberate: they reject NaN along with the
// out-of-range values, which `x <= 0.0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bsde;
pub mod controls;
pub mod cost;
pub mod error;
pub mod grid;
pub mod optimizer;
pub mod problem;
pub mod reference;
pub mod regression;
pub mod rng;
pub mod sim;
pub mod smp;
pub mod stats;
pub mod textio;

pub use controls::{
    chattering, control_distance, delta_embedding, ChatteringSchedule, RelaxedControl,
    StateBinning, StrictControl,
};
pub use cost::{estimate_cost, simulate_cost, value_gap_experiment, CostEstimate, GapTable};
pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use problem::{
    make_chattering_problem, make_lq_meanfield, validate_problem, ActionGrid, LqParams,
    ProblemSpec, SamplingBox,
};
pub use sim::{
    orthogonality_check, quadratic_variation, simulate_relaxed, simulate_strict, ControlRef,
    MartingaleMeasurePath, PathBundle, SimConfig,
};
pub use smp::{h_function, hamiltonian, near_optimality_check, smp_residual, SmpReport};
