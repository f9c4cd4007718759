//! Assignment mechanisms for school choice under distributional quotas.
//!
//! Every quantity is an exact rational. The crate provides:
//!
//! * [`model`]: instances, assignments, feasibility and the fractional
//!   optimum OPT;
//! * [`lp`]: an exact two-phase simplex solver;
//! * [`sdm`]: serial dictatorship with dynamic menus;
//! * [`gps`]: generalized probabilistic serial;
//! * [`lottery`]: lotteries over approximately feasible integral allocations;
//! * [`flows`]: max flow with lower bounds and the laminar fast path;
//! * [`audit`]: property checks with re-checkable witnesses;
//! * [`format`] and [`generate`]: JSON documents and seeded random instances.

pub mod audit;
pub mod error;
pub mod fixtures;
pub mod flows;
pub mod format;
pub mod generate;
pub mod gps;
pub mod lottery;
pub mod lp;
pub mod model;
pub mod rational;
pub mod sdm;

pub use error::{Error, Result};
pub use model::{
    check_feasible, compute_opt, type_profile, Allocation, Instance, InstanceBuilder, Matrix, Quotas,
    StudentAssignment, TypeAssignment, ViolationReport,
};
pub use rational::Rational;
