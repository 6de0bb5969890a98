//! Convex optimal power flow for bipolar DC distribution networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`netmodel`]: network data model, case files, per-unit scaling, bundled cases.
//! - [`pf_oracle`]: Newton-Raphson power flow on the three conductors, used as
//!   the nonconvex ground truth.
//! - [`conesolve`]: a homogeneous self-dual interior-point solver for programs
//!   over zero, nonnegative and second-order cones.
//! - [`relaxbuild`]: builds the McCormick-strengthened second-order cone program
//!   (and the plain SOCP variant) from a network snapshot.
//! - [`stba`]: the sequential bound-tightening loop, solution recovery and
//!   certification, and the multi-period driver.
//! - [`report`]: serialisable reports shared by the CLI and the Python binding.

pub mod conesolve;
pub mod netmodel;
pub mod pf_oracle;
pub mod relaxbuild;
pub mod report;
pub mod stba;

pub use netmodel::{NetworkCase, Pole, Port};
