//! Impacts in nonholonomic mechanical systems.
//!
//! A velocity jump at a unilateral constraint (a wall) is the reflection
//! `v⁺ = (I − (1 + μ) P) v⁻`, where `P` is the projector onto the
//! kinetic-metric orthogonal complement of the velocities admissible on the
//! wall. Between impacts the system follows the Lagrange-d'Alembert equations
//! with its rolling constraints.
//!
//! - [`geometry`]: kernels, projectors and impact matrices.
//! - [`models`]: the rough-ball scenes and a configurable generic system.
//! - [`dynamics`]: constrained flow between impacts.
//! - [`hybrid`]: event-driven simulation and auditing.
//! - [`io`]: scene files, tables and the command-line entry points.

pub mod dynamics;
pub mod geometry;
pub mod hybrid;
pub mod io;
pub mod models;
