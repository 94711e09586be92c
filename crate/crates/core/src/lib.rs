//! Simulation and statistics for billiard tables bounded by the curves
//! `y = ±(|x|^beta + 1)` (or one such curve and the x-axis), whose flat points
//! at `x = 0` make the dynamics nonuniformly hyperbolic.
//!
//! - [`geometry`]: the table family, boundary charts and coordinate changes.
//! - [`dynamics`]: collision solver, reflection, billiard map and flow.
//! - [`sections`]: the hyperbolic section, window excursions and their cells.
//! - [`estimators`]: invariant-measure samplers, correlations, tail fits and probes.
//! - [`report`]: CSV/JSON emission.

pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod report;
pub mod sections;

pub use error::{Error, Result};
pub use geometry::{build_table, FlowState, MCoord, Model, Table, TableSpec, Vec2};
