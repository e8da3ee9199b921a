//! Multi-objective quality-diversity optimization engine.
//!
//! The crate couples a CVT-tessellated feature archive holding bounded
//! Pareto fronts (with crowding-based selection and replacement) to an
//! analytic crystal-structure evaluation domain: periodic Lennard-Jones
//! energy with gradient relaxation, a conflicting magnetism score, and
//! two structural feature descriptors. MAP-Elites baselines, MOQD
//! metrics, illumination analysis, structure matching and statistical
//! run comparison are included.
//!
//! See the `examples/` directory for one runnable example per major
//! capability, and the `moqd` binary for the file-based workflow
//! (`run`, `suite`, `compare`, `illuminate`, `match`).

pub mod archive;
pub mod domain;
pub mod engine;
pub mod error;
pub mod illumination;
pub mod matcher;
pub mod metrics;
pub mod pareto;
pub mod snapshot;

pub use error::{Error, Result};
