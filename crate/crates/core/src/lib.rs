//! Two-layer multi-vehicle motion planning with interactive spatio-temporal
//! corridors: a mixed-integer corridor layer followed by per-vehicle
//! trajectory optimisation inside the corridors.

pub mod error;
pub mod geometry;
pub mod guidance;
pub mod miqp;
pub mod istc;
pub mod presets;
pub mod scenario;
pub mod trajectory;
pub mod metrics;
pub mod pipeline;
pub mod plot;
