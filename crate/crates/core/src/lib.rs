//! Feature-assisted, variable-fidelity synthesis of free-form planar antenna
//! geometries.
//!
//! The crate couples a cylindrical-coordinate geometry encoding with a
//! deterministic analytic reflection-response simulator (plus a subprocess
//! adapter for external solvers), a feature-point response representation,
//! and a trust-region engine operating on linear feature surrogates. Two
//! end-to-end strategies are provided: bandwidth-specific design and
//! bandwidth-enhanced optimization around a center frequency.

pub mod features;
pub mod geometry;
pub mod objectives;
pub mod optimizer;
pub mod pipeline;
pub mod simulator;

pub use features::{extract, ExtractConfig, FeaturePoint, FeatureSet};
pub use geometry::{Bounds, DecodedPatch, DesignVector};
pub use objectives::BandSpec;
pub use optimizer::{FdPolicy, LinearFeatureSurrogate, TrConfig, TrustRegionState};
pub use pipeline::{RunConfig, RunResult, Strategy};
pub use simulator::{CostLedger, Fidelity, MockSimulator, Response, Simulator, SweepSpec};
