//! Feature-based request routing over Gaussian-mixture likelihood ratios,
//! least-loaded assignment within server clusters, and a deterministic
//! discrete-event simulator of the whole dispatch pipeline.
//!
//! ```text
//! record ──extract──▶ FeatureSet ──score vs. reference──▶ RoutingDecision
//!                                                            │
//!                         general cluster ◀──overflow── Registry::assign
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod features;
pub mod gmm;
pub mod registry;
pub mod router;
pub mod sim;

pub use error::{Error, RegistryError, Result};
pub use features::{
    extract_features, synth_patients, FeatureSchema, PatientRecord, PopulationSpec,
};
pub use gmm::{
    em_fit, gaussian_log_density, gmm_log_density, likelihood_ratio_score, sequence_log_likelihood,
    EmConfig, FeatureSet, FeatureVector, GaussianComponent, GmmModel, ScoreForm,
};
pub use registry::{Capacity, Cluster, ClusterSpec, LoadSnapshot, PhysicianId, Registry};
pub use router::{allot_patient, Policy, Reason, RouterConfig, RoutingDecision, Thresholds};
pub use sim::{EventLog, Scenario};
