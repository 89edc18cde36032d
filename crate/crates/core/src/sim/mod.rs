//! Discrete-event simulation of timed arrivals, routing, least-loaded
//! assignment with overflow to the general cluster, and service completions.
//!
//! Arrivals are Poisson with the scenario's mean inter-arrival time. Each
//! arrival draws a specialty by mixing proportion, samples its frames from
//! that specialty's generator, and is routed and assigned immediately. Loads
//! are snapshotted every `delta_t` minutes; consecutive snapshots drive the
//! stagnation check. Events at equal times keep scheduling order, except that
//! snapshots go first.
//!
//! Randomness comes from three ChaCha8 streams (arrivals, patient features,
//! service times) keyed by the scenario seed, so a run is a pure function of
//! the scenario.

mod engine;
mod log;
mod report;
mod scenario;

pub use engine::{run, run_detailed};
pub use log::{
    ClusterInfo, ClusterSummary, Event, EventKind, EventLog, LogEntry, LogHeader, OverflowTrigger,
};
pub use report::{report, OverflowRow, Report, TimeseriesRow, OVERFLOW_HEADER, TIMESERIES_HEADER};
pub use scenario::{
    Arrival, ArrivalFile, PopulationRef, Scenario, ScenarioFile, ServiceDistribution, ServiceSpec,
};
