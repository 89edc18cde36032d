//! Plot-ready tables derived from an [`EventLog`].
//!
//! Values at a snapshot time `T` count every event stamped `<= T`, even
//! events processed after the snapshot at the same instant.

use std::path::Path;

use serde::Serialize;

use super::log::{EventKind, EventLog, OverflowTrigger};
use crate::error::{Error, Result};

pub const TIMESERIES_HEADER: [&str; 7] = [
    "time",
    "cluster_index",
    "cluster_label",
    "cumulative_assignments",
    "occupancy",
    "cumulative_overflows",
    "flagged",
];

pub const OVERFLOW_HEADER: [&str; 5] = [
    "time",
    "patient_id",
    "from_cluster",
    "to_cluster",
    "trigger",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeseriesRow {
    pub time: f64,
    pub cluster_index: usize,
    pub cluster_label: String,
    pub cumulative_assignments: usize,
    pub occupancy: usize,
    pub cumulative_overflows: usize,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverflowRow {
    pub time: f64,
    pub patient_id: String,
    pub from_cluster: usize,
    pub to_cluster: usize,
    pub trigger: &'static str,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub timeseries: Vec<TimeseriesRow>,
    pub overflows: Vec<OverflowRow>,
}

pub fn report(log: &EventLog) -> Report {
    let k = log.header.clusters.len();
    let mut events: Vec<_> = log.events().collect();
    events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.seq.cmp(&b.seq)));
    let mut times: Vec<f64> = log.snapshots().map(|s| s.time).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();

    let mut assigned = vec![0usize; k + 1];
    let mut departed = vec![0usize; k + 1];
    let mut overflowed = vec![0usize; k + 1];
    let mut flagged = vec![false; k + 1];
    let mut cursor = 0;
    let mut timeseries = Vec::with_capacity(times.len() * k);
    for t in times {
        while cursor < events.len() && events[cursor].time <= t {
            let ev = events[cursor];
            let slot = |c: Option<usize>| c.filter(|&c| c >= 1 && c <= k);
            match ev.kind {
                EventKind::Assignment => {
                    if let Some(c) = slot(ev.cluster) {
                        assigned[c] += 1;
                    }
                }
                EventKind::Departure => {
                    if let Some(c) = slot(ev.cluster) {
                        departed[c] += 1;
                    }
                }
                EventKind::OverflowToGeneral => {
                    if let Some(c) = slot(ev.from_cluster) {
                        overflowed[c] += 1;
                    }
                }
                EventKind::StagnationFlag | EventKind::StagnationClear => {
                    if let Some(c) = slot(ev.cluster) {
                        flagged[c] = ev.kind == EventKind::StagnationFlag;
                    }
                }
                EventKind::Arrival => {}
            }
            cursor += 1;
        }
        for c in &log.header.clusters {
            let i = c.index;
            timeseries.push(TimeseriesRow {
                time: t,
                cluster_index: i,
                cluster_label: c.label.clone(),
                cumulative_assignments: assigned[i],
                occupancy: assigned[i] - departed[i],
                cumulative_overflows: overflowed[i],
                flagged: flagged[i],
            });
        }
    }

    let overflows = events
        .iter()
        .filter(|e| e.kind == EventKind::OverflowToGeneral)
        .map(|e| OverflowRow {
            time: e.time,
            patient_id: e.patient_id.clone().unwrap_or_default(),
            from_cluster: e.from_cluster.unwrap_or(0),
            to_cluster: e.cluster.unwrap_or(0),
            trigger: match e.trigger {
                Some(OverflowTrigger::Capacity) => "capacity",
                Some(OverflowTrigger::Stagnation) => "stagnation",
                None => "",
            },
        })
        .collect();

    Report {
        timeseries,
        overflows,
    }
}

fn write_table<R: Serialize>(path: &Path, header: &[&str], rows: &[R]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

impl Report {
    pub fn write_timeseries_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_table(path.as_ref(), &TIMESERIES_HEADER, &self.timeseries)
    }

    pub fn write_overflows_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_table(path.as_ref(), &OVERFLOW_HEADER, &self.overflows)
    }
}
