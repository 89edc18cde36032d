use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::{Capacity, LoadSnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Arrival,
    Assignment,
    Departure,
    OverflowToGeneral,
    StagnationFlag,
    StagnationClear,
}

/// Which rule sent a specialist-bound patient to the general cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverflowTrigger {
    /// Every physician in the cluster was at capacity.
    Capacity,
    /// The cluster carried the stagnation flag.
    Stagnation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub time: f64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patient_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physician: Option<usize>,
    /// Overflows only: the specialist cluster the router chose.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_cluster: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger: Option<OverflowTrigger>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterInfo {
    pub index: usize,
    pub label: String,
    pub physicians: usize,
    pub capacity: Capacity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub scenario: String,
    pub seed: u64,
    pub horizon: f64,
    pub delta_t: f64,
    pub clusters: Vec<ClusterInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogEntry {
    Event(Event),
    Snapshot(LoadSnapshot),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub arrivals_bound: usize,
    pub assignments: usize,
    pub departures: usize,
    pub overflows_from: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum LogLine {
    Header(LogHeader),
    Event(Event),
    Snapshot(LoadSnapshot),
    Summary { clusters: Vec<SummaryRow> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SummaryRow {
    cluster: usize,
    #[serde(flatten)]
    counts: ClusterSummary,
}

/// Everything a simulation run emitted, in processing order.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub header: LogHeader,
    pub entries: Vec<LogEntry>,
}

impl EventLog {
    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.entries.iter().filter_map(|e| match e {
            LogEntry::Event(ev) => Some(ev),
            LogEntry::Snapshot(_) => None,
        })
    }

    pub fn snapshots(&self) -> impl Iterator<Item = &LoadSnapshot> {
        self.entries.iter().filter_map(|e| match e {
            LogEntry::Snapshot(s) => Some(s),
            LogEntry::Event(_) => None,
        })
    }

    /// Per-cluster counts, keyed by cluster index.
    pub fn summary(&self) -> BTreeMap<usize, ClusterSummary> {
        let mut out: BTreeMap<usize, ClusterSummary> = self
            .header
            .clusters
            .iter()
            .map(|c| (c.index, ClusterSummary::default()))
            .collect();
        for ev in self.events() {
            match ev.kind {
                EventKind::Assignment => {
                    if let Some(c) = ev.cluster {
                        out.entry(c).or_default().assignments += 1;
                    }
                }
                EventKind::Departure => {
                    if let Some(c) = ev.cluster {
                        out.entry(c).or_default().departures += 1;
                    }
                }
                EventKind::OverflowToGeneral => {
                    if let Some(c) = ev.from_cluster {
                        out.entry(c).or_default().overflows_from += 1;
                    }
                }
                EventKind::Arrival => {
                    if let Some(c) = ev.cluster {
                        out.entry(c).or_default().arrivals_bound += 1;
                    }
                }
                EventKind::StagnationFlag | EventKind::StagnationClear => {}
            }
        }
        out
    }

    /// For each cluster (indexed from 1; entry 0 unused), the first time at
    /// which every physician was at capacity. Reconstructed from assignment
    /// and departure events; unbounded clusters never fill.
    pub fn first_full_times(&self) -> Vec<Option<f64>> {
        let k = self.header.clusters.len();
        let mut loads: Vec<Vec<usize>> = vec![Vec::new(); k + 1];
        for c in &self.header.clusters {
            loads[c.index] = vec![0; c.physicians];
        }
        let cap = |c: usize| self.header.clusters[c - 1].capacity;
        let mut out = vec![None; k + 1];
        for ev in self.events() {
            let (Some(c), Some(j)) = (ev.cluster, ev.physician) else {
                continue;
            };
            match ev.kind {
                EventKind::Assignment => loads[c][j - 1] += 1,
                EventKind::Departure => loads[c][j - 1] -= 1,
                _ => continue,
            }
            if out[c].is_none() && loads[c].iter().all(|&l| !cap(c).admits(l)) {
                out[c] = Some(ev.time);
            }
        }
        out
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        let mut line = |l: &LogLine| {
            serde_json::to_writer(&mut buf, l).expect("log serialization is infallible");
            buf.push(b'\n');
        };
        line(&LogLine::Header(self.header.clone()));
        for e in &self.entries {
            line(&match e {
                LogEntry::Event(ev) => LogLine::Event(ev.clone()),
                LogEntry::Snapshot(s) => LogLine::Snapshot(s.clone()),
            });
        }
        line(&LogLine::Summary {
            clusters: self
                .summary()
                .into_iter()
                .map(|(cluster, counts)| SummaryRow { cluster, counts })
                .collect(),
        });
        buf
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_jsonl())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut header = None;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: LogLine =
                serde_json::from_str(&line).map_err(|source| Error::JsonLine {
                    path: path.to_path_buf(),
                    line: i + 1,
                    source,
                })?;
            match parsed {
                LogLine::Header(h) => header = Some(h),
                LogLine::Event(e) => entries.push(LogEntry::Event(e)),
                LogLine::Snapshot(s) => entries.push(LogEntry::Snapshot(s)),
                LogLine::Summary { .. } => {}
            }
        }
        let header = header.ok_or_else(|| {
            Error::InvalidScenario(format!("{}: event log has no header line", path.display()))
        })?;
        Ok(Self { header, entries })
    }
}
