//! Per-cluster physician load state.
//!
//! A [`Registry`] owns every cluster, routes assignments to the least-loaded
//! physician with spare capacity, and tracks the stagnation flag raised when
//! a cluster's mean load stops moving between two snapshots. Every mutation
//! is appended to a log that [`Registry::replay`] can rebuild state from.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, RegistryError};

type Result<T> = std::result::Result<T, RegistryError>;

/// Default tolerance for "mean load unchanged". Mean loads move in steps of
/// `1/v`, so this is an equality test.
pub const STAGNATION_EPSILON: f64 = 1e-9;

/// `d_i^j`: physician `j` of cluster `i`, both 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PhysicianId {
    pub cluster: usize,
    pub ordinal: usize,
}

impl fmt::Display for PhysicianId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d_{}^{}", self.cluster, self.ordinal)
    }
}

/// Maximum accepted-list length; `null` in JSON means unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Option<usize>", into = "Option<usize>")]
pub enum Capacity {
    Bounded(usize),
    Unbounded,
}

impl From<Option<usize>> for Capacity {
    fn from(v: Option<usize>) -> Self {
        v.map_or(Capacity::Unbounded, Capacity::Bounded)
    }
}

impl From<Capacity> for Option<usize> {
    fn from(c: Capacity) -> Self {
        match c {
            Capacity::Bounded(n) => Some(n),
            Capacity::Unbounded => None,
        }
    }
}

impl Capacity {
    pub fn admits(self, load: usize) -> bool {
        match self {
            Capacity::Bounded(n) => load < n,
            Capacity::Unbounded => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Physician {
    id: PhysicianId,
    accepted: Vec<String>,
    capacity: Capacity,
}

impl Physician {
    pub fn new(id: PhysicianId, capacity: Capacity) -> Self {
        Self {
            id,
            accepted: Vec::new(),
            capacity,
        }
    }

    pub fn id(&self) -> PhysicianId {
        self.id
    }

    pub fn accepted(&self) -> &[String] {
        &self.accepted
    }

    pub fn load(&self) -> usize {
        self.accepted.len()
    }

    pub fn capacity(&self) -> Capacity {
        self.capacity
    }

    pub fn is_full(&self) -> bool {
        !self.capacity.admits(self.load())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    index: usize,
    label: String,
    is_general: bool,
    physicians: Vec<Physician>,
}

impl Cluster {
    pub fn new(
        index: usize,
        label: impl Into<String>,
        is_general: bool,
        physicians: usize,
        capacity: Capacity,
    ) -> Self {
        Self {
            index,
            label: label.into(),
            is_general,
            physicians: (1..=physicians)
                .map(|j| {
                    Physician::new(
                        PhysicianId {
                            cluster: index,
                            ordinal: j,
                        },
                        capacity,
                    )
                })
                .collect(),
        }
    }

    /// A bounded cluster with preset loads, one entry per physician.
    pub fn with_loads(index: usize, loads: &[usize], capacity: Capacity) -> Self {
        let mut c = Self::new(index, format!("C{index}"), false, loads.len(), capacity);
        for (j, (p, &load)) in c.physicians.iter_mut().zip(loads).enumerate() {
            p.accepted = (0..load)
                .map(|n| format!("pre-{index}-{}-{n}", j + 1))
                .collect();
        }
        c
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_general(&self) -> bool {
        self.is_general
    }

    pub fn physicians(&self) -> &[Physician] {
        &self.physicians
    }

    pub fn size(&self) -> usize {
        self.physicians.len()
    }

    pub fn loads(&self) -> Vec<usize> {
        self.physicians.iter().map(Physician::load).collect()
    }

    pub fn total_load(&self) -> usize {
        self.physicians.iter().map(Physician::load).sum()
    }

    /// True when every physician is bounded and at capacity.
    pub fn is_full(&self) -> bool {
        !self.physicians.is_empty() && self.physicians.iter().all(Physician::is_full)
    }

    /// Least-loaded physician over the whole cluster, lowest ordinal on ties.
    pub fn min_loaded_physician(&self) -> Result<PhysicianId> {
        self.argmin(|_| true)
    }

    /// `E(X) = (Σ_j load_j) / v`.
    pub fn mean_load(&self) -> Result<f64> {
        if self.physicians.is_empty() {
            return Err(RegistryError::EmptyCluster(self.index));
        }
        Ok(self.total_load() as f64 / self.size() as f64)
    }

    fn argmin(&self, eligible: impl Fn(&Physician) -> bool) -> Result<PhysicianId> {
        if self.physicians.is_empty() {
            return Err(RegistryError::EmptyCluster(self.index));
        }
        let mut best: Option<&Physician> = None;
        for p in self.physicians.iter().filter(|p| eligible(p)) {
            // strict < keeps the lowest ordinal among equals
            if best.is_none_or(|b| p.load() < b.load()) {
                best = Some(p);
            }
        }
        best.map(Physician::id)
            .ok_or(RegistryError::Saturated(self.index))
    }
}

/// Free function form of [`Cluster::min_loaded_physician`].
pub fn min_loaded_physician(cluster: &Cluster) -> Result<PhysicianId> {
    cluster.min_loaded_physician()
}

/// Free function form of [`Cluster::mean_load`].
pub fn mean_load(cluster: &Cluster) -> Result<f64> {
    cluster.mean_load()
}

/// Layout of one cluster, as written in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub label: String,
    pub physicians: usize,
    #[serde(default = "unbounded")]
    pub capacity: Capacity,
}

fn unbounded() -> Capacity {
    Capacity::Unbounded
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterLoad {
    pub cluster: usize,
    pub physicians: usize,
    pub total_load: usize,
    pub mean_load: f64,
}

/// Mean load of every cluster at one instant. `total_load` keeps the exact
/// integer numerator alongside the floating-point mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSnapshot {
    pub time: f64,
    pub clusters: Vec<ClusterLoad>,
}

impl LoadSnapshot {
    pub fn cluster(&self, index: usize) -> Option<&ClusterLoad> {
        self.clusters.iter().find(|c| c.cluster == index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationOp {
    Assign,
    Release,
    Flag,
    Clear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mutation {
    pub time: f64,
    pub op: MutationOp,
    pub cluster: usize,
    #[serde(default)]
    pub physician: Option<usize>,
    #[serde(default)]
    pub patient: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DumpRow {
    pub time: f64,
    pub cluster_index: usize,
    pub cluster_label: String,
    pub physician_ordinal: usize,
    pub load: usize,
    pub saturated_flag: bool,
}

/// Single-writer owner of all cluster state. Clusters are indexed from 1 and
/// the last one is the general cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Registry {
    clusters: Vec<Cluster>,
    flagged: Vec<bool>,
    locations: HashMap<String, PhysicianId>,
    log: Vec<Mutation>,
}

impl Registry {
    pub fn new(specs: &[ClusterSpec]) -> Result<Self> {
        if specs.is_empty() {
            return Err(RegistryError::InvalidLayout("no clusters".into()));
        }
        for s in specs {
            if s.physicians == 0 {
                return Err(RegistryError::InvalidLayout(format!(
                    "cluster `{}` has no physicians",
                    s.label
                )));
            }
            if s.capacity == Capacity::Bounded(0) {
                return Err(RegistryError::InvalidLayout(format!(
                    "cluster `{}` has zero capacity",
                    s.label
                )));
            }
        }
        let k = specs.len();
        let clusters = specs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                Cluster::new(i + 1, s.label.clone(), i + 1 == k, s.physicians, s.capacity)
            })
            .collect();
        Ok(Self {
            clusters,
            flagged: vec![false; k],
            locations: HashMap::new(),
            log: Vec::new(),
        })
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn cluster(&self, index: usize) -> Result<&Cluster> {
        index
            .checked_sub(1)
            .and_then(|i| self.clusters.get(i))
            .ok_or(RegistryError::UnknownCluster(index))
    }

    pub fn general_index(&self) -> usize {
        self.clusters.len()
    }

    pub fn physician(&self, id: PhysicianId) -> Result<&Physician> {
        self.cluster(id.cluster)?
            .physicians
            .get(id.ordinal.wrapping_sub(1))
            .ok_or(RegistryError::UnknownPhysician(id))
    }

    /// Where a patient currently sits, if anywhere.
    pub fn locate(&self, patient: &str) -> Option<PhysicianId> {
        self.locations.get(patient).copied()
    }

    pub fn is_flagged(&self, cluster: usize) -> bool {
        cluster
            .checked_sub(1)
            .and_then(|i| self.flagged.get(i))
            .copied()
            .unwrap_or(false)
    }

    pub fn mutations(&self) -> &[Mutation] {
        &self.log
    }

    /// Total patients currently on any accepted list.
    pub fn total_assigned(&self) -> usize {
        self.clusters.iter().map(Cluster::total_load).sum()
    }

    /// Appends `patient` to the least-loaded physician of `cluster` that still
    /// has room.
    pub fn assign(&mut self, cluster: usize, patient: &str, time: f64) -> Result<PhysicianId> {
        if self.locations.contains_key(patient) {
            return Err(RegistryError::DuplicatePatient(patient.to_string()));
        }
        let target = self.cluster(cluster)?.argmin(|p| !p.is_full())?;
        self.place(target, patient, time);
        Ok(target)
    }

    fn place(&mut self, target: PhysicianId, patient: &str, time: f64) {
        let p = &mut self.clusters[target.cluster - 1].physicians[target.ordinal - 1];
        p.accepted.push(patient.to_string());
        debug_assert!(!matches!(p.capacity, Capacity::Bounded(n) if p.load() > n));
        self.locations.insert(patient.to_string(), target);
        self.log.push(Mutation {
            time,
            op: MutationOp::Assign,
            cluster: target.cluster,
            physician: Some(target.ordinal),
            patient: Some(patient.to_string()),
        });
    }

    pub fn release(&mut self, physician: PhysicianId, patient: &str, time: f64) -> Result<()> {
        self.physician(physician)?;
        let p = &mut self.clusters[physician.cluster - 1].physicians[physician.ordinal - 1];
        let pos = p
            .accepted
            .iter()
            .position(|x| x == patient)
            .ok_or_else(|| RegistryError::PatientNotFound {
                physician,
                patient: patient.to_string(),
            })?;
        p.accepted.remove(pos);
        self.locations.remove(patient);
        self.log.push(Mutation {
            time,
            op: MutationOp::Release,
            cluster: physician.cluster,
            physician: Some(physician.ordinal),
            patient: Some(patient.to_string()),
        });
        Ok(())
    }

    pub fn snapshot(&self, time: f64) -> LoadSnapshot {
        LoadSnapshot {
            time,
            clusters: self
                .clusters
                .iter()
                .map(|c| ClusterLoad {
                    cluster: c.index,
                    physicians: c.size(),
                    total_load: c.total_load(),
                    mean_load: c.total_load() as f64 / c.size() as f64,
                })
                .collect(),
        }
    }

    /// Compares the cluster's mean load across two snapshots. An unchanged
    /// mean (within `epsilon`) raises the cluster's flag; a changed one clears
    /// it.
    pub fn stagnation_check(
        &mut self,
        cluster: usize,
        earlier: &LoadSnapshot,
        later: &LoadSnapshot,
        epsilon: f64,
    ) -> Result<bool> {
        let size = self.cluster(cluster)?.size();
        let a = earlier
            .cluster(cluster)
            .filter(|c| c.physicians == size)
            .ok_or(RegistryError::SnapshotMismatch(cluster))?;
        let b = later
            .cluster(cluster)
            .filter(|c| c.physicians == size)
            .ok_or(RegistryError::SnapshotMismatch(cluster))?;
        if !(later.time > earlier.time) {
            return Err(RegistryError::SnapshotMismatch(cluster));
        }
        let stagnant = (a.mean_load - b.mean_load).abs() <= epsilon;
        self.set_flag(cluster, stagnant, later.time);
        Ok(stagnant)
    }

    fn set_flag(&mut self, cluster: usize, on: bool, time: f64) {
        let slot = &mut self.flagged[cluster - 1];
        if *slot == on {
            return;
        }
        *slot = on;
        self.log.push(Mutation {
            time,
            op: if on {
                MutationOp::Flag
            } else {
                MutationOp::Clear
            },
            cluster,
            physician: None,
            patient: None,
        });
    }

    /// Rebuilds a registry by applying `log` to an empty one with layout `specs`.
    pub fn replay(specs: &[ClusterSpec], log: &[Mutation]) -> Result<Self> {
        let mut reg = Self::new(specs)?;
        for (n, m) in log.iter().enumerate() {
            let diverged = || RegistryError::ReplayDiverged(n);
            match m.op {
                MutationOp::Assign | MutationOp::Release => {
                    let id = PhysicianId {
                        cluster: m.cluster,
                        ordinal: m.physician.ok_or_else(diverged)?,
                    };
                    let patient = m.patient.as_deref().ok_or_else(diverged)?;
                    if m.op == MutationOp::Release {
                        reg.release(id, patient, m.time).map_err(|_| diverged())?;
                        continue;
                    }
                    let p = reg.physician(id).map_err(|_| diverged())?;
                    if p.is_full() || reg.locations.contains_key(patient) {
                        return Err(diverged());
                    }
                    reg.place(id, patient, m.time);
                }
                MutationOp::Flag | MutationOp::Clear => {
                    reg.cluster(m.cluster).map_err(|_| diverged())?;
                    reg.set_flag(m.cluster, m.op == MutationOp::Flag, m.time);
                }
            }
        }
        Ok(reg)
    }

    pub fn dump(&self, time: f64) -> Vec<DumpRow> {
        self.clusters
            .iter()
            .flat_map(|c| {
                let flag = self.flagged[c.index - 1];
                c.physicians.iter().map(move |p| DumpRow {
                    time,
                    cluster_index: c.index,
                    cluster_label: c.label.clone(),
                    physician_ordinal: p.id.ordinal,
                    load: p.load(),
                    saturated_flag: flag,
                })
            })
            .collect()
    }

    pub fn write_dump_csv(&self, path: impl AsRef<Path>, time: f64) -> crate::Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        for row in self.dump(time) {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn write_mutations_jsonl(&self, path: impl AsRef<Path>) -> crate::Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        for m in &self.log {
            serde_json::to_writer(&mut buf, m).expect("mutation serialization is infallible");
            buf.push(b'\n');
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }
}
