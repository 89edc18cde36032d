use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::log::{ClusterInfo, Event, EventKind, EventLog, LogEntry, LogHeader, OverflowTrigger};
use super::scenario::{Scenario, ServiceDistribution};
use crate::error::{Error, RegistryError, Result};
use crate::features::{choose_specialty, extract_features, synth_patient};
use crate::registry::{LoadSnapshot, PhysicianId, Registry, STAGNATION_EPSILON};
use crate::router::{allot_patient, Reason};

const ARRIVAL_STREAM: u64 = 0;
const PATIENT_STREAM: u64 = 1;
const SERVICE_STREAM: u64 = 2;

#[derive(Debug)]
enum Pending {
    Snapshot,
    Arrival,
    Departure {
        patient: String,
        physician: PhysicianId,
    },
}

impl Pending {
    /// Snapshots run before anything else scheduled for the same instant.
    fn class(&self) -> u8 {
        match self {
            Pending::Snapshot => 0,
            _ => 1,
        }
    }
}

#[derive(Debug)]
struct Scheduled {
    time: f64,
    seq: u64,
    what: Pending,
}

impl Scheduled {
    fn key(&self) -> (f64, u8, u64) {
        (self.time, self.what.class(), self.seq)
    }
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        let (ta, ca, sa) = self.key();
        let (tb, cb, sb) = other.key();
        ta.total_cmp(&tb).then(ca.cmp(&cb)).then(sa.cmp(&sb))
    }
}

struct Engine<'a> {
    scenario: &'a Scenario,
    registry: Registry,
    queue: BinaryHeap<Reverse<Scheduled>>,
    entries: Vec<LogEntry>,
    next_schedule_seq: u64,
    next_event_seq: u64,
    next_patient: u64,
    arrivals_rng: ChaCha8Rng,
    patients_rng: ChaCha8Rng,
    service_rng: ChaCha8Rng,
    last_snapshot: Option<LoadSnapshot>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl<'a> Engine<'a> {
    fn new(scenario: &'a Scenario) -> Result<Self> {
        Ok(Self {
            scenario,
            registry: Registry::new(&scenario.clusters)?,
            queue: BinaryHeap::new(),
            entries: Vec::new(),
            next_schedule_seq: 0,
            next_event_seq: 0,
            next_patient: 0,
            arrivals_rng: stream(scenario.seed, ARRIVAL_STREAM),
            patients_rng: stream(scenario.seed, PATIENT_STREAM),
            service_rng: stream(scenario.seed, SERVICE_STREAM),
            last_snapshot: None,
        })
    }

    fn schedule(&mut self, time: f64, what: Pending) {
        if time > self.scenario.horizon {
            return;
        }
        let seq = self.next_schedule_seq;
        self.next_schedule_seq += 1;
        self.queue.push(Reverse(Scheduled { time, seq, what }));
    }

    fn emit(&mut self, time: f64, kind: EventKind, fill: impl FnOnce(&mut Event)) {
        let mut ev = Event {
            seq: self.next_event_seq,
            time,
            kind,
            patient_id: None,
            cluster: None,
            physician: None,
            from_cluster: None,
            trigger: None,
            detail: None,
        };
        fill(&mut ev);
        self.next_event_seq += 1;
        self.entries.push(LogEntry::Event(ev));
    }

    fn interarrival(&mut self) -> Option<f64> {
        let mean = self.scenario.arrival.mean_interarrival?;
        let exp = Exp::new(1.0 / mean).expect("validated positive mean");
        Some(exp.sample(&mut self.arrivals_rng))
    }

    fn service_time(&mut self) -> f64 {
        let s = &self.scenario.service;
        match s.distribution {
            ServiceDistribution::Fixed => s.mean,
            ServiceDistribution::Exponential => Exp::new(1.0 / s.mean)
                .expect("validated positive mean")
                .sample(&mut self.service_rng),
        }
    }

    fn run(mut self) -> Result<(EventLog, Registry)> {
        let s = self.scenario;
        let mut k = 0u64;
        loop {
            let t = k as f64 * s.delta_t;
            if t > s.horizon {
                break;
            }
            self.schedule(t, Pending::Snapshot);
            k += 1;
        }
        if let Some(gap) = self.interarrival() {
            self.schedule(gap, Pending::Arrival);
        }

        while let Some(Reverse(item)) = self.queue.pop() {
            match item.what {
                Pending::Snapshot => self.on_snapshot(item.time)?,
                Pending::Arrival => {
                    self.on_arrival(item.time)?;
                    if let Some(gap) = self.interarrival() {
                        self.schedule(item.time + gap, Pending::Arrival);
                    }
                }
                Pending::Departure { patient, physician } => {
                    self.registry.release(physician, &patient, item.time)?;
                    self.emit(item.time, EventKind::Departure, |e| {
                        e.patient_id = Some(patient);
                        e.cluster = Some(physician.cluster);
                        e.physician = Some(physician.ordinal);
                    });
                }
            }
        }

        let header = LogHeader {
            scenario: s.name.clone(),
            seed: s.seed,
            horizon: s.horizon,
            delta_t: s.delta_t,
            clusters: self
                .registry
                .clusters()
                .iter()
                .map(|c| ClusterInfo {
                    index: c.index(),
                    label: c.label().to_string(),
                    physicians: c.size(),
                    capacity: c.physicians()[0].capacity(),
                })
                .collect(),
        };
        Ok((
            EventLog {
                header,
                entries: self.entries,
            },
            self.registry,
        ))
    }

    fn on_snapshot(&mut self, time: f64) -> Result<()> {
        let snap = self.registry.snapshot(time);
        self.entries.push(LogEntry::Snapshot(snap.clone()));
        if let Some(prev) = self.last_snapshot.take() {
            for c in 1..self.registry.general_index() {
                let was = self.registry.is_flagged(c);
                let now = self
                    .registry
                    .stagnation_check(c, &prev, &snap, STAGNATION_EPSILON)?;
                if was != now {
                    let kind = if now {
                        EventKind::StagnationFlag
                    } else {
                        EventKind::StagnationClear
                    };
                    self.emit(time, kind, |e| e.cluster = Some(c));
                }
            }
        }
        self.last_snapshot = Some(snap);
        Ok(())
    }

    fn on_arrival(&mut self, time: f64) -> Result<()> {
        let s = self.scenario;
        let patient = format!("p{:06}", self.next_patient);
        self.next_patient += 1;

        let spec =
            &s.arrival.population[choose_specialty(&s.arrival.population, &mut self.patients_rng)];
        let mut record = synth_patient(spec, &s.schema, patient.clone(), &mut self.patients_rng);
        record.submitted_at = Some(time);
        let features = extract_features(&record, &s.schema)?.features;
        let decision = allot_patient(&patient, &features, &s.router)?;
        let bound = decision.chosen_cluster;
        let general = self.registry.general_index();

        self.emit(time, EventKind::Arrival, |e| {
            e.patient_id = Some(patient.clone());
            e.cluster = Some(bound);
            e.detail = Some(spec.label.clone());
        });

        let (cluster, how, physician) = if decision.reason == Reason::FallbackGeneral {
            let id = self.registry.assign(general, &patient, time)?;
            (general, "fallback_general", id)
        } else {
            let attempt = if self.registry.is_flagged(bound) {
                Err(OverflowTrigger::Stagnation)
            } else {
                match self.registry.assign(bound, &patient, time) {
                    Ok(id) => Ok(id),
                    Err(RegistryError::Saturated(_)) => Err(OverflowTrigger::Capacity),
                    Err(e) => return Err(Error::Registry(e)),
                }
            };
            match attempt {
                Ok(id) => (bound, "threshold_pass", id),
                Err(trigger) => {
                    self.emit(time, EventKind::OverflowToGeneral, |e| {
                        e.patient_id = Some(patient.clone());
                        e.cluster = Some(general);
                        e.from_cluster = Some(bound);
                        e.trigger = Some(trigger);
                    });
                    let id = self.registry.assign(general, &patient, time)?;
                    (general, "overflow", id)
                }
            }
        };

        self.emit(time, EventKind::Assignment, |e| {
            e.patient_id = Some(patient.clone());
            e.cluster = Some(cluster);
            e.physician = Some(physician.ordinal);
            e.detail = Some(how.to_string());
        });
        let service = self.service_time();
        self.schedule(time + service, Pending::Departure { patient, physician });
        Ok(())
    }
}

/// Runs the scenario to its horizon.
pub fn run(scenario: &Scenario) -> Result<EventLog> {
    run_detailed(scenario).map(|(log, _)| log)
}

/// Runs the scenario and also returns the final registry, whose mutation log
/// covers every assignment, release and flag change.
pub fn run_detailed(scenario: &Scenario) -> Result<(EventLog, Registry)> {
    scenario.validate()?;
    Engine::new(scenario)?.run()
}
