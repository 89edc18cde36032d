use triage_core::sim::{
    self, report, ClusterInfo, EventKind, EventLog, LogHeader, OVERFLOW_HEADER, TIMESERIES_HEADER,
};
use triage_core::Capacity;

fn empty_log() -> EventLog {
    EventLog {
        header: LogHeader {
            scenario: "empty".into(),
            seed: 0,
            horizon: 10.0,
            delta_t: 5.0,
            clusters: vec![ClusterInfo {
                index: 1,
                label: "general".into(),
                physicians: 1,
                capacity: Capacity::Unbounded,
            }],
        },
        entries: Vec::new(),
    }
}

#[test]
fn empty_log_gives_header_only_tables() {
    let r = report(&empty_log());
    assert!(r.timeseries.is_empty() && r.overflows.is_empty());
    let dir = tempfile::tempdir().unwrap();
    let ts = dir.path().join("ts.csv");
    let ov = dir.path().join("ov.csv");
    r.write_timeseries_csv(&ts).unwrap();
    r.write_overflows_csv(&ov).unwrap();
    assert_eq!(
        std::fs::read_to_string(ts).unwrap(),
        TIMESERIES_HEADER.join(",") + "\n"
    );
    assert_eq!(
        std::fs::read_to_string(ov).unwrap(),
        OVERFLOW_HEADER.join(",") + "\n"
    );
}

#[test]
fn report_matches_recount() {
    let s = triage_core::Scenario::load(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../scenarios/fig1/fig1.json"
    ))
    .unwrap();
    let log = sim::run(&s).unwrap();
    let r = report(&log);
    let events: Vec<_> = log.events().collect();
    for row in &r.timeseries {
        let upto = events.iter().filter(|e| e.time <= row.time);
        let c = row.cluster_index;
        let (mut a, mut d, mut o) = (0, 0, 0);
        let mut flagged = false;
        for e in upto {
            match e.kind {
                EventKind::Assignment if e.cluster == Some(c) => a += 1,
                EventKind::Departure if e.cluster == Some(c) => d += 1,
                EventKind::OverflowToGeneral if e.from_cluster == Some(c) => o += 1,
                EventKind::StagnationFlag if e.cluster == Some(c) => flagged = true,
                EventKind::StagnationClear if e.cluster == Some(c) => flagged = false,
                _ => {}
            }
        }
        assert_eq!(row.cumulative_assignments, a);
        assert_eq!(row.occupancy, a - d);
        assert_eq!(row.cumulative_overflows, o);
        assert_eq!(row.flagged, flagged, "t={} c={c}", row.time);
    }
    let n = events
        .iter()
        .filter(|e| e.kind == EventKind::OverflowToGeneral)
        .count();
    assert_eq!(r.overflows.len(), n);
    assert_eq!(r.timeseries.len(), 25 * 3);
}
