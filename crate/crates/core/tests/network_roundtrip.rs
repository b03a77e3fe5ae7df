use deco_core::network::{gen_trace, TraceGenParams};
use deco_core::{NetworkSample, NetworkTrace};
use proptest::prelude::*;

fn trace() -> impl Strategy<Value = NetworkTrace> {
    prop::collection::vec((1e-3..100.0f64, 1.0..1e11f64, 0.0..5.0f64), 1..40).prop_map(|rows| {
        let mut time = 0.0;
        let samples = rows
            .into_iter()
            .enumerate()
            .map(|(i, (gap, bandwidth, latency))| {
                if i > 0 {
                    time += gap;
                }
                NetworkSample {
                    time,
                    bandwidth,
                    latency,
                }
            })
            .collect();
        NetworkTrace::new(samples).unwrap()
    })
}

proptest! {
    #[test]
    fn csv_round_trip_is_exact(t in trace()) {
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        prop_assert_eq!(NetworkTrace::read_csv(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn lookup_is_right_continuous_step(t in trace(), q in 0.0..5000.0f64) {
        let s = t.sample_at(q);
        let idx = t.samples().iter().rposition(|x| x.time <= q).unwrap();
        prop_assert_eq!(s, t.samples()[idx]);
    }
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    let t = gen_trace(&TraceGenParams {
        seed: 1,
        mean_bandwidth: 1e8,
        fluctuation: 0.3,
        latency: 0.2,
        duration: 600.0,
        interval: 1.0,
    })
    .unwrap();
    t.save(&path).unwrap();
    assert_eq!(NetworkTrace::load(&path).unwrap(), t);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("time_s,bandwidth_bps,latency_s\n"));
    assert!(t.samples().iter().all(|s| (7e7..=1.3e8).contains(&s.bandwidth)));
}

#[test]
fn rejects_malformed_files() {
    for text in [
        "time_s,bandwidth_bps,latency_s\n",
        "time,bw,lat\n0,1,0\n",
        "time_s,bandwidth_bps,latency_s\n1,1e8,0\n",
        "time_s,bandwidth_bps,latency_s\n0,1e8,0\n0,1e8,0\n",
        "time_s,bandwidth_bps,latency_s\n0,0,0\n",
        "time_s,bandwidth_bps,latency_s\n0,1e8,-1\n",
    ] {
        assert!(NetworkTrace::read_csv(text.as_bytes()).is_err(), "{text:?}");
    }
}
