use slice_arena::experiments::calibrate::evaluate_anchors;
use slice_arena::experiments::{load_catalog, ExperimentConfig};
use slice_arena::metrics::export::write_samples_csv;
use slice_arena::traffic::{ue_activations, Granularity};
use slice_arena::{
    default_anchors, experiment, run_experiment, simulate, CalibrationParams, Error, ExperimentResult, Group, Metric,
    SliceId, Window,
};

fn csv(r: &ExperimentResult) -> Vec<u8> {
    let mut buf = Vec::new();
    write_samples_csv(&mut buf, &r.all_samples()).unwrap();
    buf
}

#[test]
fn zero_repetitions_is_an_error() {
    let err = run_experiment(&experiment(1).unwrap(), &CalibrationParams::default(), 0, 42).unwrap_err();
    assert!(matches!(err, Error::ZeroRepetitions));
}

#[test]
fn exp5_frame_count_matches_ramp_arithmetic() {
    // slice 1: 4 UEs x 60 fps x 1200 s; each other slice: UEs from 0, 240, ..., 960 s
    let slice1 = 4 * 60 * 1200;
    let per_other: u64 = [0, 240, 480, 720, 960].iter().map(|t| 60 * (1200 - t)).sum();
    let expected = slice1 + 4 * per_other;
    assert_eq!(expected, 1_152_000);

    let config = experiment(5).unwrap();
    let ramp = config.ramp();
    assert_eq!(ue_activations(&ramp, SliceId(3)).len(), 5);
    let out = simulate(&config, &CalibrationParams::default(), 0, 42).unwrap();
    let generated: u64 = out.audit.slices.iter().map(|s| s.generated).sum();
    assert_eq!(generated, expected);
    // a handful of events per frame: emission, cpu, link, plus probes and ticks
    assert!(out.audit.events > generated && out.audit.events < 10 * generated);
    assert!(out.audit.is_balanced());
}

#[test]
fn exp5_slice1_degrades_as_others_ramp() {
    let r = run_experiment(&experiment(5).unwrap(), &CalibrationParams::default(), 1, 42).unwrap();
    let series: Vec<(f64, f64)> = r.runs[0]
        .samples
        .iter()
        .filter(|s| s.metric == Metric::ReceivedBits && s.slice == SliceId(1) && s.time_s > 0.0)
        .map(|s| (s.time_s, s.value))
        .collect();
    let early = series.iter().filter(|(t, _)| *t <= 240.0).map(|p| p.1).fold(f64::INFINITY, f64::min);
    let late = series.iter().filter(|(t, _)| *t > 720.0).map(|p| p.1).fold(0.0, f64::max);
    assert!(early > 150.0, "{early}");
    assert!(late < 0.8 * early, "{late} vs {early}");
}

#[test]
fn repetitions_are_deterministic_and_parallel_safe() {
    let config = experiment(8).unwrap();
    let p = CalibrationParams::default();
    let a = run_experiment(&config, &p, 3, 7).unwrap();
    let b = run_experiment(&config, &p, 3, 7).unwrap();
    assert_eq!(csv(&a), csv(&b));
    assert_eq!(a.seeds, vec![7, 8, 9]);
    assert!(a.runs.iter().all(|r| r.audit.is_balanced()));
    assert_eq!(a.runs.iter().map(|r| r.audit.run).collect::<Vec<_>>(), vec![0, 1, 2]);
}

#[test]
fn jitter_draws_depend_on_seed_only() {
    let mut config = experiment(3).unwrap();
    config.run_length_s = 120.0;
    config.workload.traffic.jitter_s = 0.002;
    let p = CalibrationParams::default();
    let a = run_experiment(&config, &p, 1, 1).unwrap();
    let b = run_experiment(&config, &p, 1, 1).unwrap();
    let c = run_experiment(&config, &p, 1, 2).unwrap();
    assert_eq!(csv(&a), csv(&b));
    assert_ne!(csv(&a), csv(&c));
}

#[test]
fn packet_granularity_costs_the_same_cpu() {
    let p = CalibrationParams::default();
    let mut config = experiment(1).unwrap();
    config.run_length_s = 120.0;
    let frame = run_experiment(&config, &p, 1, 42).unwrap();
    config.workload.traffic.granularity = Granularity::Packet;
    let packet = run_experiment(&config, &p, 1, 42).unwrap();
    let f = frame.mean(Metric::ReceivedBits, Window::Full, Group::Slice1).unwrap();
    let k = packet.mean(Metric::ReceivedBits, Window::Full, Group::Slice1).unwrap();
    assert!((f - k).abs() < 0.01 * f, "{f} vs {k}");
    let generated = packet.runs[0].audit.slices[0].generated;
    assert_eq!(generated, 4 * 60 * 120 * 64);
}

#[test]
fn catalog_dump_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    for c in load_catalog() {
        let path = dir.path().join(format!("exp{}.json", c.id));
        c.save(&path).unwrap();
        assert_eq!(ExperimentConfig::load(&path).unwrap(), c);
    }
}

#[test]
fn shaper_queue_drain_dominates_exp13_latency() {
    let r = run_experiment(&experiment(13).unwrap(), &CalibrationParams::default(), 1, 42).unwrap();
    // a full 10 000-deep queue of 93 750 B frames drains at 75 Mbps in 100 s
    let drain_ms = 10_000.0 * 93_750.0 * 8.0 / 75e6 * 1e3;
    let median = r.stats(Metric::LatencyMs, Window::Last5Min, Group::Others).unwrap().median;
    assert!((median - drain_ms).abs() < 0.1 * drain_ms, "{median} vs {drain_ms}");
    let s1 = r.stats(Metric::LatencyMs, Window::Last5Min, Group::Slice1).unwrap().median;
    assert!(s1 < 1_000.0);
}

#[test]
fn built_in_params_reproduce_the_anchors() {
    let p = CalibrationParams::default();
    let anchors = default_anchors();
    let values = evaluate_anchors(&anchors, &p, 42).unwrap();
    for (a, v) in anchors.iter().zip(values) {
        assert!((v - a.target).abs() < 1e-3 * a.target, "{}: {v}", a.label());
    }
}
