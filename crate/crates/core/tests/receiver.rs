use sicrx::receiver::{
    run_scenario, sweep, write_sweep_csv, FixKind, ReceiverConfig, ReceiverMode, RectifierMode,
    RunReport, SweepKind, SweepParams,
};
use sicrx::scenario::ScenarioConfig;

const FS: f64 = 5e6;

fn at_5mhz(mut cfg: ScenarioConfig) -> ScenarioConfig {
    cfg.sample_rate = FS;
    cfg
}

fn run(cfg: ScenarioConfig, rc: &ReceiverConfig) -> RunReport {
    run_scenario(&cfg.build().unwrap(), rc).unwrap()
}

/// Recovered and rectified fixes only ever come out of the recovered mode.
fn labels_are_honest(r: &RunReport) {
    for e in &r.epochs {
        if let Some(f) = &e.fix {
            let recovered = matches!(f.kind, FixKind::Recovered | FixKind::Rectified);
            assert_eq!(recovered, e.mode == ReceiverMode::Recovered, "epoch {}", e.epoch);
        }
    }
}

#[test]
fn clean_scenario_stays_clean() {
    let r = run(at_5mhz(ScenarioConfig::default()), &ReceiverConfig::default());
    assert_eq!(r.final_mode, ReceiverMode::Clean);
    assert!(r.transitions.is_empty());
    assert_eq!(r.exit_code(), 0);
    let fixes: Vec<_> = r.epochs.iter().filter_map(|e| e.fix.as_ref()).collect();
    assert!(!fixes.is_empty());
    for f in fixes {
        assert_eq!(f.kind, FixKind::Standard);
        assert!(f.horizontal_error().unwrap() <= 20.0, "{:?}", f.error_enu);
    }
    labels_are_honest(&r);
}

#[test]
fn seamless_push_is_detected_during_ramp_and_recovered() {
    let cfg = at_5mhz(ScenarioConfig::seamless(3.0, 1500.0));
    let ramp_end = cfg.attacker.as_ref().unwrap().ramp.last().unwrap().time;
    let r = run(cfg, &ReceiverConfig::default());
    let detected = r
        .transitions
        .iter()
        .find(|t| t.to == ReceiverMode::SpoofDetected)
        .expect("detection");
    assert!(detected.time < ramp_end, "{}", detected.time);
    assert_eq!(r.final_mode, ReceiverMode::Recovered);
    let acc = r.accuracy.expect("recovered fixes");
    assert!(acc.mean_offset <= 20.0, "{acc:?}");
    assert!(r.spoofed_accuracy.unwrap().mean_offset > 500.0);
    labels_are_honest(&r);
}

#[test]
fn rectifier_off_leaves_a_short_attack_unrecovered() {
    let mut cfg = at_5mhz(ScenarioConfig::static_attack(1500.0, 3.0));
    cfg.duration = 3.0;
    let rc = ReceiverConfig {
        rectifier: RectifierMode::Off,
        ..ReceiverConfig::default()
    };
    let r = run(cfg, &rc);
    assert_eq!(r.final_mode, ReceiverMode::Recovering);
    assert_eq!(r.exit_code(), 2);
    assert!(r.rectified_prns.is_empty());
    assert!(r.accuracy.is_none());
    labels_are_honest(&r);
}

#[test]
fn rectifier_on_skips_cancellation_fixes() {
    let cfg = at_5mhz(ScenarioConfig::static_attack(2000.0, 3.0));
    let rc = ReceiverConfig {
        rectifier: RectifierMode::On,
        ..ReceiverConfig::default()
    };
    let r = run(cfg, &rc);
    assert!(r.transitions.iter().any(|t| t.to == ReceiverMode::Rectifying));
    assert_eq!(r.final_mode, ReceiverMode::Recovered);
    let kinds: Vec<FixKind> = r.epochs.iter().filter_map(|e| e.fix.as_ref()).map(|f| f.kind).collect();
    assert!(kinds.contains(&FixKind::Rectified) && !kinds.contains(&FixKind::Recovered), "{kinds:?}");
    assert!(r.accuracy.unwrap().mean_offset <= 20.0);
}

#[test]
fn reports_are_deterministic_across_runs_and_execution() {
    let mut cfg = at_5mhz(ScenarioConfig::static_attack(1500.0, 3.0));
    cfg.duration = 2.0;
    let a = run(cfg.clone(), &ReceiverConfig::default());
    let b = run(cfg.clone(), &ReceiverConfig::default());
    let seq = run(
        cfg,
        &ReceiverConfig {
            sequential: true,
            ..ReceiverConfig::default()
        },
    );
    assert_eq!(a.without_timing(), b.without_timing());
    assert_eq!(a.without_timing(), seq.without_timing());
    assert!(!a.recovery.is_empty());
}

#[test]
fn report_serializes_to_json_and_track_csv() {
    let mut cfg = at_5mhz(ScenarioConfig::static_attack(1500.0, 3.0));
    cfg.duration = 2.0;
    let r = run(cfg, &ReceiverConfig::default());
    let back: RunReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    assert_eq!(back.without_timing(), r.without_timing());
    let mut csv = Vec::new();
    r.write_track_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().count(), 1 + r.epochs.len());
    assert!(text.lines().nth(1).unwrap().starts_with("0,1.000,"));
}

#[test]
fn power_sweep_moves_to_the_rectifier_at_15_db() {
    let mut p = SweepParams::new(SweepKind::PowerAdvantage);
    p.values = vec![3.0, 15.0];
    p.seeds = vec![1, 2];
    p.sample_rate = FS;
    let rows = sweep(&p, &ReceiverConfig::default());
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.error.is_none()), "{rows:?}");
    let rectified = |v: f64| rows.iter().filter(|r| r.value == v && r.path == "rectifier").count();
    assert_eq!(rectified(3.0), 0, "{rows:?}");
    assert!(rectified(15.0) * 2 >= p.seeds.len(), "{rows:?}");
    assert!(rows.iter().all(|r| r.recovered_error_m.unwrap() <= 20.0), "{rows:?}");
    let mut csv = Vec::new();
    write_sweep_csv(&rows, &mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 5);
}

#[test]
fn empty_sweep_grid_gives_empty_table() {
    let mut p = SweepParams::new(SweepKind::PeakSeparation);
    p.values.clear();
    assert!(sweep(&p, &ReceiverConfig::default()).is_empty());
    let mut p = SweepParams::new(SweepKind::PowerAdvantage);
    p.seeds.clear();
    assert!(sweep(&p, &ReceiverConfig::default()).is_empty());
}
