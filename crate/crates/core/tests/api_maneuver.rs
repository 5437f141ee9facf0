use proptest::prelude::*;
use sicrx::api::*;
use sicrx::Execution;

const TRIALS: usize = 1000;

fn rate(state: SpoofState, base: u64) -> f64 {
    monte_carlo(TRIALS, base, state, &ManeuverConstraints::default(), DEFAULT_THRESHOLD, Execution::default())
        .unwrap()
        .fraction()
}

#[test]
fn thousand_plans_satisfy_invariants() {
    let c = ManeuverConstraints::default();
    for seed in 0..TRIALS as u64 {
        let p = generate_maneuver(seed, &c).unwrap();
        assert!(p.total_duration <= 20.0 && p.total_duration >= 10.0);
        assert!(p.path_length() >= 30.0);
        assert!(p.turns(30.0) >= 1);
        let end = p.position_at(p.total_duration);
        assert!(end[0].hypot(end[1]) > c.no_maneuver_zone);
    }
}

#[test]
fn false_positive_rate_at_most_one_percent() {
    let r = rate(SpoofState::TracksLegitimate, 10_000);
    println!("false positives {r}");
    assert!(r <= 0.01, "{r}");
}

#[test]
fn false_negative_rate_against_hold_last_course() {
    let r = 1.0 - rate(SpoofState::TracksAttacker(AttackerModel::HoldLastCourse), 20_000);
    println!("false negatives {r}");
    assert!(r <= 0.01, "{r}");
}

#[test]
fn hold_position_attacker_detected() {
    let r = rate(SpoofState::TracksAttacker(AttackerModel::HoldPosition), 30_000);
    assert!(r >= 0.99, "{r}");
}

#[test]
fn one_segment_predictor_still_detected() {
    // every plan has at least one unpredicted turn after the first segment
    let r = rate(SpoofState::TracksAttacker(AttackerModel::Predictor(1)), 40_000);
    println!("predictor detection {r}");
    assert!(r >= 0.99, "{r}");
}

#[test]
fn perfect_predictor_is_not_detectable() {
    let c = ManeuverConstraints::default();
    let p = generate_maneuver(5, &c).unwrap();
    let (a, b) = simulate_flight(
        &p,
        &ImuModel::default(),
        SpoofState::TracksAttacker(AttackerModel::Predictor(p.segments.len())),
        &FlightConfig::default(),
    );
    assert!(!correlate_tracks(&a, &b, DEFAULT_THRESHOLD).unwrap().tracked_peak_is_adversarial);
}

#[test]
fn diverging_tracks_end_to_end() {
    let p = generate_maneuver(7, &ManeuverConstraints::default()).unwrap();
    let (a, b) = simulate_flight(
        &p,
        &ImuModel { seed: 7, ..ImuModel::default() },
        SpoofState::TracksAttacker(AttackerModel::HoldLastCourse),
        &FlightConfig { seed: 7, ..FlightConfig::default() },
    );
    let l = correlate_tracks(&a, &b, DEFAULT_THRESHOLD).unwrap();
    assert!(l.tracked_peak_is_adversarial, "{}", l.mean_deviation);
}

#[test]
fn trials_independent_of_schedule() {
    let c = ManeuverConstraints::default();
    let s = SpoofState::TracksAttacker(AttackerModel::HoldLastCourse);
    let a = monte_carlo(64, 5, s, &c, 5.0, Execution::Sequential).unwrap();
    let b = monte_carlo(64, 5, s, &c, 5.0, Execution::default()).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]
    #[test]
    fn raising_threshold_never_flips_to_adversarial(seed in 0u64..10_000, t1 in 0.5f64..20.0, dt in 0.0f64..20.0) {
        let p = generate_maneuver(seed, &ManeuverConstraints::default()).unwrap();
        let (a, b) = simulate_flight(&p, &ImuModel { seed, ..ImuModel::default() }, SpoofState::TracksLegitimate, &FlightConfig { seed, ..FlightConfig::default() });
        let lo = correlate_tracks(&a, &b, t1).unwrap();
        let hi = correlate_tracks(&a, &b, t1 + dt).unwrap();
        prop_assert!(!(hi.tracked_peak_is_adversarial && !lo.tracked_peak_is_adversarial));
        prop_assert_eq!(lo.tracked_peak_is_adversarial, lo.mean_deviation > lo.threshold);
    }

    #[test]
    fn plan_is_pure_function_of_seed(seed in any::<u64>()) {
        let c = ManeuverConstraints::default();
        prop_assert_eq!(generate_maneuver(seed, &c).unwrap(), generate_maneuver(seed, &c).unwrap());
    }
}
