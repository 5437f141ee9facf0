use sicrx::acquisition::{delay_separation, Acquirer, AcquisitionConfig};
use sicrx::lsr::{recover, refine_acquisition};
use sicrx::scenario::{Components, Scenario, ScenarioConfig};
use sicrx::signal::num_complex::Complex64;
use sicrx::signal::{generate_ca_code, IqBuffer};
use sicrx::Execution;

fn window(s: &Scenario, start: f64, len: f64, parts: Components) -> IqBuffer {
    let fs = s.sample_rate();
    let first = (start * fs).round() as u64;
    let mut out = vec![Complex64::new(0.0, 0.0); (len * fs).round() as usize];
    s.compose_range(first, &mut out, parts, Execution::default());
    IqBuffer::from_f64(&out, fs, start).unwrap()
}

#[test]
fn first_pass_attenuates_a_3db_attacker_by_10db() {
    let acq = Acquirer::new(AcquisitionConfig::default(), Execution::default());
    let mut attenuation = Vec::new();
    for seed in 1..=5 {
        let mut cfg = ScenarioConfig::static_attack(500.0, 3.0);
        cfg.seed = seed;
        cfg.duration = 1.1;
        let s = cfg.build().unwrap();
        let t0 = 1.0;
        let buf = window(&s, t0, 0.04, Components::ALL);
        let clean = window(&s.without_attacker(), t0, 0.04, Components::ALL);
        // closest pair: hardest case
        let prn = s
            .prns()
            .into_iter()
            .min_by(|&a, &b| {
                let sep = |p| delay_separation(s.attacker_code_delay(p, t0).unwrap(), s.legit_code_delay(p, t0).unwrap());
                sep(a).total_cmp(&sep(b))
            })
            .unwrap();
        let code = generate_ca_code(prn).unwrap();
        let v = acq.acquire(&buf, &code).unwrap();
        assert!(v.spoofing || v.peaks.len() == 1);
        let adv = s.attacker_code_delay(prn, t0).unwrap();
        let ai = v
            .peaks
            .iter()
            .position(|p| delay_separation(p.code_delay, adv) < 0.5e-6)
            .expect("attacker peak");
        let (_, report) = recover(&buf, &v, ai, 5).unwrap();
        attenuation.push(report.steps[0].attenuation_db);
        let oracle = refine_acquisition(&clean, &acq.acquire(&clean, &code).unwrap().peaks[0]);
        let got = report.recovered_peak.unwrap();
        assert!(delay_separation(got.code_delay, oracle.code_delay) * s.sample_rate() < 1.0);
        assert!(report.estimated_advantage_db.unwrap() > 0.0);
    }
    let mean = attenuation.iter().sum::<f64>() / attenuation.len() as f64;
    assert!(mean >= 10.0, "{attenuation:?}");
}
