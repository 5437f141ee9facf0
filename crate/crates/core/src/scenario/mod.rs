//! Attack scenarios: a legitimate constellation, an optional attacker and
//! receiver noise, composed into baseband samples.
//!
//! Satellites move along their line of sight at a constant range rate, so
//! transmit time is exactly linear in receive time and the carrier Doppler,
//! code rate and broadcast velocity agree.

pub mod config;
pub mod iq;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::api::Trajectory;
use crate::error::Result;
use crate::exec::Execution;
use crate::pvt::geodesy::{
    direction_from_az_el, dot, enu_basis, geodetic_to_ecef, norm, sub, Geodetic,
};
use crate::signal::num_complex::Complex64;
use crate::signal::{
    add_scaled_signal, generate_ca_code, samples_per_code, IqBuffer, NavModulation, NavStream,
    PrnCode, SatelliteSignalParams, CODE_PERIOD, L1_FREQUENCY, SPEED_OF_LIGHT,
};

pub use config::{
    AttackerConfig, NavMode, RampPoint, ReceiverConfig, SatelliteConfig, ScenarioConfig,
    TakeoverMode, DEFAULT_START_TIME, MIN_SEPARATION_FACTOR, SEAMLESS_SPEED,
};

const ORBIT_RADIUS: f64 = 26_560_000.0;
/// Samples per independently seeded noise block.
pub const NOISE_BLOCK: usize = 1 << 16;

/// Legitimate emitter with its ground truth.
#[derive(Debug, Clone)]
pub struct Emitter {
    pub params: SatelliteSignalParams,
    pub code: PrnCode,
    pub nav: NavStream,
    /// Unit line-of-sight vector, receiver to satellite.
    pub los: [f64; 3],
    /// Range along the line of sight at transmit time zero, meters.
    pub range_at_zero: f64,
    pub range_rate: f64,
    /// Transmit time of the first sample's signal, seconds.
    pub transmit_time_at_start: f64,
    /// `transmit_time = code_time + code_origin`.
    pub code_origin: f64,
}

impl Emitter {
    /// `d transmit_time / d receive_time`.
    pub fn code_rate(&self) -> f64 {
        1.0 + self.params.doppler / L1_FREQUENCY
    }

    pub fn transmit_time(&self, u: f64) -> f64 {
        self.transmit_time_at_start + u * self.code_rate()
    }

    pub fn position_at(&self, receiver: [f64; 3], t: f64) -> [f64; 3] {
        let r = self.range_at_zero + self.range_rate * t;
        [0, 1, 2].map(|i| receiver[i] + self.los[i] * r)
    }
}

/// Attacker replica of one PRN.
#[derive(Debug, Clone)]
pub struct AttackEmitter {
    /// Parameters with zero spoofing offset (code delay equal to the
    /// legitimate one, unwrapped).
    pub params: SatelliteSignalParams,
    pub code: PrnCode,
    /// Satellite position used for the offset geometry.
    pub satellite: [f64; 3],
}

/// Signal components selected for composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Components {
    pub legitimate: bool,
    pub attacker: bool,
    pub noise: bool,
}

impl Components {
    pub const ALL: Components = Components {
        legitimate: true,
        attacker: true,
        noise: true,
    };
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub receiver_ecef: [f64; 3],
    pub legitimate: Vec<Emitter>,
    pub attacker: Vec<AttackEmitter>,
    /// Complex noise variance per sample.
    pub noise_density: f64,
    /// Receiver position in its own north-east-down frame (static).
    pub receiver_truth: Trajectory,
    clock_factor: f64,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Scenario> {
        config.validate()?;
        let g = Geodetic {
            lat_deg: config.receiver.lat_deg,
            lon_deg: config.receiver.lon_deg,
            height: config.receiver.height,
        };
        let rx = geodetic_to_ecef(g);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5CE7_A210);
        let fs = config.sample_rate;
        let t0 = config.start_time;
        let mut legitimate = Vec::new();
        for sat in &config.satellites {
            let los = direction_from_az_el(g, sat.azimuth_deg, sat.elevation_deg);
            let rl = dot(rx, los);
            let rho0 = -rl + (rl * rl - dot(rx, rx) + ORBIT_RADIUS * ORBIT_RADIUS).sqrt();
            let w = sat.range_rate;
            let range_at_zero = rho0 - w * (t0 - rho0 / SPEED_OF_LIGHT);
            let beta = w / SPEED_OF_LIGHT;
            let tx0 = (t0 - range_at_zero / SPEED_OF_LIGHT) / (1.0 + beta);
            let doppler = L1_FREQUENCY * (1.0 / (1.0 + beta) - 1.0);
            let mut m = (tx0 / CODE_PERIOD).ceil();
            let mut tau0 = m * CODE_PERIOD - tx0;
            if tau0 >= CODE_PERIOD {
                tau0 -= CODE_PERIOD;
                m -= 1.0;
            }
            let origin = m * CODE_PERIOD;
            let pos0 = [0, 1, 2].map(|i| rx[i] + los[i] * range_at_zero);
            let vel = los.map(|x| x * w);
            let nav = NavStream::for_satellite(
                sat.prn,
                pos0,
                vel,
                (tx0 - 1.0).max(0.0),
                tx0 + config.duration + 1.0,
            )?;
            let phase = rng.random::<f64>() * std::f64::consts::TAU;
            let params = SatelliteSignalParams::new(sat.prn, config.amplitude, tau0, doppler, phase)
                .with_nav(NavModulation::from_stream(&nav, -origin));
            params.validate()?;
            legitimate.push(Emitter {
                params,
                code: generate_ca_code(sat.prn)?,
                nav,
                los,
                range_at_zero,
                range_rate: w,
                transmit_time_at_start: tx0,
                code_origin: origin,
            });
        }

        let mut attacker = Vec::new();
        let mut clock_factor = 0.0;
        if let Some(a) = &config.attacker {
            let dir = displacement_direction(g, a.direction_deg);
            let scale = 10f64.powf(a.power_advantage_db / 20.0);
            let targets: Vec<&Emitter> = legitimate
                .iter()
                .filter(|e| a.prns.is_empty() || a.prns.contains(&e.params.prn))
                .collect();
            clock_factor = a.clock_offset_factor.unwrap_or_else(|| {
                let max_proj = targets
                    .iter()
                    .map(|e| dot(e.los, dir))
                    .fold(f64::MIN, f64::max);
                max_proj + config::MIN_SEPARATION_FACTOR
            });
            for e in targets {
                let satellite = e.position_at(rx, e.transmit_time_at_start);
                let nav = match a.nav {
                    NavMode::Identical => e.params.nav.clone(),
                    NavMode::Modified => {
                        let shift = a.max_offset();
                        let pos0 = e.position_at(rx, 0.0);
                        let moved = [0, 1, 2].map(|i| pos0[i] + dir[i] * shift);
                        let stream = NavStream::for_satellite(
                            e.params.prn,
                            moved,
                            e.los.map(|x| x * e.range_rate),
                            e.nav.first_frame_tow,
                            e.transmit_time_at_start + config.duration + 1.0,
                        )?;
                        NavModulation::from_stream(&stream, -e.code_origin)
                    }
                };
                let mut params = e.params.clone();
                params.amplitude = config.amplitude * scale;
                params.carrier_phase = rng.random::<f64>() * std::f64::consts::TAU;
                params.nav = nav;
                attacker.push(AttackEmitter {
                    params,
                    code: e.code.clone(),
                    satellite,
                });
            }
        }

        let noise_density = config.noise_density.unwrap_or_else(|| {
            config.amplitude * config.amplitude * fs / 10f64.powf(config.cn0_dbhz / 10.0)
        });
        let receiver_truth = Trajectory::stationary([0.0; 3], 0.0, config.duration, 5.0);
        Ok(Scenario {
            config,
            receiver_ecef: rx,
            legitimate,
            attacker,
            noise_density,
            receiver_truth,
            clock_factor,
        })
    }

    pub fn sample_rate(&self) -> f64 {
        self.config.sample_rate
    }

    pub fn num_samples(&self) -> usize {
        (self.config.duration * self.config.sample_rate).round() as usize
    }

    /// Copy with the attacker removed; noise and legitimate signals are
    /// unchanged.
    pub fn without_attacker(&self) -> Scenario {
        let mut s = self.clone();
        s.config.attacker = None;
        s.attacker.clear();
        s
    }

    pub fn emitter(&self, prn: u8) -> Option<&Emitter> {
        self.legitimate.iter().find(|e| e.params.prn == prn)
    }

    pub fn prns(&self) -> Vec<u8> {
        self.legitimate.iter().map(|e| e.params.prn).collect()
    }

    pub fn spoofed_prns(&self) -> Vec<u8> {
        self.attacker.iter().map(|e| e.params.prn).collect()
    }

    /// Spoofing displacement at stream time `u`, or `None` while the
    /// attacker is not transmitting.
    pub fn spoof_offset_at(&self, u: f64) -> Option<f64> {
        let a = self.config.attacker.as_ref()?;
        match a.takeover {
            TakeoverMode::Hard => (u >= a.onset).then_some(a.offset_m),
            TakeoverMode::Seamless => {
                let r = &a.ramp;
                if u < r[0].time {
                    return None;
                }
                let i = r.partition_point(|p| p.time <= u);
                if i >= r.len() {
                    return Some(r[r.len() - 1].offset_m);
                }
                let (p, q) = (&r[i - 1], &r[i]);
                Some(p.offset_m + (q.offset_m - p.offset_m) * (u - p.time) / (q.time - p.time))
            }
        }
    }

    fn displacement(&self) -> [f64; 3] {
        let a = self.config.attacker.as_ref();
        let g = Geodetic {
            lat_deg: self.config.receiver.lat_deg,
            lon_deg: self.config.receiver.lon_deg,
            height: self.config.receiver.height,
        };
        displacement_direction(g, a.map(|a| a.direction_deg).unwrap_or(90.0))
    }

    /// Position the attacker steers the receiver to at displacement `d`.
    pub fn spoofed_position(&self, d: f64) -> [f64; 3] {
        let dir = self.displacement();
        [0, 1, 2].map(|i| self.receiver_ecef[i] + dir[i] * d)
    }

    /// Receiver clock offset the attack imposes at displacement `d`, meters.
    pub fn attack_clock_offset(&self, d: f64) -> f64 {
        self.clock_factor * d
    }

    /// Extra delay of the attacker's `prn` signal at displacement `d`.
    pub fn attack_delay(&self, prn: u8, d: f64) -> Option<f64> {
        let a = self.attacker.iter().find(|a| a.params.prn == prn)?;
        Some(attack_delay_for(self, a, d))
    }

    /// Legitimate code delay of `prn` at stream time `u`, in `[0, 1 ms)`.
    pub fn legit_code_delay(&self, prn: u8, u: f64) -> Option<f64> {
        let e = self.emitter(prn)?;
        Some(e.params.code_delay_at(u).rem_euclid(CODE_PERIOD))
    }

    /// Attacker code delay of `prn` at stream time `u`, when transmitting.
    pub fn attacker_code_delay(&self, prn: u8, u: f64) -> Option<f64> {
        let d = self.spoof_offset_at(u)?;
        let a = self.attacker.iter().find(|a| a.params.prn == prn)?;
        Some((a.params.code_delay_at(u) + attack_delay_for(self, a, d)).rem_euclid(CODE_PERIOD))
    }

    /// True geometric range of `prn` at stream time `u`.
    pub fn true_range(&self, prn: u8, u: f64) -> Option<f64> {
        let e = self.emitter(prn)?;
        Some(SPEED_OF_LIGHT * (self.config.start_time + u - e.transmit_time(u)))
    }

    /// Composes every sample of the scenario.
    pub fn compose(&self) -> Result<IqBuffer> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.num_samples()];
        self.compose_range(0, &mut out, Components::ALL, Execution::default());
        IqBuffer::from_f64(&out, self.sample_rate(), 0.0)
    }

    /// Streams every sample to an IQ file in blocks.
    pub fn write_iq(&self, path: impl AsRef<std::path::Path>, exec: Execution) -> Result<()> {
        let mut w = iq::IqWriter::create(path, self.sample_rate())?;
        let total = self.num_samples();
        let block = 16 * NOISE_BLOCK;
        let mut buf = vec![Complex64::new(0.0, 0.0); block];
        let mut first = 0;
        while first < total {
            let n = block.min(total - first);
            self.compose_range(first as u64, &mut buf[..n], Components::ALL, exec);
            let samples: Vec<_> = buf[..n]
                .iter()
                .map(|z| crate::signal::num_complex::Complex32::new(z.re as f32, z.im as f32))
                .collect();
            w.write(&samples)?;
            first += n;
        }
        w.finish()
    }

    /// Writes samples `first..first + out.len()` of the selected components
    /// into `out` (overwriting it).
    pub fn compose_range(
        &self,
        first: u64,
        out: &mut [Complex64],
        parts: Components,
        exec: Execution,
    ) {
        // pieces aligned to noise blocks so each task regenerates whole blocks
        let head = ((NOISE_BLOCK as u64 - first % NOISE_BLOCK as u64) % NOISE_BLOCK as u64) as usize;
        let head = head.min(out.len());
        let (a, b) = out.split_at_mut(head);
        if !a.is_empty() {
            self.compose_piece(first, a, parts);
        }
        let base = first + head as u64;
        exec.for_each_chunk_mut(b, NOISE_BLOCK, |i, piece| {
            self.compose_piece(base + (i * NOISE_BLOCK) as u64, piece, parts);
        });
    }

    fn compose_piece(&self, first: u64, out: &mut [Complex64], parts: Components) {
        out.iter_mut().for_each(|s| *s = Complex64::new(0.0, 0.0));
        let fs = self.sample_rate();
        let one = Complex64::new(1.0, 0.0);
        if parts.legitimate {
            for e in &self.legitimate {
                add_scaled_signal(&e.params, &e.code, fs, first, one, out);
            }
        }
        if parts.attacker {
            for a in &self.attacker {
                self.add_attacker(a, first, out);
            }
        }
        if parts.noise && self.noise_density > 0.0 {
            add_noise(self.config.seed, self.noise_density, first, out);
        }
    }

    fn add_attacker(&self, a: &AttackEmitter, first: u64, out: &mut [Complex64]) {
        let Some(cfg) = &self.config.attacker else {
            return;
        };
        let fs = self.sample_rate();
        let k = samples_per_code(fs) as u64;
        let end = first + out.len() as u64;
        let one = Complex64::new(1.0, 0.0);
        let mut n = first;
        while n < end {
            // piecewise-constant offset per code-period-sized block
            let block_end = match cfg.takeover {
                TakeoverMode::Hard => end,
                TakeoverMode::Seamless => ((n / k) + 1) * k,
            }
            .min(end);
            let u = n as f64 / fs;
            if let Some(d) = self.spoof_offset_at(u) {
                let mut p = a.params.clone();
                p.code_delay += attack_delay_for(self, a, d);
                let lo = (n - first) as usize;
                let hi = (block_end - first) as usize;
                add_scaled_signal(&p, &a.code, fs, n, one, &mut out[lo..hi]);
                n = block_end;
            } else {
                // skip to the onset
                let start = match cfg.takeover {
                    TakeoverMode::Hard => cfg.onset,
                    TakeoverMode::Seamless => cfg.ramp[0].time,
                };
                n = ((start * fs).ceil() as u64).max(n + 1).min(end);
            }
        }
    }
}

fn displacement_direction(g: Geodetic, azimuth_deg: f64) -> [f64; 3] {
    let [e, n, _] = enu_basis(g.lat_deg, g.lon_deg);
    let (s, c) = azimuth_deg.to_radians().sin_cos();
    [0, 1, 2].map(|i| s * e[i] + c * n[i])
}

fn attack_delay_for(s: &Scenario, a: &AttackEmitter, d: f64) -> f64 {
    let spoofed = s.spoofed_position(d);
    let geometric = norm(sub(a.satellite, spoofed)) - norm(sub(a.satellite, s.receiver_ecef));
    (geometric + s.clock_factor * d) / SPEED_OF_LIGHT
}

/// Deterministic complex white Gaussian noise of variance `density` added
/// to samples `first..first + out.len()`.
pub fn add_noise(seed: u64, density: f64, first: u64, out: &mut [Complex64]) {
    let sigma = (density / 2.0).sqrt();
    let nb = NOISE_BLOCK as u64;
    let end = first + out.len() as u64;
    let mut block = first / nb;
    while block * nb < end {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(block);
        let b0 = block * nb;
        let lo = first.max(b0);
        let hi = end.min(b0 + nb);
        // draw the block prefix so values depend only on the absolute index
        for _ in b0..lo {
            let _: f64 = rng.sample(StandardNormal);
            let _: f64 = rng.sample(StandardNormal);
        }
        for n in lo..hi {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            out[(n - first) as usize] += Complex64::new(re * sigma, im * sigma);
        }
        block += 1;
    }
}

impl ScenarioConfig {
    pub fn build(self) -> Result<Scenario> {
        Scenario::new(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::pvt::{solve_ranges, RangeObservation};
    use crate::signal::synthesize_signal;

    fn small(cfg: ScenarioConfig) -> ScenarioConfig {
        ScenarioConfig {
            duration: 0.004,
            ..cfg
        }
    }

    #[test]
    fn single_noiseless_satellite_matches_synthesis() {
        let mut cfg = small(ScenarioConfig::default());
        cfg.noise_density = Some(0.0);
        let mut s = Scenario::new(cfg).unwrap();
        s.legitimate.truncate(1);
        let composed = s.compose().unwrap();
        let direct = synthesize_signal(&s.legitimate[0].params, 0.004, s.sample_rate()).unwrap();
        for (a, b) in composed.samples.iter().zip(&direct.samples) {
            assert!((a - b).norm() < 1e-5);
        }
    }

    #[test]
    fn attacker_power_follows_advantage() {
        let mut cfg = small(ScenarioConfig::static_attack(1000.0, 3.0));
        cfg.satellites.truncate(4);
        let s = Scenario::new(cfg).unwrap();
        let n = s.num_samples();
        let power = |parts: Components| {
            let mut out = vec![Complex64::new(0.0, 0.0); n];
            s.compose_range(0, &mut out, parts, Execution::Sequential);
            out.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64
        };
        let legit = power(Components { legitimate: true, attacker: false, noise: false });
        let att = power(Components { legitimate: false, attacker: true, noise: false });
        // four satellites each way; cross terms average out
        assert!((att / legit / 10f64.powf(0.3) - 1.0).abs() < 0.02, "{}", att / legit);
    }

    #[test]
    fn linearity_without_noise() {
        let mut cfg = small(ScenarioConfig::static_attack(1500.0, 5.0));
        cfg.noise_density = Some(0.0);
        let s = Scenario::new(cfg).unwrap();
        let n = 30_000;
        let get = |parts| {
            let mut out = vec![Complex64::new(0.0, 0.0); n];
            s.compose_range(1234, &mut out, parts, Execution::Parallel);
            out
        };
        let all = get(Components::ALL);
        let l = get(Components { legitimate: true, attacker: false, noise: false });
        let a = get(Components { legitimate: false, attacker: true, noise: false });
        for i in 0..n {
            assert!((all[i] - l[i] - a[i]).norm() < 1e-9);
        }
    }

    #[test]
    fn noise_variance_and_chunk_independence() {
        let mut out = vec![Complex64::new(0.0, 0.0); 1_000_000];
        add_noise(7, 316.0, 12_345, &mut out);
        let var = out.iter().map(|z| z.norm_sqr()).sum::<f64>() / out.len() as f64;
        assert!((var / 316.0 - 1.0).abs() < 0.05);
        let mut part = vec![Complex64::new(0.0, 0.0); 1000];
        add_noise(7, 316.0, 12_345 + 70_000, &mut part);
        assert_eq!(part[..], out[70_000..71_000]);
    }

    #[test]
    fn seamless_ramp_midpoint() {
        let mut cfg = ScenarioConfig::seamless(3.0, 1500.0);
        if let Some(a) = cfg.attacker.as_mut() {
            a.ramp = vec![
                RampPoint { time: 0.0, offset_m: 0.0 },
                RampPoint { time: 15.0, offset_m: 1500.0 },
            ];
        }
        cfg.duration = 16.0;
        let s = Scenario::new(cfg).unwrap();
        assert!((s.spoof_offset_at(7.5).unwrap() - 750.0).abs() < 1e-9);
        let prn = s.spoofed_prns()[0];
        let d = s.attack_delay(prn, 750.0).unwrap();
        let expect = s.attacker_code_delay(prn, 7.5).unwrap() - s.legit_code_delay(prn, 7.5).unwrap();
        assert!((d - expect.rem_euclid(CODE_PERIOD)).abs() < 1.0 / s.sample_rate());
    }

    #[test]
    fn spoofed_position_is_consistent() {
        let s = Scenario::new(ScenarioConfig::static_attack(2500.0, 3.0)).unwrap();
        let obs: Vec<_> = s
            .legitimate
            .iter()
            .map(|e| {
                let prn = e.params.prn;
                let sat = e.position_at(s.receiver_ecef, e.transmit_time_at_start);
                RangeObservation {
                    prn,
                    satellite: sat,
                    pseudorange: norm(sub(sat, s.receiver_ecef))
                        + SPEED_OF_LIGHT * s.attack_delay(prn, 2500.0).unwrap(),
                }
            })
            .collect();
        let sol = solve_ranges(&obs).unwrap();
        let err = norm(sub(sol.position, s.spoofed_position(2500.0)));
        assert!(err < 30.0, "{err}");
        assert!((sol.clock_bias * SPEED_OF_LIGHT - s.attack_clock_offset(2500.0)).abs() < 30.0);
    }

    #[test]
    fn default_separation_scale() {
        let s = Scenario::new(ScenarioConfig::static_attack(500.0, 3.0)).unwrap();
        let min = s
            .spoofed_prns()
            .iter()
            .map(|&p| s.attack_delay(p, 500.0).unwrap())
            .fold(f64::MAX, f64::min);
        assert!((min - 800e-9).abs() < 20e-9, "{min}");
    }

    #[test]
    fn truth_is_consistent_with_signal_model() {
        let s = Scenario::new(ScenarioConfig::default()).unwrap();
        for e in &s.legitimate {
            // code time + origin is the transmit time
            for u in [0.0, 1.7, 5.2] {
                let tx = e.params.code_time_at(u) + e.code_origin;
                assert!((tx - e.transmit_time(u)).abs() < 1e-12);
            }
            let rho = s.true_range(e.params.prn, 0.0).unwrap();
            let sat = e.position_at(s.receiver_ecef, e.transmit_time(0.0));
            assert!((rho - norm(sub(sat, s.receiver_ecef))).abs() < 1e-4);
            assert!(e.params.doppler.abs() < 5000.0);
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = ScenarioConfig::default();
        c.satellites.clear();
        assert!(matches!(Scenario::new(c), Err(Error::InvalidArgument(_))));
        let mut c = ScenarioConfig::static_attack(500.0, 25.0);
        assert!(Scenario::new(c.clone()).is_err());
        c = ScenarioConfig::seamless(3.0, 500.0);
        if let Some(a) = c.attacker.as_mut() {
            a.ramp.reverse();
        }
        assert!(Scenario::new(c).is_err());
    }
}
