use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{TrackPoint, Trajectory};
use crate::error::{Error, Result};
use crate::exec::Execution;

/// Bounds a maneuver plan must respect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManeuverConstraints {
    pub min_speed: f64,
    pub max_speed: f64,
    pub min_duration: f64,
    pub max_duration: f64,
    pub min_path_length: f64,
    /// Width of the no-maneuver zone; the plan must end farther than this
    /// from its start.
    pub no_maneuver_zone: f64,
    pub min_turn_deg: f64,
    pub min_segments: usize,
    pub max_segments: usize,
    pub min_segment_duration: f64,
}

impl Default for ManeuverConstraints {
    fn default() -> Self {
        ManeuverConstraints {
            min_speed: 3.0,
            max_speed: 6.0,
            min_duration: 10.0,
            max_duration: 20.0,
            min_path_length: 30.0,
            no_maneuver_zone: 20.0,
            min_turn_deg: 45.0,
            min_segments: 3,
            max_segments: 5,
            min_segment_duration: 2.5,
        }
    }
}

impl ManeuverConstraints {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConstraints(m.into()));
        let finite = [
            self.min_speed,
            self.max_speed,
            self.min_duration,
            self.max_duration,
            self.min_path_length,
            self.no_maneuver_zone,
            self.min_turn_deg,
            self.min_segment_duration,
        ];
        if finite.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("bounds must be finite and non-negative");
        }
        if self.min_speed > self.max_speed || self.max_speed <= 0.0 {
            return bad("speed bounds are empty");
        }
        if self.min_duration > self.max_duration
            || self.max_duration < 10.0
            || self.min_duration > 20.0
        {
            return bad("duration bounds do not meet [10, 20] s");
        }
        if self.min_segments < 2 || self.min_segments > self.max_segments {
            return bad("need at least two segments for a turn");
        }
        if self.min_turn_deg < 30.0 || self.min_turn_deg >= 180.0 {
            return bad("minimum turn must lie in [30, 180) degrees");
        }
        let longest = self.max_duration.min(20.0);
        if self.min_segments as f64 * self.min_segment_duration > longest {
            return bad("segments do not fit in the duration");
        }
        let reach = self.max_speed * longest;
        if reach < self.min_path_length.max(30.0) || reach <= self.no_maneuver_zone {
            return bad(&format!(
                "max speed {} m/s covers only {reach} m in {longest} s",
                self.max_speed
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Velocity in local north-east-down, m/s.
    pub velocity: [f64; 3],
    pub duration: f64,
}

impl Segment {
    fn heading(&self) -> f64 {
        self.velocity[1].atan2(self.velocity[0])
    }

    fn speed(&self) -> f64 {
        self.velocity.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManeuverPlan {
    pub segments: Vec<Segment>,
    pub total_duration: f64,
    pub seed: u64,
}

fn heading_change(a: f64, b: f64) -> f64 {
    crate::tracking::wrap_pi(b - a).abs()
}

impl ManeuverPlan {
    /// Displacement from the start at maneuver time `t` (clamped to the plan).
    pub fn position_at(&self, t: f64) -> [f64; 3] {
        let mut p = [0.0; 3];
        let mut left = t.max(0.0);
        for s in &self.segments {
            let dt = left.min(s.duration);
            (0..3).for_each(|i| p[i] += s.velocity[i] * dt);
            left -= dt;
            if left <= 0.0 {
                break;
            }
        }
        p
    }

    pub fn velocity_at(&self, t: f64) -> [f64; 3] {
        let mut end = 0.0;
        for s in &self.segments {
            end += s.duration;
            if t < end {
                return s.velocity;
            }
        }
        [0.0; 3]
    }

    pub fn path_length(&self) -> f64 {
        self.segments.iter().map(|s| s.speed() * s.duration).sum()
    }

    /// Number of segment boundaries where the heading changes by at least
    /// `min_deg`.
    pub fn turns(&self, min_deg: f64) -> usize {
        self.segments
            .windows(2)
            .filter(|w| heading_change(w[0].heading(), w[1].heading()) >= min_deg.to_radians() - 1e-9)
            .count()
    }

    /// Checks every plan invariant against `c`.
    pub fn validate(&self, c: &ManeuverConstraints) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConstraints(m));
        let sum: f64 = self.segments.iter().map(|s| s.duration).sum();
        if (sum - self.total_duration).abs() > 1e-9 {
            return bad(format!("segments last {sum} s, plan says {}", self.total_duration));
        }
        if !(10.0..=20.0).contains(&self.total_duration)
            || self.total_duration < c.min_duration
            || self.total_duration > c.max_duration
        {
            return bad(format!("duration {} s out of bounds", self.total_duration));
        }
        if self.path_length() < c.min_path_length.max(30.0) {
            return bad(format!("path length {:.1} m too short", self.path_length()));
        }
        if self.turns(c.min_turn_deg) == 0 {
            return bad("straight-line plan has no turn".into());
        }
        let end = self.position_at(self.total_duration);
        if end[0].hypot(end[1]) <= c.no_maneuver_zone {
            return bad("plan ends inside the no-maneuver zone".into());
        }
        Ok(())
    }
}

/// Draws a plan from `seed`, rejecting draws until every invariant holds.
pub fn generate_maneuver(seed: u64, constraints: &ManeuverConstraints) -> Result<ManeuverPlan> {
    constraints.validate()?;
    let c = constraints;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo_t = c.min_duration.max(10.0);
    let hi_t = c.max_duration.min(20.0);
    for _ in 0..10_000 {
        let n = rng.random_range(c.min_segments..=c.max_segments);
        let total = rng.random_range(lo_t..=hi_t);
        if n as f64 * c.min_segment_duration > total {
            continue;
        }
        // split the slack uniformly over the segments
        let slack = total - n as f64 * c.min_segment_duration;
        let mut cuts: Vec<f64> = (0..n - 1).map(|_| rng.random_range(0.0..=slack)).collect();
        cuts.push(0.0);
        cuts.push(slack);
        cuts.sort_by(f64::total_cmp);
        let mut heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let mut segments = Vec::with_capacity(n);
        for i in 0..n {
            if i > 0 {
                let turn = rng.random_range(c.min_turn_deg..=180.0 - c.min_turn_deg).to_radians();
                heading += if rng.random_bool(0.5) { turn } else { -turn };
            }
            let speed = rng.random_range(c.min_speed..=c.max_speed);
            segments.push(Segment {
                velocity: [speed * heading.cos(), speed * heading.sin(), 0.0],
                duration: c.min_segment_duration + cuts[i + 1] - cuts[i],
            });
        }
        let total_duration = segments.iter().map(|s| s.duration).sum();
        let plan = ManeuverPlan {
            segments,
            total_duration,
            seed,
        };
        if plan.validate(c).is_ok() {
            return Ok(plan);
        }
    }
    Err(Error::InvalidConstraints(
        "no valid plan found; constraints are too tight".into(),
    ))
}

/// Dead-reckoning error model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImuModel {
    /// RMS horizontal velocity error reached after one minute, m/hr.
    pub random_walk_rate: f64,
    /// Constant acceleration bias magnitude, m/s^2, in a random horizontal
    /// direction.
    pub bias_drift: f64,
    pub seed: u64,
}

impl Default for ImuModel {
    fn default() -> Self {
        ImuModel {
            random_walk_rate: 1590.0,
            bias_drift: 0.002,
            seed: 0,
        }
    }
}

impl ImuModel {
    pub fn noiseless() -> Self {
        ImuModel {
            random_walk_rate: 0.0,
            bias_drift: 0.0,
            seed: 0,
        }
    }

    /// Velocity random-walk intensity per axis, m/s per sqrt(s).
    fn velocity_walk(&self) -> f64 {
        // two horizontal axes, E|v(60 s)|^2 = 2 q^2 60
        self.random_walk_rate / 3600.0 / 120f64.sqrt()
    }

    /// Horizontal position drift after `duration` seconds of dead
    /// reckoning from a known start, one draw.
    pub fn drift(&self, duration: f64, rate: f64) -> [f64; 3] {
        let n = (duration * rate).round() as usize;
        let mut d = DriftState::new(self, self.seed);
        let dt = 1.0 / rate;
        for _ in 0..n {
            d.step(dt);
        }
        d.position
    }
}

struct DriftState {
    rng: ChaCha8Rng,
    q: f64,
    bias: [f64; 2],
    velocity: [f64; 2],
    position: [f64; 3],
}

impl DriftState {
    fn new(m: &ImuModel, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1_3A7E);
        let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        DriftState {
            rng,
            q: m.velocity_walk(),
            bias: [m.bias_drift * a.cos(), m.bias_drift * a.sin()],
            velocity: [0.0; 2],
            position: [0.0; 3],
        }
    }

    fn step(&mut self, dt: f64) {
        let sd = self.q * dt.sqrt();
        for i in 0..2 {
            let w = if sd > 0.0 {
                Normal::new(0.0, sd).expect("finite").sample(&mut self.rng)
            } else {
                0.0
            };
            let v0 = self.velocity[i];
            self.velocity[i] += w + self.bias[i] * dt;
            self.position[i] += 0.5 * (v0 + self.velocity[i]) * dt;
        }
    }
}

/// What the attacker reports while the receiver follows its signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "model", content = "segments")]
pub enum AttackerModel {
    /// Reports the pre-maneuver position throughout.
    HoldPosition,
    /// Observes the initial heading and extrapolates it in a straight line.
    HoldLastCourse,
    /// Knows the first `k` segments exactly, then holds the last course.
    Predictor(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpoofState {
    TracksLegitimate,
    TracksAttacker(AttackerModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlightConfig {
    /// Track sample rate, Hz.
    pub rate: f64,
    /// Horizontal GPS noise per axis, m.
    pub gps_sigma: f64,
    /// Vertical GPS noise, m.
    pub gps_sigma_vertical: f64,
    /// Hover before the maneuver starts, s.
    pub hold: f64,
    pub seed: u64,
}

impl Default for FlightConfig {
    fn default() -> Self {
        FlightConfig {
            rate: 5.0,
            gps_sigma: 1.5,
            gps_sigma_vertical: 0.0,
            hold: 1.0,
            seed: 0,
        }
    }
}

fn attacker_track(plan: &ManeuverPlan, model: AttackerModel, t: f64) -> [f64; 3] {
    let known = match model {
        AttackerModel::HoldPosition => return [0.0; 3],
        AttackerModel::HoldLastCourse => 1,
        AttackerModel::Predictor(k) => k.max(1),
    };
    let k = known.min(plan.segments.len());
    let horizon: f64 = plan.segments[..k].iter().map(|s| s.duration).sum();
    if t <= horizon {
        return plan.position_at(t);
    }
    let p = plan.position_at(horizon);
    let v = plan.segments[k - 1].velocity;
    [0, 1, 2].map(|i| p[i] + v[i] * (t - horizon))
}

/// Simulates the maneuver and returns `(imu_track, gps_track)` over the
/// maneuver, in meters from the hover point. Dead reckoning starts at the
/// beginning of the hover.
pub fn simulate_flight(
    plan: &ManeuverPlan,
    imu: &ImuModel,
    state: SpoofState,
    flight: &FlightConfig,
) -> (Trajectory, Trajectory) {
    let dt = 1.0 / flight.rate;
    let mut drift = DriftState::new(imu, imu.seed);
    let hold_steps = (flight.hold * flight.rate).round() as usize;
    for _ in 0..hold_steps {
        drift.step(dt);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(flight.seed ^ 0x6B5_0000);
    let mut noise = |sd: f64| {
        if sd > 0.0 {
            Normal::new(0.0, sd).expect("finite").sample(&mut rng)
        } else {
            0.0
        }
    };
    let n = (plan.total_duration * flight.rate).round() as usize;
    let mut imu_track = Vec::with_capacity(n + 1);
    let mut gps_track = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let t = i as f64 * dt;
        if i > 0 {
            drift.step(dt);
        }
        let truth = plan.position_at(t);
        imu_track.push(TrackPoint {
            t,
            position: [0, 1, 2].map(|k| truth[k] + drift.position[k]),
        });
        let reported = match state {
            SpoofState::TracksLegitimate => truth,
            SpoofState::TracksAttacker(m) => attacker_track(plan, m, t),
        };
        let e = [
            noise(flight.gps_sigma),
            noise(flight.gps_sigma),
            noise(flight.gps_sigma_vertical),
        ];
        gps_track.push(TrackPoint {
            t,
            position: [0, 1, 2].map(|k| reported[k] + e[k]),
        });
    }
    (
        Trajectory { samples: imu_track },
        Trajectory { samples: gps_track },
    )
}

/// Verdict of the track comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakLabel {
    pub tracked_peak_is_adversarial: bool,
    pub mean_deviation: f64,
    pub threshold: f64,
}

pub const DEFAULT_THRESHOLD: f64 = 5.0;

/// Mean Euclidean distance between the tracks at the IMU timestamps that
/// fall inside the GPS track, compared with `threshold`.
pub fn correlate_tracks(imu: &Trajectory, gps: &Trajectory, threshold: f64) -> Result<PeakLabel> {
    let d: Vec<f64> = imu
        .samples
        .iter()
        .filter_map(|p| {
            let g = gps.position_at(p.t)?;
            Some((0..3).map(|i| (p.position[i] - g[i]).powi(2)).sum::<f64>().sqrt())
        })
        .collect();
    if d.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} overlapping track samples, need 2",
            d.len()
        )));
    }
    let mean_deviation = d.iter().sum::<f64>() / d.len() as f64;
    Ok(PeakLabel {
        tracked_peak_is_adversarial: mean_deviation > threshold,
        mean_deviation,
        threshold,
    })
}

/// Outcome counts of a labelling Monte Carlo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelRates {
    pub trials: usize,
    pub adversarial: usize,
}

impl LabelRates {
    pub fn fraction(&self) -> f64 {
        self.adversarial as f64 / self.trials as f64
    }
}

/// Runs `trials` independent maneuvers under `state`; trial `i` seeds the
/// plan, IMU and GPS noise from `base_seed + i`.
pub fn monte_carlo(
    trials: usize,
    base_seed: u64,
    state: SpoofState,
    constraints: &ManeuverConstraints,
    threshold: f64,
    exec: Execution,
) -> Result<LabelRates> {
    let labels = exec.map_range(0..trials, |i| -> Result<bool> {
        let seed = base_seed.wrapping_add(i as u64);
        let plan = generate_maneuver(seed, constraints)?;
        let imu = ImuModel {
            seed: seed.wrapping_mul(31),
            ..ImuModel::default()
        };
        let flight = FlightConfig {
            seed: seed.wrapping_mul(17),
            ..FlightConfig::default()
        };
        let (a, b) = simulate_flight(&plan, &imu, state, &flight);
        Ok(correlate_tracks(&a, &b, threshold)?.tracked_peak_is_adversarial)
    });
    let mut adversarial = 0;
    for l in labels {
        adversarial += usize::from(l?);
    }
    Ok(LabelRates {
        trials,
        adversarial,
    })
}
