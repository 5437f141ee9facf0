use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use super::report::{Accuracy, EpochReport, FixKind, FixReport, Identification, RunReport, Timing};
use super::sic::Canceller;
use super::source::{SampleSource, ScenarioSource};
use super::{ModeMachine, ReceiverConfig, ReceiverMode, RectifierMode};
use crate::acquisition::{delay_separation, AcqPeak, Acquirer, AcquisitionConfig, SpoofVerdict};
use crate::api::{
    correlate_tracks, generate_maneuver, simulate_flight, AttackerModel, FlightConfig, ImuModel,
    SpoofState,
};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::lsr::{recover_with, refine_with, RecoveryReport};
use crate::pvt::{solve, PvtSolution};
use crate::rectifier::{compute_pseudoranges, rectify, ChannelMeasurement, DelayOffset, PseudorangeSet};
use crate::scenario::Scenario;
use crate::signal::num_complex::Complex64;
use crate::signal::{generate_ca_code, IqBuffer, PrnCode, CHIP_RATE};
use crate::tracking::Channel;

/// Adversarial/legitimate delay offset of a recovered PRN, as last seen.
#[derive(Debug, Clone)]
struct Recovered {
    anchor: DelayOffset,
    /// Sample the anchor refers to.
    at: u64,
    doppler_l: f64,
    /// Sample the legitimate channel started at.
    since: u64,
}

impl Recovered {
    fn delta_at(&self, n: u64, fs: f64, doppler_at: f64) -> f64 {
        let dt = (n as f64 - self.at as f64) / fs;
        self.anchor.propagate(dt, doppler_at, self.doppler_l).delta
    }
}

/// Streaming receiver state.
pub struct Receiver<'a> {
    config: ReceiverConfig,
    truth: Option<&'a Scenario>,
    fs: f64,
    exec: Execution,
    machine: ModeMachine,
    codes: BTreeMap<u8, PrnCode>,
    /// PRNs seen at least once; searched after the first epoch.
    known: BTreeSet<u8>,
    /// Channels on the strongest peak of each PRN.
    dominant: BTreeMap<u8, Channel>,
    /// Channels on recovered legitimate peaks, fed from the canceller.
    legit: BTreeMap<u8, Channel>,
    recovered: BTreeMap<u8, Recovered>,
    sic: Option<Canceller>,
    rectified: bool,
    epochs: Vec<EpochReport>,
    identification: Vec<Identification>,
    recovery: Vec<RecoveryReport>,
    timing: Timing,
}

/// Runs the receiver over a scenario, using it as ground truth.
pub fn run_scenario(scenario: &Scenario, config: &ReceiverConfig) -> Result<RunReport> {
    let mut source = ScenarioSource::new(scenario, config.execution());
    run(&mut source, Some(scenario), config)
}

/// Runs the receiver over `source`. `truth`, when given, scores the fixes
/// and drives the identification maneuver.
pub fn run(
    source: &mut dyn SampleSource,
    truth: Option<&Scenario>,
    config: &ReceiverConfig,
) -> Result<RunReport> {
    let mut rx = Receiver::new(source.sample_rate(), truth, config.clone())?;
    rx.process(source)?;
    Ok(rx.finish(source.len()))
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

impl<'a> Receiver<'a> {
    pub fn new(sample_rate: f64, truth: Option<&'a Scenario>, config: ReceiverConfig) -> Result<Self> {
        config.validate()?;
        if !(sample_rate >= 2.0 * CHIP_RATE) {
            return Err(Error::invalid(format!("sample rate {sample_rate} below 2x chip rate")));
        }
        let search: Vec<u8> = if config.prns.is_empty() {
            (1..=32).collect()
        } else {
            config.prns.clone()
        };
        let mut codes = BTreeMap::new();
        for p in search {
            codes.insert(p, generate_ca_code(p)?);
        }
        Ok(Receiver {
            exec: config.execution(),
            config,
            truth,
            fs: sample_rate,
            machine: ModeMachine::default(),
            codes,
            known: BTreeSet::new(),
            dominant: BTreeMap::new(),
            legit: BTreeMap::new(),
            recovered: BTreeMap::new(),
            sic: None,
            rectified: false,
            epochs: Vec::new(),
            identification: Vec::new(),
            recovery: Vec::new(),
            timing: Timing::default(),
        })
    }

    pub fn mode(&self) -> ReceiverMode {
        self.machine.mode
    }

    /// Consumes the whole source.
    pub fn process(&mut self, source: &mut dyn SampleSource) -> Result<()> {
        let start = Instant::now();
        let total = source.len();
        let epoch_len = ((self.config.epoch * self.fs).round() as u64).max(1);
        let mut n0 = 0;
        let mut epoch = 0;
        while n0 < total {
            let n1 = (n0 + epoch_len).min(total);
            self.epoch(source, epoch, n0, n1)?;
            n0 = n1;
            epoch += 1;
        }
        self.timing.total = ms(start);
        Ok(())
    }

    fn head_len(&self) -> usize {
        let spc = (self.fs * 1e-3).round() as usize;
        let acq = spc
            * (self.config.acquisition.periods)
                .max(self.config.detection.periods)
                .max(self.config.lsr.refine_periods);
        ((self.config.recovery_window * self.fs).round() as usize).max(acq)
    }

    fn epoch(&mut self, source: &mut dyn SampleSource, epoch: usize, n0: u64, n1: u64) -> Result<()> {
        let mut spoofed = Vec::new();
        let head_len = self.head_len();
        if (n1 - n0) as usize >= head_len {
            let mut head = vec![Complex64::new(0.0, 0.0); head_len];
            source.read(n0, &mut head)?;
            let head = IqBuffer::from_f64(&head, self.fs, n0 as f64 / self.fs)?;
            let verdicts = self.search(&head, epoch == 0)?;
            self.spawn_dominant(&head, n0, &verdicts)?;
            spoofed = verdicts
                .iter()
                .filter(|(p, v)| v.spoofing && self.dominant.contains_key(p))
                .map(|(p, _)| *p)
                .collect();
            if self.machine.mode == ReceiverMode::Clean && !spoofed.is_empty() {
                self.on_detection(epoch, &head, n0, &spoofed, &verdicts)?;
            } else if self.sic.is_some() {
                let late: Vec<u8> = spoofed
                    .iter()
                    .copied()
                    .filter(|p| !self.recovered.contains_key(p))
                    .collect();
                if !late.is_empty() {
                    self.recover_prns(&head, n0, &late, &verdicts)
                        .map_err(|e| e.in_state(self.machine.mode.as_str()))?;
                }
            }
        }
        self.stream(source, n0, n1)?;
        let report = self.fix(epoch, n1, spoofed)?;
        self.epochs.push(report);
        Ok(())
    }

    /// Cold start finds the visible PRNs; every epoch then checks them for
    /// auxiliary peaks.
    fn search(&mut self, head: &IqBuffer, cold: bool) -> Result<BTreeMap<u8, SpoofVerdict>> {
        let t = Instant::now();
        if cold {
            let found = self.acquire(head, &self.config.acquisition, self.codes.keys().copied().collect())?;
            self.known.extend(found.keys());
        }
        let prns = self.known.iter().copied().collect();
        let verdicts = self.acquire(head, &self.config.detection, prns)?;
        self.timing.acquisition += ms(t);
        Ok(verdicts)
    }

    /// Searches `prns`; PRNs with a live channel only within
    /// `detection_span` of its Doppler.
    fn acquire(
        &self,
        head: &IqBuffer,
        config: &AcquisitionConfig,
        prns: Vec<u8>,
    ) -> Result<BTreeMap<u8, SpoofVerdict>> {
        let buf = head.slice(0, head.samples_per_code() * config.periods);
        let jobs: Vec<(u8, AcquisitionConfig)> = prns
            .into_iter()
            .map(|p| {
                let mut c = config.clone();
                if let Some(ch) = self.dominant.get(&p).filter(|c| !c.is_lost()) {
                    let step = c.doppler_step.max(1.0);
                    let centre = (ch.doppler() / step).round() * step;
                    let span = (self.config.detection_span / step).ceil() * step;
                    c.doppler_min = c.doppler_min.max(centre - span);
                    c.doppler_max = c.doppler_max.min(centre + span);
                }
                (p, c)
            })
            .collect();
        let codes = &self.codes;
        let out = self.exec.map(jobs, |(p, c)| {
            Acquirer::new(c, Execution::Sequential)
                .acquire(&buf, &codes[&p])
                .map(|v| (p, v))
        });
        let mut verdicts = BTreeMap::new();
        for r in out {
            let (p, v) = r?;
            if !v.peaks.is_empty() {
                verdicts.insert(p, v);
            }
        }
        Ok(verdicts)
    }

    /// Starts a channel on the strongest peak of every PRN without a live one.
    fn spawn_dominant(&mut self, head: &IqBuffer, n0: u64, verdicts: &BTreeMap<u8, SpoofVerdict>) -> Result<()> {
        let buf = head.slice(0, head.samples_per_code() * self.config.lsr.refine_periods);
        let todo: Vec<AcqPeak> = verdicts
            .iter()
            .filter(|(p, _)| self.dominant.get(p).is_none_or(|c| c.is_lost()))
            .map(|(_, v)| v.peaks[0].clone())
            .collect();
        let lsr = &self.config.lsr;
        let refined = self.exec.map(todo, |pk| refine_with(&buf, &pk, lsr));
        for pk in refined {
            let ch = Channel::new(&pk, n0, self.fs, self.config.tracking.clone())?;
            self.dominant.insert(pk.prn, ch);
        }
        Ok(())
    }

    fn on_detection(
        &mut self,
        epoch: usize,
        head: &IqBuffer,
        n0: u64,
        spoofed: &[u8],
        verdicts: &BTreeMap<u8, SpoofVerdict>,
    ) -> Result<()> {
        let t = n0 as f64 / self.fs;
        self.machine.go(ReceiverMode::SpoofDetected, t)?;
        self.machine.go(ReceiverMode::Identifying, t)?;
        let id = self
            .identify(epoch, n0, spoofed)
            .map_err(|e| e.in_state("identifying"))?;
        let adversarial = id.adversarial;
        self.identification.push(id);
        if !adversarial {
            return self.machine.go(ReceiverMode::Clean, t);
        }
        self.machine.go(ReceiverMode::Recovering, t)?;
        self.start_recovery(head, n0, spoofed, verdicts)
            .map_err(|e| e.in_state("recovering"))
    }

    /// Labels the tracked peaks: an external label, else a maneuver whose
    /// simulated GPS track follows whichever peaks the channels sit on, else
    /// the power heuristic (the strongest peak is the attacker's).
    fn identify(&self, epoch: usize, n0: u64, spoofed: &[u8]) -> Result<Identification> {
        let time = n0 as f64 / self.fs;
        if let Some(adversarial) = self.config.external_label {
            return Ok(Identification {
                time,
                adversarial,
                source: "external".into(),
                label: None,
            });
        }
        let Some(truth) = self.truth else {
            return Ok(Identification {
                time,
                adversarial: true,
                source: "power".into(),
                label: None,
            });
        };
        let half_chip = 0.5 / CHIP_RATE;
        let on_attacker = spoofed
            .iter()
            .filter(|p| {
                let tau = self.dominant[p].code_delay_at(n0);
                truth
                    .legit_code_delay(**p, time)
                    .is_none_or(|l| delay_separation(tau, l) > half_chip)
            })
            .count();
        let state = if 2 * on_attacker > spoofed.len() {
            SpoofState::TracksAttacker(AttackerModel::HoldLastCourse)
        } else {
            SpoofState::TracksLegitimate
        };
        let seed = self.config.seed ^ truth.config.seed.rotate_left(21) ^ (epoch as u64).wrapping_mul(0x9E37_79B9);
        let plan = generate_maneuver(seed, &self.config.maneuver)?;
        let imu = ImuModel {
            seed: seed.wrapping_add(1),
            ..ImuModel::default()
        };
        let flight = FlightConfig {
            seed: seed.wrapping_add(2),
            ..FlightConfig::default()
        };
        let (imu_track, gps_track) = simulate_flight(&plan, &imu, state, &flight);
        let label = correlate_tracks(&imu_track, &gps_track, self.config.api_threshold)?;
        Ok(Identification {
            time,
            adversarial: label.tracked_peak_is_adversarial,
            source: "maneuver".into(),
            label: Some(label),
        })
    }

    fn start_recovery(
        &mut self,
        head: &IqBuffer,
        n0: u64,
        spoofed: &[u8],
        verdicts: &BTreeMap<u8, SpoofVerdict>,
    ) -> Result<()> {
        let t = n0 as f64 / self.fs;
        self.sic = Some(Canceller::new(n0));
        let mut advantages = self.recover_prns(head, n0, spoofed, verdicts)?;
        if self.recovered.is_empty() {
            return self.machine.go(ReceiverMode::Failure, t);
        }
        advantages.sort_by(f64::total_cmp);
        let median = advantages.get(advantages.len() / 2).copied();
        let handoff = match self.config.rectifier {
            RectifierMode::On => true,
            RectifierMode::Off => false,
            RectifierMode::Auto => median.is_some_and(|a| a >= self.config.handoff_advantage_db),
        };
        if handoff {
            self.machine.go(ReceiverMode::Rectifying, t)?;
        }
        Ok(())
    }

    /// Cancellation on each PRN's head buffer; successful PRNs get a channel
    /// on the recovered peak and their dominant signal is cancelled from then
    /// on. Returns the estimated advantages of the successes, dB.
    fn recover_prns(
        &mut self,
        head: &IqBuffer,
        n0: u64,
        prns: &[u8],
        verdicts: &BTreeMap<u8, SpoofVerdict>,
    ) -> Result<Vec<f64>> {
        let jobs: Vec<(SpoofVerdict, usize)> = prns
            .iter()
            .map(|p| {
                let v = &verdicts[p];
                let tau = self.dominant[p].code_delay_at(n0);
                let idx = (0..v.peaks.len())
                    .min_by(|&a, &b| {
                        delay_separation(v.peaks[a].code_delay, tau)
                            .total_cmp(&delay_separation(v.peaks[b].code_delay, tau))
                    })
                    .unwrap_or(0);
                (v.clone(), idx)
            })
            .collect();
        let lsr = &self.config.lsr;
        let results = self.exec.map(jobs, |(v, idx)| recover_with(head, &v, idx, lsr));
        let mut advantages = Vec::new();
        for r in results {
            let report = match r {
                Ok((_, report)) => report,
                Err(Error::RecoveryFailure { report }) => *report,
                Err(e) => return Err(e),
            };
            self.timing
                .cancellation_iterations
                .extend(report.steps.iter().map(|s| s.elapsed));
            if let Some(pk) = &report.recovered_peak {
                let ch = Channel::new(pk, n0, self.fs, self.config.tracking.clone())?;
                self.legit.insert(pk.prn, ch);
                let anchor = DelayOffset::new(pk.prn, self.dominant[&pk.prn].code_delay_at(n0), pk.code_delay);
                self.recovered.insert(
                    pk.prn,
                    Recovered {
                        anchor,
                        at: n0,
                        doppler_l: pk.doppler,
                        since: n0,
                    },
                );
                if let Some(sic) = &mut self.sic {
                    sic.add_target(&self.dominant[&pk.prn]);
                }
                advantages.extend(report.estimated_advantage_db);
            }
            self.recovery.push(report);
        }
        Ok(advantages)
    }

    /// Feeds `n0..n1` through the channels and the canceller.
    fn stream(&mut self, source: &mut dyn SampleSource, n0: u64, n1: u64) -> Result<()> {
        let chunk = ((self.config.chunk * self.fs).round() as u64).max(1);
        let mut buf = Vec::new();
        let mut n = n0;
        while n < n1 {
            let m = chunk.min(n1 - n) as usize;
            buf.resize(m, Complex64::new(0.0, 0.0));
            source.read(n, &mut buf)?;
            feed(self.exec, self.dominant.values_mut().collect(), &buf, n)?;
            if let Some(sic) = &mut self.sic {
                sic.push(n, &buf);
                for p in self.recovered.keys() {
                    sic.subtract(&self.dominant[p]);
                }
                let (first, clean) = sic.drain();
                if !clean.is_empty() {
                    feed(self.exec, self.legit.values_mut().collect(), &clean, first)?;
                }
            }
            n += m as u64;
        }
        Ok(())
    }

    fn fix(&mut self, epoch: usize, n: u64, spoofed_prns: Vec<u8>) -> Result<EpochReport> {
        let t = n as f64 / self.fs;
        let truth = self.truth.map(|s| s.receiver_ecef);
        let tracked = self.standard_fix(self.dominant.values().collect(), n);
        self.refresh_anchors(n);
        let recovering = self.machine.mode == ReceiverMode::Recovering;
        if recovering && self.config.rectifier == RectifierMode::Auto && self.legit_stalled(n) {
            self.machine.go(ReceiverMode::Rectifying, t)?;
        }
        let fix = match self.machine.mode {
            ReceiverMode::Clean => tracked.clone().map(|s| (FixKind::Standard, s)),
            ReceiverMode::Recovering => match self.cancelled_fix(n) {
                Some(s) => {
                    self.machine.go(ReceiverMode::Recovered, t)?;
                    Some((FixKind::Recovered, s))
                }
                None => {
                    if self.config.rectifier == RectifierMode::Off && self.legit_stalled(n) {
                        self.machine.go(ReceiverMode::Failure, t)?;
                    }
                    tracked.clone().map(|s| (FixKind::Unverified, s))
                }
            },
            ReceiverMode::Rectifying => match self.rectified_fix(n) {
                Some(s) => {
                    self.rectified = true;
                    self.machine.go(ReceiverMode::Recovered, t)?;
                    Some((FixKind::Rectified, s))
                }
                None => tracked.clone().map(|s| (FixKind::Unverified, s)),
            },
            ReceiverMode::Recovered if self.rectified => self
                .rectified_fix(n)
                .map(|s| (FixKind::Rectified, s)),
            ReceiverMode::Recovered => self.cancelled_fix(n).map(|s| (FixKind::Recovered, s)),
            _ => tracked.clone().map(|s| (FixKind::Unverified, s)),
        };
        Ok(EpochReport {
            epoch,
            time: t,
            mode: self.machine.mode,
            spoofed_prns,
            fix: fix.map(|(k, s)| FixReport::new(k, s, truth)),
            tracked_fix: tracked.map(|s| FixReport::new(FixKind::Unverified, s, truth)),
        })
    }

    fn refresh_anchors(&mut self, n: u64) {
        for (p, r) in self.recovered.iter_mut() {
            let (Some(l), Some(d)) = (self.legit.get(p), self.dominant.get(p)) else {
                continue;
            };
            if l.is_locked() && !d.is_lost() {
                r.anchor = DelayOffset::new(*p, d.code_delay_at(n), l.code_delay_at(n));
                r.at = n;
                r.doppler_l = l.doppler();
            }
        }
    }

    /// A recovered channel lost lock, or has not decoded a frame in time.
    fn legit_stalled(&self, n: u64) -> bool {
        self.recovered.iter().any(|(p, r)| {
            let late = (n - r.since) as f64 / self.fs > self.config.preamble_deadline;
            self.legit
                .get(p)
                .is_none_or(|c| c.is_lost() || (late && c.frame().is_none()))
        })
    }

    fn standard_fix(&self, channels: Vec<&Channel>, n: u64) -> Option<PvtSolution> {
        let (meas, sats) = measure(&channels, n);
        let pr = compute_pseudoranges(&meas, self.config.t_ref).ok()?;
        solve_set(&pr, &sats)
    }

    /// Recovered channels for the cancelled PRNs, dominant ones elsewhere.
    /// Needs every recovered channel to be locked and framed.
    fn cancelled_fix(&self, n: u64) -> Option<PvtSolution> {
        let mut channels = Vec::new();
        for (p, c) in &self.dominant {
            if self.recovered.contains_key(p) {
                let l = self.legit.get(p)?;
                if !l.is_locked() || l.frame().is_none() {
                    return None;
                }
                channels.push(l);
            } else if !self.is_spoofed(*p) {
                channels.push(c);
            }
        }
        self.standard_fix(channels, n)
    }

    fn is_spoofed(&self, prn: u8) -> bool {
        self.recovery.iter().any(|r| r.prn == prn)
    }

    /// Dominant channels with each recovered PRN shifted by its offset.
    fn rectified_fix(&self, n: u64) -> Option<PvtSolution> {
        let mut offsets = Vec::new();
        let mut channels = Vec::new();
        for (p, c) in &self.dominant {
            if c.is_lost() {
                continue;
            }
            let tau_at = c.code_delay_at(n);
            if let Some(r) = self.recovered.get(p) {
                let delta = r.delta_at(n, self.fs, c.doppler());
                offsets.push(DelayOffset::new(*p, tau_at, tau_at - delta));
            } else if self.is_spoofed(*p) {
                continue;
            } else {
                offsets.push(DelayOffset::new(*p, tau_at, tau_at));
            }
            channels.push(c);
        }
        let (meas, _) = measure(&channels, n);
        let pr = rectify(&meas, &offsets, self.config.t_ref).ok()?;
        let sats = channels
            .iter()
            .filter_map(|c| {
                let e = pr.get(c.prn())?;
                Some((c.prn(), c.frame()?.message.position_at(e.transmit_time)))
            })
            .collect();
        solve_set(&pr, &sats)
    }

    pub fn finish(self, total_samples: u64) -> RunReport {
        let kinds = |k: &[FixKind]| {
            let v: Vec<&FixReport> = self
                .epochs
                .iter()
                .filter_map(|e| e.fix.as_ref())
                .filter(|f| k.contains(&f.kind))
                .collect();
            Accuracy::of(v.into_iter())
        };
        let accuracy = kinds(&[FixKind::Recovered, FixKind::Rectified]);
        let clean_accuracy = kinds(&[FixKind::Standard]);
        let spoofed_accuracy = Accuracy::of(
            self.epochs
                .iter()
                .filter(|e| e.mode != ReceiverMode::Clean || !e.spoofed_prns.is_empty())
                .filter_map(|e| e.tracked_fix.as_ref()),
        );
        let mut timing = self.timing;
        if timing.total > 0.0 {
            timing.samples_per_second = total_samples as f64 / timing.total;
        }
        let rectified_prns = if self.rectified {
            self.recovered.keys().copied().collect()
        } else {
            Vec::new()
        };
        RunReport {
            sample_rate: self.fs,
            duration: total_samples as f64 / self.fs,
            seed: self.truth.map(|s| s.config.seed),
            rectifier: self.config.rectifier,
            final_mode: self.machine.mode,
            transitions: self.machine.transitions,
            epochs: self.epochs,
            identification: self.identification,
            recovery: self.recovery,
            rectified_prns,
            accuracy,
            spoofed_accuracy,
            clean_accuracy,
            timing,
        }
    }
}

/// Runs `chunk` through each channel; loss of lock is recorded on the
/// channel, anything else is fatal.
fn feed(exec: Execution, channels: Vec<&mut Channel>, chunk: &[Complex64], first: u64) -> Result<()> {
    for r in exec.map(channels, |c| c.process(chunk, first)) {
        match r {
            Ok(()) | Err(Error::LossOfLock { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

fn measure(channels: &[&Channel], n: u64) -> (Vec<ChannelMeasurement>, BTreeMap<u8, [f64; 3]>) {
    let mut meas = Vec::new();
    let mut sats = BTreeMap::new();
    for c in channels {
        if c.is_lost() {
            continue;
        }
        let (Some(m), Some(f)) = (c.measurement(n), c.frame()) else {
            continue;
        };
        sats.insert(c.prn(), f.message.position_at(m.transmit_time));
        meas.push(m);
    }
    (meas, sats)
}

/// Residual RMS above which a solution is rejected, m.
const MAX_RESIDUAL: f64 = 50.0;

/// Least squares with single-fault exclusion: when the full set fails the
/// residual check, the best leave-one-out subset is used instead.
fn solve_set(pr: &PseudorangeSet, sats: &BTreeMap<u8, [f64; 3]>) -> Option<PvtSolution> {
    let accept = |s: PvtSolution| (s.residual_rms < MAX_RESIDUAL).then_some(s);
    if let Some(s) = solve(pr, sats).ok().and_then(accept) {
        return Some(s);
    }
    if pr.entries.len() < 6 {
        return None;
    }
    (0..pr.entries.len())
        .filter_map(|i| {
            let mut sub = pr.clone();
            sub.entries.remove(i);
            solve(&sub, sats).ok().and_then(accept)
        })
        .min_by(|a, b| a.residual_rms.total_cmp(&b.residual_rms))
}

