//! The 100 Hz control loop for one scenario.
//!
//! Each leg owns its controllers, muscles and plant state; the two legs share
//! nothing but the clock and the noise stream. Per tick and leg the loop runs:
//! project onto the path, band the error, command FES, advance the muscles,
//! compute exoskeleton torque, step the plant, feed the gait state machine and
//! apply any learning updates the state machine triggers.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{MuscleConfig, ScenarioConfig, Variant};
use super::metrics::{CycleMetrics, RunTotals, Summary};
use crate::error::{Error, Result};
use crate::exo::{exo_torque, impedance_torque, ExoGains, LocalReference, RateFilter};
use crate::fatigue::{excitation, frequency_factor, step_fitness_with_drive, ActivationKernel};
use crate::fes::{fes_band_radius, muscle_error, stimulation, FesGains, MuscleChannel};
use crate::gait::{GaitEvent, PhaseAccumulator};
use crate::path::{BandedError, ReferencePath};
use crate::plant::{fes_torque, step_dynamics_with, BehaviorLabel, LegState, MuscleTorqueMap, VoluntaryProfile};
use crate::types::{Action, GaitPhase, Joint, JointPair, Side};

/// Clock offset of each leg in cycles; the legs run half a cycle apart.
fn phase_offset(side: Side) -> f64 {
    match side {
        Side::Left => 0.0,
        Side::Right => 0.5,
    }
}

/// One tick of one leg, as written to the trace file. Angles in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub side: Side,
    pub q: JointPair,
    pub q_ref: JointPair,
    pub eps: JointPair,
    pub tau_exo: JointPair,
    /// Per channel, in the order of [`ScenarioOutput::channels`].
    pub pulse_width: Vec<f64>,
    pub mu: Vec<f64>,
    pub activation: Vec<f64>,
    pub gait_phase: GaitPhase,
    pub path_phase: f64,
    /// Counted cycle in progress; 0 during the warm-up cycle.
    pub cycle: u64,
    pub r_fesb: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    pub variant: Variant,
    /// Channel names per leg, in trace and metrics order.
    pub channels: Vec<String>,
    pub trace: Vec<TraceRow>,
    pub metrics: Vec<CycleMetrics>,
    pub summary: Summary,
}

/// Sums over the ticks of one counted cycle.
#[derive(Debug, Clone, Default)]
struct CycleSums {
    err_sq: JointPair,
    torque_sq: JointPair,
    pw_sq: Vec<f64>,
    mu: Vec<f64>,
    ticks: usize,
}

impl CycleSums {
    fn new(channels: usize) -> Self {
        Self {
            pw_sq: vec![0.0; channels],
            mu: vec![0.0; channels],
            ..Default::default()
        }
    }
}

struct Leg {
    side: Side,
    state: LegState,
    channels: Vec<MuscleChannel>,
    kernels: Vec<ActivationKernel>,
    /// Frequency factor per channel.
    rho: Vec<f64>,
    maps: Vec<MuscleTorqueMap>,
    fes: FesGains,
    exo: ExoGains,
    rate: RateFilter,
    fsm: PhaseAccumulator,
    r_fesb: f64,
    path_phase: f64,
    /// Counted cycles completed; the first cycle the state machine closes is
    /// a warm-up and does not count.
    counted: u64,
    warm: bool,
    sums: CycleSums,
    done: bool,
}

/// Per-tick quantities used for logging and metrics.
struct TickRecord {
    banded: BandedError,
    tau_exo: JointPair,
    pulse_width: Vec<f64>,
    gait_phase: GaitPhase,
    r_fesb: f64,
}

/// Channel order within a leg: knee extensor, knee flexor, hip flexor, hip extensor.
fn channel_rank(m: &MuscleConfig) -> u8 {
    match (m.joint, m.action) {
        (Joint::Knee, Action::Extensor) => 0,
        (Joint::Knee, Action::Flexor) => 1,
        (Joint::Hip, Action::Flexor) => 2,
        (Joint::Hip, Action::Extensor) => 3,
    }
}

/// Short channel label used for trace columns.
pub(crate) fn channel_label(joint: Joint, action: Action) -> &'static str {
    match (joint, action) {
        (Joint::Knee, Action::Extensor) => "quad",
        (Joint::Knee, Action::Flexor) => "ham",
        (Joint::Hip, Action::Flexor) => "hipflex",
        (Joint::Hip, Action::Extensor) => "hipext",
    }
}

/// The motion the wearer aims for: the path, delayed, with the knee lagging
/// the hip, reaching only part of the path's flexion above its minimum, and
/// buckling into extra flexion over a window of the cycle.
#[derive(Debug, Clone, Copy)]
struct Intent {
    lag: f64,
    knee_delay: f64,
    knee_gain: f64,
    knee_floor: f64,
    bump: KneeBump,
}

/// Raised-cosine knee flexion bump (radians) centred at `center`, `width`
/// cycles wide.
#[derive(Debug, Clone, Copy)]
struct KneeBump {
    amplitude: f64,
    center: f64,
    width: f64,
}

impl KneeBump {
    /// Offset from the bump centre, wrapped to [-0.5, 0.5).
    fn offset(&self, phase: f64) -> f64 {
        (phase - self.center + 0.5).rem_euclid(1.0) - 0.5
    }

    fn at(&self, phase: f64) -> f64 {
        let x = self.offset(phase) / self.width;
        if x.abs() >= 0.5 {
            0.0
        } else {
            0.5 * self.amplitude * (1.0 + (2.0 * PI * x).cos())
        }
    }

    fn rate(&self, phase: f64) -> f64 {
        let x = self.offset(phase) / self.width;
        if x.abs() >= 0.5 {
            0.0
        } else {
            -PI * self.amplitude / self.width * (2.0 * PI * x).sin()
        }
    }
}

impl Intent {
    fn at(&self, path: &ReferencePath, phase: f64) -> JointPair {
        let p = phase - self.lag;
        let knee = path.at_phase(p - self.knee_delay).knee;
        JointPair::new(
            path.at_phase(p).hip,
            self.knee_floor + self.knee_gain * (knee - self.knee_floor) + self.bump.at(p),
        )
    }

    /// Derivative with respect to phase.
    fn rate(&self, path: &ReferencePath, phase: f64) -> JointPair {
        let p = phase - self.lag;
        JointPair::new(
            path.velocity_at_phase(p).hip,
            self.knee_gain * path.velocity_at_phase(p - self.knee_delay).knee + self.bump.rate(p),
        )
    }
}

struct Behaviour {
    profile: VoluntaryProfile,
    intent: Intent,
}

struct World<'a> {
    cfg: &'a ScenarioConfig,
    path: ReferencePath,
    high: Behaviour,
    low: Behaviour,
    r_db: f64,
    noise: Option<(ChaCha8Rng, Normal<f64>)>,
    legs: Vec<Leg>,
    totals: RunTotals,
    trace: Vec<TraceRow>,
    metrics: Vec<CycleMetrics>,
}

impl<'a> World<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let path = match &cfg.path_file {
            Some(p) => ReferencePath::from_file(p)?,
            None => ReferencePath::default_gait(),
        };
        let v = &cfg.voluntary;
        let knee_floor = path.points().iter().map(|p| p.knee).fold(f64::INFINITY, f64::min);
        let behaviour = |label, file: &Option<std::path::PathBuf>, scale, lag, knee: (f64, f64, f64)| -> Result<Behaviour> {
            let intent = Intent {
                lag,
                knee_delay: knee.0,
                knee_gain: knee.1,
                bump: KneeBump {
                    amplitude: knee.2.to_radians(),
                    center: v.knee_bump_center,
                    width: v.knee_bump_width,
                },
                knee_floor,
            };
            let profile = match file {
                Some(f) => VoluntaryProfile::from_file(label, f, v.torque_limit)?,
                None => VoluntaryProfile::from_motion(
                    label,
                    |p| intent.at(&path, p),
                    &cfg.plant,
                    cfg.cycle_period,
                    scale,
                    v.torque_limit,
                )?,
            };
            Ok(Behaviour { profile, intent })
        };
        let high = behaviour(
            BehaviorLabel::HighError,
            &v.high_error_file,
            v.high_error_scale,
            v.high_error_lag,
            (v.high_error_knee_delay, v.high_error_knee_gain, v.high_error_knee_bump_deg),
        )?;
        let low = behaviour(
            BehaviorLabel::LowError,
            &v.low_error_file,
            v.low_error_scale,
            v.low_error_lag,
            (v.low_error_knee_delay, v.low_error_knee_gain, v.low_error_knee_bump_deg),
        )?;

        let r_db = cfg.r_db();
        let r_fesb0 = cfg.r_fesb0();
        let mut table = cfg.muscle_table()?;
        table.sort_by_key(|m| (m.side, channel_rank(m)));

        let noise = (cfg.sensor_noise_deg > 0.0).then(|| {
            let normal = Normal::new(0.0, cfg.sensor_noise_deg.to_radians()).expect("positive deviation");
            (ChaCha8Rng::seed_from_u64(cfg.rng_seed), normal)
        });

        let mut legs = Vec::new();
        for side in Side::ALL {
            let muscles: Vec<&MuscleConfig> = table.iter().filter(|m| m.side == side).collect();
            let channels: Vec<MuscleChannel> = muscles
                .iter()
                .map(|m| MuscleChannel::new(m.side, m.joint, m.action, m.params))
                .collect();
            let kernels = muscles
                .iter()
                .map(|m| ActivationKernel::new(&m.params, cfg.dt))
                .collect::<Result<Vec<_>>>()?;
            let rho = muscles
                .iter()
                .map(|m| frequency_factor(cfg.fes.frequency_hz, m.params.beta))
                .collect::<Result<Vec<_>>>()?;
            let gamma0: Vec<f64> = muscles.iter().map(|m| m.gamma0.unwrap_or(cfg.fes.gamma0)).collect();
            let fes = FesGains::new(&channels, r_fesb0, cfg.fes.phi_f, &gamma0);
            let e = &cfg.exo;
            let exo = ExoGains::new(
                JointPair::splat(e.baseline_stiffness),
                cfg.damping_coefficient(),
                e.phi_e,
                e.torque_limit,
            );
            let offset = phase_offset(side);
            let q0 = path.at_phase(offset);
            let h = 1e-3;
            let qdot0 = (path.at_phase(offset + h) - path.at_phase(offset - h)) * (1.0 / (2.0 * h * cfg.cycle_period));
            let n = channels.len();
            legs.push(Leg {
                side,
                state: LegState { q: q0, qdot: qdot0 },
                maps: muscles.iter().map(|m| m.torque_map()).collect(),
                r_fesb: if cfg.variant.uses_fes() {
                    fes_band_radius(r_fesb0, r_db, channels.iter().map(|c| &c.state))
                } else {
                    r_db
                },
                channels,
                kernels,
                rho,
                fes,
                exo,
                rate: RateFilter::new(cfg.dt, e.rate_cutoff_hz),
                fsm: PhaseAccumulator::new(n + 2, cfg.gait, offset),
                path_phase: offset,
                counted: 0,
                warm: false,
                sums: CycleSums::new(n),
                done: false,
            });
        }
        // both legs must carry the same channel layout for the trace columns
        let layout = |l: &Leg| l.channels.iter().map(|c| (c.joint, c.action)).collect::<Vec<_>>();
        if layout(&legs[0]) != layout(&legs[1]) {
            return Err(Error::Config("left and right legs must stimulate the same muscles".into()));
        }
        let n_channels = legs[0].channels.len();

        Ok(Self {
            cfg,
            path,
            high,
            low,
            r_db,
            noise,
            legs,
            totals: RunTotals::new(n_channels),
            trace: Vec::new(),
            metrics: Vec::new(),
        })
    }

    fn channel_names(&self) -> Vec<String> {
        self.legs[0]
            .channels
            .iter()
            .map(|c| channel_label(c.joint, c.action).to_string())
            .collect()
    }

    fn step_leg(&mut self, idx: usize, t: f64) -> Result<()> {
        let cfg = self.cfg;
        let variant = cfg.variant;
        let dt = cfg.dt;
        let r_db = self.r_db;
        let measured = match self.noise.as_mut() {
            Some((rng, normal)) => {
                let q = self.legs[idx].state.q;
                JointPair::new(q.hip + normal.sample(rng), q.knee + normal.sample(rng))
            }
            None => self.legs[idx].state.q,
        };
        let leg = &mut self.legs[idx];

        let proj = self.path.project(measured, Some(leg.path_phase));
        leg.path_phase = proj.phase;
        let r_fesb = leg.r_fesb;
        let banded = BandedError::from_projection(&proj, measured, r_db, r_fesb);
        let gait_phase = leg.fsm.phase();

        // FES
        let mut pulse_width = vec![0.0; leg.channels.len()];
        let mut norm_err = Vec::with_capacity(leg.channels.len() + 2);
        for (i, ch) in leg.channels.iter().enumerate() {
            let err = muscle_error(banded.fes_error[ch.joint], ch.action);
            norm_err.push(if r_db > 0.0 { err / r_db } else { 0.0 });
            if variant.uses_fes() {
                pulse_width[i] = stimulation(ch, &leg.fes.channels[i], gait_phase, err);
            }
        }
        let mut tau_fes = JointPair::ZERO;
        for (i, ch) in leg.channels.iter_mut().enumerate() {
            let e = excitation(pulse_width[i], &ch.params);
            // fitness uses the activation at the start of the step
            let drive = leg.rho[i] * ch.state.effective_activation();
            let mu = step_fitness_with_drive(ch.state.mu, drive, dt, &ch.params)?;
            ch.state = leg.kernels[i].step(ch.state, e);
            ch.state.mu = mu;
            tau_fes[ch.joint] += fes_torque(ch, &leg.maps[i], leg.state.q[ch.joint]);
        }

        // exoskeleton: engages only outside the FES band
        let exo_on = variant.uses_exo();
        let ideal = cfg.exo.ideal_actuator;
        let local = LocalReference {
            point: banded.reference_point,
            anchor: measured,
            tangent: self.path.tangent(proj.segment),
        };
        let rate = leg.rate.update(banded.exo_error);
        let mut tau_exo = JointPair::ZERO;
        if exo_on {
            tau_exo = if ideal {
                impedance_torque(&leg.exo, gait_phase, &local, r_fesb, leg.state.q, leg.state.qdot)
            } else {
                let mut t = exo_torque(&leg.exo, gait_phase, banded.exo_error, rate);
                for j in Joint::ALL {
                    if banded.exo_error[j] == 0.0 {
                        t[j] = 0.0;
                    }
                }
                t
            };
        }
        for j in Joint::ALL {
            norm_err.push(if r_db > 0.0 { banded.exo_error[j].abs() / r_db } else { 0.0 });
        }

        let behavior = cfg.behavior_at(leg.counted + 1);
        let profile = match behavior {
            BehaviorLabel::HighError => &self.high,
            BehaviorLabel::LowError => &self.low,
        };
        let clock = t / cfg.cycle_period + phase_offset(leg.side);
        let held = profile.profile.torque(clock) + tau_fes;
        // wearer impedance about the intended motion
        let target = profile.intent.at(&self.path, clock);
        let target_rate = profile.intent.rate(&self.path, clock) * (1.0 / cfg.cycle_period);
        let (k_h, b_h) = (cfg.voluntary.stiffness, cfg.voluntary.damping);
        let wearer = move |s: &LegState| (target - s.q).zip(k_h, |e, k| e * k) + (target_rate - s.qdot).zip(b_h, |e, b| e * b);

        let substeps = (dt / cfg.plant_substep).ceil() as usize;
        let exo = leg.exo;
        let mut violations = 0;
        let next = step_dynamics_with(&cfg.plant, &leg.state, dt, substeps, |s| {
            if !(exo_on && ideal) {
                return held + wearer(s) + tau_exo;
            }
            let tau = impedance_torque(&exo, gait_phase, &local, r_fesb, s.q, s.qdot);
            let err = local.error(s.q);
            for j in Joint::ALL {
                if tau[j] != 0.0 && err[j].abs() <= r_fesb {
                    violations += 1;
                }
            }
            held + wearer(s) + tau
        });
        self.totals.hierarchy_violations += violations;
        if !next.is_finite() {
            return Err(Error::Divergence {
                time: t,
                side: leg.side.to_string(),
                what: "leg state is not finite".into(),
            });
        }
        leg.state = next;

        let record = TickRecord {
            banded,
            tau_exo,
            pulse_width,
            gait_phase,
            r_fesb,
        };

        let events = leg.fsm.on_tick(proj.phase, &norm_err);
        self.handle_events(idx, events, behavior);
        self.record(idx, t, measured, &record);
        Ok(())
    }

    fn handle_events(&mut self, idx: usize, events: Vec<GaitEvent>, behavior: BehaviorLabel) {
        let cfg = self.cfg;
        let leg = &mut self.legs[idx];
        let n = leg.channels.len();
        for event in events {
            match event {
                GaitEvent::PhaseEnded { phase, rms } => {
                    let (Some(rms), true) = (rms, leg.warm && cfg.variant.adapts()) else {
                        continue;
                    };
                    if cfg.variant.uses_fes() {
                        leg.fes.update_gamma(phase, &rms[..n]);
                    }
                    if cfg.variant.uses_exo() {
                        leg.exo.update_stiffness(phase, JointPair::new(rms[n], rms[n + 1]));
                    }
                }
                GaitEvent::CycleEnded { .. } => {
                    if !leg.warm {
                        leg.warm = true;
                        leg.sums = CycleSums::new(n);
                        continue;
                    }
                    if leg.done {
                        continue;
                    }
                    if cfg.variant.adapts() && cfg.variant.uses_fes() {
                        leg.r_fesb = fes_band_radius(leg.fes.r_fesb0, self.r_db, leg.channels.iter().map(|c| &c.state));
                    }
                    leg.counted += 1;
                    let s = std::mem::replace(&mut leg.sums, CycleSums::new(n));
                    let k = s.ticks.max(1) as f64;
                    self.metrics.push(CycleMetrics {
                        side: leg.side,
                        cycle: leg.counted,
                        behavior,
                        ticks: s.ticks,
                        rms_err: s.err_sq.map(|v| (v / k).sqrt()),
                        rms_exo_torque: s.torque_sq.map(|v| (v / k).sqrt()),
                        rms_pulse_width: s.pw_sq.iter().map(|v| (v / k).sqrt()).collect(),
                        mean_fitness: s.mu.iter().map(|v| v / k).collect(),
                        gamma_st: leg.fes.channels.iter().map(|g| g.gamma_st).collect(),
                        gamma_sw: leg.fes.channels.iter().map(|g| g.gamma_sw).collect(),
                        k_st: leg.exo.k_st,
                        k_sw: leg.exo.k_sw,
                        r_fesb: leg.r_fesb,
                    });
                    if leg.counted >= cfg.n_cycles {
                        leg.done = true;
                    }
                }
            }
        }
    }

    fn record(&mut self, idx: usize, t: f64, measured: JointPair, rec: &TickRecord) {
        let leg = &mut self.legs[idx];
        let counting = leg.warm && !leg.done;
        if counting {
            let s = &mut leg.sums;
            let eps = rec.banded.raw_error;
            s.err_sq = s.err_sq + eps.zip(eps, |a, b| a * b);
            s.torque_sq = s.torque_sq + rec.tau_exo.zip(rec.tau_exo, |a, b| a * b);
            for (i, ch) in leg.channels.iter().enumerate() {
                s.pw_sq[i] += rec.pulse_width[i] * rec.pulse_width[i];
                s.mu[i] += ch.state.mu;
            }
            s.ticks += 1;
            self.totals.add(&rec.banded.raw_error, &rec.tau_exo, &rec.pulse_width, &leg.channels);
        }
        for j in Joint::ALL {
            if rec.tau_exo[j] != 0.0 && rec.banded.raw_error[j].abs() <= rec.r_fesb {
                self.totals.hierarchy_violations += 1;
            }
        }
        if rec.r_fesb < self.r_db {
            self.totals.hierarchy_violations += 1;
        }
        if self.cfg.record_trace {
            self.trace.push(TraceRow {
                t,
                side: leg.side,
                q: measured,
                q_ref: rec.banded.reference_point,
                eps: rec.banded.raw_error,
                tau_exo: rec.tau_exo,
                pulse_width: rec.pulse_width.clone(),
                mu: leg.channels.iter().map(|c| c.state.mu).collect(),
                activation: leg.channels.iter().map(|c| c.state.a).collect(),
                gait_phase: rec.gait_phase,
                path_phase: leg.path_phase,
                cycle: if leg.warm { leg.counted + 1 } else { 0 },
                r_fesb: rec.r_fesb,
            });
        }
    }
}

/// Simulates one scenario until both legs complete `n_cycles` counted gait
/// cycles. A leg that stalls is given twice the nominal time; the run then
/// stops with whatever cycles completed.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    let mut world = World::new(cfg)?;
    let max_ticks = (((cfg.n_cycles + 2) as f64 * cfg.cycle_period * 2.0) / cfg.dt).ceil() as u64;
    let mut tick = 0u64;
    while tick < max_ticks && world.legs.iter().any(|l| !l.done) {
        let t = tick as f64 * cfg.dt;
        for idx in 0..world.legs.len() {
            if !world.legs[idx].done {
                world.step_leg(idx, t)?;
            }
        }
        tick += 1;
    }
    let summary = world.totals.summary(cfg, tick as f64 * cfg.dt, &world.metrics);
    Ok(ScenarioOutput {
        variant: cfg.variant,
        channels: world.channel_names(),
        trace: world.trace,
        metrics: world.metrics,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BUMP: KneeBump = KneeBump {
        amplitude: 0.2,
        center: 0.95,
        width: 0.3,
    };

    #[test]
    fn bump_peaks_at_centre_and_vanishes_outside() {
        assert!((BUMP.at(0.95) - 0.2).abs() < 1e-15);
        // half the peak a quarter width either side, wrapping through 0
        assert!((BUMP.at(0.95 + 0.075 - 1.0) - 0.1).abs() < 1e-12);
        assert!((BUMP.at(0.875) - 0.1).abs() < 1e-12);
        for p in [0.2, 0.5, 0.79, 0.111] {
            assert_eq!(BUMP.at(p), 0.0, "{p}");
            assert_eq!(BUMP.rate(p), 0.0, "{p}");
        }
        assert!((BUMP.at(0.95 + 3.0) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn bump_rate_matches_finite_difference() {
        let h = 1e-6;
        for i in 0..200 {
            let p = i as f64 / 200.0 + 0.0013;
            let fd = (BUMP.at(p + h) - BUMP.at(p - h)) / (2.0 * h);
            assert!((BUMP.rate(p) - fd).abs() < 1e-5, "{p}: {} vs {fd}", BUMP.rate(p));
        }
    }

    #[test]
    fn plain_intent_is_the_delayed_path() {
        let path = ReferencePath::default_gait();
        let intent = Intent {
            lag: 0.02,
            knee_delay: 0.0,
            knee_gain: 1.0,
            knee_floor: 0.0,
            bump: KneeBump { amplitude: 0.0, ..BUMP },
        };
        for i in 0..50 {
            let p = i as f64 / 50.0;
            assert!((intent.at(&path, p) - path.at_phase(p - 0.02)).norm() < 1e-12);
        }
    }

    #[test]
    fn intent_rate_matches_finite_difference() {
        let path = ReferencePath::default_gait();
        let floor = path.points().iter().map(|q| q.knee).fold(f64::INFINITY, f64::min);
        let intent = Intent {
            lag: 0.03,
            knee_delay: 0.02,
            knee_gain: 1.1,
            knee_floor: floor,
            bump: BUMP,
        };
        // mid-sample phases, so the lagged lookups stay clear of polyline corners
        let h = 1e-7;
        for i in 0..200 {
            let p = (i as f64 + 0.5) / 200.0;
            let fd = (intent.at(&path, p + h) - intent.at(&path, p - h)) * (0.5 / h);
            let r = intent.rate(&path, p);
            assert!((r - fd).norm() < 1e-3 * (1.0 + fd.norm()), "{p}: {r:?} vs {fd:?}");
        }
    }
}
