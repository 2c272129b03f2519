//! Synthetic isometric recordings generated by forward simulation of the
//! muscle model, for exercising the identification pipeline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::IsometricTrace;
use crate::error::Result;
use crate::fatigue::{excitation, step_activation, step_fitness, FatigueParams, MuscleState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaircaseProtocol {
    pub initial_rest: f64,
    pub bout: f64,
    pub rest: f64,
    pub first_pulse_width: f64,
    pub increment: f64,
    pub last_pulse_width: f64,
    pub stimulation_frequency: f64,
}

impl Default for StaircaseProtocol {
    fn default() -> Self {
        Self {
            initial_rest: 20.0,
            bout: 4.0,
            rest: 20.0,
            first_pulse_width: 50.0,
            increment: 50.0,
            last_pulse_width: 800.0,
            stimulation_frequency: 25.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FatigueProtocol {
    /// Rest before the continuous bout (s).
    pub lead_in: f64,
    pub fatigue_duration: f64,
    pub recovery_duration: f64,
    pub pulse_on: f64,
    pub pulse_off: f64,
    /// Stimulation pulse width; `None` uses the muscle's saturation width.
    pub pulse_width: Option<f64>,
    /// Frequency of the continuous bout (Hz).
    pub stimulation_frequency: f64,
    /// Frequency of the recovery pulses (Hz). A second frequency separates
    /// `beta` from `T_fat`, which a single frequency cannot.
    pub recovery_frequency: f64,
}

impl Default for FatigueProtocol {
    fn default() -> Self {
        Self {
            lead_in: 2.0,
            fatigue_duration: 180.0,
            recovery_duration: 120.0,
            pulse_on: 1.0,
            pulse_off: 10.0,
            pulse_width: None,
            stimulation_frequency: 25.0,
            recovery_frequency: 80.0,
        }
    }
}

/// Force `G * a * mu` of a rested muscle driven by the given pulse widths
/// and per-sample stimulation frequencies, sampled before each step.
pub fn simulate_force(
    p: &FatigueParams,
    gain: f64,
    pulse_width: &[f64],
    dt: f64,
    frequency_hz: &[f64],
) -> Result<Vec<f64>> {
    let mut s = MuscleState::rested();
    let mut out = Vec::with_capacity(pulse_width.len());
    for (&u, &f) in pulse_width.iter().zip(frequency_hz) {
        out.push(gain * s.a * s.mu);
        let fitness = step_fitness(s, f, dt, p)?;
        let active = step_activation(s, excitation(u, p), dt, p)?;
        s = MuscleState {
            mu: fitness.mu,
            ..active
        };
    }
    Ok(out)
}

fn samples(seconds: f64, dt: f64) -> usize {
    (seconds / dt).round() as usize
}

fn build(p: &FatigueParams, gain: f64, pulse_width: Vec<f64>, dt: f64, freq: &[f64]) -> Result<IsometricTrace> {
    let force = simulate_force(p, gain, &pulse_width, dt, freq)?;
    let time = (0..pulse_width.len()).map(|i| i as f64 * dt).collect();
    Ok(IsometricTrace {
        time,
        pulse_width,
        force,
    })
}

pub fn staircase_trace(p: &FatigueParams, gain: f64, proto: &StaircaseProtocol, dt: f64) -> Result<IsometricTrace> {
    let mut pw = vec![0.0; samples(proto.initial_rest, dt)];
    let steps = ((proto.last_pulse_width - proto.first_pulse_width) / proto.increment).round() as usize;
    for k in 0..=steps {
        let u = proto.first_pulse_width + k as f64 * proto.increment;
        pw.extend(std::iter::repeat_n(u, samples(proto.bout, dt)));
        pw.extend(std::iter::repeat_n(0.0, samples(proto.rest, dt)));
    }
    let freq = vec![proto.stimulation_frequency; pw.len()];
    build(p, gain, pw, dt, &freq)
}

pub fn fatigue_protocol_trace(
    p: &FatigueParams,
    gain: f64,
    proto: &FatigueProtocol,
    dt: f64,
) -> Result<IsometricTrace> {
    let u = proto.pulse_width.unwrap_or(p.u_sat);
    let mut pw = vec![0.0; samples(proto.lead_in, dt)];
    pw.extend(std::iter::repeat_n(u, samples(proto.fatigue_duration, dt)));
    let mut freq = vec![proto.stimulation_frequency; pw.len()];
    let period = proto.pulse_on + proto.pulse_off;
    let n = samples(proto.recovery_duration, dt);
    pw.extend((0..n).map(|i| {
        let t = (i as f64 * dt) % period;
        if t >= proto.pulse_off - 1e-9 {
            u
        } else {
            0.0
        }
    }));
    freq.resize(pw.len(), proto.recovery_frequency);
    build(p, gain, pw, dt, &freq)
}

/// Staircase followed by the fatigue test, with the muscle rested in
/// between. Time runs continuously across both parts.
pub fn session_trace(
    p: &FatigueParams,
    gain: f64,
    staircase: &StaircaseProtocol,
    fatigue: &FatigueProtocol,
    dt: f64,
) -> Result<IsometricTrace> {
    let mut first = staircase_trace(p, gain, staircase, dt)?;
    let second = fatigue_protocol_trace(p, gain, fatigue, dt)?;
    let offset = first.len() as f64 * dt;
    first.time.extend(second.time.iter().map(|t| t + offset));
    first.pulse_width.extend(second.pulse_width);
    first.force.extend(second.force);
    Ok(first)
}

/// Multiplicative Gaussian measurement noise with relative standard
/// deviation `relative`, clipped at zero force.
pub fn with_noise(trace: &IsometricTrace, relative: f64, seed: u64) -> IsometricTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let force = trace
        .force
        .iter()
        .map(|f| (f * (1.0 + relative * rng.sample::<f64, _>(StandardNormal))).max(0.0))
        .collect();
    IsometricTrace {
        force,
        ..trace.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fatigue_protocol_layout() {
        let p = FatigueParams::RIGHT_HAMSTRING;
        let t = fatigue_protocol_trace(&p, 100.0, &FatigueProtocol::default(), 0.01).unwrap();
        assert_eq!(t.len(), 30_200);
        let bouts = t.bouts();
        // one continuous bout plus ten 1 s recovery pulses
        assert_eq!(bouts.len(), 11);
        assert_eq!(bouts[0].1 - bouts[0].0, 18_000);
        assert!(bouts[1..].iter().all(|(s, e)| e - s == 100));
        // force decays during the continuous bout
        let early = t.force[bouts[0].0 + 300];
        let late = t.force[bouts[0].1 - 1];
        assert!(late < 0.8 * early, "{late} vs {early}");
    }

    #[test]
    fn noise_is_seeded() {
        let p = FatigueParams::RIGHT_HAMSTRING;
        let t = fatigue_protocol_trace(&p, 100.0, &FatigueProtocol::default(), 0.01).unwrap();
        assert_eq!(with_noise(&t, 0.02, 7), with_noise(&t, 0.02, 7));
        assert_ne!(with_noise(&t, 0.02, 7), with_noise(&t, 0.02, 8));
    }
}
