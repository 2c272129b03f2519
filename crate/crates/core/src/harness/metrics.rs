use serde::Serialize;

use super::config::{ScenarioConfig, Variant};
use crate::fes::MuscleChannel;
use crate::plant::BehaviorLabel;
use crate::types::{Joint, JointPair, Side};

/// Per-leg statistics of one counted gait cycle, with controller snapshots
/// taken after the end-of-cycle updates.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleMetrics {
    pub side: Side,
    /// 1-based counted cycle.
    pub cycle: u64,
    pub behavior: BehaviorLabel,
    pub ticks: usize,
    /// RMS raw tracking error (rad).
    pub rms_err: JointPair,
    /// RMS exoskeleton torque (Nm).
    pub rms_exo_torque: JointPair,
    /// RMS commanded pulse width per channel (µs).
    pub rms_pulse_width: Vec<f64>,
    /// Mean fitness per channel over the cycle.
    pub mean_fitness: Vec<f64>,
    pub gamma_st: Vec<f64>,
    pub gamma_sw: Vec<f64>,
    pub k_st: JointPair,
    pub k_sw: JointPair,
    /// FES band radius (rad).
    pub r_fesb: f64,
}

/// Whole-run aggregates over the counted cycles of both legs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub variant: Variant,
    pub n_cycles: u64,
    /// Counted cycles completed by the slower leg.
    pub cycles_completed: u64,
    pub duration_s: f64,
    /// RMS over ticks, legs and joints of the raw tracking error (deg).
    pub rms_error_deg: f64,
    /// RMS over ticks, legs and joints of the exoskeleton torque (Nm).
    pub rms_exo_torque_nm: f64,
    /// RMS over ticks, legs and channels of the commanded pulse width (µs).
    pub rms_pulse_width_us: f64,
    /// One minus the mean knee-muscle fitness.
    pub mean_knee_fatigue: f64,
    /// Ticks at which the exoskeleton acted inside the FES band, or the band
    /// fell inside the dead band.
    pub hierarchy_violations: u64,
}

#[derive(Debug, Clone)]
pub(crate) struct RunTotals {
    err_sq: f64,
    torque_sq: f64,
    pw_sq: f64,
    knee_mu: f64,
    knee_samples: u64,
    ticks: u64,
    channels: usize,
    pub(crate) hierarchy_violations: u64,
}

impl RunTotals {
    pub(crate) fn new(channels: usize) -> Self {
        Self {
            err_sq: 0.0,
            torque_sq: 0.0,
            pw_sq: 0.0,
            knee_mu: 0.0,
            knee_samples: 0,
            ticks: 0,
            channels,
            hierarchy_violations: 0,
        }
    }

    pub(crate) fn add(&mut self, err: &JointPair, torque: &JointPair, pulse_width: &[f64], channels: &[MuscleChannel]) {
        self.err_sq += err.dot(*err);
        self.torque_sq += torque.dot(*torque);
        self.pw_sq += pulse_width.iter().map(|u| u * u).sum::<f64>();
        for ch in channels.iter().filter(|c| c.joint == Joint::Knee) {
            self.knee_mu += ch.state.mu;
            self.knee_samples += 1;
        }
        self.ticks += 1;
    }

    pub(crate) fn summary(&self, cfg: &ScenarioConfig, duration: f64, metrics: &[CycleMetrics]) -> Summary {
        let ticks = self.ticks.max(1) as f64;
        let per_side = |s: Side| metrics.iter().filter(|m| m.side == s).count() as u64;
        Summary {
            variant: cfg.variant,
            n_cycles: cfg.n_cycles,
            cycles_completed: Side::ALL.into_iter().map(per_side).min().unwrap_or(0),
            duration_s: duration,
            rms_error_deg: (self.err_sq / (2.0 * ticks)).sqrt().to_degrees(),
            rms_exo_torque_nm: (self.torque_sq / (2.0 * ticks)).sqrt(),
            rms_pulse_width_us: if self.channels == 0 {
                0.0
            } else {
                (self.pw_sq / (self.channels as f64 * ticks)).sqrt()
            },
            mean_knee_fatigue: if self.knee_samples == 0 {
                0.0
            } else {
                1.0 - self.knee_mu / self.knee_samples as f64
            },
            hierarchy_violations: self.hierarchy_violations,
        }
    }
}

/// Mean of `f` over the metrics of counted cycles in `from..=to`, both legs.
pub fn mean_over_cycles(metrics: &[CycleMetrics], from: u64, to: u64, f: impl Fn(&CycleMetrics) -> f64) -> f64 {
    let (sum, n) = metrics
        .iter()
        .filter(|m| (from..=to).contains(&m.cycle))
        .fold((0.0, 0usize), |(s, n), m| (s + f(m), n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}
