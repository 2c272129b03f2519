//! Stance/swing state machine driven by the path phase of the projected
//! reference point.
//!
//! The phase signal is unwrapped internally, so small backward jitter around
//! the end of a cycle neither re-counts a cycle nor re-opens a finished
//! phase. A stance-to-swing switch needs the classifier to agree for
//! `hysteresis_ticks` consecutive ticks; swing only ends when the cycle
//! wraps. Every cycle therefore closes exactly one stance and one swing.

use serde::{Deserialize, Serialize};

use crate::types::GaitPhase;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaitConfig {
    /// Fraction of the cycle classified as stance.
    pub stance_fraction: f64,
    pub hysteresis_ticks: usize,
}

impl Default for GaitConfig {
    fn default() -> Self {
        Self {
            stance_fraction: 0.6,
            hysteresis_ticks: 3,
        }
    }
}

pub fn classify_phase(path_phase: f64, stance_fraction: f64) -> GaitPhase {
    if path_phase < stance_fraction {
        GaitPhase::Stance
    } else {
        GaitPhase::Swing
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GaitEvent {
    /// A phase closed. `rms` holds one value per channel, or `None` when the
    /// phase received no samples.
    PhaseEnded {
        phase: GaitPhase,
        rms: Option<Vec<f64>>,
    },
    /// Cycle `cycle` (1-based count of completed cycles) finished.
    CycleEnded { cycle: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseAccumulator {
    config: GaitConfig,
    phase: GaitPhase,
    sum_sq: Vec<f64>,
    n_samples: usize,
    cycle_index: u64,
    progress: f64,
    last_phase: f64,
    disagree: usize,
}

impl PhaseAccumulator {
    pub fn new(channels: usize, config: GaitConfig, initial_phase: f64) -> Self {
        let initial_phase = initial_phase.rem_euclid(1.0);
        Self {
            config,
            phase: classify_phase(initial_phase, config.stance_fraction),
            sum_sq: vec![0.0; channels],
            n_samples: 0,
            cycle_index: 0,
            progress: initial_phase,
            last_phase: initial_phase,
            disagree: 0,
        }
    }

    pub fn phase(&self) -> GaitPhase {
        self.phase
    }

    /// Completed cycles so far.
    pub fn cycle_index(&self) -> u64 {
        self.cycle_index
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Root mean square per channel of the samples in the open phase.
    pub fn rms(&self) -> Option<Vec<f64>> {
        (self.n_samples > 0).then(|| {
            let n = self.n_samples as f64;
            self.sum_sq.iter().map(|s| (s / n).sqrt()).collect()
        })
    }

    fn close(&mut self, events: &mut Vec<GaitEvent>) {
        events.push(GaitEvent::PhaseEnded {
            phase: self.phase,
            rms: self.rms(),
        });
        self.sum_sq.iter_mut().for_each(|s| *s = 0.0);
        self.n_samples = 0;
        self.disagree = 0;
    }

    /// Feeds one tick. `errs` holds one normalised error per channel; the
    /// sample is attributed to the phase that is open after any transition
    /// this tick triggers.
    pub fn on_tick(&mut self, path_phase: f64, errs: &[f64]) -> Vec<GaitEvent> {
        assert_eq!(errs.len(), self.sum_sq.len(), "one error per channel");
        let mut events = Vec::new();
        let mut delta = path_phase - self.last_phase;
        if delta < -0.5 {
            delta += 1.0;
        } else if delta > 0.5 {
            delta -= 1.0;
        }
        self.progress += delta;
        self.last_phase = path_phase;

        if self.progress >= (self.cycle_index + 1) as f64 {
            if self.phase == GaitPhase::Stance {
                self.close(&mut events);
                self.phase = GaitPhase::Swing;
            }
            self.close(&mut events);
            self.cycle_index += 1;
            events.push(GaitEvent::CycleEnded {
                cycle: self.cycle_index,
            });
            self.phase = GaitPhase::Stance;
        } else if self.phase == GaitPhase::Stance {
            let within = self.progress - self.cycle_index as f64;
            if classify_phase(within.max(0.0), self.config.stance_fraction) == GaitPhase::Swing {
                self.disagree += 1;
                if self.disagree >= self.config.hysteresis_ticks {
                    self.close(&mut events);
                    self.phase = GaitPhase::Swing;
                }
            } else {
                self.disagree = 0;
            }
        }

        for (s, e) in self.sum_sq.iter_mut().zip(errs) {
            *s += e * e;
        }
        self.n_samples += 1;
        events
    }
}
