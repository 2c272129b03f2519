//! Fatigue-model calibration from isometric force recordings.
//!
//! A session has two parts. A staircase of short bouts at increasing pulse
//! width locates the threshold and saturation pulse widths. A fatigue test
//! (continuous stimulation at saturation, then intermittent recovery
//! pulses) is then fitted with the activation/fitness model, with force
//! modelled as `F = G * a * mu`.
//!
//! At a single stimulation frequency the fitness trajectory depends on
//! `beta` and `T_fat` only through combinations that leave a one-parameter
//! family of exact fits. The recovery pulses are therefore delivered at a
//! second frequency, which pins `beta` down.

pub mod nelder_mead;
mod synth;

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fatigue::{frequency_factor, ActivationKernel, FatigueParams, MuscleState};

pub use synth::{
    fatigue_protocol_trace, session_trace, simulate_force, staircase_trace, with_noise,
    FatigueProtocol, StaircaseProtocol,
};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IsometricTrace {
    /// Sample times (s), uniformly spaced.
    pub time: Vec<f64>,
    /// Commanded pulse width (µs).
    pub pulse_width: Vec<f64>,
    /// Measured force (N).
    pub force: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRecord {
    time_s: f64,
    pulse_width_us: f64,
    force_n: f64,
}

impl IsometricTrace {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// Sample spacing (s).
    pub fn dt(&self) -> f64 {
        if self.time.len() < 2 {
            return 0.0;
        }
        (self.time[self.time.len() - 1] - self.time[0]) / (self.time.len() - 1) as f64
    }

    pub fn duration(&self) -> f64 {
        self.dt() * self.len() as f64
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.time.len();
        if n < 2 || self.pulse_width.len() != n || self.force.len() != n {
            return Err(Error::Identification("trace needs at least two complete samples".into()));
        }
        let dt = self.dt();
        if !(dt > 0.0) {
            return Err(Error::Identification("trace time must increase".into()));
        }
        for w in self.time.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt.max(1.0) {
                return Err(Error::Identification(format!("non-uniform sampling near t = {}", w[0])));
            }
        }
        if self.force.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            return Err(Error::Identification("force must be finite and nonnegative".into()));
        }
        if self.pulse_width.iter().any(|u| !(u.is_finite() && *u >= 0.0)) {
            return Err(Error::Identification("pulse width must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// Samples `[start, end)`, re-timed to start at zero.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        let t0 = self.time.get(start).copied().unwrap_or(0.0);
        Self {
            time: self.time[start..end].iter().map(|t| t - t0).collect(),
            pulse_width: self.pulse_width[start..end].to_vec(),
            force: self.force[start..end].to_vec(),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_reader(std::fs::File::open(path)?, path)
    }

    pub fn from_reader(reader: impl Read, origin: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut trace = Self::default();
        for rec in rdr.deserialize::<TraceRecord>() {
            let rec = rec.map_err(|e| Error::Format {
                kind: "trace",
                path: origin.to_path_buf(),
                reason: e.to_string(),
            })?;
            trace.time.push(rec.time_s);
            trace.pulse_width.push(rec.pulse_width_us);
            trace.force.push(rec.force_n);
        }
        trace.validate()?;
        Ok(trace)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time_s", "pulse_width_us", "force_n"])?;
        for i in 0..self.len() {
            w.write_record([
                format!("{:.4}", self.time[i]),
                format!("{}", self.pulse_width[i]),
                format!("{:.6}", self.force[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Contiguous runs of nonzero stimulation as `(start, end)` sample ranges.
    pub fn bouts(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = None;
        for (i, &u) in self.pulse_width.iter().enumerate() {
            match (u > 0.0, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    out.push((s, i));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push((s, self.pulse_width.len()));
        }
        out
    }
}

/// Splits a full session at the first bout lasting at least ten seconds,
/// which marks the start of the fatigue test. The fatigue part keeps
/// `lead_in` seconds of rest before that bout.
pub fn split_session(trace: &IsometricTrace, lead_in: f64) -> Result<(IsometricTrace, IsometricTrace)> {
    trace.validate()?;
    let dt = trace.dt();
    let long = (10.0 / dt).round() as usize;
    let (start, _) = trace
        .bouts()
        .into_iter()
        .find(|(s, e)| e - s >= long)
        .ok_or_else(|| Error::Identification("no sustained fatigue bout in the session".into()))?;
    let cut = start.saturating_sub((lead_in / dt).round() as usize);
    Ok((trace.slice(0, cut), trace.slice(cut, trace.len())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    pub u_thr: f64,
    pub u_sat: f64,
    /// False when force still grew at the last tested pulse width.
    pub saturation_reached: bool,
}

/// Threshold and saturation pulse widths from a staircase recording.
///
/// The plateau of each bout is the mean force over its last second. The
/// noise floor is estimated from the rest period before the first bout.
pub fn detect_thresholds(staircase: &IsometricTrace, increment: f64) -> Result<ThresholdEstimate> {
    staircase.validate()?;
    let dt = staircase.dt();
    let bouts = staircase.bouts();
    let Some(&(first, _)) = bouts.first() else {
        return Err(Error::Identification("staircase contains no stimulation".into()));
    };
    if first < 2 {
        return Err(Error::Identification("staircase must start with a rest period".into()));
    }
    let rest = &staircase.force[..first];
    let mean = rest.iter().sum::<f64>() / rest.len() as f64;
    let sigma = (rest.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / rest.len() as f64).sqrt();
    let floor = mean + 3.0 * sigma;

    let tail = ((1.0 / dt).round() as usize).max(1);
    let plateaus: Vec<(f64, f64)> = bouts
        .iter()
        .map(|&(s, e)| {
            let from = e.saturating_sub(tail).max(s);
            let f = &staircase.force[from..e];
            (staircase.pulse_width[s], f.iter().sum::<f64>() / f.len() as f64)
        })
        .collect();
    for w in plateaus.windows(2) {
        if ((w[1].0 - w[0].0) - increment).abs() > 1e-6 {
            return Err(Error::Identification(format!(
                "bouts at {} and {} µs are not {increment} µs apart",
                w[0].0, w[1].0
            )));
        }
    }

    let thr_idx = plateaus
        .iter()
        .position(|&(_, f)| f > floor)
        .ok_or_else(|| Error::Identification("no bout exceeds the noise floor".into()))?;
    let last = plateaus.len() - 1;
    let mut sat_idx = last;
    for i in (thr_idx..last).rev() {
        if plateaus[i + 1].1 < 1.05 * plateaus[i].1 {
            sat_idx = i;
        } else {
            break;
        }
    }
    Ok(ThresholdEstimate {
        u_thr: plateaus[thr_idx].0,
        u_sat: plateaus[sat_idx].0,
        saturation_reached: sat_idx < last,
    })
}

/// Search box of the fatigue fit.
pub mod bounds {
    pub const TIME: (f64, f64) = (0.01, 600.0);
    pub const T_E: (f64, f64) = (0.0, 0.5);
    pub const MU_MIN: (f64, f64) = (0.0, 0.5);
    pub const BETA: (f64, f64) = (0.0, 1.0);
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scale {
    /// Logistic in log space.
    Log(f64, f64),
    Linear(f64, f64),
}

impl Scale {
    fn to_bounded(self, z: f64) -> f64 {
        let s = 1.0 / (1.0 + (-z).exp());
        match self {
            Scale::Log(lo, hi) => (lo.ln() + (hi.ln() - lo.ln()) * s).exp().clamp(lo, hi),
            Scale::Linear(lo, hi) => (lo + (hi - lo) * s).clamp(lo, hi),
        }
    }

    fn to_free(self, x: f64) -> f64 {
        let s = match self {
            Scale::Log(lo, hi) => (x.clamp(lo, hi).ln() - lo.ln()) / (hi.ln() - lo.ln()),
            Scale::Linear(lo, hi) => (x.clamp(lo, hi) - lo) / (hi - lo),
        };
        let s = s.clamp(1e-9, 1.0 - 1e-9);
        (s / (1.0 - s)).ln()
    }
}

const SCALES: [Scale; 7] = [
    Scale::Log(bounds::TIME.0, bounds::TIME.1),
    Scale::Log(bounds::TIME.0, bounds::TIME.1),
    Scale::Log(bounds::TIME.0, bounds::TIME.1),
    Scale::Log(bounds::TIME.0, bounds::TIME.1),
    Scale::Linear(bounds::T_E.0, bounds::T_E.1),
    Scale::Linear(bounds::MU_MIN.0, bounds::MU_MIN.1),
    Scale::Linear(bounds::BETA.0, bounds::BETA.1),
];

fn pack(p: &FatigueParams) -> [f64; 7] {
    let raw = [p.t_fat, p.t_rec, p.t_rise, p.t_fall, p.t_e, p.mu_min, p.beta];
    std::array::from_fn(|i| SCALES[i].to_free(raw[i]))
}

fn unpack(z: &[f64], template: &FatigueParams) -> FatigueParams {
    let v: [f64; 7] = std::array::from_fn(|i| SCALES[i].to_bounded(z[i]));
    FatigueParams {
        t_fat: v[0],
        t_rec: v[1],
        t_rise: v[2],
        t_fall: v[3],
        t_e: v[4],
        mu_min: v[5],
        beta: v[6],
        ..*template
    }
}

/// Timing and frequencies of the fatigue test. The continuous bout starts
/// at the first stimulated sample of the trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitProtocol {
    pub fatigue_duration: f64,
    pub recovery_duration: f64,
    pub pulse_on: f64,
    pub pulse_off: f64,
    pub stimulation_frequency: f64,
    pub recovery_frequency: f64,
}

impl Default for FitProtocol {
    fn default() -> Self {
        Self {
            fatigue_duration: 180.0,
            recovery_duration: 120.0,
            pulse_on: 1.0,
            pulse_off: 10.0,
            stimulation_frequency: 25.0,
            recovery_frequency: 80.0,
        }
    }
}

impl FitProtocol {
    /// Stimulation frequency at each sample of `trace`.
    pub fn frequencies(&self, trace: &IsometricTrace) -> Vec<f64> {
        let onset = trace.pulse_width.iter().position(|&u| u > 0.0).unwrap_or(0);
        let dt = trace.dt();
        let end = if dt > 0.0 {
            onset + (self.fatigue_duration / dt).round() as usize
        } else {
            trace.len()
        };
        (0..trace.len())
            .map(|i| if i < end { self.stimulation_frequency } else { self.recovery_frequency })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub starts: usize,
    pub max_iterations: usize,
    pub seed: u64,
    /// Standard deviation of the start perturbations in the unconstrained space.
    pub perturbation: f64,
    /// Simplex stopping tolerances: relative spread of residuals and vertex
    /// distance in the unconstrained space.
    pub f_tolerance: f64,
    pub x_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            starts: 5,
            max_iterations: 3000,
            seed: 0,
            perturbation: 0.5,
            f_tolerance: 1e-10,
            x_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: FatigueParams,
    /// Fitted force gain `G` (N per unit effective activation).
    pub force_gain: f64,
    /// RMS force error (N).
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Unit-gain model force `a * mu` for the commanded pulse widths of a trace,
/// with the stimulation frequency given per sample.
pub fn model_activation(trace: &IsometricTrace, p: &FatigueParams, frequency_hz: &[f64]) -> Result<Vec<f64>> {
    let dt = trace.dt();
    let kernel = ActivationKernel::new(p, dt)?;
    let mut s = MuscleState::rested();
    let mut out = Vec::with_capacity(trace.len());
    let mut cached = (f64::NAN, 0.0);
    for (&u, &f) in trace.pulse_width.iter().zip(frequency_hz) {
        if f != cached.0 {
            cached = (f, frequency_factor(f, p.beta)?);
        }
        let rho = cached.1;
        out.push(s.effective_activation());
        let e = crate::fatigue::excitation(u, p);
        let mu = crate::fatigue::fitness_rk4(s.mu, rho * s.effective_activation(), dt, p).clamp(p.mu_min, 1.0);
        s = MuscleState { mu, ..kernel.step(s, e) };
    }
    Ok(out)
}

/// Least-squares gain and RMS residual of `G * model` against `force`.
pub fn gain_and_residual(model: &[f64], force: &[f64]) -> (f64, f64) {
    let mm: f64 = model.iter().map(|m| m * m).sum();
    let mf: f64 = model.iter().zip(force).map(|(m, f)| m * f).sum();
    let gain = if mm > 0.0 { (mf / mm).max(0.0) } else { 0.0 };
    let sse: f64 = model.iter().zip(force).map(|(m, f)| (f - gain * m).powi(2)).sum();
    (gain, (sse / force.len() as f64).sqrt())
}

/// Fits the fatigue and activation time constants, `mu_min` and `beta` to a
/// fatigue-test trace. Threshold and saturation are taken from `seed`. The
/// muscle is assumed rested at the first sample.
pub fn fit_fatigue(
    trace: &IsometricTrace,
    protocol: &FitProtocol,
    seed: &FatigueParams,
    options: &FitOptions,
) -> Result<FitResult> {
    trace.validate()?;
    seed.validate()?;
    let needed = protocol.fatigue_duration + protocol.recovery_duration;
    if trace.duration() + 1e-9 < needed {
        return Err(Error::Identification(format!(
            "trace lasts {:.1} s, protocol needs {needed:.1} s",
            trace.duration()
        )));
    }
    frequency_factor(protocol.stimulation_frequency, seed.beta)?;
    frequency_factor(protocol.recovery_frequency, seed.beta)?;
    ActivationKernel::new(seed, trace.dt())?;
    let freq = protocol.frequencies(trace);

    let objective = |z: &[f64]| -> f64 {
        let p = unpack(z, seed);
        match model_activation(trace, &p, &freq) {
            Ok(m) => gain_and_residual(&m, &trace.force).1,
            Err(_) => f64::INFINITY,
        }
    };

    let nm = nelder_mead::NelderMeadOptions {
        max_iterations: options.max_iterations,
        f_tolerance: options.f_tolerance,
        x_tolerance: options.x_tolerance,
        ..Default::default()
    };
    let origin = pack(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut best: Option<nelder_mead::NelderMeadResult> = None;
    let mut iterations = 0;
    for k in 0..options.starts.max(1) {
        let start: Vec<f64> = if k == 0 {
            origin.to_vec()
        } else {
            origin
                .iter()
                .map(|z| z + options.perturbation * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let run = nelder_mead::minimize(objective, &start, &nm);
        iterations += run.iterations;
        if best.as_ref().is_none_or(|b| run.f < b.f) {
            best = Some(run);
        }
    }
    // polish from the best vertex with a fresh simplex
    let best = best.expect("at least one start");
    let polish = nelder_mead::minimize(
        objective,
        &best.x,
        &nelder_mead::NelderMeadOptions {
            initial_step: 0.05,
            ..nm
        },
    );
    iterations += polish.iterations;
    let (z, converged) = if polish.f <= best.f {
        (polish.x, polish.converged)
    } else {
        (best.x, best.converged)
    };

    let params = unpack(&z, seed);
    let model = model_activation(trace, &params, &freq)?;
    let (force_gain, residual) = gain_and_residual(&model, &trace.force);
    Ok(FitResult {
        params,
        force_gain,
        residual,
        iterations,
        converged,
    })
}

/// Default starting point for a fit when nothing is known about the muscle.
pub fn generic_seed(u_thr: f64, u_sat: f64) -> FatigueParams {
    FatigueParams {
        u_thr,
        u_sat,
        t_fat: 50.0,
        t_rec: 80.0,
        t_rise: 0.2,
        t_fall: 0.15,
        t_e: 0.03,
        mu_min: 0.15,
        beta: 0.15,
    }
}
