//! Muscle excitation, activation dynamics and the fitness/recovery model.
//!
//! Pulse width maps to a normalised excitation `e` through a threshold and a
//! saturation. Activation follows `k1 a'' + k2 a' + a = e` with
//! `k1 = T_e T`, `k2 = T_e + T`, where `T` is the rise or fall constant
//! depending on whether excitation is above the current activation. Since
//! the characteristic polynomial factors as `(T_e s + 1)(T s + 1)`, each tick
//! is integrated exactly under a zero-order hold on `e`. Fitness `mu`
//! decays towards `mu_min` under effective activation `a_f = a mu` and
//! recovers towards 1 otherwise; it is integrated with classic RK4.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Action, Side};

/// Largest tick accepted by the steppers, in seconds.
pub const MAX_STEP: f64 = 0.05;

/// Time constants below this are treated as zero.
const TINY_TIME: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FatigueParams {
    /// Threshold pulse width (µs).
    pub u_thr: f64,
    /// Saturation pulse width (µs).
    pub u_sat: f64,
    pub t_fat: f64,
    pub t_rec: f64,
    pub t_rise: f64,
    pub t_fall: f64,
    pub t_e: f64,
    pub mu_min: f64,
    pub beta: f64,
}

impl FatigueParams {
    pub const RIGHT_QUADRICEPS: FatigueParams = FatigueParams {
        u_thr: 100.0,
        u_sat: 700.0,
        t_fat: 57.01,
        t_rec: 59.87,
        t_rise: 0.2071,
        t_fall: 0.1370,
        t_e: 0.0,
        mu_min: 0.07,
        beta: 0.0747,
    };

    pub const RIGHT_HAMSTRING: FatigueParams = FatigueParams {
        u_thr: 250.0,
        u_sat: 600.0,
        t_fat: 64.34,
        t_rec: 65.27,
        t_rise: 0.2440,
        t_fall: 0.0829,
        t_e: 0.06,
        mu_min: 0.13,
        beta: 0.1493,
    };

    pub const LEFT_QUADRICEPS: FatigueParams = FatigueParams {
        u_thr: 200.0,
        u_sat: 600.0,
        t_fat: 36.05,
        t_rec: 69.56,
        t_rise: 0.1428,
        t_fall: 0.2533,
        t_e: 0.0,
        mu_min: 0.17,
        beta: 0.2453,
    };

    pub const LEFT_HAMSTRING: FatigueParams = FatigueParams {
        u_thr: 250.0,
        u_sat: 550.0,
        t_fat: 44.58,
        t_rec: 105.19,
        t_rise: 0.1963,
        t_fall: 0.1797,
        t_e: 0.002,
        mu_min: 0.14,
        beta: 0.2347,
    };

    /// Identified knee-muscle parameters for one side. Quadriceps extend the
    /// knee, hamstrings flex it.
    pub fn knee_muscle(side: Side, action: Action) -> Self {
        match (side, action) {
            (Side::Right, Action::Extensor) => Self::RIGHT_QUADRICEPS,
            (Side::Right, Action::Flexor) => Self::RIGHT_HAMSTRING,
            (Side::Left, Action::Extensor) => Self::LEFT_QUADRICEPS,
            (Side::Left, Action::Flexor) => Self::LEFT_HAMSTRING,
        }
    }

    /// All four identified rows with their labels.
    pub fn table() -> [(&'static str, FatigueParams); 4] {
        [
            ("right_quadriceps", Self::RIGHT_QUADRICEPS),
            ("right_hamstring", Self::RIGHT_HAMSTRING),
            ("left_quadriceps", Self::LEFT_QUADRICEPS),
            ("left_hamstring", Self::LEFT_HAMSTRING),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("{what}: {self:?}")));
        let all = [
            self.u_thr, self.u_sat, self.t_fat, self.t_rec, self.t_rise, self.t_fall, self.t_e,
            self.mu_min, self.beta,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("non-finite fatigue parameter");
        }
        if !(self.u_thr > 0.0 && self.u_sat > self.u_thr) {
            return bad("need u_sat > u_thr > 0");
        }
        if !(self.t_fat > 0.0 && self.t_rec > 0.0) {
            return bad("T_fat and T_rec must be positive");
        }
        if self.t_rise < 0.0 || self.t_fall < 0.0 || self.t_e < 0.0 {
            return bad("time constants must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.mu_min) {
            return bad("mu_min must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad("beta must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuscleState {
    /// Fitness, 1 for a rested muscle.
    pub mu: f64,
    pub a: f64,
    pub a_dot: f64,
    /// Excitation applied on the last step.
    pub e: f64,
}

impl Default for MuscleState {
    fn default() -> Self {
        Self::rested()
    }
}

impl MuscleState {
    pub fn rested() -> Self {
        Self {
            mu: 1.0,
            a: 0.0,
            a_dot: 0.0,
            e: 0.0,
        }
    }

    /// Fatigue-scaled activation `a * mu`.
    pub fn effective_activation(&self) -> f64 {
        self.a * self.mu
    }
}

/// Normalised excitation for a pulse width: zero below threshold, linear up
/// to saturation, one above.
pub fn excitation(u_f: f64, p: &FatigueParams) -> f64 {
    if u_f <= p.u_thr {
        0.0
    } else if u_f >= p.u_sat {
        1.0
    } else {
        (u_f - p.u_thr) / (p.u_sat - p.u_thr)
    }
}

/// Frequency factor `rho(f) = 1 - beta + beta (f/100)^2`, defined below 100 Hz.
pub fn frequency_factor(frequency_hz: f64, beta: f64) -> Result<f64> {
    if !(0.0..100.0).contains(&frequency_hz) {
        return Err(Error::FrequencyOutOfRange(frequency_hz));
    }
    let r = frequency_hz / 100.0;
    Ok(1.0 - beta + beta * r * r)
}

fn check_step(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt <= MAX_STEP) {
        return Err(Error::InvalidParameter(format!(
            "time step {dt} s outside (0, {MAX_STEP}]"
        )));
    }
    Ok(())
}

/// Right-hand side of the fitness ODE for a given drive `rho * a_f`.
pub fn fitness_rate(mu: f64, drive: f64, p: &FatigueParams) -> f64 {
    (p.mu_min - mu) * drive / p.t_fat + (1.0 - mu) * (1.0 - drive) / p.t_rec
}

/// One RK4 step of the fitness ODE with the drive held over the step. The
/// result is not clamped.
pub fn fitness_rk4(mu: f64, drive: f64, dt: f64, p: &FatigueParams) -> f64 {
    // The rate is affine in mu, `c - k mu`, so the four stages collapse to a
    // Taylor polynomial in `x = k dt`.
    // reciprocals keep the divisions off the step-to-step dependency chain
    let (fat, rec) = (drive * (1.0 / p.t_fat), (1.0 - drive) * (1.0 / p.t_rec));
    let k = fat + rec;
    let x = k * dt;
    let poly = 1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0;
    mu + (p.mu_min * fat + rec - k * mu) * dt * poly
}

/// Advances fitness one step under a given drive `rho * a_f`, clamped to
/// `[mu_min, 1]`.
pub fn step_fitness_with_drive(mu: f64, drive: f64, dt: f64, p: &FatigueParams) -> Result<f64> {
    check_step(dt)?;
    Ok(fitness_rk4(mu, drive, dt, p).clamp(p.mu_min, 1.0))
}

/// Advances fitness one step at stimulation frequency `frequency_hz`, using
/// `a_f = a mu` from the start of the step.
pub fn step_fitness(
    state: MuscleState,
    frequency_hz: f64,
    dt: f64,
    p: &FatigueParams,
) -> Result<MuscleState> {
    let rho = frequency_factor(frequency_hz, p.beta)?;
    let drive = rho * state.effective_activation();
    let mu = step_fitness_with_drive(state.mu, drive, dt, p)?;
    Ok(MuscleState { mu, ..state })
}

/// Exact propagation matrix of the activation ODE over one step for a fixed
/// choice of `T`. Maps `(a - e, a_dot)` at the start of the step to the same
/// quantities at its end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagPropagator {
    aa: f64,
    av: f64,
    va: f64,
    vv: f64,
}

impl LagPropagator {
    pub fn new(t: f64, t_e: f64, dt: f64) -> Self {
        let (fast, slow) = if t <= t_e { (t, t_e) } else { (t_e, t) };
        if slow < TINY_TIME {
            // both lags vanish: activation follows excitation instantly
            return Self {
                aa: 0.0,
                av: 0.0,
                va: 0.0,
                vv: 0.0,
            };
        }
        if fast < TINY_TIME {
            let decay = (-dt / slow).exp();
            return Self {
                aa: decay,
                av: 0.0,
                va: -decay / slow,
                vv: 0.0,
            };
        }
        if slow - fast < 1e-6 * slow {
            let tau = 0.5 * (slow + fast);
            let decay = (-dt / tau).exp();
            let s = dt / tau;
            return Self {
                aa: (1.0 + s) * decay,
                av: dt * decay,
                va: -s / tau * decay,
                vv: (1.0 - s) * decay,
            };
        }
        let (t1, t2) = (slow, fast);
        let e1 = (-dt / t1).exp();
        let e2 = (-dt / t2).exp();
        let span = t1 - t2;
        let mix = e2 / t2 - e1 / t1;
        Self {
            aa: t1 * (e1 - e2) / span + e2,
            av: t1 * t2 * (e1 - e2) / span,
            va: t1 * mix / span - e2 / t2,
            vv: t1 * t2 * mix / span,
        }
    }

    fn apply(&self, a: f64, a_dot: f64, e: f64) -> (f64, f64) {
        let d = a - e;
        (e + self.aa * d + self.av * a_dot, self.va * d + self.vv * a_dot)
    }
}

/// Precomputed rise and fall propagators for a fixed tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationKernel {
    rise: LagPropagator,
    fall: LagPropagator,
}

impl ActivationKernel {
    pub fn new(p: &FatigueParams, dt: f64) -> Result<Self> {
        check_step(dt)?;
        Ok(Self {
            rise: LagPropagator::new(p.t_rise, p.t_e, dt),
            fall: LagPropagator::new(p.t_fall, p.t_e, dt),
        })
    }

    /// Advances activation one step under excitation `e`. The rise/fall
    /// choice is made once from the state at the start of the step.
    pub fn step(&self, state: MuscleState, e: f64) -> MuscleState {
        let lag = if e > state.a { &self.rise } else { &self.fall };
        let (a, mut a_dot) = lag.apply(state.a, state.a_dot, e);
        let clamped = a.clamp(0.0, 1.0);
        if clamped != a {
            a_dot = 0.0;
        }
        MuscleState {
            a: clamped,
            a_dot,
            e,
            ..state
        }
    }
}

/// Advances the activation dynamics one step under excitation `e`.
pub fn step_activation(state: MuscleState, e: f64, dt: f64, p: &FatigueParams) -> Result<MuscleState> {
    Ok(ActivationKernel::new(p, dt)?.step(state, e))
}
