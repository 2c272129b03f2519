//! Adaptive FES controller.
//!
//! Pulse width per muscle is `u = mu * gamma * k_f * err`, where `err` is the
//! part of the banded knee/hip error the muscle can act on, `mu` its current
//! fitness and `gamma` a per-phase gain learned once per gait cycle. The
//! FES band shrinks with the mean fitness of the stimulated muscles.

use serde::{Deserialize, Serialize};

use crate::fatigue::{FatigueParams, MuscleState};
use crate::types::{Action, GaitPhase, Joint, Side};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuscleChannel {
    pub side: Side,
    pub joint: Joint,
    pub action: Action,
    pub params: FatigueParams,
    pub state: MuscleState,
}

impl MuscleChannel {
    pub fn new(side: Side, joint: Joint, action: Action, params: FatigueParams) -> Self {
        Self {
            side,
            joint,
            action,
            params,
            state: MuscleState::rested(),
        }
    }
}

/// Learned gains of one stimulated muscle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelGain {
    pub gamma_st: f64,
    pub gamma_sw: f64,
    /// Proportional gain in µs per radian.
    pub k_f: f64,
}

impl ChannelGain {
    pub fn gamma(&self, phase: GaitPhase) -> f64 {
        match phase {
            GaitPhase::Stance => self.gamma_st,
            GaitPhase::Swing => self.gamma_sw,
        }
    }

    fn gamma_mut(&mut self, phase: GaitPhase) -> &mut f64 {
        match phase {
            GaitPhase::Stance => &mut self.gamma_st,
            GaitPhase::Swing => &mut self.gamma_sw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FesGains {
    /// One entry per stimulated muscle, in channel order.
    pub channels: Vec<ChannelGain>,
    /// Initial FES band radius (rad).
    pub r_fesb0: f64,
    /// Forgetting factor of the gain update.
    pub phi_f: f64,
}

/// Proportional gain that maps an error of twice the initial FES band to
/// the full threshold-to-saturation range.
pub fn proportional_gain(p: &FatigueParams, r_fesb0: f64) -> f64 {
    (p.u_sat - p.u_thr) / (2.0 * r_fesb0)
}

impl FesGains {
    /// Gains for the given channels with every `gamma` starting at `gamma0`.
    pub fn new(channels: &[MuscleChannel], r_fesb0: f64, phi_f: f64, gamma0: &[f64]) -> Self {
        assert_eq!(channels.len(), gamma0.len(), "one initial gamma per channel");
        let channels = channels
            .iter()
            .zip(gamma0)
            .map(|(ch, &g)| ChannelGain {
                gamma_st: g.clamp(0.0, 1.0),
                gamma_sw: g.clamp(0.0, 1.0),
                k_f: proportional_gain(&ch.params, r_fesb0),
            })
            .collect();
        Self {
            channels,
            r_fesb0,
            phi_f,
        }
    }

    /// One learning step for `phase`:
    /// `gamma <- phi gamma + (1 - phi) rms`, clamped to `[0, 1]`.
    pub fn update_gamma(&mut self, phase: GaitPhase, rms_norm_err: &[f64]) {
        assert_eq!(rms_norm_err.len(), self.channels.len());
        let phi = self.phi_f;
        for (gain, &rms) in self.channels.iter_mut().zip(rms_norm_err) {
            let g = gain.gamma_mut(phase);
            *g = (phi * *g + (1.0 - phi) * rms).clamp(0.0, 1.0);
        }
    }
}

/// Magnitude of the dead-band error a muscle can correct. The error is
/// `q_ref - q_act`, so a positive error (joint should flex further) engages
/// the flexor and a negative one the extensor.
pub fn muscle_error(fes_error: f64, action: Action) -> f64 {
    match action {
        Action::Flexor => fes_error.max(0.0),
        Action::Extensor => (-fes_error).max(0.0),
    }
}

/// Commanded pulse width (µs), clamped to `[0, u_sat]`. Widths below the
/// threshold are still commanded; the excitation map zeroes them.
pub fn stimulation(channel: &MuscleChannel, gain: &ChannelGain, phase: GaitPhase, err: f64) -> f64 {
    let u = channel.state.mu * gain.gamma(phase) * gain.k_f * err;
    u.clamp(0.0, channel.params.u_sat)
}

/// Current FES band radius: the initial radius scaled by the mean fitness of
/// the stimulated muscles, never narrower than the dead band.
pub fn fes_band_radius<'a>(
    r_fesb0: f64,
    r_db: f64,
    states: impl IntoIterator<Item = &'a MuscleState>,
) -> f64 {
    let (sum, n) = states
        .into_iter()
        .fold((0.0, 0usize), |(s, n), st| (s + st.mu, n + 1));
    if n == 0 {
        return r_fesb0.max(r_db);
    }
    (r_fesb0 * sum / n as f64).max(r_db)
}
