//! Adaptive PD joint-torque controller for the exoskeleton.

use serde::{Deserialize, Serialize};

use crate::path::soft_threshold;
use crate::types::{GaitPhase, Joint, JointPair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExoGains {
    /// Stance stiffness per joint (Nm/rad).
    pub k_st: JointPair,
    /// Swing stiffness per joint (Nm/rad).
    pub k_sw: JointPair,
    /// Baseline stiffness (Nm/rad), also the learning target scale.
    pub k0: JointPair,
    /// Damping coefficient: `B = c_cr * sqrt(K)`.
    pub c_cr: JointPair,
    pub phi_e: f64,
    /// Symmetric actuator limit (Nm).
    pub torque_limit: f64,
}

impl ExoGains {
    /// Gains starting at the baseline stiffness in both phases.
    pub fn new(k0: JointPair, c_cr: JointPair, phi_e: f64, torque_limit: f64) -> Self {
        Self {
            k_st: k0,
            k_sw: k0,
            k0,
            c_cr,
            phi_e,
            torque_limit,
        }
    }

    pub fn stiffness(&self, phase: GaitPhase) -> JointPair {
        match phase {
            GaitPhase::Stance => self.k_st,
            GaitPhase::Swing => self.k_sw,
        }
    }

    pub fn damping(&self, phase: GaitPhase) -> JointPair {
        self.stiffness(phase).zip(self.c_cr, |k, c| c * k.sqrt())
    }

    /// One learning step: `K <- phi K + (1 - phi) K0 rms`, kept nonnegative.
    pub fn update_stiffness(&mut self, phase: GaitPhase, rms_norm_err: JointPair) {
        let phi = self.phi_e;
        let target = self.k0.zip(rms_norm_err, |k0, e| k0 * e);
        let k = match phase {
            GaitPhase::Stance => &mut self.k_st,
            GaitPhase::Swing => &mut self.k_sw,
        };
        *k = k.zip(target, |k, t| (phi * k + (1.0 - phi) * t).max(0.0));
    }
}

/// `tau = K e + c_cr sqrt(K) e_dot`, clamped to the actuator limit.
pub fn exo_torque(
    gains: &ExoGains,
    phase: GaitPhase,
    exo_error: JointPair,
    exo_error_rate: JointPair,
) -> JointPair {
    let k = gains.stiffness(phase);
    let b = gains.damping(phase);
    let lim = gains.torque_limit;
    JointPair::new(
        k.hip * exo_error.hip + b.hip * exo_error_rate.hip,
        k.knee * exo_error.knee + b.knee * exo_error_rate.knee,
    )
    .map(|t| t.clamp(-lim, lim))
}

/// Torque of an ideal impedance actuator acting continuously on the leg
/// state, with the local path model and band radius held for the tick. Inside
/// the band the joint is left untouched.
pub fn impedance_torque(
    gains: &ExoGains,
    phase: GaitPhase,
    reference: &LocalReference,
    band: f64,
    q: JointPair,
    qdot: JointPair,
) -> JointPair {
    let err = reference.error(q).map(|e| soft_threshold(e, band));
    let rate = err.zip(reference.error_rate(qdot), |e, r| if e == 0.0 { 0.0 } else { r });
    let mut tau = exo_torque(gains, phase, err, rate);
    for j in Joint::ALL {
        if err[j] == 0.0 {
            tau[j] = 0.0;
        }
    }
    tau
}

/// Linearisation of the reference path around one projection. As the leg
/// moves, its reference point slides along the segment tangent, so only the
/// motion normal to the path changes the error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalReference {
    pub point: JointPair,
    /// Leg configuration that projected onto `point`.
    pub anchor: JointPair,
    /// Unit tangent, or zero for a fixed reference point.
    pub tangent: JointPair,
}

impl LocalReference {
    pub fn fixed(point: JointPair) -> Self {
        Self {
            point,
            anchor: point,
            tangent: JointPair::ZERO,
        }
    }

    /// `q_ref(q) - q`.
    pub fn error(&self, q: JointPair) -> JointPair {
        let slide = self.tangent.dot(q - self.anchor);
        self.point + self.tangent * slide - q
    }

    /// Time derivative of [`Self::error`].
    pub fn error_rate(&self, qdot: JointPair) -> JointPair {
        self.tangent * self.tangent.dot(qdot) - qdot
    }
}

/// Backward-difference derivative followed by a first-order low-pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFilter {
    alpha: f64,
    dt: f64,
    last: Option<JointPair>,
    rate: JointPair,
}

impl RateFilter {
    pub fn new(dt: f64, cutoff_hz: f64) -> Self {
        let tau = 1.0 / (2.0 * std::f64::consts::PI * cutoff_hz);
        Self {
            alpha: dt / (dt + tau),
            dt,
            last: None,
            rate: JointPair::ZERO,
        }
    }

    pub fn update(&mut self, value: JointPair) -> JointPair {
        let raw = match self.last {
            Some(prev) => (value - prev) * (1.0 / self.dt),
            None => JointPair::ZERO,
        };
        self.last = Some(value);
        self.rate = self.rate + (raw - self.rate) * self.alpha;
        self.rate
    }

    pub fn rate(&self) -> JointPair {
        self.rate
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gains() -> ExoGains {
        ExoGains::new(JointPair::splat(340.0), JointPair::splat(2.0), 0.95, 35.0)
    }

    #[test]
    fn torque_examples() {
        let g = gains();
        let z = exo_torque(&g, GaitPhase::Stance, JointPair::ZERO, JointPair::ZERO);
        assert_eq!(z, JointPair::ZERO);
        let t = exo_torque(&g, GaitPhase::Stance, JointPair::splat(0.05), JointPair::ZERO);
        assert!((t.hip - 17.0).abs() < 1e-12);
        let t = exo_torque(&g, GaitPhase::Swing, JointPair::ZERO, JointPair::splat(0.1));
        assert!((t.knee - 2.0 * 340f64.sqrt() * 0.1).abs() < 1e-12);
        assert!((t.knee - 3.688).abs() < 1e-3);
        let t = exo_torque(&g, GaitPhase::Swing, JointPair::new(1.0, -1.0), JointPair::ZERO);
        assert_eq!(t, JointPair::new(35.0, -35.0));
    }

    #[test]
    fn stiffness_learning() {
        let mut g = gains();
        g.update_stiffness(GaitPhase::Stance, JointPair::splat(0.5));
        assert!((g.k_st.hip - 331.5).abs() < 1e-9);
        assert_eq!(g.k_sw.hip, 340.0);

        let mut g = gains();
        for z in 1..=30 {
            g.update_stiffness(GaitPhase::Swing, JointPair::ZERO);
            assert!((g.k_sw.knee - 340.0 * 0.95f64.powi(z)).abs() < 1e-9);
        }
        for _ in 0..400 {
            g.update_stiffness(GaitPhase::Swing, JointPair::splat(1.0));
        }
        assert!((g.k_sw.knee - 340.0).abs() < 1e-6);
    }

    #[test]
    fn impedance_is_silent_inside_the_band() {
        let g = gains();
        let band = 0.1;
        let q_ref = JointPair::new(0.5, 0.3);
        let r = LocalReference::fixed(q_ref);
        let inside = impedance_torque(&g, GaitPhase::Stance, &r, band, q_ref + JointPair::splat(0.05), JointPair::splat(3.0));
        assert_eq!(inside, JointPair::ZERO);
        // 0.15 rad below the reference on the hip: 0.05 rad outside the band
        let q = JointPair::new(0.35, 0.3);
        let t = impedance_torque(&g, GaitPhase::Stance, &r, band, q, JointPair::new(-0.1, 1.0));
        assert!((t.hip - (340.0 * 0.05 + 2.0 * 340f64.sqrt() * 0.1)).abs() < 1e-9);
        assert_eq!(t.knee, 0.0);
    }

    #[test]
    fn sliding_reference_ignores_tangential_motion() {
        let tangent = JointPair::new(1.0, 1.0) * (1.0 / 2f64.sqrt());
        let r = LocalReference {
            point: JointPair::new(0.2, 0.2),
            anchor: JointPair::new(0.3, 0.1),
            tangent,
        };
        // moving along the tangent keeps the error fixed
        let e0 = r.error(r.anchor);
        let e1 = r.error(r.anchor + tangent * 0.05);
        assert!((e0 - e1).norm() < 1e-12);
        assert!(r.error_rate(tangent * 2.0).norm() < 1e-12);
        let normal = JointPair::new(1.0, -1.0);
        assert!((r.error_rate(normal) + normal).norm() < 1e-12);
    }

    #[test]
    fn rate_filter_tracks_a_ramp() {
        let mut f = RateFilter::new(0.01, 10.0);
        let mut r = JointPair::ZERO;
        for i in 0..200 {
            r = f.update(JointPair::splat(0.3 * i as f64 * 0.01));
        }
        assert!((r.hip - 0.3).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn damping_ratio_is_constant(errs in proptest::collection::vec(0.0f64..3.0, 1..50)) {
            let mut g = gains();
            for e in errs {
                g.update_stiffness(GaitPhase::Stance, JointPair::splat(e));
                let b = g.damping(GaitPhase::Stance);
                let k = g.stiffness(GaitPhase::Stance);
                prop_assert!(k.hip >= 0.0);
                if k.hip > 0.0 {
                    prop_assert!((b.hip / k.hip.sqrt() - 2.0).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn torque_is_linear_and_symmetric(e in -0.05f64..0.05, r in -0.2f64..0.2, s in -1.0f64..1.0) {
            let g = gains();
            let one = exo_torque(&g, GaitPhase::Stance, JointPair::splat(e), JointPair::splat(r));
            let scaled = exo_torque(&g, GaitPhase::Stance, JointPair::splat(s * e), JointPair::splat(s * r));
            prop_assert!((scaled.hip - s * one.hip).abs() < 1e-9);
            let neg = exo_torque(&g, GaitPhase::Stance, JointPair::splat(-10.0 * e), JointPair::ZERO);
            let pos = exo_torque(&g, GaitPhase::Stance, JointPair::splat(10.0 * e), JointPair::ZERO);
            prop_assert_eq!(neg.hip, -pos.hip);
        }
    }
}
