//! Planar two-joint leg surrogate.
//!
//! Each leg is a double pendulum hanging from a fixed hip: a thigh and a
//! shank+foot segment with point masses at their centres of mass. Joint
//! angles are relative (hip flexion from the vertical, knee flexion from the
//! straight leg), both positive in flexion. The shank's absolute angle is
//! `hip - knee`.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fes::MuscleChannel;
use crate::path::ReferencePath;
use crate::types::{Action, Joint, JointPair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantParams {
    pub thigh_length: f64,
    pub thigh_mass: f64,
    /// Distance from the hip to the thigh centre of mass, as a fraction of its length.
    pub thigh_com_fraction: f64,
    /// Moment of inertia of the thigh about its centre of mass (kg m²).
    pub thigh_inertia: f64,
    pub shank_length: f64,
    pub shank_mass: f64,
    pub shank_com_fraction: f64,
    pub shank_inertia: f64,
    pub gravity: f64,
    /// Viscous friction per joint (Nm s/rad).
    pub friction: f64,
    pub hip_limits_deg: [f64; 2],
    pub knee_limits_deg: [f64; 2],
    pub enforce_limits: bool,
    /// Holds the knee at its current angle, turning the leg into a single pendulum.
    pub lock_knee: bool,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            thigh_length: 0.42,
            thigh_mass: 8.1,
            thigh_com_fraction: 0.433,
            thigh_inertia: 0.0,
            shank_length: 0.46,
            shank_mass: 4.8,
            shank_com_fraction: 0.606,
            shank_inertia: 0.0,
            gravity: 9.81,
            friction: 0.5,
            hip_limits_deg: [-30.0, 120.0],
            knee_limits_deg: [0.0, 140.0],
            enforce_limits: true,
            lock_knee: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LegState {
    /// Joint angles (rad).
    pub q: JointPair,
    /// Joint velocities (rad/s).
    pub qdot: JointPair,
}

impl LegState {
    pub fn at_rest(q: JointPair) -> Self {
        Self {
            q,
            qdot: JointPair::ZERO,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.is_finite() && self.qdot.is_finite()
    }
}

/// Torque sources acting on one leg during a tick (Nm per joint).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointTorques {
    pub voluntary: JointPair,
    pub fes: JointPair,
    pub exo: JointPair,
}

impl JointTorques {
    pub fn total(&self) -> JointPair {
        self.voluntary + self.fes + self.exo
    }
}

struct MassMatrix {
    m11: f64,
    m12: f64,
    m22: f64,
}

impl PlantParams {
    fn c1(&self) -> f64 {
        self.thigh_com_fraction * self.thigh_length
    }

    fn c2(&self) -> f64 {
        self.shank_com_fraction * self.shank_length
    }

    fn mass_matrix(&self, knee: f64) -> MassMatrix {
        let (m1, m2, l1, c1, c2) = (self.thigh_mass, self.shank_mass, self.thigh_length, self.c1(), self.c2());
        MassMatrix {
            m11: m1 * c1 * c1 + self.thigh_inertia + m2 * l1 * l1,
            m12: m2 * l1 * c2 * knee.cos(),
            m22: m2 * c2 * c2 + self.shank_inertia,
        }
    }

    /// Inertia seen by each joint at the given knee angle: the whole leg
    /// rotating rigidly about the hip, and the shank about the knee.
    pub fn joint_inertia(&self, knee: f64) -> JointPair {
        let m = self.mass_matrix(knee);
        JointPair::new(m.m11 + 2.0 * m.m12 + m.m22, m.m22)
    }

    /// Gravity and velocity-product terms in absolute segment coordinates.
    fn bias(&self, q: JointPair, qdot: JointPair) -> (f64, f64) {
        let (phi1, phi2) = (q.hip, q.hip - q.knee);
        let (w1, w2) = (qdot.hip, qdot.hip - qdot.knee);
        let (m1, m2, l1, c1, c2, g) = (self.thigh_mass, self.shank_mass, self.thigh_length, self.c1(), self.c2(), self.gravity);
        let s12 = (phi1 - phi2).sin();
        let h1 = m2 * l1 * c2 * s12 * w2 * w2 + (m1 * c1 + m2 * l1) * g * phi1.sin();
        let h2 = -m2 * l1 * c2 * s12 * w1 * w1 + m2 * c2 * g * phi2.sin();
        (h1, h2)
    }

    /// Joint accelerations for the given applied joint torques, friction included.
    pub fn forward_dynamics(&self, state: &LegState, applied: JointPair) -> JointPair {
        let tau = applied - state.qdot * self.friction;
        let m = self.mass_matrix(state.q.knee);
        let (h1, h2) = self.bias(state.q, state.qdot);
        if self.lock_knee {
            // rigid leg: both segments rotate together, only the hip torque does work
            let inertia = m.m11 + 2.0 * m.m12 + m.m22;
            return JointPair::new((tau.hip - h1 - h2) / inertia, 0.0);
        }
        let r1 = tau.hip + tau.knee - h1;
        let r2 = -tau.knee - h2;
        let det = m.m11 * m.m22 - m.m12 * m.m12;
        let a1 = (m.m22 * r1 - m.m12 * r2) / det;
        let a2 = (m.m11 * r2 - m.m12 * r1) / det;
        JointPair::new(a1, a1 - a2)
    }

    /// Applied joint torques that realise the given motion, friction included.
    pub fn inverse_dynamics(&self, q: JointPair, qdot: JointPair, qddot: JointPair) -> JointPair {
        let m = self.mass_matrix(q.knee);
        let (h1, h2) = self.bias(q, qdot);
        let (a1, a2) = (qddot.hip, qddot.hip - qddot.knee);
        let q1 = m.m11 * a1 + m.m12 * a2 + h1;
        let q2 = m.m12 * a1 + m.m22 * a2 + h2;
        JointPair::new(q1 + q2, -q2) + qdot * self.friction
    }

    /// Kinetic plus gravitational potential energy (J), zero potential at the hip.
    pub fn mechanical_energy(&self, state: &LegState) -> f64 {
        let m = self.mass_matrix(state.q.knee);
        let (w1, w2) = (state.qdot.hip, state.qdot.hip - state.qdot.knee);
        let kinetic = 0.5 * (m.m11 * w1 * w1 + 2.0 * m.m12 * w1 * w2 + m.m22 * w2 * w2);
        let (phi1, phi2) = (state.q.hip, state.q.hip - state.q.knee);
        let potential = -(self.thigh_mass * self.c1() + self.shank_mass * self.thigh_length) * self.gravity * phi1.cos()
            - self.shank_mass * self.c2() * self.gravity * phi2.cos();
        kinetic + potential
    }

    fn limits(&self, joint: Joint) -> (f64, f64) {
        let [lo, hi] = match joint {
            Joint::Hip => self.hip_limits_deg,
            Joint::Knee => self.knee_limits_deg,
        };
        (lo.to_radians(), hi.to_radians())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.thigh_length, self.thigh_mass, self.shank_length, self.shank_mass, self.gravity,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("segment lengths, masses and gravity must be positive".into()));
        }
        if self.friction < 0.0 || self.thigh_inertia < 0.0 || self.shank_inertia < 0.0 {
            return Err(Error::Config("friction and inertias must be nonnegative".into()));
        }
        if self.hip_limits_deg[0] >= self.hip_limits_deg[1] || self.knee_limits_deg[0] >= self.knee_limits_deg[1] {
            return Err(Error::Config("joint limits must be increasing".into()));
        }
        Ok(())
    }
}

/// Advances the leg one tick with torques held constant over the step
/// (classic RK4), then applies the joint stops.
pub fn step_dynamics(params: &PlantParams, state: &LegState, torques: &JointTorques, dt: f64) -> LegState {
    let applied = torques.total();
    step_dynamics_with(params, state, dt, 1, |_| applied)
}

/// Advances the leg one tick in `substeps` RK4 steps with a state-dependent
/// applied torque, for actuators that act faster than the control tick.
/// Joint stops are applied after every substep.
pub fn step_dynamics_with(
    params: &PlantParams,
    state: &LegState,
    dt: f64,
    substeps: usize,
    mut torque: impl FnMut(&LegState) -> JointPair,
) -> LegState {
    let h = dt / substeps.max(1) as f64;
    let mut s = *state;
    for _ in 0..substeps.max(1) {
        s = rk4_substep(params, &s, h, &mut torque);
    }
    s
}

fn rk4_substep(
    params: &PlantParams,
    state: &LegState,
    h: f64,
    torque: &mut impl FnMut(&LegState) -> JointPair,
) -> LegState {
    let mut deriv = |s: &LegState| (s.qdot, params.forward_dynamics(s, torque(s)));
    let shifted = |s: &LegState, dq: JointPair, dv: JointPair, h: f64| LegState {
        q: s.q + dq * h,
        qdot: s.qdot + dv * h,
    };
    let (k1q, k1v) = deriv(state);
    let (k2q, k2v) = deriv(&shifted(state, k1q, k1v, 0.5 * h));
    let (k3q, k3v) = deriv(&shifted(state, k2q, k2v, 0.5 * h));
    let (k4q, k4v) = deriv(&shifted(state, k3q, k3v, h));
    let mut next = LegState {
        q: state.q + (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (h / 6.0),
        qdot: state.qdot + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0),
    };
    if params.lock_knee {
        next.q.knee = state.q.knee;
        next.qdot.knee = 0.0;
    }
    if params.enforce_limits {
        for joint in Joint::ALL {
            let (lo, hi) = params.limits(joint);
            if next.q[joint] < lo {
                next.q[joint] = lo;
                next.qdot[joint] = next.qdot[joint].max(0.0);
            } else if next.q[joint] > hi {
                next.q[joint] = hi;
                next.qdot[joint] = next.qdot[joint].min(0.0);
            }
        }
    }
    next
}

/// Peak torque and optimal angle of one stimulated muscle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuscleTorqueMap {
    /// Peak isometric joint torque (Nm).
    pub tau_max: f64,
    /// Joint angle of peak torque (deg).
    pub optimal_angle_deg: f64,
}

impl MuscleTorqueMap {
    pub fn default_for(joint: Joint, action: Action) -> Self {
        let (tau_max, optimal_angle_deg) = match (joint, action) {
            (Joint::Knee, Action::Extensor) => (25.0, 40.0),
            (Joint::Knee, Action::Flexor) => (15.0, 30.0),
            (Joint::Hip, Action::Extensor) => (60.0, 20.0),
            (Joint::Hip, Action::Flexor) => (50.0, 20.0),
        };
        Self {
            tau_max,
            optimal_angle_deg,
        }
    }

    /// Torque–angle scaling `max(0, cos(q - q_opt))`.
    pub fn angle_factor(&self, joint_angle: f64) -> f64 {
        (joint_angle - self.optimal_angle_deg.to_radians()).cos().max(0.0)
    }
}

/// Joint torque produced by a stimulated muscle at the given joint angle:
/// `sign * a * mu * tau_max * s(q)`.
pub fn fes_torque(channel: &MuscleChannel, map: &MuscleTorqueMap, joint_angle: f64) -> f64 {
    channel.action.moment_sign() * channel.state.effective_activation() * map.tau_max * map.angle_factor(joint_angle)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorLabel {
    HighError,
    LowError,
}

/// Scripted voluntary joint torques as a periodic function of gait phase.
#[derive(Debug, Clone, PartialEq)]
pub struct VoluntaryProfile {
    pub label: BehaviorLabel,
    phase: Vec<f64>,
    torque: Vec<JointPair>,
    limit: f64,
}

#[derive(Debug, Deserialize)]
struct ProfileRecord {
    phase: f64,
    #[allow(dead_code)]
    hip_deg: f64,
    #[allow(dead_code)]
    knee_deg: f64,
    hip_torque_nm: f64,
    knee_torque_nm: f64,
}

impl VoluntaryProfile {
    pub fn new(label: BehaviorLabel, phase: Vec<f64>, torque: Vec<JointPair>, limit: f64) -> Result<Self> {
        if phase.len() < 2 || phase.len() != torque.len() {
            return Err(Error::Config("voluntary profile needs matching phase and torque samples".into()));
        }
        if phase.windows(2).any(|w| w[1] <= w[0]) || phase[0] < 0.0 || phase[phase.len() - 1] >= 1.0 {
            return Err(Error::Config("voluntary profile phases must be sorted in [0, 1)".into()));
        }
        if !(limit > 0.0) {
            return Err(Error::Config("voluntary torque limit must be positive".into()));
        }
        Ok(Self { label, phase, torque, limit })
    }

    /// Always-zero profile.
    pub fn zero(label: BehaviorLabel) -> Self {
        Self {
            label,
            phase: vec![0.0, 0.5],
            torque: vec![JointPair::ZERO; 2],
            limit: f64::INFINITY,
        }
    }

    /// Inverse-dynamics torques that would move the leg along `path` in
    /// `period` seconds at uniform phase speed, scaled by `scale` and delayed
    /// by `lag` (fraction of a cycle).
    pub fn from_inverse_dynamics(
        label: BehaviorLabel,
        path: &ReferencePath,
        plant: &PlantParams,
        period: f64,
        scale: f64,
        lag: f64,
        limit: f64,
    ) -> Result<Self> {
        Self::from_motion(label, |p| path.at_phase(p - lag), plant, period, scale, limit)
    }

    /// Scaled inverse-dynamics torque of an arbitrary periodic motion, given
    /// as joint angles over one cycle of phase.
    pub fn from_motion(
        label: BehaviorLabel,
        motion: impl Fn(f64) -> JointPair,
        plant: &PlantParams,
        period: f64,
        scale: f64,
        limit: f64,
    ) -> Result<Self> {
        const N: usize = 200;
        let h = period / N as f64;
        let q: Vec<JointPair> = (0..N).map(|i| motion(i as f64 / N as f64)).collect();
        let phase = (0..N).map(|i| i as f64 / N as f64).collect();
        let torque = (0..N)
            .map(|i| {
                let at = |k: isize| q[(i as isize + k).rem_euclid(N as isize) as usize];
                let (prev, cur, next) = (at(-1), at(0), at(1));
                let qdot = (next - prev) * (0.5 / h);
                let qddot = (next - cur * 2.0 + prev) * (1.0 / (h * h));
                plant.inverse_dynamics(cur, qdot, qddot) * scale
            })
            .collect();
        Self::new(label, phase, torque, limit)
    }

    pub fn from_file(label: BehaviorLabel, file: impl AsRef<Path>, limit: f64) -> Result<Self> {
        let path = file.as_ref();
        Self::from_reader(label, std::fs::File::open(path)?, path, limit)
    }

    /// Reads the path file layout with extra `hip_torque_nm,knee_torque_nm` columns.
    pub fn from_reader(label: BehaviorLabel, reader: impl Read, origin: &Path, limit: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut phase = Vec::new();
        let mut torque = Vec::new();
        for rec in rdr.deserialize::<ProfileRecord>() {
            let rec = rec.map_err(|e| Error::Format {
                kind: "voluntary profile",
                path: origin.to_path_buf(),
                reason: e.to_string(),
            })?;
            phase.push(rec.phase);
            torque.push(JointPair::new(rec.hip_torque_nm, rec.knee_torque_nm));
        }
        Self::new(label, phase, torque, limit)
    }

    /// Torque at a cycle phase, linearly interpolated and wrapped.
    pub fn torque(&self, phase: f64) -> JointPair {
        let p = phase.rem_euclid(1.0);
        let n = self.phase.len();
        let idx = self.phase.partition_point(|&x| x <= p);
        let (i0, i1) = if idx == 0 { (n - 1, 0) } else { (idx - 1, idx % n) };
        let (p0, mut p1) = (self.phase[i0], self.phase[i1]);
        let mut at = p;
        if p1 <= p0 {
            p1 += 1.0;
        }
        if at < p0 {
            at += 1.0;
        }
        let w = (at - p0) / (p1 - p0);
        let t = self.torque[i0] + (self.torque[i1] - self.torque[i0]) * w;
        t.map(|v| v.clamp(-self.limit, self.limit))
    }
}
