//! Scenario configuration. Every key has a default, so an empty file is a
//! valid configuration and any subset of keys may be overridden.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fatigue::FatigueParams;
use crate::gait::GaitConfig;
use crate::plant::{BehaviorLabel, MuscleTorqueMap, PlantParams};
use crate::types::{Action, Joint, JointPair, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// Exoskeleton only.
    #[serde(rename = "EPC")]
    Epc,
    /// FES only.
    #[serde(rename = "FPC")]
    Fpc,
    /// Hybrid with frozen gains and band.
    #[serde(rename = "HPC")]
    Hpc,
    /// Hybrid with all adaptation enabled.
    #[serde(rename = "HAPC")]
    Hapc,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Epc, Variant::Fpc, Variant::Hpc, Variant::Hapc];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Epc => "EPC",
            Variant::Fpc => "FPC",
            Variant::Hpc => "HPC",
            Variant::Hapc => "HAPC",
        }
    }

    pub fn uses_fes(self) -> bool {
        self != Variant::Epc
    }

    pub fn uses_exo(self) -> bool {
        self != Variant::Fpc
    }

    pub fn adapts(self) -> bool {
        self != Variant::Hpc
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown controller variant '{s}'")))
    }
}

/// Behaviour for an inclusive, 1-based range of counted cycles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorSegment {
    pub from_cycle: u64,
    pub to_cycle: u64,
    pub behavior: BehaviorLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VoluntaryConfig {
    /// Fraction of the inverse-dynamics torque supplied in each behaviour.
    pub high_error_scale: f64,
    pub low_error_scale: f64,
    /// Delay of the voluntary torque behind the path, in cycles.
    pub high_error_lag: f64,
    pub low_error_lag: f64,
    /// Extra delay of the knee behind the hip, in cycles.
    pub high_error_knee_delay: f64,
    pub low_error_knee_delay: f64,
    /// Fraction of the path's knee flexion (above its minimum) the wearer aims for.
    pub high_error_knee_gain: f64,
    pub low_error_knee_gain: f64,
    /// Peak extra knee flexion (knee buckling) over a window of the cycle.
    pub high_error_knee_bump_deg: f64,
    pub low_error_knee_bump_deg: f64,
    /// Centre and width of the buckling window, in cycles.
    pub knee_bump_center: f64,
    pub knee_bump_width: f64,
    pub torque_limit: f64,
    /// Joint stiffness (Nm/rad) and damping (Nm s/rad) of the wearer about
    /// the timed path: muscle tone and reflexes that keep a torque deficit
    /// from growing without bound.
    pub stiffness: JointPair,
    pub damping: JointPair,
    /// Optional profile files (path format plus torque columns) replacing the
    /// inverse-dynamics construction.
    pub high_error_file: Option<PathBuf>,
    pub low_error_file: Option<PathBuf>,
}

impl Default for VoluntaryConfig {
    fn default() -> Self {
        Self {
            high_error_scale: 0.6,
            low_error_scale: 0.95,
            high_error_lag: 0.03,
            low_error_lag: 0.01,
            high_error_knee_delay: 0.0,
            low_error_knee_delay: 0.0,
            high_error_knee_gain: 1.08,
            low_error_knee_gain: 1.12,
            high_error_knee_bump_deg: 10.0,
            low_error_knee_bump_deg: 2.0,
            knee_bump_center: 0.3,
            knee_bump_width: 0.22,
            torque_limit: 150.0,
            stiffness: JointPair::new(800.0, 200.0),
            damping: JointPair::new(20.0, 6.0),
            high_error_file: None,
            low_error_file: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BandConfig {
    pub r_db_deg: f64,
    pub r_fesb0_deg: f64,
}

impl Default for BandConfig {
    fn default() -> Self {
        Self {
            r_db_deg: 2.0,
            r_fesb0_deg: 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FesConfig {
    pub phi_f: f64,
    pub gamma0: f64,
    pub frequency_hz: f64,
    /// Also stimulate monoarticular hip flexors and extensors.
    pub hip_channels: bool,
}

impl Default for FesConfig {
    fn default() -> Self {
        Self {
            phi_f: 0.95,
            gamma0: 1.0,
            frequency_hz: 25.0,
            hip_channels: false,
        }
    }
}

/// Accepts either a number (both joints) or a `{ hip, knee }` table.
mod per_joint {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::types::JointPair;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Uniform(f64),
        PerJoint(JointPair),
    }

    pub fn serialize<S: Serializer>(v: &Option<JointPair>, s: S) -> Result<S::Ok, S::Error> {
        v.map(Repr::PerJoint).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<JointPair>, D::Error> {
        Ok(Option::<Repr>::deserialize(d)?.map(|r| match r {
            Repr::Uniform(v) => JointPair::splat(v),
            Repr::PerJoint(p) => p,
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExoConfig {
    /// Nm/rad.
    pub baseline_stiffness: f64,
    /// Damping coefficient per joint (`B = c_cr sqrt(K)`); a single number
    /// applies to both joints. Unset means critical damping of the plant's
    /// joint inertias with the knee extended, `2 sqrt(I)`.
    #[serde(with = "per_joint")]
    pub c_cr: Option<JointPair>,
    /// Nm.
    pub torque_limit: f64,
    pub phi_e: f64,
    /// Low-pass cutoff of the sampled error-rate estimate (Hz).
    pub rate_cutoff_hz: f64,
    /// Evaluate the impedance law continuously on the leg state, as an ideal
    /// joint actuator would. When false the torque is computed once per tick
    /// from a filtered backward difference of the error and held.
    pub ideal_actuator: bool,
}

impl Default for ExoConfig {
    fn default() -> Self {
        Self {
            baseline_stiffness: 340.0,
            c_cr: None,
            torque_limit: 35.0,
            phi_e: 0.95,
            rate_cutoff_hz: 10.0,
            ideal_actuator: true,
        }
    }
}

/// One stimulated muscle as written in the muscle-parameter file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuscleConfig {
    pub side: Side,
    pub joint: Joint,
    pub action: Action,
    #[serde(flatten)]
    pub params: FatigueParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimal_angle_deg: Option<f64>,
}

impl MuscleConfig {
    pub fn new(side: Side, joint: Joint, action: Action, params: FatigueParams) -> Self {
        Self {
            side,
            joint,
            action,
            params,
            gamma0: None,
            tau_max: None,
            optimal_angle_deg: None,
        }
    }

    pub fn torque_map(&self) -> MuscleTorqueMap {
        let d = MuscleTorqueMap::default_for(self.joint, self.action);
        MuscleTorqueMap {
            tau_max: self.tau_max.unwrap_or(d.tau_max),
            optimal_angle_deg: self.optimal_angle_deg.unwrap_or(d.optimal_angle_deg),
        }
    }

    /// Conventional name such as `left_quadriceps` or `right_hip_flexor`.
    pub fn name(&self) -> String {
        let muscle = match (self.joint, self.action) {
            (Joint::Knee, Action::Extensor) => "quadriceps",
            (Joint::Knee, Action::Flexor) => "hamstring",
            (Joint::Hip, Action::Flexor) => "hip_flexor",
            (Joint::Hip, Action::Extensor) => "hip_extensor",
        };
        format!("{}_{muscle}", self.side)
    }

    /// Parses a conventional muscle name back into side, joint and action.
    pub fn parse_name(name: &str) -> Result<(Side, Joint, Action)> {
        let (side, rest) = name
            .split_once('_')
            .ok_or_else(|| Error::Config(format!("unknown muscle '{name}'")))?;
        let side = match side {
            "left" => Side::Left,
            "right" => Side::Right,
            _ => return Err(Error::Config(format!("unknown side in muscle '{name}'"))),
        };
        let (joint, action) = match rest {
            "quadriceps" => (Joint::Knee, Action::Extensor),
            "hamstring" | "hamstrings" => (Joint::Knee, Action::Flexor),
            "hip_flexor" => (Joint::Hip, Action::Flexor),
            "hip_extensor" => (Joint::Hip, Action::Extensor),
            _ => return Err(Error::Config(format!("unknown muscle '{name}'"))),
        };
        Ok((side, joint, action))
    }
}

/// Contents of a muscle-parameter file: a list of `[[muscles]]` tables.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MuscleFile {
    pub muscles: Vec<MuscleConfig>,
}

impl MuscleFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Format {
            kind: "muscle parameter",
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("muscle file serialises")
    }

    /// Knee muscles of both legs with the identified parameters, plus
    /// surrogate hip muscles that reuse the same side's knee rows.
    pub fn defaults(hip_channels: bool) -> Self {
        let mut muscles = Vec::new();
        for side in Side::ALL {
            for action in [Action::Extensor, Action::Flexor] {
                let p = FatigueParams::knee_muscle(side, action);
                muscles.push(MuscleConfig::new(side, Joint::Knee, action, p));
            }
            if hip_channels {
                for action in [Action::Flexor, Action::Extensor] {
                    let donor = match action {
                        Action::Flexor => Action::Extensor,
                        Action::Extensor => Action::Flexor,
                    };
                    let p = FatigueParams::knee_muscle(side, donor);
                    muscles.push(MuscleConfig::new(side, Joint::Hip, action, p));
                }
            }
        }
        Self { muscles }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    #[serde(rename = "controller_variant")]
    pub variant: Variant,
    pub n_cycles: u64,
    /// Control tick (s).
    pub dt: f64,
    /// Cadence of the scripted voluntary torques (s per cycle).
    pub cycle_period: f64,
    /// Longest plant integration substep (s).
    pub plant_substep: f64,
    /// `None` switches from high-error to low-error behaviour at half time.
    pub behavior_schedule: Option<Vec<BehaviorSegment>>,
    pub bands: BandConfig,
    pub voluntary: VoluntaryConfig,
    pub fes: FesConfig,
    pub exo: ExoConfig,
    pub gait: GaitConfig,
    pub plant: PlantParams,
    /// Reference path file; the built-in synthetic gait cycle when absent.
    pub path_file: Option<PathBuf>,
    /// Muscle-parameter file; identified knee rows when absent.
    pub muscle_file: Option<PathBuf>,
    /// Inline muscle table, taking precedence over `muscle_file`.
    pub muscles: Option<Vec<MuscleConfig>>,
    pub rng_seed: u64,
    /// Standard deviation of joint-angle measurement noise (deg).
    pub sensor_noise_deg: f64,
    /// Keep per-tick trace rows in the output.
    pub record_trace: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Hapc,
            n_cycles: 64,
            dt: 0.01,
            cycle_period: 1.2,
            plant_substep: 0.001,
            behavior_schedule: None,
            bands: BandConfig::default(),
            voluntary: VoluntaryConfig::default(),
            fes: FesConfig::default(),
            exo: ExoConfig::default(),
            gait: GaitConfig::default(),
            plant: PlantParams::default(),
            path_file: None,
            muscle_file: None,
            muscles: None,
            rng_seed: 0,
            sensor_noise_deg: 0.0,
            record_trace: true,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // relative file references resolve against the config's directory
        if let Some(dir) = path.parent() {
            for slot in [
                &mut cfg.path_file,
                &mut cfg.muscle_file,
                &mut cfg.voluntary.high_error_file,
                &mut cfg.voluntary.low_error_file,
            ] {
                if let Some(p) = slot.as_mut() {
                    if p.is_relative() {
                        *p = dir.join(&*p);
                    }
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serialises")
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        Self {
            variant,
            ..self.clone()
        }
    }

    pub fn r_db(&self) -> f64 {
        self.bands.r_db_deg.to_radians()
    }

    pub fn r_fesb0(&self) -> f64 {
        self.bands.r_fesb0_deg.to_radians()
    }

    /// Exo damping coefficient per joint: the configured value, or critical
    /// damping `2 sqrt(I)` of the plant's joint inertias with the knee extended.
    pub fn damping_coefficient(&self) -> JointPair {
        self.exo
            .c_cr
            .unwrap_or_else(|| self.plant.joint_inertia(0.0).map(|i| 2.0 * i.sqrt()))
    }

    pub fn schedule(&self) -> Vec<BehaviorSegment> {
        self.behavior_schedule.clone().unwrap_or_else(|| {
            let half = self.n_cycles / 2;
            let mut s = Vec::new();
            if half >= 1 {
                s.push(BehaviorSegment {
                    from_cycle: 1,
                    to_cycle: half,
                    behavior: BehaviorLabel::HighError,
                });
            }
            s.push(BehaviorSegment {
                from_cycle: half + 1,
                to_cycle: self.n_cycles,
                behavior: BehaviorLabel::LowError,
            });
            s
        })
    }

    /// Behaviour in effect during counted cycle `cycle` (1-based). Cycles
    /// outside the schedule use the nearest segment.
    pub fn behavior_at(&self, cycle: u64) -> BehaviorLabel {
        let sched = self.schedule();
        sched
            .iter()
            .find(|s| (s.from_cycle..=s.to_cycle).contains(&cycle))
            .or_else(|| if cycle < 1 { sched.first() } else { sched.last() })
            .map(|s| s.behavior)
            .unwrap_or(BehaviorLabel::LowError)
    }

    pub fn muscle_table(&self) -> Result<Vec<MuscleConfig>> {
        let all = match (&self.muscles, &self.muscle_file) {
            (Some(m), _) => m.clone(),
            (None, Some(file)) => MuscleFile::load(file)?.muscles,
            (None, None) => MuscleFile::defaults(self.fes.hip_channels).muscles,
        };
        Ok(all
            .into_iter()
            .filter(|m| self.fes.hip_channels || m.joint == Joint::Knee)
            .collect())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_cycles < 1 {
            return fail("n_cycles must be at least 1".into());
        }
        if !(self.dt > 0.0 && self.dt <= 0.05) {
            return fail(format!("dt = {} outside (0, 0.05]", self.dt));
        }
        if !(self.plant_substep > 0.0 && self.plant_substep <= self.dt) {
            return fail("plant_substep must lie in (0, dt]".into());
        }
        if !(self.cycle_period > 10.0 * self.dt) {
            return fail("cycle_period must span at least ten ticks".into());
        }
        let b = &self.bands;
        if !(b.r_db_deg >= 0.0 && b.r_fesb0_deg > 0.0 && b.r_fesb0_deg >= b.r_db_deg) {
            return fail("band radii need 0 <= r_db <= r_fesb0 and r_fesb0 > 0".into());
        }
        if !(0.0..1.0).contains(&self.fes.phi_f) || !(0.0..1.0).contains(&self.exo.phi_e) {
            return fail("forgetting factors must lie in [0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.fes.gamma0) {
            return fail("gamma0 must lie in [0, 1]".into());
        }
        if !(0.0..100.0).contains(&self.fes.frequency_hz) {
            return fail("stimulation frequency must lie in [0, 100) Hz".into());
        }
        let v = &self.voluntary;
        let nonneg = |p: JointPair| p.hip >= 0.0 && p.knee >= 0.0;
        if !(nonneg(v.stiffness) && nonneg(v.damping) && v.torque_limit > 0.0) {
            return fail("wearer stiffness and damping must be nonnegative and the torque limit positive".into());
        }
        let fractions = [v.high_error_scale, v.low_error_scale, v.high_error_lag, v.low_error_lag, v.high_error_knee_delay, v.low_error_knee_delay];
        if !fractions.iter().all(|x| (0.0..=1.0).contains(x)) {
            return fail("voluntary scales, lags and knee delays must lie in [0, 1]".into());
        }
        if !(v.high_error_knee_gain > 0.0 && v.low_error_knee_gain > 0.0) {
            return fail("knee gains must be positive".into());
        }
        if !(v.high_error_knee_bump_deg.is_finite() && v.low_error_knee_bump_deg.is_finite()) {
            return fail("knee bumps must be finite".into());
        }
        if !((0.0..=1.0).contains(&v.knee_bump_center) && v.knee_bump_width > 0.0 && v.knee_bump_width <= 1.0) {
            return fail("knee bump centre must lie in [0, 1] and width in (0, 1]".into());
        }
        let e = &self.exo;
        if !(e.baseline_stiffness >= 0.0 && e.c_cr.is_none_or(|c| c.hip >= 0.0 && c.knee >= 0.0) && e.torque_limit > 0.0 && e.rate_cutoff_hz > 0.0) {
            return fail("exoskeleton gains must be nonnegative and limits positive".into());
        }
        if !(self.gait.stance_fraction > 0.0 && self.gait.stance_fraction < 1.0) {
            return fail("stance_fraction must lie in (0, 1)".into());
        }
        if self.sensor_noise_deg < 0.0 {
            return fail("sensor_noise_deg must be nonnegative".into());
        }
        self.plant.validate()?;

        let mut sched = self.schedule();
        sched.sort_by_key(|s| s.from_cycle);
        let mut next = 1;
        for s in &sched {
            if s.from_cycle != next || s.to_cycle < s.from_cycle {
                return fail(format!("behavior schedule leaves a gap or overlap at cycle {next}"));
            }
            next = s.to_cycle + 1;
        }
        if next <= self.n_cycles {
            return fail(format!("behavior schedule ends before cycle {}", self.n_cycles));
        }

        let muscles = self.muscle_table()?;
        let mut seen = BTreeSet::new();
        for m in &muscles {
            m.params.validate()?;
            if m.torque_map().tau_max <= 0.0 {
                return fail(format!("{}: tau_max must be positive", m.name()));
            }
            if m.gamma0.is_some_and(|g| !(0.0..=1.0).contains(&g)) {
                return fail(format!("{}: gamma0 must lie in [0, 1]", m.name()));
            }
            if !seen.insert((m.side, m.joint, m.action)) {
                return fail(format!("duplicate channel {}", m.name()));
            }
        }
        for side in Side::ALL {
            for action in [Action::Extensor, Action::Flexor] {
                if !seen.contains(&(side, Joint::Knee, action)) {
                    return fail(format!("missing knee {action:?} channel for the {side} leg"));
                }
            }
        }
        Ok(())
    }
}
