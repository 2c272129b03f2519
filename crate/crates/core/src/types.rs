//! Small domain enums and the per-joint value pair shared by every module.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const ALL: [Side; 2] = [Side::Left, Side::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Joint {
    Hip,
    Knee,
}

impl Joint {
    pub const ALL: [Joint; 2] = [Joint::Hip, Joint::Knee];

    pub fn as_str(self) -> &'static str {
        match self {
            Joint::Hip => "hip",
            Joint::Knee => "knee",
        }
    }
}

/// Direction a stimulated muscle moves its joint. Flexion is the positive
/// joint direction for both hip and knee.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Flexor,
    Extensor,
}

impl Action {
    /// Sign of the joint moment produced by the muscle.
    pub fn moment_sign(self) -> f64 {
        match self {
            Action::Flexor => 1.0,
            Action::Extensor => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GaitPhase {
    Stance,
    Swing,
}

impl GaitPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            GaitPhase::Stance => "stance",
            GaitPhase::Swing => "swing",
        }
    }
}

/// A value per sagittal joint, e.g. angles in radians or torques in Nm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct JointPair {
    pub hip: f64,
    pub knee: f64,
}

impl JointPair {
    pub const ZERO: JointPair = JointPair { hip: 0.0, knee: 0.0 };

    pub const fn new(hip: f64, knee: f64) -> Self {
        Self { hip, knee }
    }

    pub fn splat(v: f64) -> Self {
        Self { hip: v, knee: v }
    }

    pub fn map(self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            hip: f(self.hip),
            knee: f(self.knee),
        }
    }

    pub fn zip(self, other: Self, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        Self {
            hip: f(self.hip, other.hip),
            knee: f(self.knee, other.knee),
        }
    }

    pub fn dot(self, other: Self) -> f64 {
        self.hip * other.hip + self.knee * other.knee
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.hip.is_finite() && self.knee.is_finite()
    }

    pub fn to_degrees(self) -> Self {
        self.map(f64::to_degrees)
    }

    pub fn to_radians(self) -> Self {
        self.map(f64::to_radians)
    }
}

impl Index<Joint> for JointPair {
    type Output = f64;

    fn index(&self, joint: Joint) -> &f64 {
        match joint {
            Joint::Hip => &self.hip,
            Joint::Knee => &self.knee,
        }
    }
}

impl IndexMut<Joint> for JointPair {
    fn index_mut(&mut self, joint: Joint) -> &mut f64 {
        match joint {
            Joint::Hip => &mut self.hip,
            Joint::Knee => &mut self.knee,
        }
    }
}

impl Add for JointPair {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.zip(rhs, |a, b| a + b)
    }
}

impl Sub for JointPair {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.zip(rhs, |a, b| a - b)
    }
}

impl Neg for JointPair {
    type Output = Self;
    fn neg(self) -> Self {
        self.map(|v| -v)
    }
}

impl Mul<f64> for JointPair {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.map(|v| v * rhs)
    }
}
