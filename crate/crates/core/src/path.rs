//! Reference path in (hip, knee) joint space.
//!
//! The path is a polyline through joint-space samples, each tagged with its
//! normalised position in the gait cycle. The reference point for a given
//! pose is its orthogonal projection onto the nearest segment, so the
//! controllers see a continuous error signal instead of sample-to-sample
//! jumps.

use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::types::JointPair;

const DEFAULT_PATH_CSV: &str = include_str!("../data/default_path.csv");

/// Relative slack used when deciding that two segments are equidistant.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePath {
    points: Vec<JointPair>,
    phase: Vec<f64>,
    closed: bool,
}

/// Result of projecting a pose onto the path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub point: JointPair,
    pub phase: f64,
    /// Index of the segment start sample.
    pub segment: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandedError {
    pub reference_point: JointPair,
    /// `q_ref - q_act`.
    pub raw_error: JointPair,
    /// Raw error with the dead band removed.
    pub fes_error: JointPair,
    /// Raw error with the FES band removed.
    pub exo_error: JointPair,
    pub phase: f64,
}

#[derive(Debug, Deserialize)]
struct PathRecord {
    phase: f64,
    hip_deg: f64,
    knee_deg: f64,
}

impl ReferencePath {
    /// Builds a path from joint-space samples (radians) and their cycle phases.
    ///
    /// Phases must increase strictly along the samples. A closed path may wrap
    /// from just below 1 back to 0 once, so any rotation of a closed path is
    /// accepted.
    pub fn new(points: Vec<JointPair>, phase: Vec<f64>, closed: bool) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidPath(format!(
                "need at least 3 samples, got {}",
                points.len()
            )));
        }
        if points.len() != phase.len() {
            return Err(Error::InvalidPath(format!(
                "{} samples but {} phase values",
                points.len(),
                phase.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidPath(format!("non-finite sample {p:?}")));
        }
        if let Some(&p) = phase.iter().find(|p| !(0.0..1.0).contains(*p)) {
            return Err(Error::InvalidPath(format!("phase {p} outside [0, 1)")));
        }
        let n = points.len();
        let pairs = if closed { n } else { n - 1 };
        for i in 0..pairs {
            let j = (i + 1) % n;
            if points[i] == points[j] {
                return Err(Error::InvalidPath(format!(
                    "consecutive samples {i} and {j} coincide"
                )));
            }
        }
        let wraps = phase.windows(2).filter(|w| w[1] <= w[0]).count();
        let allowed = usize::from(closed);
        if wraps > allowed {
            return Err(Error::InvalidPath(
                "phase must increase strictly along the path".into(),
            ));
        }
        if closed && wraps == 1 && phase[n - 1] >= phase[0] {
            return Err(Error::InvalidPath(
                "phase of a closed path may wrap at most once per cycle".into(),
            ));
        }
        Ok(Self {
            points,
            phase,
            closed,
        })
    }

    /// The synthetic gait-like cycle shipped with the crate.
    pub fn default_gait() -> Self {
        Self::from_reader(DEFAULT_PATH_CSV.as_bytes(), Path::new("<builtin>"))
            .expect("built-in reference path is valid")
    }

    /// Loads a closed path from a CSV file with header `phase,hip_deg,knee_deg`.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        Self::from_reader(file, path)
    }

    pub fn from_reader(reader: impl Read, origin: &Path) -> Result<Self> {
        let format_err = |reason: String| Error::Format {
            kind: "path",
            path: origin.to_path_buf(),
            reason,
        };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut points = Vec::new();
        let mut phase = Vec::new();
        for record in rdr.deserialize::<PathRecord>() {
            let record = record.map_err(|e| format_err(e.to_string()))?;
            points.push(JointPair::new(record.hip_deg, record.knee_deg).to_radians());
            phase.push(record.phase);
        }
        if phase.windows(2).any(|w| w[1] <= w[0]) {
            return Err(format_err("phase column must be sorted ascending".into()));
        }
        Self::new(points, phase, true).map_err(|e| format_err(e.to_string()))
    }

    pub fn points(&self) -> &[JointPair] {
        &self.points
    }

    pub fn phases(&self) -> &[f64] {
        &self.phase
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn segment_count(&self) -> usize {
        if self.closed {
            self.points.len()
        } else {
            self.points.len() - 1
        }
    }

    /// Endpoints and phase span of segment `i`. The end phase is unwrapped so
    /// it is always greater than the start phase.
    fn segment(&self, i: usize) -> (JointPair, JointPair, f64, f64) {
        let j = (i + 1) % self.points.len();
        let (p0, mut p1) = (self.phase[i], self.phase[j]);
        if p1 <= p0 {
            p1 += 1.0;
        }
        (self.points[i], self.points[j], p0, p1)
    }

    fn project_segment(&self, i: usize, q: JointPair) -> Projection {
        let (a, b, p0, p1) = self.segment(i);
        let ab = b - a;
        let t = ((q - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
        let point = a + ab * t;
        Projection {
            point,
            phase: (p0 + t * (p1 - p0)).rem_euclid(1.0),
            segment: i,
            distance: (q - point).norm(),
        }
    }

    /// Orthogonal projection of `q` onto the nearest path segment.
    ///
    /// When several segments are equidistant, the one whose phase lies
    /// closest ahead of `previous_phase` wins, so the reference does not jump
    /// backwards mid-cycle.
    pub fn project(&self, q: JointPair, previous_phase: Option<f64>) -> Projection {
        let mut best = self.project_segment(0, q);
        for i in 1..self.segment_count() {
            let cand = self.project_segment(i, q);
            let slack = TIE_TOLERANCE * best.distance.max(f64::MIN_POSITIVE);
            if cand.distance < best.distance - slack {
                best = cand;
            } else if cand.distance <= best.distance + slack {
                if let Some(prev) = previous_phase {
                    let ahead = |p: f64| (p - prev).rem_euclid(1.0);
                    if ahead(cand.phase) < ahead(best.phase) {
                        best = cand;
                    }
                }
            }
        }
        best
    }

    /// Derivative of [`Self::at_phase`] with respect to phase (rad per cycle).
    pub fn velocity_at_phase(&self, phase: f64) -> JointPair {
        let h = 1e-4;
        (self.at_phase(phase + h) - self.at_phase(phase - h)) * (0.5 / h)
    }

    /// Unit direction of segment `i` in joint space.
    pub fn tangent(&self, segment: usize) -> JointPair {
        let (a, b, _, _) = self.segment(segment);
        let d = b - a;
        let n = d.norm();
        if n > 0.0 {
            d * (1.0 / n)
        } else {
            JointPair::ZERO
        }
    }

    /// Point on the path at the given cycle phase, interpolated linearly
    /// between samples.
    pub fn at_phase(&self, phase: f64) -> JointPair {
        let phase = phase.rem_euclid(1.0);
        for i in 0..self.segment_count() {
            let (a, b, p0, p1) = self.segment(i);
            for shifted in [phase, phase + 1.0] {
                if (p0..p1).contains(&shifted) {
                    return a + (b - a) * ((shifted - p0) / (p1 - p0));
                }
            }
        }
        // Open paths outside their phase span clamp to the nearest end.
        if phase < self.phase[0] {
            self.points[0]
        } else {
            self.points[self.points.len() - 1]
        }
    }
}

/// Nearest point on the path and its cycle phase.
pub fn nearest_reference(path: &ReferencePath, q_act: JointPair) -> (JointPair, f64) {
    let p = path.project(q_act, None);
    (p.point, p.phase)
}

/// Per-joint soft threshold: zero inside `[-r, r]`, shifted towards zero by
/// `r` outside it.
pub fn soft_threshold(error: f64, radius: f64) -> f64 {
    debug_assert!(radius >= 0.0, "band radius must be nonnegative");
    if error > radius {
        error - radius
    } else if error < -radius {
        error + radius
    } else {
        0.0
    }
}

impl BandedError {
    pub fn from_projection(proj: &Projection, q_act: JointPair, r_db: f64, r_fesb: f64) -> Self {
        let raw = proj.point - q_act;
        Self {
            reference_point: proj.point,
            raw_error: raw,
            fes_error: raw.map(|e| soft_threshold(e, r_db)),
            exo_error: raw.map(|e| soft_threshold(e, r_fesb)),
            phase: proj.phase,
        }
    }
}

/// Tracking errors for the FES controller (dead band `r_db`) and the
/// exoskeleton controller (FES band `r_fesb`). Radii in radians.
pub fn banded_error(path: &ReferencePath, q_act: JointPair, r_db: f64, r_fesb: f64) -> BandedError {
    BandedError::from_projection(&path.project(q_act, None), q_act, r_db, r_fesb)
}
