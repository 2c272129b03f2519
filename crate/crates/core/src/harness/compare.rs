//! Variant sweep and the normalised comparison table.

use serde::Serialize;

use super::config::{ScenarioConfig, Variant};
use super::metrics::Summary;
use super::scenario::{run_scenario, ScenarioOutput};
use crate::error::{Error, Result};

/// The four compared quantities. Assistance keeps robot torque and pulse
/// width in separate columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Columns {
    pub error: f64,
    pub robot: f64,
    pub stimulation: f64,
    pub fatigue: f64,
}

impl Columns {
    pub fn from_summary(s: &Summary) -> Self {
        Self {
            error: s.rms_error_deg,
            robot: s.rms_exo_torque_nm,
            stimulation: s.rms_pulse_width_us,
            fatigue: s.mean_knee_fatigue,
        }
    }

    pub fn sum(&self) -> f64 {
        self.error + self.robot + self.stimulation + self.fatigue
    }

    fn normalised_by(&self, base: &Columns) -> Self {
        let norm = |v: f64, b: f64| {
            if b != 0.0 {
                v / b
            } else if v == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        };
        Self {
            error: norm(self.error, base.error),
            robot: norm(self.robot, base.robot),
            stimulation: norm(self.stimulation, base.stimulation),
            fatigue: norm(self.fatigue, base.fatigue),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub variant: Variant,
    pub raw: Columns,
    /// Each column divided by the HAPC value.
    pub normalised: Columns,
    /// Sum of the normalised columns; 4 for HAPC by construction.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn from_summaries(summaries: &[Summary]) -> Result<Self> {
        let base = summaries
            .iter()
            .find(|s| s.variant == Variant::Hapc)
            .map(Columns::from_summary)
            .ok_or_else(|| Error::Config("comparison needs a HAPC run as the normalisation baseline".into()))?;
        let mut rows: Vec<ComparisonRow> = summaries
            .iter()
            .map(|s| {
                let raw = Columns::from_summary(s);
                let normalised = raw.normalised_by(&base);
                ComparisonRow {
                    variant: s.variant,
                    raw,
                    normalised,
                    cost: normalised.sum(),
                }
            })
            .collect();
        rows.sort_by_key(|r| r.variant);
        Ok(Self { rows })
    }

    pub fn row(&self, variant: Variant) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }
}

/// Runs every configuration concurrently and tabulates the results. The
/// configurations must differ only in the controller variant, and each
/// variant may appear once.
pub fn compare_variants(cfgs: &[ScenarioConfig]) -> Result<(Vec<ScenarioOutput>, ComparisonTable)> {
    let first = cfgs
        .first()
        .ok_or_else(|| Error::Config("no scenarios to compare".into()))?;
    let reference = first.with_variant(Variant::Hapc);
    for (i, c) in cfgs.iter().enumerate() {
        if c.with_variant(Variant::Hapc) != reference {
            return Err(Error::Config(format!(
                "scenario {i} ({}) differs from the first in more than the controller variant",
                c.variant
            )));
        }
        if cfgs[..i].iter().any(|p| p.variant == c.variant) {
            return Err(Error::Config(format!("variant {} listed twice", c.variant)));
        }
    }

    let results: Vec<Result<ScenarioOutput>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfgs.iter().map(|c| scope.spawn(move || run_scenario(c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario thread panicked"))
            .collect()
    });
    let mut outputs = results.into_iter().collect::<Result<Vec<_>>>()?;
    outputs.sort_by_key(|o| o.variant);
    let summaries: Vec<Summary> = outputs.iter().map(|o| o.summary.clone()).collect();
    let table = ComparisonTable::from_summaries(&summaries)?;
    Ok((outputs, table))
}

/// The four variants of `base`, in canonical order.
pub fn all_variants(base: &ScenarioConfig) -> Vec<ScenarioConfig> {
    Variant::ALL.iter().map(|&v| base.with_variant(v)).collect()
}
