//! Scenario runner: configuration, the control loop, metrics, variant
//! comparison and output files.

pub mod compare;
pub mod config;
pub mod io;
pub mod metrics;
pub mod scenario;

pub use compare::{all_variants, compare_variants, Columns, ComparisonRow, ComparisonTable};
pub use config::{
    BandConfig, BehaviorSegment, ExoConfig, FesConfig, MuscleConfig, MuscleFile, ScenarioConfig, Variant,
    VoluntaryConfig,
};
pub use metrics::{mean_over_cycles, CycleMetrics, Summary};
pub use scenario::{run_scenario, ScenarioOutput, TraceRow};
