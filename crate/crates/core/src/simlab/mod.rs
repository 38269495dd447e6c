//! Simulation lab: data-generating processes, micro samples, the grid oracle
//! and Monte Carlo studies.

pub mod oracle;
pub mod sample;
pub mod spec;
pub mod study;

pub use oracle::{brute_force_bounds, OracleBounds, OracleOptions};
pub use sample::{aggregate_micro, generate, simulate_aggregate, CellStats, MicroRecord, MicroSample};
pub use spec::{exercise_preset, GroupSpec, JointSpec};
pub use study::{consistency_study, coverage_study, population_bounds, ConsistencyReport, CoverageReport, StudyOptions};
