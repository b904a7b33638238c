//! Scenario runner: configuration, figure tables, force sensitivity, sweeps
//! and the self-check suites.

pub mod config;
pub mod figures;
pub mod table;
pub mod validate;

pub use config::{Preset, Scenario, ScenarioConfig, INFERRED_MASS_KG};
pub use figures::{figure2, figure3, force_sensitivity, force_table, sweep, ForceReport, OBSERVABLES, SWEEP_VARIABLES};
pub use table::{render_tables, write_tables, Cell, OutputFormat, Table};
pub use validate::{compare_case, invariant_suite, oracle_cases, oracle_suite, OracleCase, OracleComparison};
