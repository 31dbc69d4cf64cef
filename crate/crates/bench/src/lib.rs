//! Experiment harness: serializable plans, comparison tables, robustness
//! sweeps and spectrum plots built on `scoredim-core`.

pub mod plan;
pub mod plot;
pub mod robustness;
pub mod suite;
pub mod table;

pub use plan::{
    build_field, run_plan, standard_baselines, BaselineSpec, DatasetSpec, ExperimentPlan, FieldSpec, PlanOutcome,
    RunOptions,
};
pub use plot::{export_spectrum_plot, read_spectra_csv, PlotOptions};
pub use robustness::{gap_dominance, run_noise_robustness, run_nonuniform_robustness, run_offmanifold_robustness, Density, Sweep, SweepRow};
pub use suite::{default_suite, run_suite, Profile, Section, Suite, SuiteResult, SweepPlan};
pub use table::{comparison_table, run_plans, run_table_benchmark, Cell, ComparisonTable, Table};
