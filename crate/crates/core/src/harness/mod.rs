//! Configuration-driven Monte Carlo experiments and their CSV outputs.

pub mod config;
pub mod khat;
pub mod output;
pub mod sweep;
pub mod table2;

pub use config::{BihtSettings, ExperimentConfig, SLOT_DEFINITION, SNR_DEFINITION};
pub use khat::{khat_robustness, KhatRecord, KhatSummary};
pub use output::{write_csv, write_manifest, write_sweep};
pub use sweep::{
    aggregate, emit_bound_overlay, run_sweep, AggregateRow, BoundRow, CellPlan, OptimumRow,
    SweepResult, TrialRecord,
};
pub use table2::{emit_table2, round_sig, write_table2_csv, Table2Row, REFERENCE_ADC_TABLE};
