//! Report tables, the bundled reference dataset, and record-level analyses
//! that feed them.

mod analysis;
mod cells;
mod table;
mod tables;

pub use analysis::{
    cri_ci, cri_from_rows, infer_cell, mixture_ratio_ci, outcomes_from_rows, paired_ratio_ci, per_prompt_means,
    survival_points, CellInference, PromptMean,
};
pub use cells::{find, read_cell_csv, reference_cells, CellRow};
pub use table::{ReportFormat, ReportTable};
pub use tables::{
    cells_table, cri_table, interpret_cri, mixture_cv, provider_table, reconciliation_table, stats_table,
    survival_points_table, Mixture, CENSORED_MARK_PCT,
};
