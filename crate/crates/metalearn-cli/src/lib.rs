//! Experiment drivers behind the `metalearn` binary, exposed as a library
//! so the acceptance suite and fuzz targets can call them directly.

pub mod check;
pub mod csvout;
pub mod gridspec;
pub mod schools;
pub mod synth;
pub mod timing;

use metalearn::{ExperimentRecord, Method};

use crate::csvout::CsvTable;

/// Trajectory-style records (synth trajectory, schools) use the base schema.
pub fn trajectory_table(records: Vec<ExperimentRecord>) -> CsvTable {
    let mut table = CsvTable::new(&[]);
    for record in records {
        table.push(record, vec![]);
    }
    table
}

/// Grid cells: per-replicate rows for both methods, with the per-replicate
/// improvement and the per-cell aggregate repeated on every row.
pub fn grid_table(cells: Vec<synth::GridCell>) -> CsvTable {
    let mut table = CsvTable::new(&[
        "improvement_pct",
        "improvement_mean_pct",
        "improvement_std_pct",
    ]);
    for cell in cells {
        for (_, online, itl, improvement) in cell.replicates {
            for record in [itl, online] {
                table.push(
                    record,
                    vec![
                        improvement,
                        cell.improvement_mean_pct,
                        cell.improvement_std_pct,
                    ],
                );
            }
        }
    }
    table
}

/// Timing cells: one online and one batch row per cell, measured wall time
/// in the base schema's wall_ms column.
pub fn timing_table(cells: Vec<timing::TimingCell>) -> CsvTable {
    let mut table = CsvTable::new(&[]);
    for cell in cells {
        debug_assert_eq!(cell.online.method, Method::OnlineLtl);
        debug_assert_eq!(cell.batch.method, Method::BatchLtl);
        table.push(cell.online, vec![]);
        table.push(cell.batch, vec![]);
    }
    table
}
