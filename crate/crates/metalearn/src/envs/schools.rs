//! Ingestion of the Schools examination benchmark.
//!
//! Expected CSV contract: UTF-8, header `task_id,y,x1,...,x26`, one row per
//! student, numeric cells. Rows sharing a `task_id` form one task; tasks are
//! kept in first-appearance order before the seeded partition shuffles them.
//!
//! Preprocessing: all inputs are rescaled by the global maximum row norm so
//! every `||x|| <= 1`; outputs are min-max rescaled to [0, 1] using
//! statistics from the training tasks only, so held-out tasks leak nothing
//! into the stream the learners see.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_chacha::{rand_core::SeedableRng, ChaCha20Rng};

use super::TaskSplit;
use crate::error::{Error, Result};
use crate::types::TaskDataset;

/// Input dimension of the Schools data.
pub const SCHOOLS_DIM: usize = 26;
/// Expected number of tasks; other counts are tolerated with a warning.
pub const SCHOOLS_TASK_COUNT: usize = 139;
/// Fewer tasks than this cannot be partitioned into train/validation/test.
const MIN_TASKS: usize = 3;

/// One task as it appears in the file, before any normalization.
#[derive(Debug, Clone)]
pub struct RawTask {
    pub task_id: String,
    pub inputs: Vec<[f64; SCHOOLS_DIM]>,
    pub outputs: Vec<f64>,
}

/// The partitioned benchmark: training tasks feed the learners as whole
/// datasets; validation and test tasks are split in half so representations
/// can be fitted on one part and scored on the other.
#[derive(Debug, Clone)]
pub struct SchoolsData {
    pub train: Vec<TaskDataset>,
    pub validation: Vec<TaskSplit>,
    pub test: Vec<TaskSplit>,
}

/// Parses the raw CSV without touching the filesystem. Never panics on
/// malformed input; every defect maps to a `SchemaError` carrying the
/// 1-based record number.
pub fn parse_schools_csv(reader: impl Read, origin: &str) -> Result<Vec<RawTask>> {
    let schema_err = |record: u64, message: String| Error::SchemaError {
        path: origin.to_string(),
        record,
        message,
    };

    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);

    let headers = csv_reader
        .headers()
        .map_err(|e| schema_err(0, e.to_string()))?
        .clone();
    if headers.len() != SCHOOLS_DIM + 2 {
        return Err(schema_err(
            0,
            format!("expected {} columns, found {}", SCHOOLS_DIM + 2, headers.len()),
        ));
    }
    if headers.get(0) != Some("task_id") || headers.get(1) != Some("y") {
        return Err(schema_err(
            0,
            "header must start with `task_id,y`".to_string(),
        ));
    }
    for (k, name) in headers.iter().skip(2).enumerate() {
        let expected = format!("x{}", k + 1);
        if name != expected {
            return Err(schema_err(
                0,
                format!("feature column {} is `{name}`, expected `{expected}`", k + 3),
            ));
        }
    }

    let mut order: Vec<String> = Vec::new();
    let mut tasks: std::collections::HashMap<String, RawTask> = std::collections::HashMap::new();

    for (index, record) in csv_reader.records().enumerate() {
        let record_no = index as u64 + 1;
        let record = record.map_err(|e| schema_err(record_no, e.to_string()))?;
        let task_id = record.get(0).unwrap_or("").to_string();
        if task_id.is_empty() {
            return Err(schema_err(record_no, "empty task_id".to_string()));
        }

        let parse_cell = |cell: &str, column: &str| -> Result<f64> {
            let value: f64 = cell.parse().map_err(|_| {
                schema_err(record_no, format!("non-numeric cell `{cell}` in column {column}"))
            })?;
            if !value.is_finite() {
                return Err(schema_err(
                    record_no,
                    format!("non-finite value in column {column}"),
                ));
            }
            Ok(value)
        };

        let y = parse_cell(record.get(1).unwrap_or(""), "y")?;
        let mut x = [0.0; SCHOOLS_DIM];
        for (k, slot) in x.iter_mut().enumerate() {
            *slot = parse_cell(record.get(k + 2).unwrap_or(""), &format!("x{}", k + 1))?;
        }

        let task = tasks.entry(task_id.clone()).or_insert_with(|| {
            order.push(task_id.clone());
            RawTask {
                task_id,
                inputs: Vec::new(),
                outputs: Vec::new(),
            }
        });
        task.inputs.push(x);
        task.outputs.push(y);
    }

    Ok(order
        .into_iter()
        .map(|id| tasks.remove(&id).expect("id recorded on insertion"))
        .collect())
}

/// Normalizes and partitions parsed tasks: 25% train, 50% validation,
/// remainder test, shuffled by `split_seed`; validation and test tasks are
/// then halved into per-task train/test splits.
pub fn process_schools(raw: Vec<RawTask>, split_seed: u64) -> Result<SchoolsData> {
    let count = raw.len();
    if count < MIN_TASKS {
        return Err(Error::TaskCountMismatch(count));
    }
    if count != SCHOOLS_TASK_COUNT {
        log::warn!("expected {SCHOOLS_TASK_COUNT} tasks, found {count}; continuing");
    }

    let max_norm = raw
        .iter()
        .flat_map(|t| t.inputs.iter())
        .map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0_f64, f64::max);
    let input_scale = if max_norm > 0.0 { 1.0 / max_norm } else { 1.0 };

    let mut indices: Vec<usize> = (0..count).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(split_seed);
    indices.shuffle(&mut rng);
    let n_train = count / 4;
    let n_validation = count / 2;
    let train_ids = &indices[..n_train];
    let validation_ids = &indices[n_train..n_train + n_validation];
    let test_ids = &indices[n_train + n_validation..];

    // Output rescaling statistics come from the training tasks only.
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for &i in train_ids {
        for &y in &raw[i].outputs {
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !(y_max - y_min).is_finite() || y_max - y_min <= 0.0 {
        return Err(Error::SchemaError {
            path: "<schools>".to_string(),
            record: 0,
            message: "training tasks have constant outputs; cannot rescale".to_string(),
        });
    }
    let y_scale = 1.0 / (y_max - y_min);

    let build = |task: &RawTask| -> Result<TaskDataset> {
        let n = task.inputs.len();
        let mut inputs = DMatrix::zeros(n, SCHOOLS_DIM);
        for (i, x) in task.inputs.iter().enumerate() {
            for (j, &v) in x.iter().enumerate() {
                inputs[(i, j)] = v * input_scale;
            }
        }
        let outputs = DVector::from_iterator(
            n,
            task.outputs.iter().map(|&y| (y - y_min) * y_scale),
        );
        TaskDataset::new(inputs, outputs, false)
    };

    let mut train = Vec::with_capacity(train_ids.len());
    for &i in train_ids {
        train.push(build(&raw[i])?);
    }

    // Per-task sample halving uses one child stream per task, keyed by the
    // task's position in the file.
    let halve = |i: usize| -> Result<Option<TaskSplit>> {
        let task = &raw[i];
        let n = task.inputs.len();
        if n < 2 {
            log::warn!(
                "task `{}` has a single sample and cannot be split; skipping",
                task.task_id
            );
            return Ok(None);
        }
        let mut sample_rng = ChaCha20Rng::seed_from_u64(split_seed);
        sample_rng.set_stream(1 + i as u64);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut sample_rng);
        let cut = n.div_ceil(2);

        let full = build(task)?;
        let take = |ids: &[usize]| -> Result<TaskDataset> {
            let mut inputs = DMatrix::zeros(ids.len(), SCHOOLS_DIM);
            let mut outputs = DVector::zeros(ids.len());
            for (row, &src) in ids.iter().enumerate() {
                inputs.row_mut(row).copy_from(&full.inputs().row(src));
                outputs[row] = full.outputs()[src];
            }
            TaskDataset::new(inputs, outputs, false)
        };
        Ok(Some(TaskSplit::new(
            take(&order[..cut])?,
            take(&order[cut..])?,
        )?))
    };

    let mut validation = Vec::new();
    for &i in validation_ids {
        if let Some(split) = halve(i)? {
            validation.push(split);
        }
    }
    let mut test = Vec::new();
    for &i in test_ids {
        if let Some(split) = halve(i)? {
            test.push(split);
        }
    }
    if validation.is_empty() || test.is_empty() {
        return Err(Error::TaskCountMismatch(count));
    }

    Ok(SchoolsData {
        train,
        validation,
        test,
    })
}

/// Loads, normalizes, and partitions the Schools CSV.
pub fn load_schools(path: impl AsRef<Path>, split_seed: u64) -> Result<SchoolsData> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::FileNotFound(path.display().to_string()));
    }
    let file = std::fs::File::open(path)?;
    let raw = parse_schools_csv(
        std::io::BufReader::new(file),
        &path.display().to_string(),
    )?;
    process_schools(raw, split_seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fmt::Write as _;

    /// Deterministic synthetic file in the Schools format.
    pub(crate) fn fixture_csv(tasks: usize, rows_per_task: usize) -> String {
        let mut csv = String::from("task_id,y");
        for k in 1..=SCHOOLS_DIM {
            write!(csv, ",x{k}").unwrap();
        }
        csv.push('\n');
        let mut state = 1u64;
        let mut next = || {
            // Small LCG keeps the fixture self-contained.
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64) / (u32::MAX as f64)
        };
        for t in 0..tasks {
            for _ in 0..rows_per_task {
                write!(csv, "school{t},{:.4}", 10.0 + 30.0 * next()).unwrap();
                for _ in 0..SCHOOLS_DIM {
                    write!(csv, ",{:.4}", 4.0 * next() - 2.0).unwrap();
                }
                csv.push('\n');
            }
        }
        csv
    }

    #[test]
    fn parses_and_partitions_fixture() {
        let csv = fixture_csv(12, 8);
        let raw = parse_schools_csv(csv.as_bytes(), "<fixture>").unwrap();
        assert_eq!(raw.len(), 12);
        assert!(raw.iter().all(|t| t.inputs.len() == 8));

        let data = process_schools(raw, 0).unwrap();
        assert_eq!(data.train.len(), 3);
        assert_eq!(data.validation.len(), 6);
        assert_eq!(data.test.len(), 3);

        for z in &data.train {
            assert_eq!(z.dim(), SCHOOLS_DIM);
            for row in z.inputs().row_iter() {
                assert!(row.norm() <= 1.0 + 1e-12);
            }
            for &y in z.outputs().iter() {
                assert!((0.0..=1.0).contains(&y));
            }
        }
        for split in data.validation.iter().chain(&data.test) {
            assert_eq!(split.train.n() + split.test.n(), 8);
        }
    }

    #[test]
    fn partition_is_deterministic_per_seed() {
        let csv = fixture_csv(10, 4);
        let a = process_schools(parse_schools_csv(csv.as_bytes(), "a").unwrap(), 7).unwrap();
        let b = process_schools(parse_schools_csv(csv.as_bytes(), "b").unwrap(), 7).unwrap();
        assert_eq!(a.train[0].inputs(), b.train[0].inputs());

        let c = process_schools(parse_schools_csv(csv.as_bytes(), "c").unwrap(), 8).unwrap();
        let same = a.train[0].inputs() == c.train[0].inputs()
            && a.train[1].inputs() == c.train[1].inputs();
        assert!(!same, "different seeds should shuffle tasks differently");
    }

    #[test]
    fn rejects_wrong_column_count() {
        let err =
            parse_schools_csv("task_id,y,x1\na,1.0,2.0\n".as_bytes(), "<t>").unwrap_err();
        assert!(matches!(err, Error::SchemaError { .. }));
    }

    #[test]
    fn rejects_non_numeric_cell() {
        let mut csv = String::from("task_id,y");
        for k in 1..=SCHOOLS_DIM {
            write!(csv, ",x{k}").unwrap();
        }
        csv.push('\n');
        csv.push_str("a,oops");
        for _ in 0..SCHOOLS_DIM {
            csv.push_str(",0.0");
        }
        csv.push('\n');
        let err = parse_schools_csv(csv.as_bytes(), "<t>").unwrap_err();
        match err {
            Error::SchemaError { record, message, .. } => {
                assert_eq!(record, 1);
                assert!(message.contains("non-numeric"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_too_few_tasks() {
        let csv = fixture_csv(2, 5);
        let raw = parse_schools_csv(csv.as_bytes(), "<t>").unwrap();
        assert!(matches!(
            process_schools(raw, 0),
            Err(Error::TaskCountMismatch(2))
        ));
    }

    #[test]
    fn missing_file_is_reported_with_path() {
        let err = load_schools("/nonexistent/schools.csv", 0).unwrap_err();
        match err {
            Error::FileNotFound(path) => assert!(path.contains("nonexistent")),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
