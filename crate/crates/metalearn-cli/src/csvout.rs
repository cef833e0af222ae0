//! CSV emission with a stable schema: UTF-8, LF line endings, `.` decimal
//! separator, reals at 17 significant digits.

use std::io::Write;

use metalearn::ExperimentRecord;

pub const BASE_HEADER: [&str; 9] = [
    "method", "lambda", "T", "n", "d", "seed", "test_mse", "ev_pct", "wall_ms",
];

/// 17 significant digits, scientific notation.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Result rows plus optional command-specific trailing columns.
pub struct CsvTable {
    extra_columns: Vec<&'static str>,
    rows: Vec<(ExperimentRecord, Vec<f64>)>,
}

impl CsvTable {
    pub fn new(extra_columns: &[&'static str]) -> Self {
        Self {
            extra_columns: extra_columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, record: ExperimentRecord, extra: Vec<f64>) {
        assert_eq!(extra.len(), self.extra_columns.len(), "ragged CSV row");
        assert!(record.test_mse >= 0.0 && record.wall_ms >= 0.0);
        self.rows.push((record, extra));
    }

    pub fn write_to(&self, out: &mut dyn Write) -> std::io::Result<()> {
        let mut header: Vec<&str> = BASE_HEADER.to_vec();
        header.extend(&self.extra_columns);
        out.write_all(header.join(",").as_bytes())?;
        out.write_all(b"\n")?;
        for (record, extra) in &self.rows {
            let mut fields = vec![
                record.method.as_str().to_string(),
                fmt_real(record.lambda),
                record.tasks.to_string(),
                record.samples.to_string(),
                record.dim.to_string(),
                record.seed.to_string(),
                fmt_real(record.test_mse),
                fmt_real(record.ev_pct),
                fmt_real(record.wall_ms),
            ];
            fields.extend(extra.iter().map(|&v| fmt_real(v)));
            out.write_all(fields.join(",").as_bytes())?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}
