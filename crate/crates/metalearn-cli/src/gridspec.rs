//! Parsing of the `--lambda-grid min,max,count` flag.

use metalearn::LambdaGrid;

/// Parses `min,max,count` into a log-spaced grid. A count of 1 requires
/// `min == max` and yields the singleton grid. Never panics on malformed
/// input; all defects come back as usage-error strings.
pub fn parse_lambda_grid(spec: &str) -> Result<LambdaGrid, String> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 3 {
        return Err(format!(
            "expected `min,max,count`, got `{spec}` with {} fields",
            parts.len()
        ));
    }
    let min: f64 = parts[0]
        .trim()
        .parse()
        .map_err(|_| format!("invalid grid minimum `{}`", parts[0]))?;
    let max: f64 = parts[1]
        .trim()
        .parse()
        .map_err(|_| format!("invalid grid maximum `{}`", parts[1]))?;
    let count: usize = parts[2]
        .trim()
        .parse()
        .map_err(|_| format!("invalid grid count `{}`", parts[2]))?;
    if !(min.is_finite() && max.is_finite() && min > 0.0) {
        return Err(format!("grid endpoints must be positive and finite, got [{min}, {max}]"));
    }
    if count == 0 {
        return Err("grid count must be at least 1".to_string());
    }
    if count == 1 {
        if min != max {
            return Err(format!(
                "a single-value grid needs min == max, got [{min}, {max}]"
            ));
        }
        return LambdaGrid::new(vec![min]).map_err(|e| e.to_string());
    }
    LambdaGrid::log_spaced(min, max, count).map_err(|e| e.to_string())
}
