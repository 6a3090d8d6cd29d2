//! JSON report helpers. Reports carry no timestamps, so a rerun with the
//! same configuration and seed writes identical bytes.

use std::path::Path;

use serde_json::{json, Value};

use crate::config::Resolved;
use crate::error::{CliError, CliResult};

/// Library version recorded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Finite values as numbers, others as `"+inf"`, `"-inf"` or `"nan"`.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        json!("nan")
    } else if x > 0.0 {
        json!("+inf")
    } else {
        json!("-inf")
    }
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

/// A number with the method that produced it.
pub fn measured(value: f64, method: &str, error_estimate: f64) -> Value {
    json!({ "value": num(value), "method": method, "error_estimate": num(error_estimate) })
}

/// Configuration hash, seed, version and, when data were read, the data
/// file's hash.
pub fn provenance(run: &Resolved, data_sha256: Option<&str>) -> Value {
    json!({
        "tool": "blockg",
        "version": VERSION,
        "config_hash": run.hash,
        "seed": run.config.seed,
        "mode": run.config.mode,
        "orthogonalized": run.config.orthogonalize,
        "data_sha256": data_sha256,
    })
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::io(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}
