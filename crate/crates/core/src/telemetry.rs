//! Per-epoch telemetry rows and their CSV form.
//!
//! Column order is fixed:
//! `epoch, train_loss, test_accuracy, avg_step, avg_initial_step,
//! avg_grad_norm, backtracks_total, value_evals, grad_evals, epoch_seconds`.
//! Floats are written with 17 significant digits so a parse reproduces the
//! rows bit for bit. A missing test accuracy is an empty field.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const COLUMNS: [&str; 10] = [
    "epoch",
    "train_loss",
    "test_accuracy",
    "avg_step",
    "avg_initial_step",
    "avg_grad_norm",
    "backtracks_total",
    "value_evals",
    "grad_evals",
    "epoch_seconds",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRow {
    pub epoch: u64,
    pub train_loss: f64,
    pub test_accuracy: Option<f64>,
    pub avg_step: f64,
    pub avg_initial_step: f64,
    pub avg_grad_norm: f64,
    pub backtracks_total: u64,
    /// Cumulative value evaluations, line search plus telemetry.
    pub value_evals: u64,
    /// Cumulative gradient evaluations.
    pub grad_evals: u64,
    pub epoch_seconds: f64,
}

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("bad telemetry header: expected {expected:?}, found {found:?}")]
    Header { expected: Vec<String>, found: Vec<String> },
    #[error("line {line}: {message}")]
    Field { line: u64, message: String },
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub fn write_csv<W: Write>(out: W, rows: &[TelemetryRow]) -> Result<(), TelemetryError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in rows {
        w.write_record([
            r.epoch.to_string(),
            fmt_f64(r.train_loss),
            r.test_accuracy.map(fmt_f64).unwrap_or_default(),
            fmt_f64(r.avg_step),
            fmt_f64(r.avg_initial_step),
            fmt_f64(r.avg_grad_norm),
            r.backtracks_total.to_string(),
            r.value_evals.to_string(),
            r.grad_evals.to_string(),
            fmt_f64(r.epoch_seconds),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<TelemetryRow>, TelemetryError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != COLUMNS {
        return Err(TelemetryError::Header {
            expected: COLUMNS.iter().map(|s| s.to_string()).collect(),
            found: header,
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(i).unwrap_or("");
        let float = |i: usize| {
            field(i).parse::<f64>().map_err(|e| TelemetryError::Field {
                line,
                message: format!("{}: {e}", COLUMNS[i]),
            })
        };
        let int = |i: usize| {
            field(i).parse::<u64>().map_err(|e| TelemetryError::Field {
                line,
                message: format!("{}: {e}", COLUMNS[i]),
            })
        };
        rows.push(TelemetryRow {
            epoch: int(0)?,
            train_loss: float(1)?,
            test_accuracy: if field(2).is_empty() { None } else { Some(float(2)?) },
            avg_step: float(3)?,
            avg_initial_step: float(4)?,
            avg_grad_norm: float(5)?,
            backtracks_total: int(6)?,
            value_evals: int(7)?,
            grad_evals: int(8)?,
            epoch_seconds: float(9)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(loss: f64, acc: Option<f64>) -> TelemetryRow {
        TelemetryRow {
            epoch: 3,
            train_loss: loss,
            test_accuracy: acc,
            avg_step: 0.1 + 0.2,
            avg_initial_step: 1.0 / 3.0,
            avg_grad_norm: 2.5e-300,
            backtracks_total: 7,
            value_evals: 120,
            grad_evals: 40,
            epoch_seconds: 0.001234,
        }
    }

    #[test]
    fn header_and_empty_accuracy() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &[row(1.0, None)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), COLUMNS.join(","));
        assert!(lines.next().unwrap().contains(",,"));
    }

    #[test]
    fn rejects_reordered_header() {
        let text = "train_loss,epoch\n1,2\n";
        assert!(matches!(read_csv(text.as_bytes()), Err(TelemetryError::Header { .. })));
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(loss in any::<f64>().prop_filter("finite", |x| x.is_finite()),
                               acc in proptest::option::of(0.0f64..1.0)) {
            let rows = vec![row(loss, acc), row(loss / 3.0, None)];
            let mut buf = Vec::new();
            write_csv(&mut buf, &rows).unwrap();
            let back = read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back, rows);
        }
    }
}
