//! Serialized outputs: the study/sweep CSV and the single-solve document.
//!
//! Float columns use scientific notation with ten significant digits so a
//! fixed config and build produce byte-identical files regardless of thread
//! count or row production order.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::Serialize;

pub const CSV_HEADER: &str = "level,h,epsilon,k,lambda,norm,error,rate";

/// Scientific notation, ten significant digits.
pub fn sci(x: f64) -> String {
    format!("{x:.9e}")
}

#[derive(Debug, Clone)]
pub struct ReportRow {
    pub level: u32,
    pub h: f64,
    pub epsilon: f64,
    pub degree: usize,
    pub lambda: f64,
    pub norm: &'static str,
    pub error: f64,
    /// Empty in the CSV for rows without a coarser neighbour.
    pub rate: Option<f64>,
}

pub fn csv_text(rows: &[ReportRow]) -> String {
    let mut text = String::with_capacity(64 * (rows.len() + 1));
    text.push_str(CSV_HEADER);
    text.push('\n');
    for r in rows {
        let _ = write!(
            text,
            "{},{},{},{},{},{},{},{}",
            r.level,
            sci(r.h),
            sci(r.epsilon),
            r.degree,
            sci(r.lambda),
            r.norm,
            sci(r.error),
            r.rate.map(sci).unwrap_or_default()
        );
        text.push('\n');
    }
    text
}

pub fn write_csv(path: &Path, rows: &[ReportRow]) -> io::Result<()> {
    std::fs::write(path, csv_text(rows))
}

/// A converged field with its solve metadata, written as one JSON document.
#[derive(Debug, Serialize)]
pub struct SolveDocument {
    pub domain: [f64; 2],
    pub ncells: usize,
    pub h: f64,
    pub degree: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub ordinates: Vec<f64>,
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub flux_change: f64,
    pub final_residual: f64,
    /// Modal coefficients indexed [ordinate][cell][mode].
    pub field: Vec<Vec<Vec<f64>>>,
    /// Scalar-flux modal coefficients indexed [cell][mode].
    pub scalar_flux: Vec<Vec<f64>>,
}

pub fn write_json(path: &Path, document: &SolveDocument) -> io::Result<()> {
    let text = serde_json::to_string_pretty(document)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    std::fs::write(path, text + "\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sci_has_ten_significant_digits() {
        assert_eq!(sci(0.25), "2.500000000e-1");
        assert_eq!(sci(9.52e-3), "9.520000000e-3");
        assert_eq!(sci(1.0), "1.000000000e0");
        assert_eq!(sci(2.128508650e-1), "2.128508650e-1");
    }

    #[test]
    fn csv_rows_render_with_empty_missing_rate() {
        let rows = vec![
            ReportRow {
                level: 0,
                h: 0.25,
                epsilon: 1e-3,
                degree: 1,
                lambda: 1.0,
                norm: "l2",
                error: 4.0e-2,
                rate: None,
            },
            ReportRow {
                level: 1,
                h: 0.125,
                epsilon: 1e-3,
                degree: 1,
                lambda: 1.0,
                norm: "l2",
                error: 9.52e-3,
                rate: Some(2.07),
            },
        ];
        let text = csv_text(&rows);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(
            lines[1],
            "0,2.500000000e-1,1.000000000e-3,1,1.000000000e0,l2,4.000000000e-2,"
        );
        assert_eq!(
            lines[2],
            "1,1.250000000e-1,1.000000000e-3,1,1.000000000e0,l2,9.520000000e-3,2.070000000e0"
        );
    }
}
