//! Structured experiment reports with byte-stable exports. Every numeric
//! field is rendered once with shortest-roundtrip formatting, so identical
//! runs export identical bytes and parsing a CSV recovers the exact values.

use std::fmt::Write as _;
use std::time::Duration;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Text,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub experiment: String,
    /// Normalized TOML of the effective config.
    pub config_echo: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub summary: Vec<(String, String)>,
    /// Assertion-class failures observed while running (drives exit code 2).
    pub property_failures: usize,
    /// Wall-clock is diagnostics only and never exported.
    pub wall_clock: Duration,
}

pub fn num(x: f64) -> String {
    if x.is_infinite() {
        "inf".into()
    } else {
        format!("{x}")
    }
}

pub fn ext(v: relax_core::ExtValue) -> String {
    match v.value() {
        Some(x) => num(x),
        None => "inf".into(),
    }
}

impl ExperimentReport {
    pub fn export(&self, format: ExportFormat) -> String {
        match format {
            ExportFormat::Csv => self.to_csv(),
            ExportFormat::Text => self.to_text(),
        }
    }

    fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# relax report v{VERSION}");
        let _ = writeln!(out, "# experiment: {}", self.experiment);
        for line in self.config_echo.lines() {
            let _ = writeln!(out, "# config: {line}");
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        for (k, v) in &self.summary {
            let _ = writeln!(out, "# summary: {k}={v}");
        }
        let _ = writeln!(out, "# property_failures: {}", self.property_failures);
        out
    }

    fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "relax report v{VERSION}  experiment={}",
            self.experiment
        );
        let _ = writeln!(out, "-- config --");
        out.push_str(&self.config_echo);
        let _ = writeln!(out, "-- rows ({}) --", self.rows.len());
        let _ = writeln!(out, "{}", self.columns.join("\t"));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join("\t"));
        }
        let _ = writeln!(out, "-- summary --");
        for (k, v) in &self.summary {
            let _ = writeln!(out, "{k} = {v}");
        }
        let _ = writeln!(out, "property_failures = {}", self.property_failures);
        out
    }
}

/// Parse the data section of an exported CSV back into numeric fields
/// (comment lines skipped). Used by tests to verify lossless round trips.
pub fn parse_csv_rows(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<String> = lines
        .next()
        .map(|h| h.split(',').map(str::to_string).collect())
        .unwrap_or_default();
    let rows = lines
        .map(|l| {
            l.split(',')
                .map(|t| {
                    if t == "inf" {
                        f64::INFINITY
                    } else {
                        t.parse().unwrap_or(f64::NAN)
                    }
                })
                .collect()
        })
        .collect();
    (header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_exports_header_only() {
        let report = ExperimentReport {
            experiment: "growth".into(),
            config_echo: "seed = 0\n".into(),
            columns: vec!["idx".into(), "value".into()],
            rows: vec![],
            summary: vec![],
            property_failures: 0,
            wall_clock: Duration::ZERO,
        };
        let csv = report.export(ExportFormat::Csv);
        let (header, rows) = parse_csv_rows(&csv);
        assert_eq!(header, vec!["idx", "value"]);
        assert!(rows.is_empty());
    }

    #[test]
    fn csv_round_trip_recovers_values() {
        let values = [1.0, -0.25, 1.0 / 3.0, 2.0_f64.powf(-2.0 / 3.0), 1e-17];
        let report = ExperimentReport {
            experiment: "envelope".into(),
            config_echo: String::new(),
            columns: vec!["v".into()],
            rows: values.iter().map(|v| vec![num(*v)]).collect(),
            summary: vec![("n".into(), "5".into())],
            property_failures: 0,
            wall_clock: Duration::ZERO,
        };
        let (_, rows) = parse_csv_rows(&report.export(ExportFormat::Csv));
        for (row, expect) in rows.iter().zip(values) {
            assert_eq!(row[0], expect, "shortest round trip must be exact");
        }
    }
}
