//! Output writers: trajectory CSV, JSON-lines logs and sweep summaries.
//!
//! Trajectory CSV header: `t`, each plant state, each plant input, the
//! flow KPIs (`throughput_rate`, `input_feed_rate`, `output_yield`) when the
//! plant reports boundary flows, then `<agent>_u`, `<agent>_seen` and
//! `<agent>_staleness` per agent. Missing values are written as `NaN`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::experiment::ExperimentResult;
use crate::sim::Trajectory;

pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut w: W) -> io::Result<()> {
    writeln!(w, "{}", traj.columns.join(","))?;
    let mut line = String::new();
    for row in &traj.rows {
        line.clear();
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Writes each item as one JSON object per line.
pub fn write_jsonl<W: Write, S: Serialize>(items: &[S], mut w: W) -> io::Result<()> {
    for it in items {
        serde_json::to_writer(&mut w, it).map_err(io::Error::other)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// One sweep/batch row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub name: String,
    pub seed: u64,
    pub verdict: String,
    pub exit_code: i32,
    pub fraction_violating: f64,
    pub violation_integral: f64,
    pub shutdown_events: usize,
    pub p_min: Option<f64>,
    pub t_dip: Option<f64>,
    pub band_exit: Option<f64>,
    pub band_reentry: Option<f64>,
    pub t_recover: Option<f64>,
    pub restoration_ratio: Option<f64>,
    pub config_hash: String,
}

impl SummaryRow {
    pub fn from_result(label: impl Into<String>, r: &ExperimentResult) -> Self {
        let d = r.dire.as_ref();
        Self {
            label: label.into(),
            name: r.name.clone(),
            seed: r.seed,
            verdict: r.verdict.label().to_string(),
            exit_code: r.verdict.exit_code(),
            fraction_violating: r.blast.fraction_violating,
            violation_integral: r.blast.violation_integral,
            shutdown_events: r.blast.shutdown_events,
            p_min: d.map(|d| d.p_min),
            t_dip: d.map(|d| d.t_dip),
            band_exit: d.and_then(|d| d.landmarks.band_exit),
            band_reentry: d.and_then(|d| d.landmarks.band_reentry),
            t_recover: d.and_then(|d| d.t_recover),
            restoration_ratio: d.and_then(|d| d.restoration_ratio),
            config_hash: r.config_hash.clone(),
        }
    }

    /// An error row for a spec that failed to run.
    pub fn error(label: impl Into<String>, name: &str, seed: u64) -> Self {
        Self {
            label: label.into(),
            name: name.to_string(),
            seed,
            verdict: "error".into(),
            exit_code: 1,
            fraction_violating: f64::NAN,
            violation_integral: f64::NAN,
            shutdown_events: 0,
            p_min: None,
            t_dip: None,
            band_exit: None,
            band_reentry: None,
            t_recover: None,
            restoration_ratio: None,
            config_hash: String::new(),
        }
    }

    fn cells(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        vec![
            self.label.clone(),
            self.seed.to_string(),
            self.verdict.clone(),
            format!("{:.4}", self.fraction_violating),
            format!("{:.6}", self.violation_integral),
            self.shutdown_events.to_string(),
            opt(self.p_min),
            opt(self.t_dip),
            opt(self.band_exit),
            opt(self.band_reentry),
            opt(self.t_recover),
            opt(self.restoration_ratio),
        ]
    }
}

const HEADER: [&str; 12] = [
    "label",
    "seed",
    "verdict",
    "fraction_violating",
    "violation_integral",
    "shutdown_events",
    "p_min",
    "t_dip",
    "band_exit",
    "band_reentry",
    "t_recover",
    "restoration_ratio",
];

/// Aligned plain-text table.
pub fn render_table(rows: &[SummaryRow]) -> String {
    let cells: Vec<Vec<String>> = rows.iter().map(|r| r.cells()).collect();
    let mut widths: Vec<usize> = HEADER.iter().map(|h| h.len()).collect();
    for r in &cells {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let fmt_row = |out: &mut String, r: &[String]| {
        let line: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    };
    fmt_row(&mut out, &HEADER.map(String::from));
    for r in &cells {
        fmt_row(&mut out, r);
    }
    out
}

/// Full-precision CSV with the table's columns.
pub fn render_csv(rows: &[SummaryRow]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = HEADER.join(",");
    out.push('\n');
    for r in rows {
        let fields = [
            r.label.clone(),
            r.seed.to_string(),
            r.verdict.clone(),
            r.fraction_violating.to_string(),
            r.violation_integral.to_string(),
            r.shutdown_events.to_string(),
            opt(r.p_min),
            opt(r.t_dip),
            opt(r.band_exit),
            opt(r.band_reentry),
            opt(r.t_recover),
            opt(r.restoration_ratio),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn render_json(rows: &[SummaryRow]) -> String {
    let mut out = Vec::new();
    write_jsonl(rows, &mut out).expect("in-memory write");
    String::from_utf8(out).expect("utf-8 json")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj() -> Trajectory {
        Trajectory { columns: vec!["t".into(), "x1".into()], rows: vec![vec![0.0, 1.5], vec![1.0, f64::NAN]] }
    }

    #[test]
    fn csv_layout() {
        let mut out = Vec::new();
        write_trajectory_csv(&traj(), &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "t,x1\n0,1.5\n1,NaN\n");
    }

    #[test]
    fn csv_round_trips_floats() {
        let v = 0.1 + 0.2;
        let t = Trajectory { columns: vec!["t".into()], rows: vec![vec![v]] };
        let mut out = Vec::new();
        write_trajectory_csv(&t, &mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        let back: f64 = s.lines().nth(1).unwrap().parse().unwrap();
        assert_eq!(back.to_bits(), v.to_bits());
    }

    #[test]
    fn empty_table_has_header_only() {
        assert_eq!(render_table(&[]).lines().count(), 1);
        assert_eq!(render_csv(&[]).lines().count(), 1);
        assert_eq!(render_json(&[]), "");
    }

    #[test]
    fn table_columns_align() {
        let rows = vec![SummaryRow::error("a", "x", 1), SummaryRow::error("longer-label", "x", 2)];
        let t = render_table(&rows);
        let starts: Vec<usize> = t.lines().map(|l| l.find("error").unwrap_or(usize::MAX)).skip(1).collect();
        assert_eq!(starts[0], starts[1]);
        let j = render_json(&rows);
        assert_eq!(j.lines().count(), 2);
    }
}
