use std::fmt::Write as _;

use crate::metrics::{EvalReport, REPORT_COLUMNS};

/// Printed under every compare table. Not comparable with desk-scale runs.
pub const REFERENCE_FOOTNOTE: &str =
    "Reference only, not comparable: Original⊗Laplacian early fusion, BLEU-1 0.8402 on SYDNEY.";

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub label: String,
    /// Scores, or the error that stopped the cell.
    pub result: Result<EvalReport, String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

fn cell(v: f64) -> String {
    format!("{v:.4}")
}

impl ReportTable {
    /// For each column, the rows holding the maximum printed value; ties
    /// mark every tied row. FAILED rows never count.
    pub fn column_maxima(&self) -> Vec<Vec<usize>> {
        (0..REPORT_COLUMNS.len())
            .map(|c| {
                let vals: Vec<(usize, String)> = self
                    .rows
                    .iter()
                    .enumerate()
                    .filter_map(|(i, r)| r.result.as_ref().ok().map(|e| (i, cell(e.values()[c]))))
                    .collect();
                let best = vals
                    .iter()
                    .map(|(_, s)| s.parse::<f64>().expect("formatted float"))
                    .fold(f64::NEG_INFINITY, f64::max);
                vals.into_iter()
                    .filter(|(_, s)| s.parse::<f64>().expect("formatted float") == best)
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("config,{}\n", REPORT_COLUMNS.join(","));
        for r in &self.rows {
            s.push_str(&r.label);
            match &r.result {
                Ok(e) => e.values().iter().for_each(|v| {
                    s.push(',');
                    s.push_str(&cell(*v));
                }),
                Err(_) => s.push_str(&",FAILED".repeat(REPORT_COLUMNS.len())),
            }
            s.push('\n');
        }
        s
    }

    /// Markdown table with per-column maxima in bold, failure notes and the
    /// reference footnote.
    pub fn to_markdown(&self) -> String {
        let maxima = self.column_maxima();
        let mut s = String::new();
        let _ = writeln!(s, "| Config | {} |", REPORT_COLUMNS.join(" | "));
        let _ = writeln!(s, "|---|{}", "---|".repeat(REPORT_COLUMNS.len()));
        for (i, r) in self.rows.iter().enumerate() {
            let cells: Vec<String> = match &r.result {
                Ok(e) => e
                    .values()
                    .iter()
                    .enumerate()
                    .map(|(c, v)| {
                        if maxima[c].contains(&i) {
                            format!("**{}**", cell(*v))
                        } else {
                            cell(*v)
                        }
                    })
                    .collect(),
                Err(_) => vec!["FAILED".to_string(); REPORT_COLUMNS.len()],
            };
            let _ = writeln!(s, "| {} | {} |", r.label, cells.join(" | "));
        }
        let failures: Vec<&ReportRow> = self.rows.iter().filter(|r| r.result.is_err()).collect();
        if !failures.is_empty() {
            s.push('\n');
            for r in failures {
                let _ = writeln!(s, "- {} FAILED: {}", r.label, r.result.as_ref().unwrap_err());
            }
        }
        let _ = write!(s, "\n{REFERENCE_FOOTNOTE}\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(b1: f64, cider: f64) -> EvalReport {
        EvalReport {
            bleu1: b1,
            cider,
            ..EvalReport::default()
        }
    }

    fn table() -> ReportTable {
        ReportTable {
            rows: vec![
                ReportRow {
                    label: "original/single".into(),
                    result: Ok(report(0.5, 2.0)),
                },
                ReportRow {
                    label: "laplacian/early".into(),
                    result: Ok(report(0.7, 2.0)),
                },
                ReportRow {
                    label: "laplacian/late".into(),
                    result: Err("boom".into()),
                },
            ],
        }
    }

    #[test]
    fn maxima_marking() {
        let m = table().column_maxima();
        assert_eq!(m[0], vec![1]);
        // all-zero column: both scored rows tie
        assert_eq!(m[1], vec![0, 1]);
        assert_eq!(m[6], vec![0, 1]);
        let md = table().to_markdown();
        assert!(md.contains("| laplacian/early | **0.7000** |"));
        assert!(md.contains("| original/single | 0.5000 |"));
        assert!(md.contains("laplacian/late FAILED: boom"));
        assert!(md.contains("0.8402"));
    }

    #[test]
    fn csv_layout() {
        let csv = table().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "config,BLEU-1,BLEU-2,BLEU-3,BLEU-4,METEOR,ROUGE-L,CIDEr");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("original/single,0.5000,0.0000"));
        assert_eq!(lines[3].matches("FAILED").count(), 7);
    }
}
