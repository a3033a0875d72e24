//! Benchmark reports: a category × policy text table with a pooled Total
//! row, and a flat CSV.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stability_sim::BenchmarkResults;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("row {row}: successes {successes} exceed trials {trials}")]
    Inconsistent { row: usize, successes: usize, trials: usize },
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub policy: String,
    pub category: String,
    pub trials: usize,
    pub successes: usize,
    pub rate: Option<f64>,
}

/// Policy and category order plus the per-cell counts.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Report {
    pub policies: Vec<String>,
    pub categories: Vec<String>,
    pub rows: Vec<ReportRow>,
}

fn rate(successes: usize, trials: usize) -> Option<f64> {
    (trials > 0).then(|| successes as f64 / trials as f64)
}

/// Whole-percent rendering; `n/a` when nothing was attempted.
pub fn format_rate(successes: usize, trials: usize) -> String {
    match rate(successes, trials) {
        Some(r) => format!("{:.0}%", r * 100.0),
        None => "n/a".into(),
    }
}

fn push_unique(list: &mut Vec<String>, item: &str) {
    if !list.iter().any(|x| x == item) {
        list.push(item.to_string());
    }
}

impl Report {
    pub fn from_results(results: &BenchmarkResults) -> Self {
        let rows = results
            .cells
            .iter()
            .map(|c| ReportRow {
                policy: c.policy.name().to_string(),
                category: c.category.clone(),
                trials: c.trials,
                successes: c.successes,
                rate: c.rate(),
            })
            .collect();
        Self {
            policies: results.policies.iter().map(|p| p.name().to_string()).collect(),
            categories: results.categories.clone(),
            rows,
        }
    }

    /// Reads rows written by [`Report::write_csv`]; order of first
    /// appearance fixes the policy and category order.
    pub fn from_csv(reader: impl Read) -> Result<Self, ReportError> {
        let mut report = Report::default();
        for (i, row) in csv::Reader::from_reader(reader).deserialize::<ReportRow>().enumerate() {
            let mut row = row?;
            if row.successes > row.trials {
                return Err(ReportError::Inconsistent {
                    row: i + 1,
                    successes: row.successes,
                    trials: row.trials,
                });
            }
            row.rate = rate(row.successes, row.trials);
            push_unique(&mut report.policies, &row.policy);
            push_unique(&mut report.categories, &row.category);
            report.rows.push(row);
        }
        Ok(report)
    }

    /// Pooled counts over all rows for `(policy, category)`.
    pub fn counts(&self, policy: &str, category: &str) -> (usize, usize) {
        self.rows
            .iter()
            .filter(|r| r.policy == policy && r.category == category)
            .fold((0, 0), |(s, n), r| (s + r.successes, n + r.trials))
    }

    /// Pooled successes and trials across categories; the Total row is the
    /// aggregate rate, not an average of row percentages.
    pub fn total(&self, policy: &str) -> (usize, usize) {
        self.rows
            .iter()
            .filter(|r| r.policy == policy)
            .fold((0, 0), |(s, n), r| (s + r.successes, n + r.trials))
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_writer(writer);
        for policy in &self.policies {
            for category in &self.categories {
                let (successes, trials) = self.counts(policy, category);
                w.serialize(ReportRow {
                    policy: policy.clone(),
                    category: category.clone(),
                    trials,
                    successes,
                    rate: rate(successes, trials),
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    /// Text table: one row per category, one column per policy, then a
    /// Total row.
    pub fn render_table(&self) -> String {
        let mut header = vec!["Category".to_string()];
        header.extend(self.policies.iter().cloned());
        let mut rows: Vec<Vec<String>> = self
            .categories
            .iter()
            .map(|c| {
                let mut row = vec![c.clone()];
                row.extend(self.policies.iter().map(|p| {
                    let (s, n) = self.counts(p, c);
                    format_rate(s, n)
                }));
                row
            })
            .collect();
        let mut total = vec!["Total".to_string()];
        if self.policies.is_empty() {
            total.push(format_rate(0, 0));
            header.push("-".into());
        } else {
            total.extend(self.policies.iter().map(|p| {
                let (s, n) = self.total(p);
                format_rate(s, n)
            }));
        }
        rows.push(total);

        let widths: Vec<usize> = (0..header.len())
            .map(|i| {
                rows.iter()
                    .chain(std::iter::once(&header))
                    .map(|r| r.get(i).map_or(0, |s| s.chars().count()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    if i == 0 {
                        format!("{s:<w$}", w = widths[i])
                    } else {
                        format!("{s:>w$}", w = widths[i])
                    }
                })
                .collect();
            parts.join(" | ").trim_end().to_string()
        };
        let rule: String = widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-");
        let mut out = vec![line(&header), rule.clone()];
        let n = rows.len();
        for (i, r) in rows.iter().enumerate() {
            if i + 1 == n {
                out.push(rule.clone());
            }
            out.push(line(r));
        }
        out.join("\n") + "\n"
    }
}
