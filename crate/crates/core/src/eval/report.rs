use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::MetricsReport;
use crate::error::EvalError;

pub const CSV_HEADER: [&str; 5] = ["model", "dataset", "miou", "acc50", "acc70"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    TableText,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" | "text" | "table_text" => Ok(ReportFormat::TableText),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(format!("unknown report format `{s}` (expected table, csv or json)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub model: String,
    pub dataset: String,
    pub report: MetricsReport,
}

/// One CSV row read back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub model: String,
    pub dataset: String,
    pub miou: f64,
    pub acc50: Option<f64>,
    pub acc70: Option<f64>,
}

fn cells(r: &MetricsReport) -> [Option<f64>; 3] {
    [Some(r.miou), r.acc(0.5), r.acc(0.7)]
}

fn ordered_unique<'a>(items: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for s in items {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

fn render_table(entries: &[ReportEntry]) -> String {
    let models = ordered_unique(entries.iter().map(|e| e.model.as_str()));
    let datasets = ordered_unique(entries.iter().map(|e| e.dataset.as_str()));
    let lookup = |m: &str, d: &str| entries.iter().find(|e| e.model == m && e.dataset == d);

    // best value per (dataset, column)
    let best: Vec<[Option<f64>; 3]> = datasets
        .iter()
        .map(|d| {
            let mut b = [None; 3];
            for e in entries.iter().filter(|e| e.dataset == *d) {
                for (slot, v) in b.iter_mut().zip(cells(&e.report)) {
                    if let Some(v) = v {
                        *slot = Some(slot.map_or(v, |s: f64| s.max(v)));
                    }
                }
            }
            b
        })
        .collect();

    let model_w = models.iter().map(|m| m.len()).max().unwrap_or(0).max(5);
    const CELL: usize = 8;
    let group_w = 3 * (CELL + 1) + 2;
    let mut out = String::new();
    out.push_str(&format!("{:<model_w$}", ""));
    for d in &datasets {
        out.push_str(&format!(" | {:^w$}", d, w = group_w - 3));
    }
    out.push('\n');
    out.push_str(&format!("{:<model_w$}", "model"));
    for _ in &datasets {
        out.push_str(" |");
        for h in ["mIoU", "Acc@0.5", "Acc@0.7"] {
            out.push_str(&format!(" {h:>CELL$}"));
        }
    }
    out.push('\n');
    out.push_str(&"-".repeat(model_w + datasets.len() * group_w));
    out.push('\n');
    for m in &models {
        out.push_str(&format!("{m:<model_w$}"));
        for (di, d) in datasets.iter().enumerate() {
            out.push_str(" |");
            let vals = lookup(m, d).map(|e| cells(&e.report)).unwrap_or([None; 3]);
            for (ci, v) in vals.iter().enumerate() {
                let cell = match v {
                    Some(v) => {
                        let mark = if best[di][ci] == Some(*v) && models.len() > 1 { "*" } else { "" };
                        format!("{v:.4}{mark}")
                    }
                    None => "-".to_string(),
                };
                out.push_str(&format!(" {cell:>CELL$}"));
            }
        }
        out.push('\n');
    }
    if models.len() > 1 {
        out.push_str("* best in column\n");
    }
    out
}

fn render_csv(entries: &[ReportEntry]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    let fmt = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_default();
    for e in entries {
        let [miou, a50, a70] = cells(&e.report);
        w.write_record([e.model.clone(), e.dataset.clone(), fmt(miou), fmt(a50), fmt(a70)])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// Renders model/dataset reports in input order. The table marks the best
/// value of every column within a dataset group.
pub fn render_report(entries: &[ReportEntry], format: ReportFormat) -> String {
    match format {
        ReportFormat::TableText => render_table(entries),
        ReportFormat::Csv => render_csv(entries),
        ReportFormat::Json => serde_json::to_string_pretty(entries).expect("report serializes") + "\n",
    }
}

pub fn parse_csv_report(text: &str) -> Result<Vec<CsvRow>, EvalError> {
    let invalid = |message: String| EvalError::Invalid {
        path: "<csv>".into(),
        message,
    };
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| invalid(e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(invalid(format!("unexpected header {header:?}")));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| invalid(e.to_string())))
        .collect()
}
