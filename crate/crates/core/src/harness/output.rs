use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::methods::StepRecord;

/// Aggregate of one (dataset, shift, method) over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub shift: String,
    pub method: String,
    /// Successful runs aggregated.
    pub runs: usize,
    pub failures: usize,
    /// Percent.
    pub mean_acc: f64,
    pub std_acc: f64,
    /// Seconds of update time per run; `None` unless timing was requested.
    pub mean_wall_sec: Option<f64>,
    pub std_wall_sec: Option<f64>,
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Per-step CSV: `t,accuracy,eta,shift_e,wall_nanos,est_0..est_{C-1}`.
/// `wall_nanos` is left blank unless `timing` is set so that repeated runs
/// produce identical bytes.
pub fn steps_csv(records: &[StepRecord], timing: bool) -> Result<Vec<u8>> {
    let classes = records.first().map_or(0, |r| r.estimated_dist.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["t", "accuracy", "eta", "shift_e", "wall_nanos"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..classes).map(|c| format!("est_{c}")));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.t.to_string(),
            format!("{}", r.accuracy),
            opt(r.eta),
            opt(r.shift_e),
            if timing {
                r.wall_nanos.to_string()
            } else {
                String::new()
            },
        ];
        row.extend(r.estimated_dist.iter().map(|v| format!("{v}")));
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::structural(e.to_string()))
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record([
            "dataset",
            "shift",
            "method",
            "runs",
            "failures",
            "mean_acc",
            "std_acc",
            "mean_wall_sec",
            "std_wall_sec",
        ])?;
    }
    w.into_inner().map_err(|e| Error::structural(e.to_string()))
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(bytes.as_slice())
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

fn cell(row: &SummaryRow) -> String {
    if row.runs == 0 {
        return "failed".to_string();
    }
    format!("{:.2}±{:.2}", row.mean_acc, row.std_acc)
}

/// Markdown tables, one per dataset: shifts as rows, methods as columns,
/// `mean±std` cells with the best mean in each row in bold (all ties bold).
/// Methods and shifts keep their first-seen order.
pub fn render_summary(rows: &[SummaryRow]) -> String {
    let mut datasets: Vec<&str> = Vec::new();
    for r in rows {
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
    }
    let mut out = String::new();
    for dataset in datasets {
        let sub: Vec<&SummaryRow> = rows.iter().filter(|r| r.dataset == dataset).collect();
        let mut shifts: Vec<&str> = Vec::new();
        let mut methods: Vec<&str> = Vec::new();
        for r in &sub {
            if !shifts.contains(&r.shift.as_str()) {
                shifts.push(&r.shift);
            }
            if !methods.contains(&r.method.as_str()) {
                methods.push(&r.method);
            }
        }
        out.push_str(&format!(
            "## {dataset}\n\nMean accuracy (%) over seeds, mean±std.\n\n"
        ));
        out.push_str("| shift |");
        for m in &methods {
            out.push_str(&format!(" {m} |"));
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(methods.len()));
        out.push('\n');
        for shift in &shifts {
            let found: Vec<Option<&SummaryRow>> = methods
                .iter()
                .map(|m| {
                    sub.iter()
                        .find(|r| r.shift == *shift && r.method == *m)
                        .copied()
                })
                .collect();
            let best = found
                .iter()
                .flatten()
                .filter(|r| r.runs > 0)
                .map(|r| r.mean_acc)
                .fold(f64::NEG_INFINITY, f64::max);
            out.push_str(&format!("| {shift} |"));
            for f in found {
                let text = match f {
                    None => "".to_string(),
                    Some(r) if r.runs > 0 && r.mean_acc == best => format!("**{}**", cell(r)),
                    Some(r) => cell(r),
                };
                out.push_str(&format!(" {text} |"));
            }
            out.push('\n');
        }
        let timed: Vec<&&SummaryRow> = sub.iter().filter(|r| r.mean_wall_sec.is_some()).collect();
        if !timed.is_empty() {
            out.push_str("\nUpdate wall time per run (sec.), mean over shifts and seeds.\n\n| method | wall sec |\n|---|---|\n");
            for m in &methods {
                let walls: Vec<f64> = timed
                    .iter()
                    .filter(|r| r.method == *m)
                    .filter_map(|r| r.mean_wall_sec)
                    .collect();
                if !walls.is_empty() {
                    out.push_str(&format!("| {m} | {:.4} |\n", super::stats::mean(&walls)));
                }
            }
        }
        out.push('\n');
    }
    out
}
