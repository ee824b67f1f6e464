//! CSV and plain-text rendering of run records.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{HarnessError, Result};
use crate::scenario::RunRecord;

pub const CSV_HEADER: [&str; 9] = [
    "scenario", "delta", "delta_ill", "lambda", "filter", "seed", "armse", "cpu_ms", "failed",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_csv<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let csv_err = |e: csv::Error| HarnessError::Csv(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.scenario.clone(),
            r.delta.to_string(),
            opt(r.delta_ill),
            opt(r.lambda),
            r.filter.clone(),
            r.seed.to_string(),
            r.armse.to_string(),
            r.cpu_ms.to_string(),
            u8::from(r.failed).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::Csv(e.to_string()))
}

/// Writes `records` to `path`.
pub fn emit_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(HarnessError::Runtime("no records to write".into()));
    }
    let io = |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io)?;
    write_csv(records, std::io::BufWriter::new(file))
}

pub fn parse_csv<R: Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(|e| HarnessError::Csv(e.to_string()))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(HarnessError::Csv(format!("unexpected header {header:?}")));
    }
    let num = |s: &str, col: &str| s.parse::<f64>().map_err(|_| HarnessError::Csv(format!("bad {col} `{s}`")));
    let opt_num = |s: &str, col: &str| if s.is_empty() { Ok(None) } else { num(s, col).map(Some) };
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row.map_err(|e| HarnessError::Csv(e.to_string()))?;
        let failed = match &row[8] {
            "0" => false,
            "1" => true,
            other => return Err(HarnessError::Csv(format!("bad failed flag `{other}`"))),
        };
        out.push(RunRecord {
            scenario: row[0].to_string(),
            delta: num(&row[1], "delta")?,
            delta_ill: opt_num(&row[2], "delta_ill")?,
            lambda: opt_num(&row[3], "lambda")?,
            filter: row[4].to_string(),
            seed: row[5].parse().map_err(|_| HarnessError::Csv(format!("bad seed `{}`", &row[5])))?,
            armse: num(&row[6], "armse")?,
            cpu_ms: num(&row[7], "cpu_ms")?,
            failed,
        });
    }
    Ok(out)
}

pub fn read_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let file = std::fs::File::open(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(file)
}

fn point_label(r: &RunRecord) -> String {
    let mut s = format!("{}", r.delta);
    if let Some(d) = r.delta_ill {
        let _ = write!(s, " d={d:e}");
    }
    if let Some(l) = r.lambda {
        let _ = write!(s, " l={l}");
    }
    s
}

/// Table with one line per sweep point and, per filter, the ARMSE (or
/// `fails`) and the mean run time.
pub fn render_table(records: &[RunRecord]) -> String {
    let mut filters: Vec<&str> = Vec::new();
    let mut points: Vec<String> = Vec::new();
    for r in records {
        if !filters.contains(&r.filter.as_str()) {
            filters.push(&r.filter);
        }
        let p = point_label(r);
        if !points.contains(&p) {
            points.push(p);
        }
    }
    let width = filters.iter().map(|f| f.len()).max().unwrap_or(0).max(10);
    let mut out = String::new();
    let _ = write!(out, "{:<22}", "point");
    for f in &filters {
        let _ = write!(out, " {f:>width$} {:>9}", "ms");
    }
    out.push('\n');
    for p in &points {
        let _ = write!(out, "{p:<22}");
        for f in &filters {
            match records.iter().find(|r| r.filter == *f && point_label(r) == *p) {
                Some(r) => {
                    let cell = if r.failed { "fails".to_string() } else { format!("{:.4}", r.armse) };
                    let _ = write!(out, " {cell:>width$} {:>9.2}", r.cpu_ms);
                }
                None => {
                    let _ = write!(out, " {:>width$} {:>9}", "-", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}
