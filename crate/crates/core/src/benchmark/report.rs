//! Benchmark report: CSV, aligned text table and scatter files.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::benchmark::logistic::LogisticParams;
use crate::benchmark::subsets::SubsetSelector;
use crate::dataset::format_float;
use crate::error::{Error, Result};
use crate::model::CorrelationTriple;
use crate::mos::Dimension;

pub const REPORT_HEADER: [&str; 12] = [
    "subset",
    "metric",
    "srocc",
    "krocc",
    "plcc",
    "repetitions",
    "n_test",
    "alpha1",
    "alpha2",
    "alpha3",
    "alpha4",
    "alpha5",
];

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub subset: String,
    pub metric: String,
    /// Mean over repetitions.
    pub triple: CorrelationTriple,
    pub repetitions: usize,
    pub mean_test_size: f64,
    /// Logistic map of each repetition that had enough images for one.
    pub params: Vec<LogisticParams>,
}

impl ReportRow {
    fn criterion(&self) -> &str {
        self.subset.split('=').next().unwrap_or(&self.subset)
    }
}

/// (X, X̂, MOS) of one subset and metric from the first repetition.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatterSet {
    pub subset: SubsetSelector,
    pub metric: String,
    pub points: Vec<[f64; 3]>,
}

impl ScatterSet {
    /// File name safe on every platform.
    pub fn file_name(&self) -> String {
        let clean = |s: &str| {
            s.chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
                .collect::<String>()
        };
        format!("scatter_{}__{}.csv", clean(&self.subset.to_string()), clean(&self.metric))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,x_hat,mos\n");
        for [x, h, m] in &self.points {
            let _ = writeln!(out, "{},{},{}", format_float(*x), format_float(*h), format_float(*m));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkReport {
    pub dimension: Dimension,
    pub seed: u64,
    pub requested_repetitions: usize,
    pub rows: Vec<ReportRow>,
    pub scatter: Vec<ScatterSet>,
}

impl BenchmarkReport {
    pub fn row(&self, subset: &str, metric: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.subset == subset && r.metric == metric)
    }

    pub fn to_csv(&self) -> Result<String> {
        rows_to_csv(&self.rows)
    }

    pub fn to_text(&self) -> String {
        render_table(&self.rows)
    }
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

pub fn rows_to_csv(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv_writer();
    w.write_record(REPORT_HEADER)?;
    for r in rows {
        let mut rec = vec![
            r.subset.clone(),
            r.metric.clone(),
            format_float(r.triple.srocc),
            format_float(r.triple.krocc),
            format_float(r.triple.plcc),
            r.repetitions.to_string(),
            format_float(r.mean_test_size),
        ];
        match r.params.first() {
            Some(p) => rec.extend(p.to_array().iter().map(|v| format_float(*v))),
            None => rec.extend(std::iter::repeat_n(String::new(), 5)),
        }
        w.write_record(&rec)?;
    }
    finish(w)
}

/// Reads a report CSV written by [`rows_to_csv`].
pub fn rows_from_csv(text: &str, source: &str) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::File {
            path: source.into(),
            message: format!("missing column {name:?}"),
        })
    };
    let idx: Vec<usize> = REPORT_HEADER[..7].iter().map(|n| col(n)).collect::<Result<_>>()?;
    let alpha: Option<Vec<usize>> = REPORT_HEADER[7..].iter().map(|n| col(n).ok()).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |m: String| Error::row(source, line, m);
        let num = |k: usize| -> Result<f64> {
            let s = rec.get(idx[k]).unwrap_or("");
            s.trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("{} {s:?} is not a number", REPORT_HEADER[k])))
        };
        let triple = CorrelationTriple::new(num(2)?, num(3)?, num(4)?).map_err(|e| bad(e.to_string()))?;
        let repetitions = rec
            .get(idx[5])
            .and_then(|s| s.trim().parse::<usize>().ok())
            .filter(|n| *n >= 1)
            .ok_or_else(|| bad("repetitions must be a positive integer".into()))?;
        let mut params = Vec::new();
        if let Some(a) = &alpha {
            let raw: Vec<&str> = a.iter().map(|&k| rec.get(k).unwrap_or("").trim()).collect();
            if raw.iter().all(|s| !s.is_empty()) {
                let mut v = [0.0; 5];
                for (slot, s) in v.iter_mut().zip(&raw) {
                    *slot = s.parse().map_err(|_| bad(format!("alpha {s:?} is not a number")))?;
                }
                params.push(LogisticParams::from_array(v));
            }
        }
        rows.push(ReportRow {
            subset: rec.get(idx[0]).unwrap_or("").to_string(),
            metric: rec.get(idx[1]).unwrap_or("").to_string(),
            triple,
            repetitions,
            mean_test_size: num(6)?,
            params,
        });
    }
    Ok(rows)
}

/// Aligned table: one block per criterion, metrics down, subsets across,
/// three correlations per subset.
pub fn render_table(rows: &[ReportRow]) -> String {
    let mut criteria: Vec<&str> = Vec::new();
    for r in rows {
        if !criteria.contains(&r.criterion()) {
            criteria.push(r.criterion());
        }
    }
    let mut out = String::new();
    for (b, criterion) in criteria.iter().enumerate() {
        let block: Vec<&ReportRow> = rows.iter().filter(|r| r.criterion() == *criterion).collect();
        let mut subsets: Vec<&str> = Vec::new();
        let mut metrics: Vec<&str> = Vec::new();
        let mut cells: BTreeMap<(&str, &str), &CorrelationTriple> = BTreeMap::new();
        for r in &block {
            if !subsets.contains(&r.subset.as_str()) {
                subsets.push(&r.subset);
            }
            if !metrics.contains(&r.metric.as_str()) {
                metrics.push(&r.metric);
            }
            cells.insert((&r.metric, &r.subset), &r.triple);
        }

        let mut table: Vec<Vec<String>> = Vec::new();
        let mut top = vec![String::new()];
        let mut second = vec!["metric".to_string()];
        for s in &subsets {
            let label = s.split_once('=').map_or(*s, |(_, v)| v);
            top.extend([label.to_string(), String::new(), String::new()]);
            second.extend(["SRoCC", "KRoCC", "PLCC"].map(String::from));
        }
        table.push(top);
        table.push(second);
        for m in &metrics {
            let mut line = vec![m.to_string()];
            for s in &subsets {
                match cells.get(&(*m, *s)) {
                    Some(t) => line.extend([t.srocc, t.krocc, t.plcc].map(|v| format!("{v:.4}"))),
                    None => line.extend(["-", "-", "-"].map(String::from)),
                }
            }
            table.push(line);
        }

        let columns = table.iter().map(Vec::len).max().unwrap_or(0);
        let widths: Vec<usize> = (0..columns)
            .map(|c| table.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
            .collect();
        if b > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "[{criterion}]");
        for line in &table {
            let mut text = String::new();
            for (c, cell) in line.iter().enumerate() {
                if c == 0 {
                    let _ = write!(text, "{cell:<w$}", w = widths[0]);
                } else {
                    let _ = write!(text, "  {cell:>w$}", w = widths[c]);
                }
            }
            out.push_str(text.trim_end());
            out.push('\n');
        }
    }
    out
}
