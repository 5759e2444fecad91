//! Comparison CSV ingestion and report output.
//!
//! Input files carry the exact header `rater,item_i,item_j,value`. Item
//! labels are mapped to indices in order of first appearance (scanning
//! `item_i` then `item_j` row by row). Emitted files are UTF-8 with LF
//! line endings.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{RankError, Result};
use crate::graph::{ComparisonDataset, ComparisonRecord, ScoreVector};

pub const HEADER: [&str; 4] = ["rater", "item_i", "item_j", "value"];

fn parse_error(line: u64, message: impl Into<String>) -> RankError {
    RankError::Parse {
        line,
        message: message.into(),
    }
}

/// Reads comparisons from any reader in the CSV format.
pub fn read_comparisons_from<R: Read>(input: R) -> Result<ComparisonDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut rows = reader.records();
    let header = match rows.next() {
        Some(h) => h.map_err(|e| csv_error(e, 1))?,
        None => return Err(parse_error(1, "missing header")),
    };
    if header.iter().ne(HEADER) {
        return Err(parse_error(
            1,
            format!("expected header `{}`, found `{}`", HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
        ));
    }

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut labels: Vec<String> = Vec::new();
    let mut intern = |label: &str| -> usize {
        if let Some(&i) = index.get(label) {
            return i;
        }
        labels.push(label.to_string());
        index.insert(label.to_string(), labels.len() - 1);
        labels.len() - 1
    };
    let mut records = Vec::new();
    for (k, row) in rows.enumerate() {
        let fallback = k as u64 + 2;
        let row = row.map_err(|e| csv_error(e, fallback))?;
        let line = row.position().map_or(fallback, |p| p.line());
        let (rater, a, b, v) = (&row[0], &row[1], &row[2], &row[3]);
        if a.is_empty() || b.is_empty() {
            return Err(parse_error(line, "empty item label"));
        }
        if a == b {
            return Err(parse_error(line, format!("item `{a}` compared with itself")));
        }
        let value: f64 = v
            .trim()
            .parse()
            .map_err(|_| parse_error(line, format!("value `{v}` is not a number")))?;
        if !value.is_finite() {
            return Err(parse_error(line, format!("value `{v}` is not finite")));
        }
        let (i, j) = (intern(a), intern(b));
        records.push(ComparisonRecord::new(rater, i, j, value));
    }
    if records.is_empty() {
        return Err(RankError::EmptyDataset);
    }
    ComparisonDataset::with_labels(labels, records)
}

fn csv_error(e: csv::Error, fallback: u64) -> RankError {
    let line = e.position().map_or(fallback, |p| p.line());
    match e.kind() {
        csv::ErrorKind::Io(_) => RankError::Csv(e),
        _ => parse_error(line, e.to_string()),
    }
}

pub fn read_comparisons(path: impl AsRef<Path>) -> Result<ComparisonDataset> {
    read_comparisons_from(File::open(path)?)
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

pub fn write_comparisons_to<W: Write>(dataset: &ComparisonDataset, out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(HEADER)?;
    let labels = dataset.labels();
    for r in dataset.records() {
        w.write_record([
            r.rater.as_str(),
            &labels[r.item_i],
            &labels[r.item_j],
            &r.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_comparisons(dataset: &ComparisonDataset, path: impl AsRef<Path>) -> Result<()> {
    write_comparisons_to(dataset, BufWriter::new(File::create(path)?))
}

/// Solver settings echoed into a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ReportParams {
    pub k: Option<usize>,
    pub lambda: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub max_iters: Option<usize>,
    pub correction: Option<bool>,
    pub seed: u64,
}

/// A flagged record, identified by its 0-based data-row index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierEntry {
    pub row_index: usize,
    pub rater: String,
    pub item_i: String,
    pub item_j: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub method: String,
    pub params: ReportParams,
    /// Label to score, in label order.
    pub items: IndexMap<String, f64>,
    /// Labels grouped by connected component of the graph used for the fit.
    pub components: Vec<Vec<String>>,
    pub outliers: Vec<OutlierEntry>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub khat: Option<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
}

impl Report {
    pub fn new(
        dataset: &ComparisonDataset,
        method: impl Into<String>,
        params: ReportParams,
        scores: &ScoreVector,
        flagged: &[usize],
    ) -> Self {
        let labels = dataset.labels();
        let items = labels.iter().cloned().zip(scores.scores.iter().copied()).collect();
        let components = scores
            .components()
            .into_iter()
            .map(|c| c.into_iter().map(|i| labels[i].clone()).collect())
            .collect();
        let outliers = flagged
            .iter()
            .map(|&k| {
                let r = &dataset.records()[k];
                OutlierEntry {
                    row_index: k,
                    rater: r.rater.clone(),
                    item_i: labels[r.item_i].clone(),
                    item_j: labels[r.item_j].clone(),
                    value: r.value,
                }
            })
            .collect();
        let seed = params.seed;
        Self {
            method: method.into(),
            params,
            items,
            components,
            outliers,
            khat: None,
            iterations: 0,
            converged: true,
            seed,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

pub fn write_report(report: &Report, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, report.to_json()?)?;
    Ok(())
}

/// `a[i][j]` = number of records preferring item `i` over item `j`, with
/// rows and columns in the given item order.
pub fn preference_counts(dataset: &ComparisonDataset, order: &[usize]) -> Vec<Vec<usize>> {
    let n = dataset.n_items();
    let mut counts = vec![vec![0usize; n]; n];
    for r in dataset.records() {
        if r.value > 0.0 {
            counts[r.item_i][r.item_j] += 1;
        } else if r.value < 0.0 {
            counts[r.item_j][r.item_i] += 1;
        }
    }
    order.iter().map(|&i| order.iter().map(|&j| counts[i][j]).collect()).collect()
}

/// Writes the preference-count matrix with items ordered by descending
/// score. The first row and column hold labels.
pub fn write_matrix_to<W: Write>(dataset: &ComparisonDataset, scores: &ScoreVector, out: W) -> Result<()> {
    let order = scores.order();
    let labels = dataset.labels();
    let counts = preference_counts(dataset, &order);
    let mut w = csv_writer(out);
    let mut header = vec![String::new()];
    header.extend(order.iter().map(|&i| labels[i].clone()));
    w.write_record(&header)?;
    for (row, &i) in counts.iter().zip(&order) {
        let mut line = vec![labels[i].clone()];
        line.extend(row.iter().map(|c| c.to_string()));
        w.write_record(&line)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix(dataset: &ComparisonDataset, scores: &ScoreVector, path: impl AsRef<Path>) -> Result<()> {
    write_matrix_to(dataset, scores, BufWriter::new(File::create(path)?))
}
