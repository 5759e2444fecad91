//! Simulation harness: planted total orders with flipped comparisons.
//!
//! Each trial draws a random ground-truth order on `n` items, samples `SN`
//! comparisons uniformly with replacement over unordered pairs, orients
//! them by the truth and flips `ON = round(OP * SN)` distinct records.
//! Methods that need a budget are told `K = ON`; aLTS estimates its own.

use std::collections::HashSet;
use std::io::Write;
use std::time::Instant;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{RankError, Result};
use crate::graph::{ComparisonDataset, ComparisonRecord};
use crate::lasso::{lasso_select_k, LassoGrid, LassoOptions};
use crate::solvers::{alts, iht, ilts, Method, SolverConfig};

pub const DEFAULT_SAMPLE_SIZES: [usize; 3] = [1000, 2000, 3000];
pub const DEFAULT_OUTLIER_FRACTIONS: [f64; 8] = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40];

fn default_n() -> usize {
    16
}
fn default_sn() -> Vec<usize> {
    DEFAULT_SAMPLE_SIZES.to_vec()
}
fn default_op() -> Vec<f64> {
    DEFAULT_OUTLIER_FRACTIONS.to_vec()
}
fn default_trials() -> usize {
    100
}
fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_scale() -> f64 {
    1.0
}
fn default_beta1() -> f64 {
    SolverConfig::default().beta1
}
fn default_beta2() -> f64 {
    SolverConfig::default().beta2
}

/// A grid of simulation cells. Every field has a default matching the standard grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_sn")]
    pub sn: Vec<usize>,
    #[serde(default = "default_op")]
    pub op: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_scale")]
    pub value_scale: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            n: default_n(),
            sn: default_sn(),
            op: default_op(),
            trials: default_trials(),
            seed: 0,
            methods: default_methods(),
            value_scale: default_scale(),
            beta1: default_beta1(),
            beta2: default_beta2(),
        }
    }
}

impl ExperimentSpec {
    pub fn cells(&self) -> Vec<CellSpec> {
        self.sn
            .iter()
            .flat_map(|&sn| {
                self.op.iter().map(move |&op| CellSpec {
                    n: self.n,
                    sn,
                    op,
                    seed: self.seed,
                    value_scale: self.value_scale,
                })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(RankError::InvalidParameter("trials must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(RankError::InvalidParameter("no methods requested".into()));
        }
        if self.sn.is_empty() || self.op.is_empty() {
            return Err(RankError::InvalidParameter("empty SN or OP list".into()));
        }
        SolverConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            ..SolverConfig::default()
        }
        .validate()?;
        self.cells().iter().try_for_each(CellSpec::validate)
    }
}

/// One `(SN, OP)` cell of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub n: usize,
    pub sn: usize,
    pub op: f64,
    pub seed: u64,
    pub value_scale: f64,
}

impl CellSpec {
    /// `ON = round(OP * SN)`.
    pub fn outlier_count(&self) -> usize {
        (self.op * self.sn as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(RankError::InvalidParameter("need at least two items".into()));
        }
        if self.sn == 0 {
            return Err(RankError::InvalidParameter("SN must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.op) {
            return Err(RankError::InvalidParameter(format!("OP = {} outside [0, 1)", self.op)));
        }
        if !(self.value_scale > 0.0 && self.value_scale.is_finite()) {
            return Err(RankError::InvalidParameter("value scale must be positive".into()));
        }
        if self.outlier_count() > self.sn {
            return Err(RankError::InvalidParameter(format!(
                "ON = {} exceeds SN = {}",
                self.outlier_count(),
                self.sn
            )));
        }
        Ok(())
    }
}

/// A generated dataset with its planted truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub dataset: ComparisonDataset,
    /// Items from best to worst.
    pub truth_order: Vec<usize>,
    /// Sorted indices of flipped records.
    pub outliers: Vec<usize>,
}

impl Instance {
    /// Ground-truth scores: `n - 1` for the best item down to `0`.
    pub fn truth_scores(&self) -> Vec<f64> {
        let n = self.truth_order.len();
        let mut s = vec![0.0; n];
        for (rank, &item) in self.truth_order.iter().enumerate() {
            s[item] = (n - 1 - rank) as f64;
        }
        s
    }
}

/// Random generator for one trial, independent of all other trials.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

pub fn generate_instance(cell: &CellSpec, trial: usize) -> Result<Instance> {
    cell.validate()?;
    let mut rng = trial_rng(cell.seed, trial);
    let n = cell.n;
    let mut truth_order: Vec<usize> = (0..n).collect();
    truth_order.shuffle(&mut rng);
    let mut rank = vec![0; n];
    for (r, &item) in truth_order.iter().enumerate() {
        rank[item] = r;
    }

    let pairs = n * (n - 1) / 2;
    let mut records = Vec::with_capacity(cell.sn);
    for _ in 0..cell.sn {
        let (i, j) = unrank_pair(rng.gen_range(0..pairs), n);
        let (winner, loser) = if rank[i] < rank[j] { (i, j) } else { (j, i) };
        records.push(ComparisonRecord::new("sim", winner, loser, cell.value_scale));
    }
    let mut outliers = sample(&mut rng, cell.sn, cell.outlier_count()).into_vec();
    outliers.sort_unstable();
    for &k in &outliers {
        records[k].value = -records[k].value;
    }
    Ok(Instance {
        dataset: ComparisonDataset::new(n, records)?,
        truth_order,
        outliers,
    })
}

/// Maps `0..n(n-1)/2` onto pairs `i < j` in lexicographic order.
fn unrank_pair(mut idx: usize, n: usize) -> (usize, usize) {
    let mut i = 0;
    while idx >= n - 1 - i {
        idx -= n - 1 - i;
        i += 1;
    }
    (i, i + 1 + idx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 of a reported index set.
///
/// An empty report has precision 1 if the truth is also empty and 0
/// otherwise; recall is 1 for an empty truth.
pub fn evaluate_detection(reported: &[usize], truth: &[usize]) -> DetectionMetrics {
    let truth_set: HashSet<usize> = truth.iter().copied().collect();
    let reported_set: HashSet<usize> = reported.iter().copied().collect();
    let hits = reported_set.intersection(&truth_set).count() as f64;
    let precision = match (reported_set.is_empty(), truth_set.is_empty()) {
        (true, true) => 1.0,
        (true, false) => 0.0,
        _ => hits / reported_set.len() as f64,
    };
    let recall = if truth_set.is_empty() {
        1.0
    } else {
        hits / truth_set.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    DetectionMetrics { precision, recall, f1 }
}

/// Whether `scores` strictly orders every pair as `truth_order` does.
pub fn order_consistent(scores: &[f64], truth_order: &[usize]) -> bool {
    truth_order.windows(2).all(|w| scores[w[0]] > scores[w[1]])
}

/// What one method reported on one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodRun {
    pub flagged: Vec<usize>,
    pub scores: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub khat: Option<usize>,
    pub seconds: f64,
}

/// Runs `method` with budget `k` (ignored by aLTS), timing the solver call only.
pub fn run_method(method: Method, dataset: &ComparisonDataset, k: usize, config: &SolverConfig) -> Result<MethodRun> {
    let op = dataset.operator();
    let config = SolverConfig { k, ..config.clone() };
    let start = Instant::now();
    let run = match method {
        Method::Lasso => {
            let sel = lasso_select_k(dataset, &op, k, &LassoGrid::default(), &LassoOptions::default())?;
            let seconds = start.elapsed().as_secs_f64();
            MethodRun {
                flagged: sel.point.e.support(),
                scores: sel.point.s.scores,
                iterations: sel.point.iterations,
                converged: sel.point.converged && !sel.exhausted,
                khat: None,
                seconds,
            }
        }
        _ => {
            let out = match method {
                Method::Iht => iht(dataset, &op, &config)?,
                Method::Ilts => ilts(dataset, &op, &config)?,
                _ => alts(dataset, &op, &config)?,
            };
            let seconds = start.elapsed().as_secs_f64();
            MethodRun {
                flagged: out.flagged(),
                scores: out.scores.scores,
                iterations: out.iterations,
                converged: out.converged,
                khat: out.khat,
                seconds,
            }
        }
    };
    Ok(run)
}

/// One method on one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub method: Method,
    pub sn: usize,
    pub op: f64,
    pub trial: usize,
    pub on: usize,
    pub reported: usize,
    pub metrics: Option<DetectionMetrics>,
    pub seconds: f64,
    pub iterations: usize,
    pub converged: bool,
    pub khat: Option<usize>,
    pub order_consistent: bool,
    pub error: Option<String>,
}

/// Aggregate over the trials of one `(method, SN, OP)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellMetrics {
    pub method: Method,
    pub sn: usize,
    pub op: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Total solver wall time over all trials.
    pub seconds: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsTable {
    pub spec: ExperimentSpec,
    pub cells: Vec<CellMetrics>,
    pub trials: Vec<TrialRecord>,
}

impl MetricsTable {
    pub fn cell(&self, method: Method, sn: usize, op: f64) -> Option<&CellMetrics> {
        self.cells.iter().find(|c| c.method == method && c.sn == sn && c.op == op)
    }
}

fn run_trial(spec: &ExperimentSpec, cell: &CellSpec, trial: usize) -> Vec<TrialRecord> {
    let on = cell.outlier_count();
    let failed = |method: Method, error: String| TrialRecord {
        method,
        sn: cell.sn,
        op: cell.op,
        trial,
        on,
        reported: 0,
        metrics: None,
        seconds: 0.0,
        iterations: 0,
        converged: false,
        khat: None,
        order_consistent: false,
        error: Some(error),
    };
    let instance = match generate_instance(cell, trial) {
        Ok(inst) => inst,
        Err(e) => return spec.methods.iter().map(|&m| failed(m, e.to_string())).collect(),
    };
    let config = SolverConfig {
        beta1: spec.beta1,
        beta2: spec.beta2,
        rng_seed: spec.seed ^ (trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        ..SolverConfig::default()
    };
    spec.methods
        .iter()
        .map(|&method| match run_method(method, &instance.dataset, on, &config) {
            Ok(run) => TrialRecord {
                method,
                sn: cell.sn,
                op: cell.op,
                trial,
                on,
                reported: run.flagged.len(),
                metrics: Some(evaluate_detection(&run.flagged, &instance.outliers)),
                seconds: run.seconds,
                iterations: run.iterations,
                converged: run.converged,
                khat: run.khat,
                order_consistent: order_consistent(&run.scores, &instance.truth_order),
                error: None,
            },
            Err(e) => failed(method, e.to_string()),
        })
        .collect()
}

/// Runs every method on every trial of every cell, in parallel on the
/// current rayon pool. Results are ordered by cell, trial and method.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<MetricsTable> {
    spec.validate()?;
    let cells = spec.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..spec.trials).map(move |t| (c, t)))
        .collect();
    let per_job: Vec<Vec<TrialRecord>> = jobs
        .par_iter()
        .map(|&(c, t)| run_trial(spec, &cells[c], t))
        .collect();

    let mut aggregated = Vec::new();
    for (c, cell) in cells.iter().enumerate() {
        for (m, &method) in spec.methods.iter().enumerate() {
            let records = (0..spec.trials).map(|t| &per_job[c * spec.trials + t][m]);
            let mut sums = [0.0; 3];
            let mut seconds = 0.0;
            let mut ok = 0usize;
            let mut failures = 0usize;
            for r in records {
                seconds += r.seconds;
                match &r.metrics {
                    Some(mt) => {
                        sums[0] += mt.precision;
                        sums[1] += mt.recall;
                        sums[2] += mt.f1;
                        ok += 1;
                    }
                    None => failures += 1,
                }
            }
            let mean = |v: f64| if ok == 0 { f64::NAN } else { v / ok as f64 };
            aggregated.push(CellMetrics {
                method,
                sn: cell.sn,
                op: cell.op,
                precision: mean(sums[0]),
                recall: mean(sums[1]),
                f1: mean(sums[2]),
                seconds,
                failures,
            });
        }
    }
    Ok(MetricsTable {
        spec: spec.clone(),
        cells: aggregated,
        trials: per_job.into_iter().flatten().collect(),
    })
}

/// `0.05` → `5%`.
pub fn percent_label(op: f64) -> String {
    let pct = (op * 100.0 * 1e6).round() / 1e6;
    format!("{pct}%")
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

/// Columns `method,SN,OP,precision,recall,f1,seconds,failures`; all
/// methods, or only `method` when given.
pub fn write_metrics_csv<W: Write>(table: &MetricsTable, method: Option<Method>, out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["method", "SN", "OP", "precision", "recall", "f1", "seconds", "failures"])?;
    for c in table.cells.iter().filter(|c| method.is_none_or(|m| c.method == m)) {
        w.write_record([
            c.method.to_string(),
            c.sn.to_string(),
            c.op.to_string(),
            c.precision.to_string(),
            c.recall.to_string(),
            c.f1.to_string(),
            format!("{:.6}", c.seconds),
            c.failures.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per method and trial.
pub fn write_trials_csv<W: Write>(table: &MetricsTable, out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record([
        "method",
        "SN",
        "OP",
        "trial",
        "ON",
        "reported",
        "precision",
        "recall",
        "f1",
        "seconds",
        "iterations",
        "converged",
        "khat",
        "order_consistent",
        "error",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &table.trials {
        w.write_record([
            r.method.to_string(),
            r.sn.to_string(),
            r.op.to_string(),
            r.trial.to_string(),
            r.on.to_string(),
            r.reported.to_string(),
            opt(r.metrics.map(|m| m.precision)),
            opt(r.metrics.map(|m| m.recall)),
            opt(r.metrics.map(|m| m.f1)),
            format!("{:.6}", r.seconds),
            r.iterations.to_string(),
            r.converged.to_string(),
            r.khat.map(|k| k.to_string()).unwrap_or_default(),
            r.order_consistent.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Total seconds per cell, rows by SN and columns by OP. Without a method
/// filter every method gets a block of rows and a leading `method` column.
pub fn write_timing_csv<W: Write>(table: &MetricsTable, method: Option<Method>, out: W) -> Result<()> {
    let mut w = csv_writer(out);
    let spec = &table.spec;
    let mut header = if method.is_some() { vec![] } else { vec!["method".to_string()] };
    header.push("SN".to_string());
    header.extend(spec.op.iter().map(|&op| format!("OP={}", percent_label(op))));
    w.write_record(&header)?;
    let methods = method.map_or_else(|| spec.methods.clone(), |m| vec![m]);
    for &method_row in &methods {
        for &sn in &spec.sn {
            let mut row = if method.is_some() { vec![] } else { vec![method_row.to_string()] };
            row.push(sn.to_string());
            for &op in &spec.op {
                let secs = table.cell(method_row, sn, op).map(|c| c.seconds).unwrap_or(f64::NAN);
                row.push(format!("{secs:.6}"));
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::least_squares_scores;

    fn cell(sn: usize, op: f64) -> CellSpec {
        CellSpec {
            n: 16,
            sn,
            op,
            seed: 0,
            value_scale: 1.0,
        }
    }

    #[test]
    fn pair_unranking_covers_all_pairs() {
        let n = 6;
        let pairs: Vec<_> = (0..15).map(|k| unrank_pair(k, n)).collect();
        let mut expected = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                expected.push((i, j));
            }
        }
        assert_eq!(pairs, expected);
    }

    #[test]
    fn half_of_two_flips_one() {
        let inst = generate_instance(&cell(2, 0.5), 0).unwrap();
        assert_eq!(inst.outliers.len(), 1);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_instance(&cell(200, 0.1), 3).unwrap();
        let b = generate_instance(&cell(200, 0.1), 3).unwrap();
        assert_eq!(a, b);
        let c = generate_instance(&cell(200, 0.1), 4).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn flips_disagree_with_truth() {
        let inst = generate_instance(&cell(300, 0.2), 1).unwrap();
        assert_eq!(inst.outliers.len(), 60);
        let s = inst.truth_scores();
        for (k, r) in inst.dataset.records().iter().enumerate() {
            let agrees = (s[r.item_i] - s[r.item_j]) * r.value > 0.0;
            assert_eq!(agrees, !inst.outliers.contains(&k));
        }
        assert!(inst.dataset.is_dichotomous());
    }

    #[test]
    fn clean_large_sample_is_order_consistent() {
        for trial in 0..20 {
            let inst = generate_instance(&cell(3000, 0.0), trial).unwrap();
            assert!(inst.outliers.is_empty());
            let s = least_squares_scores(&inst.dataset, &inst.dataset.operator(), None).unwrap();
            assert!(order_consistent(&s.scores, &inst.truth_order), "trial {trial}");
        }
    }

    #[test]
    fn rejects_full_outlier_fraction() {
        assert!(generate_instance(&cell(10, 1.0), 0).is_err());
    }

    #[test]
    fn detection_metrics() {
        assert_eq!(
            evaluate_detection(&[1, 2], &[1, 2]),
            DetectionMetrics { precision: 1.0, recall: 1.0, f1: 1.0 }
        );
        assert_eq!(evaluate_detection(&[3], &[1, 2]).f1, 0.0);
        let truth: Vec<usize> = (0..10).collect();
        let reported: Vec<usize> = (5..15).collect();
        let m = evaluate_detection(&reported, &truth);
        assert_eq!((m.precision, m.recall, m.f1), (0.5, 0.5, 0.5));
        assert_eq!(evaluate_detection(&[], &[]).f1, 1.0);
        assert_eq!(evaluate_detection(&[], &[4]).precision, 0.0);
        assert_eq!(evaluate_detection(&[4], &[]).precision, 0.0);
    }

    #[test]
    fn percent_labels() {
        assert_eq!(percent_label(0.05), "5%");
        assert_eq!(percent_label(0.35), "35%");
        assert_eq!(percent_label(0.125), "12.5%");
    }

    #[test]
    fn small_experiment_is_reproducible() {
        let spec = ExperimentSpec {
            n: 8,
            sn: vec![120],
            op: vec![0.0, 0.1],
            trials: 3,
            ..ExperimentSpec::default()
        };
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        assert_eq!(a.cells.len(), 8);
        for (x, y) in a.cells.iter().zip(&b.cells) {
            assert_eq!((x.precision, x.recall, x.f1), (y.precision, y.recall, y.f1));
            for v in [x.precision, x.recall, x.f1] {
                assert!((0.0..=1.0).contains(&v));
            }
        }
        let mut buf = Vec::new();
        write_timing_csv(&a, None, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "method,SN,OP=0%,OP=10%");
        assert_eq!(text.lines().count(), 1 + 4);
        let mut buf = Vec::new();
        write_timing_csv(&a, Some(Method::Iht), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "SN,OP=0%,OP=10%");
        assert!(text.lines().nth(1).unwrap().starts_with("120,"));
        let mut buf = Vec::new();
        write_metrics_csv(&a, Some(Method::Alts), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().skip(1).all(|l| l.starts_with("alts,120,")));
    }

    #[test]
    fn spec_defaults_from_empty_json() {
        let spec: ExperimentSpec = serde_json::from_str("{}").unwrap();
        assert_eq!(spec, ExperimentSpec::default());
        assert_eq!(spec.cells().len(), 24);
        assert!(serde_json::from_str::<ExperimentSpec>(r#"{"bogus": 1}"#).is_err());
    }
}
