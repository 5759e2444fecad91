use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use robust_rank::io::{read_comparisons, write_matrix, write_report, Report, ReportParams};
use robust_rank::sim::{
    percent_label, run_experiment, write_metrics_csv, write_timing_csv, write_trials_csv, ExperimentSpec, MetricsTable,
};
use robust_rank::theory::{condition_report, prop1_equivalence_oracle, ConditionReport, EquivalenceReport, GroundTruth};
use robust_rank::{
    alts, huber_lasso, iht, ilts, lasso_select_k, least_squares_scores, ComparisonDataset, GradientOperator,
    LassoGrid, LassoOptions, Method, SolverConfig,
};

use crate::{BenchArgs, CheckArgs, DetectArgs, RankArgs, SimulateArgs};

pub enum Status {
    Done,
    NotConverged,
}

fn load(path: &Path) -> Result<ComparisonDataset> {
    read_comparisons(path).with_context(|| format!("reading {}", path.display()))
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    Ok(pool.install(f))
}

fn finish(converged: bool, allow: bool, what: &str) -> Status {
    if converged {
        Status::Done
    } else if allow {
        eprintln!("warning: {what} did not converge");
        Status::Done
    } else {
        eprintln!("error: {what} did not converge (pass --allow-nonconverged to accept)");
        Status::NotConverged
    }
}

pub fn rank(args: RankArgs) -> Result<Status> {
    let dataset = load(&args.input)?;
    let scores = least_squares_scores(&dataset, &dataset.operator(), None)?;
    let mut report = Report::new(&dataset, "ls", ReportParams::default(), &scores, &[]);
    report.iterations = 1;
    write_report(&report, &args.output)?;
    if let Some(path) = &args.matrix {
        write_matrix(&dataset, &scores, path)?;
    }
    Ok(Status::Done)
}

pub fn detect(args: DetectArgs) -> Result<Status> {
    match (args.method, args.k, args.lambda) {
        (Method::Alts, Some(_), _) => bail!("--k is not accepted by alts, which estimates the outlier count"),
        (Method::Lasso, Some(_), Some(_)) => bail!("lasso takes either --k or --lambda, not both"),
        (Method::Lasso, None, None) => bail!("lasso needs --k or --lambda"),
        (Method::Iht | Method::Ilts, None, _) => bail!("{} needs --k", args.method),
        (m, _, Some(_)) if m != Method::Lasso => bail!("--lambda applies only to lasso"),
        _ => {}
    }
    let dataset = load(&args.input)?;
    let op = dataset.operator();
    let config = SolverConfig {
        k: args.k.unwrap_or(0),
        epsilon: args.epsilon,
        beta1: args.beta1,
        beta2: args.beta2,
        max_iters: args.max_iters,
        rng_seed: args.seed,
        apply_correction: args.correction,
    };
    config.validate()?;

    let mut params = ReportParams {
        k: args.k,
        seed: args.seed,
        ..ReportParams::default()
    };
    let report = match args.method {
        Method::Lasso => {
            let opts = LassoOptions::default();
            params.max_iters = Some(opts.max_iters);
            let (point, exhausted) = match (args.k, args.lambda) {
                (Some(k), _) => {
                    let sel = lasso_select_k(&dataset, &op, k, &LassoGrid::default(), &opts)?;
                    if sel.exhausted {
                        eprintln!("warning: λ grid ended with {} outliers, fewer than {k}", sel.actual_count);
                    }
                    (sel.point, sel.exhausted)
                }
                (None, Some(lambda)) => (huber_lasso(&dataset, &op, lambda, &opts)?, false),
                (None, None) => unreachable!(),
            };
            params.lambda = Some(point.lambda);
            let mut report = Report::new(&dataset, "lasso", params, &point.s, &point.e.support());
            report.iterations = point.iterations;
            report.converged = point.converged && !exhausted;
            report
        }
        method => {
            let outcome = match method {
                Method::Iht => {
                    params.epsilon = Some(config.epsilon);
                    iht(&dataset, &op, &config)?
                }
                Method::Ilts => ilts(&dataset, &op, &config)?,
                _ => {
                    params.beta1 = Some(config.beta1);
                    params.beta2 = Some(config.beta2);
                    params.correction = Some(config.apply_correction);
                    alts(&dataset, &op, &config)?
                }
            };
            params.max_iters = Some(config.max_iters);
            let mut report = Report::new(&dataset, method.as_str(), params, &outcome.scores, &outcome.flagged());
            report.khat = outcome.khat;
            report.iterations = outcome.iterations;
            report.converged = outcome.converged;
            report
        }
    };
    write_report(&report, &args.output)?;
    if let Some(path) = &args.matrix {
        let ls = least_squares_scores(&dataset, &op, None)?;
        write_matrix(&dataset, &ls, path)?;
    }
    Ok(finish(report.converged, args.allow_nonconverged, args.method.as_str()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_tables(table: &MetricsTable, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut spec = serde_json::to_string_pretty(&table.spec)?;
    spec.push('\n');
    fs::write(dir.join("config.json"), spec)?;
    write_metrics_csv(table, None, create(&dir.join("metrics.csv"))?)?;
    write_timing_csv(table, None, create(&dir.join("timing.csv"))?)?;
    write_trials_csv(table, create(&dir.join("trials.csv"))?)?;
    for &m in &table.spec.methods {
        write_metrics_csv(table, Some(m), create(&dir.join(format!("metrics_{m}.csv")))?)?;
        write_timing_csv(table, Some(m), create(&dir.join(format!("timing_{m}.csv")))?)?;
    }
    Ok(())
}

pub fn simulate(args: SimulateArgs) -> Result<Status> {
    let spec = ExperimentSpec {
        n: args.n,
        sn: args.sn,
        op: args.op,
        trials: args.trials,
        seed: args.seed,
        methods: args.methods,
        value_scale: args.value_scale,
        beta1: args.beta1,
        beta2: args.beta2,
    };
    let table = with_pool(args.jobs, || run_experiment(&spec))??;
    write_tables(&table, &args.out_dir)?;
    let failures: usize = table.cells.iter().map(|c| c.failures).sum();
    if failures > 0 {
        eprintln!("warning: {failures} method runs failed; see trials.csv");
    }
    let stalled = table.trials.iter().filter(|t| t.error.is_none() && !t.converged).count();
    let what = format!("{} of the method runs", stalled + failures);
    Ok(finish(stalled == 0 && failures == 0, args.allow_nonconverged, &what))
}

#[derive(Serialize)]
struct CheckOutput {
    source: String,
    n_items: usize,
    n_rows: usize,
    budget: u128,
    #[serde(flatten)]
    report: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    equivalence: Option<EquivalenceReport>,
}

pub fn check(args: CheckArgs) -> Result<Status> {
    let (source, dataset, op) = match (&args.input, args.complete_graph) {
        (Some(path), _) => {
            let d = load(path)?;
            let op = d.operator();
            (path.display().to_string(), Some(d), op)
        }
        (None, Some(n)) => {
            if n < 2 || args.copies == 0 {
                bail!("complete graph needs at least two items and one copy per edge");
            }
            let source = format!("complete-graph n={n} copies={}", args.copies);
            (source, None, GradientOperator::complete_graph(n, args.copies))
        }
        (None, None) => unreachable!("clap requires one graph source"),
    };
    let truth: Option<GroundTruth> = match &args.with_ground_truth {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
        }
        None => None,
    };
    let (report, equivalence) = with_pool(args.jobs, || -> Result<(ConditionReport, Option<EquivalenceReport>)> {
        let report = condition_report(&op, args.k, truth.as_ref(), args.budget)?;
        let equivalence = match (&dataset, args.equivalence) {
            (Some(d), true) => Some(prop1_equivalence_oracle(d, &op, args.k, args.budget)?),
            _ => None,
        };
        Ok((report, equivalence))
    })??;
    let out = CheckOutput {
        source,
        n_items: op.n_items(),
        n_rows: op.n_rows(),
        budget: args.budget,
        report: serde_json::to_value(&report)?,
        equivalence,
    };
    let mut text = serde_json::to_string_pretty(&out)?;
    text.push('\n');
    match &args.output {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(Status::Done)
}

/// `time(a) / time(b)` for every ordered pair of methods, per cell and in total.
fn speed_ratios(table: &MetricsTable) -> Vec<String> {
    let spec = &table.spec;
    let mut lines = Vec::new();
    let mut describe = |label: String, time: &dyn Fn(Method) -> f64| {
        let mut parts = Vec::new();
        for (i, &a) in spec.methods.iter().enumerate() {
            for &b in &spec.methods[i + 1..] {
                parts.push(format!("{a}/{b}={:.2}", time(a) / time(b)));
            }
        }
        lines.push(format!("{label}: {}", parts.join(" ")));
    };
    for &sn in &spec.sn {
        for &op in &spec.op {
            let time = |m: Method| table.cell(m, sn, op).map_or(f64::NAN, |c| c.seconds);
            describe(format!("SN={sn} OP={}", percent_label(op)), &time);
        }
    }
    let total = |m: Method| table.cells.iter().filter(|c| c.method == m).map(|c| c.seconds).sum::<f64>();
    describe("total".to_string(), &total);
    lines
}

pub fn bench(args: BenchArgs) -> Result<Status> {
    let text = fs::read_to_string(&args.spec).with_context(|| format!("reading {}", args.spec.display()))?;
    let spec: ExperimentSpec =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.spec.display()))?;
    let table = with_pool(args.jobs, || run_experiment(&spec))??;
    let ratios = speed_ratios(&table);
    match &args.output {
        Some(path) => {
            write_timing_csv(&table, None, create(path)?)?;
            for line in ratios {
                println!("{line}");
            }
        }
        None => {
            write_timing_csv(&table, None, io::stdout().lock())?;
            for line in ratios {
                eprintln!("{line}");
            }
        }
    }
    Ok(Status::Done)
}
