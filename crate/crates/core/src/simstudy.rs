//! Simulation study: bias of CC and BI validation relative to full-data truth.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use rayon::prelude::*;

use crate::datagen::{generate_dataset, impose_missingness, pattern_by_label, DgpConfig, InterceptRule, SurvivalDataset};
use crate::error::{Error, Result};
use crate::format::{format_float, format_opt};
use crate::imputation::ImputationStrategy;
use crate::numerics::RngStream;
use crate::survival::predict_risk;
use crate::validation::{validate_detailed, Approach, Estimates, ValidationConfig, ValidationReport};

pub const ESTIMATORS: [&str; 4] = ["apparent", "boot", "632", "632plus"];
pub const METRICS: [&str; 2] = ["auc", "brier"];
pub const STANDARD_SIZES: [usize; 2] = [750, 3500];
pub const PATTERNS: [&str; 9] = ["A", "B", "C", "D", "E", "F", "G", "H", "I"];

/// Stream layout under each replicate's root `RngStream::new(master_seed, r)`.
const COHORT_STREAM: u64 = 0;
const MASK_STREAM: u64 = 2;
const BOOTSTRAP_SEED: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub n: usize,
    pub pattern: String,
    pub strategy: ImputationStrategy,
    pub approach: Approach,
    pub n_sims: usize,
    pub n_boot: usize,
    pub horizon: f64,
    pub master_seed: u64,
    pub intercept: InterceptRule,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n: 750,
            pattern: "A".into(),
            strategy: ImputationStrategy::All,
            approach: Approach::BI,
            n_sims: 50,
            n_boot: 100,
            horizon: 5.0,
            master_seed: 20240815,
            intercept: InterceptRule::Calibrated,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("sample size must be positive".into()));
        }
        pattern_by_label(&self.pattern)?;
        self.validation_config(0).validate()
    }

    pub fn strategy_label(&self) -> String {
        self.validation_config(0).strategy_label()
    }

    fn validation_config(&self, seed: u64) -> ValidationConfig {
        ValidationConfig {
            n_boot: self.n_boot,
            horizon: self.horizon,
            strategy: self.strategy,
            approach: self.approach,
            seed,
        }
    }

    fn truth_key(&self, replicate: usize) -> TruthKey {
        TruthKey {
            n: self.n,
            master_seed: self.master_seed,
            n_boot: self.n_boot,
            horizon_bits: self.horizon.to_bits(),
            replicate,
        }
    }
}

/// For every sample size and pattern: CC once, then BI under each strategy.
pub fn standard_grid(sizes: &[usize], patterns: &[&str], template: &ScenarioSpec) -> Vec<ScenarioSpec> {
    let mut specs = Vec::new();
    for &n in sizes {
        for &pattern in patterns {
            let base = ScenarioSpec {
                n,
                pattern: pattern.to_string(),
                ..template.clone()
            };
            specs.push(ScenarioSpec {
                approach: Approach::CC,
                strategy: ImputationStrategy::All,
                ..base.clone()
            });
            for strategy in ImputationStrategy::defaults() {
                specs.push(ScenarioSpec {
                    approach: Approach::BI,
                    strategy,
                    ..base.clone()
                });
            }
        }
    }
    specs
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorBias {
    pub full: f64,
    pub approach: f64,
    /// `full - approach`.
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordValues {
    pub auc: [EstimatorBias; 4],
    pub brier: [EstimatorBias; 4],
    /// Mean over predictable subjects of full-data risk minus approach risk.
    pub pred_bias: f64,
    pub n_pred: usize,
    pub n_boot_used: usize,
    pub boot_failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasRecord {
    pub n: usize,
    pub pattern: String,
    pub approach: Approach,
    pub strategy: String,
    pub replicate: usize,
    /// `None` when the analysis model could not be fitted.
    pub values: Option<RecordValues>,
    /// Reason for the failure, empty when fitted.
    pub failure: String,
}

impl BiasRecord {
    pub fn fit_ok(&self) -> bool {
        self.values.is_some()
    }

    fn scenario(&self) -> ScenarioKey {
        ScenarioKey {
            n: self.n,
            pattern: self.pattern.clone(),
            approach: self.approach,
            strategy: self.strategy.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct TruthKey {
    n: usize,
    master_seed: u64,
    n_boot: usize,
    horizon_bits: u64,
    replicate: usize,
}

struct Truth {
    full: SurvivalDataset,
    /// Report and per-row predicted risk, or the failure message.
    fitted: std::result::Result<(ValidationReport, Vec<f64>), String>,
}

fn replicate_root(master_seed: u64, replicate: usize) -> RngStream {
    RngStream::new(master_seed, replicate as u64)
}

fn compute_truth(key: TruthKey) -> Result<Truth> {
    let root = replicate_root(key.master_seed, key.replicate);
    let full = generate_dataset(&DgpConfig::with_n(key.n), &root.substream(COHORT_STREAM))?;
    let horizon = f64::from_bits(key.horizon_bits);
    let config = ValidationConfig {
        n_boot: key.n_boot,
        horizon,
        strategy: ImputationStrategy::All,
        approach: Approach::CC,
        seed: root.child_seed(BOOTSTRAP_SEED),
    };
    let fitted = match validate_detailed(&full, &config) {
        Ok(out) => {
            let risk = predict_risk(&out.fit, &full.design_matrix()?, horizon)?;
            Ok((out.report, risk))
        }
        Err(e) => Err(format!("full data: {e}")),
    };
    Ok(Truth { full, fitted })
}

fn biases(full: &Estimates, approach: &Estimates) -> [EstimatorBias; 4] {
    let f = full.as_array();
    let a = approach.as_array();
    std::array::from_fn(|k| EstimatorBias {
        full: f[k],
        approach: a[k],
        bias: f[k] - a[k],
    })
}

fn approach_record(spec: &ScenarioSpec, replicate: usize, truth: &Truth) -> Result<BiasRecord> {
    let mut record = BiasRecord {
        n: spec.n,
        pattern: spec.pattern.clone(),
        approach: spec.approach,
        strategy: spec.strategy_label(),
        replicate,
        values: None,
        failure: String::new(),
    };
    let (truth_report, truth_risk) = match &truth.fitted {
        Ok(t) => t,
        Err(msg) => {
            record.failure = msg.clone();
            return Ok(record);
        }
    };
    let root = replicate_root(spec.master_seed, replicate);
    let pattern = pattern_by_label(&spec.pattern)?.with_intercept(spec.intercept);
    let masked = impose_missingness(&truth.full, &pattern, &mut root.substream(MASK_STREAM))?;
    let outcome = match validate_detailed(&masked, &spec.validation_config(root.child_seed(BOOTSTRAP_SEED))) {
        Ok(o) => o,
        Err(e) => {
            record.failure = e.to_string();
            return Ok(record);
        }
    };
    let row_of: HashMap<usize, usize> = truth.full.ids().iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let risk = predict_risk(&outcome.fit, &outcome.data.design_matrix()?, spec.horizon)?;
    let diffs: Vec<f64> = outcome
        .data
        .ids()
        .iter()
        .zip(&risk)
        .map(|(id, r)| truth_risk[row_of[id]] - r)
        .collect();
    let report = &outcome.report;
    record.values = Some(RecordValues {
        auc: biases(&truth_report.auc, &report.auc),
        brier: biases(&truth_report.brier, &report.brier),
        pred_bias: diffs.iter().sum::<f64>() / diffs.len() as f64,
        n_pred: diffs.len(),
        n_boot_used: report.n_boot_used,
        boot_failures: report.boot_failures,
    });
    Ok(record)
}

/// One replicate of one scenario, computing its own full-data truth.
pub fn run_replicate(spec: &ScenarioSpec, replicate: usize) -> Result<BiasRecord> {
    spec.validate()?;
    let truth = compute_truth(spec.truth_key(replicate))?;
    approach_record(spec, replicate, &truth)
}

/// Every `(scenario, replicate)` pair, ordered by scenario then replicate.
/// Replicates run in parallel; within a replicate the full-data truth is
/// computed once per distinct `(n, seed, n_boot, horizon)` and shared.
pub fn run_grid(specs: &[ScenarioSpec]) -> Result<Vec<BiasRecord>> {
    for spec in specs {
        spec.validate()?;
    }
    let max_sims = specs.iter().map(|s| s.n_sims).max().unwrap_or(0);
    let per_replicate: Vec<Result<Vec<(usize, BiasRecord)>>> = (0..max_sims)
        .into_par_iter()
        .map(|r| {
            let mut truths: BTreeMap<TruthKey, Truth> = BTreeMap::new();
            let mut out = Vec::new();
            for (k, spec) in specs.iter().enumerate().filter(|(_, s)| r < s.n_sims) {
                let key = spec.truth_key(r);
                if !truths.contains_key(&key) {
                    truths.insert(key, compute_truth(key)?);
                }
                out.push((k, approach_record(spec, r, &truths[&key])?));
            }
            Ok(out)
        })
        .collect();
    let mut records = Vec::new();
    for chunk in per_replicate {
        records.extend(chunk?);
    }
    records.sort_by_key(|(k, rec)| (*k, rec.replicate));
    Ok(records.into_iter().map(|(_, rec)| rec).collect())
}

pub fn record_header() -> Vec<String> {
    let mut h: Vec<String> = ["n", "pattern", "approach", "strategy", "replicate", "fit_ok"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for m in METRICS {
        for e in ESTIMATORS {
            for part in ["full", "approach", "bias"] {
                h.push(format!("{m}_{e}_{part}"));
            }
        }
    }
    h.extend(
        ["pred_bias", "n_pred", "n_boot_used", "boot_failures", "failure"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

fn record_row(r: &BiasRecord) -> Vec<String> {
    let mut row = vec![
        r.n.to_string(),
        r.pattern.clone(),
        r.approach.to_string(),
        r.strategy.clone(),
        r.replicate.to_string(),
        (r.fit_ok() as u8).to_string(),
    ];
    match &r.values {
        Some(v) => {
            for e in v.auc.iter().chain(&v.brier) {
                row.extend([format_float(e.full), format_float(e.approach), format_float(e.bias)]);
            }
            row.extend([
                format_float(v.pred_bias),
                v.n_pred.to_string(),
                v.n_boot_used.to_string(),
                v.boot_failures.to_string(),
            ]);
        }
        None => row.extend(std::iter::repeat_n(String::new(), 24 + 4)),
    }
    row.push(r.failure.clone());
    row
}

fn write_comments<W: Write>(out: &mut W, comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    Ok(())
}

/// One row per replicate. Each entry of `comments` becomes a leading `# ` line.
pub fn write_records<W: Write>(mut out: W, records: &[BiasRecord], comments: &[String]) -> Result<()> {
    write_comments(&mut out, comments)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(record_header())?;
    for r in records {
        w.write_record(record_row(r))?;
    }
    w.flush()?;
    Ok(())
}

fn parse<T: std::str::FromStr>(field: &str, name: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad value '{field}' in column {name}")))
}

/// Reads the output of [`write_records`], skipping `#` lines.
pub fn read_records<R: Read>(input: R) -> Result<Vec<BiasRecord>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != record_header() {
        return Err(Error::Parse("unexpected bias record header".into()));
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let f = |k: usize| row.get(k).unwrap_or("");
        let fit_ok: u8 = parse(f(5), "fit_ok")?;
        let values = if fit_ok == 1 {
            let mut ests = Vec::with_capacity(8);
            for k in 0..8 {
                let base = 6 + 3 * k;
                ests.push(EstimatorBias {
                    full: parse(f(base), "full")?,
                    approach: parse(f(base + 1), "approach")?,
                    bias: parse(f(base + 2), "bias")?,
                });
            }
            Some(RecordValues {
                auc: std::array::from_fn(|k| ests[k]),
                brier: std::array::from_fn(|k| ests[4 + k]),
                pred_bias: parse(f(30), "pred_bias")?,
                n_pred: parse(f(31), "n_pred")?,
                n_boot_used: parse(f(32), "n_boot_used")?,
                boot_failures: parse(f(33), "boot_failures")?,
            })
        } else {
            None
        };
        records.push(BiasRecord {
            n: parse(f(0), "n")?,
            pattern: f(1).to_string(),
            approach: f(2).parse()?,
            strategy: f(3).to_string(),
            replicate: parse(f(4), "replicate")?,
            values,
            failure: f(34).to_string(),
        });
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScenarioKey {
    pub n: usize,
    pub pattern: String,
    pub approach: Approach,
    pub strategy: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: ScenarioKey,
    /// `auc`, `brier` or `pred`.
    pub metric: String,
    /// One of [`ESTIMATORS`], or `-` for prediction bias.
    pub estimator: String,
    /// `None` when no replicate was fitted.
    pub mean: Option<f64>,
    /// Sample SD; 0 when only one replicate was fitted.
    pub sd: Option<f64>,
    pub n_ok: usize,
    pub n_total: usize,
    pub failure_rate: f64,
}

fn moments(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() == 1 {
        return (Some(m), Some(0.0));
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(m), Some(var.sqrt()))
}

/// Mean and SD of each bias over fitted replicates, per scenario, with the
/// failure rate. Rows come out sorted by scenario so input order is irrelevant.
pub fn summarize(records: &[BiasRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<ScenarioKey, Vec<&BiasRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.scenario()).or_default().push(r);
    }
    let mut rows = Vec::new();
    for (key, mut recs) in groups {
        recs.sort_by_key(|r| r.replicate);
        let ok: Vec<&RecordValues> = recs.iter().filter_map(|r| r.values.as_ref()).collect();
        let n_total = recs.len();
        let failure_rate = (n_total - ok.len()) as f64 / n_total as f64;
        let mut push = |metric: &str, estimator: &str, v: Vec<f64>| {
            let (mean, sd) = moments(&v);
            rows.push(SummaryRow {
                scenario: key.clone(),
                metric: metric.to_string(),
                estimator: estimator.to_string(),
                mean,
                sd,
                n_ok: ok.len(),
                n_total,
                failure_rate,
            });
        };
        for (mi, metric) in METRICS.iter().enumerate() {
            for (k, est) in ESTIMATORS.iter().enumerate() {
                let v = ok
                    .iter()
                    .map(|r| if mi == 0 { r.auc[k].bias } else { r.brier[k].bias })
                    .collect();
                push(metric, est, v);
            }
        }
        push("pred", "-", ok.iter().map(|r| r.pred_bias).collect());
    }
    rows
}

pub const SUMMARY_HEADER: [&str; 11] = [
    "n",
    "pattern",
    "approach",
    "strategy",
    "metric",
    "estimator",
    "mean",
    "sd",
    "n_ok",
    "n_total",
    "failure_rate",
];

pub fn write_summary<W: Write>(mut out: W, rows: &[SummaryRow], comments: &[String]) -> Result<()> {
    write_comments(&mut out, comments)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.scenario.n.to_string(),
            r.scenario.pattern.clone(),
            r.scenario.approach.to_string(),
            r.scenario.strategy.clone(),
            r.metric.clone(),
            r.estimator.clone(),
            format_opt(r.mean),
            format_opt(r.sd),
            r.n_ok.to_string(),
            r.n_total.to_string(),
            format_float(r.failure_rate),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plain-text "Mean (SD)" tables, one per sample size, one line per scenario.
pub fn summary_table(rows: &[SummaryRow]) -> String {
    let mut by_n: BTreeMap<usize, BTreeMap<&ScenarioKey, Vec<&SummaryRow>>> = BTreeMap::new();
    for r in rows {
        by_n.entry(r.scenario.n).or_default().entry(&r.scenario).or_default().push(r);
    }
    let cell = |r: &SummaryRow| match (r.mean, r.sd) {
        (Some(m), Some(s)) => {
            let m = format!("{m:.3}");
            let m = if m == "-0.000" { "0.000".to_string() } else { m };
            format!("{m} ({s:.3})")
        }
        _ => "NA".to_string(),
    };
    let mut out = String::new();
    for (n, scenarios) in by_n {
        out.push_str(&format!("Mean (SD) bias when sample size is {n}\n"));
        let mut header = vec!["pattern".to_string(), "approach".to_string(), "strategy".to_string()];
        if let Some(first) = scenarios.values().next() {
            header.extend(first.iter().map(|r| {
                if r.metric == "pred" {
                    "pred".to_string()
                } else {
                    format!("{}_{}", r.metric, r.estimator)
                }
            }));
        }
        header.push("failed".to_string());
        let mut lines = vec![header];
        for (key, rs) in &scenarios {
            let mut line = vec![key.pattern.clone(), key.approach.to_string(), key.strategy.clone()];
            line.extend(rs.iter().map(|r| cell(r)));
            line.push(format!("{:.1}%", 100.0 * rs[0].failure_rate));
            lines.push(line);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0))
            .collect();
        for line in lines {
            let cells: Vec<String> = line.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out.push('\n');
    }
    out
}
