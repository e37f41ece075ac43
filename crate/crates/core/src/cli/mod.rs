//! The `biv` command line: simulate, validate, simstudy, summarize.

pub mod config;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::datagen::{generate_dataset, impose_missingness, pattern_by_label, DgpConfig, InterceptRule, SurvivalDataset};
use crate::error::{Error, Result};
use crate::imputation::ImputationStrategy;
use crate::numerics::RngStream;
use crate::simstudy::{read_records, run_grid, summarize, summary_table, write_records, write_summary, ScenarioSpec, PATTERNS, STANDARD_SIZES};
use crate::validation::{validate, Approach, ValidationConfig, REPORT_HEADER};
use config::{pick, pick_list, resolve_seed, ConfigFile, SEED_ENV};

#[derive(Debug, Parser)]
#[command(name = "biv", version, about = "Bootstrap-then-impute internal validation of Cox risk models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort, optionally with MAR missingness.
    Simulate(SimulateArgs),
    /// Run bootstrap validation on a dataset CSV.
    Validate(ValidateArgs),
    /// Run the CC vs BI bias simulation grid.
    Simstudy(SimstudyArgs),
    /// Summarize bias records into mean (SD) tables.
    Summarize(SummarizeArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// key = value config file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (falls back to the config file, then BIV_SEED).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(short, long, global = true)]
    pub output: Option<PathBuf>,
    /// Write results to standard output instead of a file.
    #[arg(long, global = true)]
    pub stdout: bool,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub n: Option<usize>,
    /// Missingness pattern: A..I, guided, or none.
    #[arg(long)]
    pub pattern: Option<String>,
    /// Use the closed-form missingness intercept instead of calibrating it.
    #[arg(long)]
    pub closed_form_intercept: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset CSV as written by `simulate`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub n_boot: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// all, high[:p] or few[:k].
    #[arg(long)]
    pub strategy: Option<ImputationStrategy>,
    /// CC or BI.
    #[arg(long)]
    pub approach: Option<Approach>,
}

#[derive(Debug, Args)]
pub struct SimstudyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub patterns: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub approaches: Option<Vec<Approach>>,
    #[arg(long, value_delimiter = ',')]
    pub strategies: Option<Vec<ImputationStrategy>>,
    #[arg(long)]
    pub n_sims: Option<usize>,
    #[arg(long)]
    pub n_boot: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub closed_form_intercept: bool,
    /// Also write the summary CSV here.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Bias record CSVs from `simstudy`.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Write the text table here instead of standard error.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

/// Exit status for an error: 1 when the analysis model failed, 2 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_model_failure() {
        1
    } else {
        2
    }
}

/// Parse arguments, run, and return the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("biv: error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let common = match &cli.command {
        Command::Simulate(a) => &a.common,
        Command::Validate(a) => &a.common,
        Command::Simstudy(a) => &a.common,
        Command::Summarize(a) => &a.common,
    };
    let file = match &common.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let jobs = pick(common.jobs, &file, "jobs", 1usize)?;
    if jobs == 0 {
        return Err(Error::InvalidInput("--jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, &file),
        Command::Validate(a) => cmd_validate(a, &file),
        Command::Simstudy(a) => cmd_simstudy(a, &file),
        Command::Summarize(a) => cmd_summarize(a, &file),
    })
}

const COMMON_KEYS: [&str; 3] = ["seed", "output", "jobs"];

fn allowed(extra: &[&'static str]) -> Vec<&'static str> {
    COMMON_KEYS.iter().chain(extra).copied().collect()
}

fn seed(common: &Common, file: &ConfigFile) -> Result<u64> {
    let env = std::env::var(SEED_ENV).ok();
    resolve_seed(common.seed, file, env.as_deref())
}

/// Where the results go, resolved before any work is done.
enum Sink {
    Stdout,
    File(PathBuf),
}

fn sink(common: &Common, file: &ConfigFile) -> Result<Sink> {
    if common.stdout {
        return Ok(Sink::Stdout);
    }
    match common.output.clone().or(file.get::<PathBuf>("output")?) {
        Some(p) => Ok(Sink::File(p)),
        None => Err(Error::InvalidInput("no output given; pass --output FILE or --stdout".into())),
    }
}

impl Sink {
    fn write(&self, bytes: &[u8]) -> Result<()> {
        match self {
            Sink::Stdout => {
                let mut out = std::io::stdout().lock();
                out.write_all(bytes)?;
                out.flush()?;
            }
            Sink::File(p) => std::fs::write(p, bytes)?,
        }
        Ok(())
    }
}

fn intercept_rule(flag: bool, file: &ConfigFile) -> Result<InterceptRule> {
    let closed = flag || file.get::<bool>("closed_form_intercept")?.unwrap_or(false);
    Ok(if closed {
        InterceptRule::ClosedForm
    } else {
        InterceptRule::Calibrated
    })
}

fn intercept_label(rule: InterceptRule) -> &'static str {
    match rule {
        InterceptRule::Calibrated => "calibrated",
        InterceptRule::ClosedForm => "closed-form",
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn read_dataset(path: &Path) -> Result<SurvivalDataset> {
    let f = File::open(path).map_err(|e| Error::InvalidInput(format!("cannot open {}: {e}", path.display())))?;
    SurvivalDataset::read_csv(BufReader::new(f))
}

fn cmd_simulate(a: &SimulateArgs, file: &ConfigFile) -> Result<()> {
    file.check_keys(&allowed(&["n", "pattern", "closed_form_intercept"]))?;
    let out = sink(&a.common, file)?;
    let seed = seed(&a.common, file)?;
    let n = pick(a.n, file, "n", DgpConfig::default().n)?;
    let label = pick(a.pattern.clone(), file, "pattern", "none".to_string())?;
    let rule = intercept_rule(a.closed_form_intercept, file)?;
    let pattern = pattern_by_label(&label)?.with_intercept(rule);

    // replicate 0 of a simulation study with the same seed sees this cohort
    let root = RngStream::new(seed, 0);
    let full = generate_dataset(&DgpConfig::with_n(n), &root.substream(0))?;
    let data = impose_missingness(&full, &pattern, &mut root.substream(2))?;

    let comments = vec![
        "biv simulate".to_string(),
        format!("seed = {seed}"),
        format!("n = {n}"),
        format!("pattern = {label}"),
        format!("intercept = {}", intercept_label(rule)),
    ];
    let mut buf = Vec::new();
    data.write_csv(&mut buf, &comments)?;
    out.write(&buf)?;
    let missing: Vec<String> = data
        .incomplete_columns()
        .iter()
        .map(|&j| format!("x{}={:.3}", j + 1, data.missing_fraction(j)))
        .collect();
    eprintln!(
        "simulated {n} subjects, {} events; missing fractions: {}",
        data.event().iter().filter(|e| **e).count(),
        if missing.is_empty() { "none".to_string() } else { missing.join(" ") }
    );
    Ok(())
}

fn cmd_validate(a: &ValidateArgs, file: &ConfigFile) -> Result<()> {
    file.check_keys(&allowed(&["input", "n_boot", "horizon", "strategy", "approach"]))?;
    let out = sink(&a.common, file)?;
    let seed = seed(&a.common, file)?;
    let input = a
        .input
        .clone()
        .or(file.get::<PathBuf>("input")?)
        .ok_or_else(|| Error::InvalidInput("no input dataset; pass --input FILE".into()))?;
    let defaults = ValidationConfig::default();
    let config = ValidationConfig {
        n_boot: pick(a.n_boot, file, "n_boot", defaults.n_boot)?,
        horizon: pick(a.horizon, file, "horizon", defaults.horizon)?,
        strategy: pick(a.strategy, file, "strategy", defaults.strategy)?,
        approach: pick(a.approach, file, "approach", defaults.approach)?,
        seed,
    };
    config.validate()?;
    let data = read_dataset(&input)?;
    eprintln!(
        "validating {} subjects ({} complete) with {} bootstraps",
        data.len(),
        data.complete_rows().len(),
        config.n_boot
    );
    let report = validate(&data, &config)?;

    let comments = [
        "biv validate".to_string(),
        format!("input = {}", input.display()),
        format!("seed = {seed}"),
        format!("n_boot = {}", config.n_boot),
        format!("horizon = {}", config.horizon),
        format!("strategy = {}", config.strategy),
        format!("approach = {}", config.approach),
    ];
    let mut buf = Vec::new();
    for c in &comments {
        writeln!(buf, "# {c}")?;
    }
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(REPORT_HEADER)?;
        w.write_record(report.csv_record())?;
        w.flush()?;
    }
    out.write(&buf)?;
    eprintln!("{:<6} {:>9} {:>9} {:>9} {:>9}", "", "apparent", "boot", ".632", ".632+");
    for (name, e) in [("AUC", report.auc), ("Brier", report.brier)] {
        eprintln!(
            "{:<6} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            name, e.apparent, e.boot_corrected, e.e632, e.e632plus
        );
    }
    eprintln!("bootstraps used {}, failed {}", report.n_boot_used, report.boot_failures);
    Ok(())
}

fn cmd_simstudy(a: &SimstudyArgs, file: &ConfigFile) -> Result<()> {
    file.check_keys(&allowed(&[
        "sizes",
        "patterns",
        "approaches",
        "strategies",
        "n_sims",
        "n_boot",
        "horizon",
        "closed_form_intercept",
        "summary",
    ]))?;
    let out = sink(&a.common, file)?;
    let seed = seed(&a.common, file)?;
    let template = ScenarioSpec::default();
    let sizes = pick_list(a.sizes.clone(), file, "sizes", STANDARD_SIZES.to_vec())?;
    let patterns = pick_list(
        a.patterns.clone(),
        file,
        "patterns",
        PATTERNS.iter().map(|s| s.to_string()).collect(),
    )?;
    let approaches = pick_list(a.approaches.clone(), file, "approaches", vec![Approach::CC, Approach::BI])?;
    let strategies = pick_list(a.strategies.clone(), file, "strategies", ImputationStrategy::defaults().to_vec())?;
    let n_sims = pick(a.n_sims, file, "n_sims", template.n_sims)?;
    let n_boot = pick(a.n_boot, file, "n_boot", template.n_boot)?;
    let horizon = pick(a.horizon, file, "horizon", template.horizon)?;
    let rule = intercept_rule(a.closed_form_intercept, file)?;
    let summary_path = a.summary.clone().or(file.get::<PathBuf>("summary")?);

    let mut specs = Vec::new();
    for &n in &sizes {
        for pattern in &patterns {
            for &approach in &approaches {
                let per_strategy: Vec<ImputationStrategy> = match approach {
                    Approach::CC => vec![ImputationStrategy::All],
                    Approach::BI => strategies.clone(),
                };
                for strategy in per_strategy {
                    specs.push(ScenarioSpec {
                        n,
                        pattern: pattern.clone(),
                        strategy,
                        approach,
                        n_sims,
                        n_boot,
                        horizon,
                        master_seed: seed,
                        intercept: rule,
                    });
                }
            }
        }
    }
    if specs.is_empty() {
        return Err(Error::InvalidInput("empty scenario grid".into()));
    }
    eprintln!(
        "running {} scenarios x {n_sims} replicates with {n_boot} bootstraps",
        specs.len()
    );
    let records = run_grid(&specs)?;

    let comments = vec![
        "biv simstudy".to_string(),
        format!("seed = {seed}"),
        format!("sizes = {}", join(&sizes)),
        format!("patterns = {}", patterns.join(",")),
        format!("approaches = {}", join(&approaches)),
        format!("strategies = {}", join(&strategies)),
        format!("n_sims = {n_sims}"),
        format!("n_boot = {n_boot}"),
        format!("horizon = {horizon}"),
        format!("intercept = {}", intercept_label(rule)),
    ];
    let mut buf = Vec::new();
    write_records(&mut buf, &records, &comments)?;
    out.write(&buf)?;
    let rows = summarize(&records);
    if let Some(p) = summary_path {
        let mut sbuf = Vec::new();
        write_summary(&mut sbuf, &rows, &comments)?;
        std::fs::write(p, sbuf)?;
    }
    let failed = records.iter().filter(|r| !r.fit_ok()).count();
    eprintln!("{} records, {failed} with failed model fits", records.len());
    Ok(())
}

fn cmd_summarize(a: &SummarizeArgs, file: &ConfigFile) -> Result<()> {
    file.check_keys(&allowed(&["table"]))?;
    let out = sink(&a.common, file)?;
    let mut records = Vec::new();
    for p in &a.inputs {
        let f = File::open(p).map_err(|e| Error::InvalidInput(format!("cannot open {}: {e}", p.display())))?;
        records.extend(read_records(BufReader::new(f))?);
    }
    if records.is_empty() {
        return Err(Error::InvalidInput("no bias records to summarize".into()));
    }
    let rows = summarize(&records);
    let comments = vec![
        "biv summarize".to_string(),
        format!("inputs = {}", join(&a.inputs.iter().map(|p| p.display()).collect::<Vec<_>>())),
    ];
    let mut buf = Vec::new();
    write_summary(&mut buf, &rows, &comments)?;
    out.write(&buf)?;
    let table = summary_table(&rows);
    match a.table.clone().or(file.get::<PathBuf>("table")?) {
        Some(p) => std::fs::write(p, table)?,
        None => eprint!("{table}"),
    }
    Ok(())
}
