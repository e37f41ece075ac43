//! Bootstrap internal validation: apparent, optimism-corrected, .632 and .632+
//! estimates of time-dependent AUC and Brier score.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::datagen::SurvivalDataset;
use crate::error::{Error, Result};
use crate::format::format_float;
use crate::imputation::{complete_columns, fit_imputation_models, impute, ImputationStrategy};
use crate::metrics::{score, ScorePair};
use crate::numerics::RngStream;
use crate::survival::{fit_cox, predict_risk, CoxFit};

/// No-information AUC.
pub const GAMMA_AUC: f64 = 0.5;
/// No-information Brier score.
pub const GAMMA_BRIER: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Approach {
    /// Complete-case analysis.
    CC,
    /// Bootstrap, then impute within each sample.
    BI,
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Approach::CC => "CC",
            Approach::BI => "BI",
        })
    }
}

impl FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CC" => Ok(Approach::CC),
            "BI" => Ok(Approach::BI),
            other => Err(Error::Parse(format!("unknown approach '{other}' (expected CC or BI)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationConfig {
    pub n_boot: usize,
    pub horizon: f64,
    pub strategy: ImputationStrategy,
    pub approach: Approach,
    /// Bootstrap iteration `b` draws from `RngStream::new(seed, b)`.
    pub seed: u64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            n_boot: 500,
            horizon: 5.0,
            strategy: ImputationStrategy::All,
            approach: Approach::BI,
            seed: 0,
        }
    }
}

impl ValidationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_boot == 0 {
            return Err(Error::InvalidInput("n_boot must be at least 1".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidInput(format!("horizon must be positive, got {}", self.horizon)));
        }
        self.strategy.validate()
    }

    /// Strategy label for reports; complete-case analysis has none.
    pub fn strategy_label(&self) -> String {
        match self.approach {
            Approach::CC => "-".to_string(),
            Approach::BI => self.strategy.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimates {
    pub apparent: f64,
    pub boot_corrected: f64,
    pub e632: f64,
    pub e632plus: f64,
}

impl Estimates {
    pub fn as_array(&self) -> [f64; 4] {
        [self.apparent, self.boot_corrected, self.e632, self.e632plus]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub approach: Approach,
    pub strategy: String,
    pub auc: Estimates,
    pub brier: Estimates,
    pub n_boot_used: usize,
    pub boot_failures: usize,
    pub gamma_auc: f64,
    pub gamma_brier: f64,
}

pub const REPORT_HEADER: [&str; 12] = [
    "approach",
    "strategy",
    "n_boot_used",
    "boot_failures",
    "auc_apparent",
    "auc_boot",
    "auc_632",
    "auc_632plus",
    "brier_apparent",
    "brier_boot",
    "brier_632",
    "brier_632plus",
];

impl ValidationReport {
    pub fn csv_record(&self) -> Vec<String> {
        let mut row = vec![
            self.approach.to_string(),
            self.strategy.clone(),
            self.n_boot_used.to_string(),
            self.boot_failures.to_string(),
        ];
        row.extend(self.auc.as_array().iter().map(|v| format_float(*v)));
        row.extend(self.brier.as_array().iter().map(|v| format_float(*v)));
        row
    }
}

/// A report plus the pieces callers may want to reuse: the analysis data the
/// apparent model was fit on and the model itself.
#[derive(Debug, Clone)]
pub struct ValidationOutcome {
    pub report: ValidationReport,
    pub data: SurvivalDataset,
    pub fit: CoxFit,
    pub apparent: ScorePair,
}

/// `n` row draws with replacement. Ids travel with their rows; the second
/// value holds every id that was never drawn.
pub fn bootstrap_sample<R: Rng + ?Sized>(data: &SurvivalDataset, rng: &mut R) -> (SurvivalDataset, BTreeSet<usize>) {
    let n = data.len();
    let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let mut drawn = vec![false; n];
    for &i in &rows {
        drawn[i] = true;
    }
    let oob = (0..n).filter(|&i| !drawn[i]).map(|i| data.ids()[i]).collect();
    (data.select(&rows), oob)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Apparent performance minus the mean optimism `b - o`.
pub fn boot_corrected(app: f64, b_perf: &[f64], o_perf: &[f64]) -> Result<f64> {
    if b_perf.len() != o_perf.len() {
        return Err(Error::DimensionMismatch {
            expected: b_perf.len(),
            actual: o_perf.len(),
        });
    }
    if b_perf.is_empty() {
        return Err(Error::InvalidInput("no bootstrap results".into()));
    }
    let optimism: Vec<f64> = b_perf.iter().zip(o_perf).map(|(b, o)| b - o).collect();
    Ok(app - mean(&optimism))
}

pub fn e632(app: f64, test_perf: &[f64]) -> Result<f64> {
    if test_perf.is_empty() {
        return Err(Error::InvalidInput("no out-of-bag results".into()));
    }
    Ok(0.368 * app + 0.632 * mean(test_perf))
}

/// .632+ with relative overfitting rate `R = (test - app) / (gamma - app)`,
/// left unclamped.
pub fn e632plus(app: f64, test_perf: &[f64], gamma: f64) -> Result<f64> {
    if test_perf.is_empty() {
        return Err(Error::InvalidInput("no out-of-bag results".into()));
    }
    if gamma == app {
        return Err(Error::DegenerateNoInformation);
    }
    let test = mean(test_perf);
    let r = (test - app) / (gamma - app);
    let w = 0.632 / (1.0 - 0.368 * r);
    Ok((1.0 - w) * app + w * test)
}

/// Predictor and target columns fixed once from the raw data.
struct ImputationPlan {
    targets: Vec<usize>,
    predictors: Vec<usize>,
}

fn prepare(data: &SurvivalDataset, approach: Approach, strategy: ImputationStrategy, plan: &ImputationPlan) -> Result<SurvivalDataset> {
    match approach {
        Approach::CC => Ok(data.complete_cases()),
        Approach::BI => {
            let models = fit_imputation_models(data, &plan.targets, &plan.predictors)?;
            let (imputed, _) = impute(data, &models, strategy)?;
            Ok(imputed.complete_cases())
        }
    }
}

fn fit_and_score(data: &SurvivalDataset, horizon: f64) -> Result<(CoxFit, ScorePair)> {
    let x = data.design_matrix()?;
    let fit = fit_cox(&x, data.time(), data.event())?;
    let risk = predict_risk(&fit, &x, horizon)?;
    let perf = score(&risk, data.time(), data.event(), horizon)?;
    Ok((fit, perf))
}

fn score_with(fit: &CoxFit, data: &SurvivalDataset, horizon: f64) -> Result<ScorePair> {
    let x = data.design_matrix()?;
    let risk = predict_risk(fit, &x, horizon)?;
    score(&risk, data.time(), data.event(), horizon)
}

#[derive(Debug, Clone, Copy)]
struct IterationPerf {
    b: ScorePair,
    o: ScorePair,
    test: ScorePair,
}

fn run_iteration(
    dat: &SurvivalDataset,
    rows: (SurvivalDataset, BTreeSet<usize>),
    config: &ValidationConfig,
    plan: &ImputationPlan,
) -> Result<IterationPerf> {
    let (sample, oob) = rows;
    let train = prepare(&sample, config.approach, config.strategy, plan)?;
    let (fit, b) = fit_and_score(&train, config.horizon)?;
    let o = score_with(&fit, dat, config.horizon)?;
    let test_rows: Vec<usize> = (0..dat.len()).filter(|&i| oob.contains(&dat.ids()[i])).collect();
    if test_rows.is_empty() {
        return Err(Error::InsufficientData("empty out-of-bag set".into()));
    }
    let test = score_with(&fit, &dat.select(&test_rows), config.horizon)?;
    Ok(IterationPerf { b, o, test })
}

fn combine(app: f64, perf: &[IterationPerf], metric: fn(&ScorePair) -> f64, gamma: f64) -> Result<Estimates> {
    let b: Vec<f64> = perf.iter().map(|p| metric(&p.b)).collect();
    let o: Vec<f64> = perf.iter().map(|p| metric(&p.o)).collect();
    let test: Vec<f64> = perf.iter().map(|p| metric(&p.test)).collect();
    Ok(Estimates {
        apparent: app,
        boot_corrected: boot_corrected(app, &b, &o)?,
        e632: e632(app, &test)?,
        e632plus: e632plus(app, &test, gamma)?,
    })
}

/// Full pipeline, keeping the apparent model and its analysis data.
pub fn validate_detailed(raw: &SurvivalDataset, config: &ValidationConfig) -> Result<ValidationOutcome> {
    config.validate()?;
    if raw.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    let plan = ImputationPlan {
        targets: raw.incomplete_columns(),
        predictors: complete_columns(raw),
    };
    let dat = prepare(raw, config.approach, config.strategy, &plan)?;
    let (fit, apparent) = fit_and_score(&dat, config.horizon).map_err(|e| {
        if e.is_model_failure() {
            Error::AnalysisModelFailure(Box::new(e))
        } else {
            e
        }
    })?;

    let results: Vec<Result<IterationPerf>> = (0..config.n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = RngStream::new(config.seed, b as u64);
            let rows = bootstrap_sample(raw, &mut rng);
            run_iteration(&dat, rows, config, &plan)
        })
        .collect();
    let mut perf = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(p) => perf.push(p),
            Err(e) if e.is_model_failure() || matches!(e, Error::EmptyTrainingSet { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if perf.is_empty() {
        return Err(Error::AllBootstrapsFailed(config.n_boot));
    }
    let report = ValidationReport {
        approach: config.approach,
        strategy: config.strategy_label(),
        auc: combine(apparent.auc, &perf, |p| p.auc, GAMMA_AUC)?,
        brier: combine(apparent.brier, &perf, |p| p.brier, GAMMA_BRIER)?,
        n_boot_used: perf.len(),
        boot_failures: config.n_boot - perf.len(),
        gamma_auc: GAMMA_AUC,
        gamma_brier: GAMMA_BRIER,
    };
    Ok(ValidationOutcome {
        report,
        data: dat,
        fit,
        apparent,
    })
}

pub fn validate(raw: &SurvivalDataset, config: &ValidationConfig) -> Result<ValidationReport> {
    validate_detailed(raw, config).map(|o| o.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, impose_missingness, pattern_by_label, DgpConfig};
    use proptest::prelude::*;

    fn cohort(n: usize, seed: u64, pattern: &str) -> SurvivalDataset {
        let rng = RngStream::new(seed, 0);
        let full = generate_dataset(&DgpConfig::with_n(n), &rng).unwrap();
        impose_missingness(&full, &pattern_by_label(pattern).unwrap(), &mut rng.substream(2)).unwrap()
    }

    #[test]
    fn single_row_bootstrap() {
        let data = cohort(1, 1, "none");
        let (s, oob) = bootstrap_sample(&data, &mut RngStream::new(1, 0));
        assert_eq!(s, data);
        assert!(oob.is_empty());
    }

    #[test]
    fn out_of_bag_fraction() {
        let data = cohort(3500, 2, "none");
        let mut total = 0.0;
        for b in 0..200 {
            let (s, oob) = bootstrap_sample(&data, &mut RngStream::new(9, b));
            assert_eq!(s.len(), data.len());
            let drawn: BTreeSet<usize> = s.ids().iter().copied().collect();
            for id in data.ids() {
                assert!(drawn.contains(id) != oob.contains(id));
            }
            total += oob.len() as f64 / data.len() as f64;
        }
        assert!((total / 200.0 - 0.368).abs() < 0.01);
    }

    #[test]
    fn estimator_examples() {
        assert!((boot_corrected(0.722, &[0.730], &[0.725]).unwrap() - 0.717).abs() < 1e-12);
        assert_eq!(boot_corrected(0.7, &[0.6, 0.8], &[0.6, 0.8]).unwrap(), 0.7);
        assert!((boot_corrected(0.75, &[0.8], &[0.7]).unwrap() - 0.65).abs() < 1e-12);
        assert!((e632(0.722, &[0.71405]).unwrap() - 0.717).abs() < 1e-4);
        assert_eq!(e632(0.6, &[0.6]).unwrap(), 0.6);
        assert!((e632(1.0, &[0.0]).unwrap() - 0.368).abs() < 1e-15);
        let plus = e632plus(0.9, &[0.7], 0.5).unwrap();
        let w = 0.632 / 0.816;
        assert!((plus - ((1.0 - w) * 0.9 + w * 0.7)).abs() < 1e-12);
        assert!((plus - 0.745).abs() < 5e-4);
        assert!((e632plus(0.722, &[0.71405], 0.5).unwrap() - 0.717).abs() < 1e-3);
        assert!(matches!(e632plus(0.5, &[0.6], 0.5), Err(Error::DegenerateNoInformation)));
        assert!(boot_corrected(0.5, &[], &[]).is_err());
    }

    #[test]
    fn identical_resample_has_no_optimism() {
        let raw = cohort(400, 3, "none");
        let config = ValidationConfig {
            n_boot: 1,
            approach: Approach::CC,
            ..ValidationConfig::default()
        };
        let plan = ImputationPlan {
            targets: vec![],
            predictors: (0..11).collect(),
        };
        let dat = raw.complete_cases();
        let (_, app) = fit_and_score(&dat, 5.0).unwrap();
        let all_ids: BTreeSet<usize> = raw.ids().iter().copied().collect();
        let perf = run_iteration(&dat, (raw.clone(), all_ids), &config, &plan).unwrap();
        assert_eq!(perf.b, perf.o);
        assert_eq!(perf.b, app);
        let est = combine(app.auc, &[perf], |p| p.auc, GAMMA_AUC).unwrap();
        assert_eq!(est.boot_corrected, est.apparent);
        assert!((est.e632 - est.apparent).abs() < 1e-15);
        assert!((est.e632plus - est.apparent).abs() < 1e-15);
    }

    #[test]
    fn bi_validation_runs_and_is_deterministic() {
        let raw = cohort(800, 4, "E");
        let config = ValidationConfig {
            n_boot: 20,
            seed: 77,
            ..ValidationConfig::default()
        };
        let a = validate(&raw, &config).unwrap();
        let b = validate(&raw, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_boot_used + a.boot_failures, 20);
        assert_eq!(a.strategy, "all");
        for v in a.auc.as_array().iter().chain(&a.brier.as_array()) {
            assert!(v.is_finite());
        }
        assert!(a.auc.apparent > 0.55 && a.auc.apparent < 0.9);
        let other_seed = validate(&raw, &ValidationConfig { seed: 78, ..config }).unwrap();
        assert_eq!(other_seed.auc.apparent, a.auc.apparent);
        assert_ne!(other_seed.auc.boot_corrected, a.auc.boot_corrected);
    }

    #[test]
    fn cc_validation_uses_complete_cases() {
        let raw = cohort(800, 5, "B");
        let out = validate_detailed(
            &raw,
            &ValidationConfig {
                n_boot: 10,
                approach: Approach::CC,
                ..ValidationConfig::default()
            },
        )
        .unwrap();
        assert_eq!(out.data.len(), raw.complete_rows().len());
        assert_eq!(out.report.strategy, "-");
        assert_eq!(out.report.csv_record().len(), REPORT_HEADER.len());
    }

    #[test]
    fn apparent_failure_aborts() {
        let mut raw = cohort(30, 6, "none");
        for i in 0..raw.len() {
            raw.set_value(i, 0, None);
        }
        let err = validate(
            &raw,
            &ValidationConfig {
                n_boot: 2,
                approach: Approach::CC,
                ..ValidationConfig::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::AnalysisModelFailure(_)), "{err:?}");
    }

    #[test]
    fn approach_parsing() {
        assert_eq!("cc".parse::<Approach>().unwrap(), Approach::CC);
        assert_eq!("BI".parse::<Approach>().unwrap(), Approach::BI);
        assert!("mi".parse::<Approach>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn estimators_collapse_when_test_equals_apparent(app in 0.0f64..1.0, b in 0.0f64..1.0, gamma in prop::sample::select(vec![GAMMA_AUC, GAMMA_BRIER])) {
            prop_assume!(app != gamma);
            let e = e632(app, &[app]).unwrap();
            let p = e632plus(app, &[app], gamma).unwrap();
            prop_assert!((e - app).abs() < 1e-12);
            prop_assert!((p - app).abs() < 1e-12);
            prop_assert!((boot_corrected(app, &[b], &[b]).unwrap() - app).abs() < 1e-12);
        }

        #[test]
        fn e632_is_convex_combination(app in 0.0f64..1.0, test in prop::collection::vec(0.0f64..1.0, 1..20)) {
            let m = mean(&test);
            let e = e632(app, &test).unwrap();
            prop_assert!(e >= app.min(m) - 1e-15 && e <= app.max(m) + 1e-15);
        }
    }
}
