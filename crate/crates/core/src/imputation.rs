//! Deterministic single imputation from per-target regression models.

use std::fmt;
use std::str::FromStr;

use crate::datagen::SurvivalDataset;
use crate::error::{Error, Result};
use crate::glm::{fit_linear, fit_logistic, predict_response, GlmFit};
use crate::numerics::DenseMatrix;

pub const DEFAULT_HIGH_MISSING: f64 = 0.10;
pub const DEFAULT_FEW_MISSING: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ImputationStrategy {
    /// Impute every missing cell.
    All,
    /// Impute only targets whose missing fraction exceeds `threshold`.
    OnlyHighMissing { threshold: f64 },
    /// Impute only subjects with at most `max_missing` missing covariates.
    OnlyFewMissing { max_missing: usize },
}

impl ImputationStrategy {
    pub fn high_missing() -> Self {
        Self::OnlyHighMissing {
            threshold: DEFAULT_HIGH_MISSING,
        }
    }

    pub fn few_missing() -> Self {
        Self::OnlyFewMissing {
            max_missing: DEFAULT_FEW_MISSING,
        }
    }

    /// The three strategies with their default parameters.
    pub fn defaults() -> [Self; 3] {
        [Self::All, Self::high_missing(), Self::few_missing()]
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::OnlyHighMissing { threshold } if !(threshold > 0.0 && threshold < 1.0) => Err(
                Error::InvalidInput(format!("missingness threshold {threshold} not in (0,1)")),
            ),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ImputationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::All => write!(f, "all"),
            Self::OnlyHighMissing { threshold } => write!(f, "high:{threshold}"),
            Self::OnlyFewMissing { max_missing } => write!(f, "few:{max_missing}"),
        }
    }
}

/// Accepts `all`, `high`, `high:<p>`, `few`, `few:<k>`.
impl FromStr for ImputationStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s.as_str(), None),
        };
        let bad = || Error::Parse(format!("unknown imputation strategy '{s}'"));
        let strategy = match (name, arg) {
            ("all", None) => Self::All,
            ("high", None) => Self::high_missing(),
            ("high", Some(a)) => Self::OnlyHighMissing {
                threshold: a.parse().map_err(|_| bad())?,
            },
            ("few", None) => Self::few_missing(),
            ("few", Some(a)) => Self::OnlyFewMissing {
                max_missing: a.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        strategy.validate()?;
        Ok(strategy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetModel {
    pub target: usize,
    pub kind: TargetKind,
    /// `None` when the model could not be fit and the fallback is used.
    pub fit: Option<GlmFit>,
    /// Observed mode (binary) or mean (continuous).
    pub fallback: f64,
}

impl TargetModel {
    pub fn uses_fallback(&self) -> bool {
        self.fit.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputationModelSet {
    pub predictors: Vec<usize>,
    pub models: Vec<TargetModel>,
}

impl ImputationModelSet {
    pub fn targets(&self) -> Vec<usize> {
        self.models.iter().map(|m| m.target).collect()
    }

    pub fn n_fallbacks(&self) -> usize {
        self.models.iter().filter(|m| m.uses_fallback()).count()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResidualMissingReport {
    /// Row indices that still contain a missing covariate.
    pub rows: Vec<usize>,
    pub imputed_cells: usize,
}

impl ResidualMissingReport {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Columns observed for every row.
pub fn complete_columns(data: &SurvivalDataset) -> Vec<usize> {
    (0..data.n_covariates())
        .filter(|&j| (0..data.len()).all(|i| data.value(i, j).is_some()))
        .collect()
}

fn predictor_row(data: &SurvivalDataset, i: usize, predictors: &[usize]) -> Result<Vec<f64>> {
    let mut row = Vec::with_capacity(predictors.len() + 1);
    row.push(1.0);
    for &j in predictors {
        row.push(data.value(i, j).ok_or_else(|| {
            Error::InvalidInput(format!("predictor x{} missing in row {i}", j + 1))
        })?);
    }
    Ok(row)
}

/// One model per target, each fit on the rows where that target is observed,
/// using only `complete_covs` as predictors. A target whose observed values
/// are all 0/1 is treated as binary.
pub fn fit_imputation_models(
    data: &SurvivalDataset,
    targets: &[usize],
    complete_covs: &[usize],
) -> Result<ImputationModelSet> {
    let p = data.n_covariates();
    for &j in targets.iter().chain(complete_covs) {
        if j >= p {
            return Err(Error::DimensionMismatch { expected: p, actual: j + 1 });
        }
    }
    if let Some(j) = targets.iter().find(|j| complete_covs.contains(j)) {
        return Err(Error::InvalidInput(format!("x{} is both target and predictor", j + 1)));
    }

    let mut models = Vec::with_capacity(targets.len());
    for &target in targets {
        let rows: Vec<usize> = (0..data.len()).filter(|&i| data.value(i, target).is_some()).collect();
        if rows.is_empty() {
            return Err(Error::EmptyTrainingSet { target });
        }
        let y: Vec<f64> = rows.iter().map(|&i| data.value(i, target).unwrap()).collect();
        let kind = if y.iter().all(|&v| v == 0.0 || v == 1.0) {
            TargetKind::Binary
        } else {
            TargetKind::Continuous
        };
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let fallback = match kind {
            TargetKind::Binary => (mean >= 0.5) as u8 as f64,
            TargetKind::Continuous => mean,
        };
        let design_rows = rows
            .iter()
            .map(|&i| predictor_row(data, i, complete_covs))
            .collect::<Result<Vec<_>>>()?;
        let design = DenseMatrix::from_rows(&design_rows)?;
        let fit = match kind {
            TargetKind::Binary => fit_logistic(&design, &y),
            TargetKind::Continuous => fit_linear(&design, &y),
        };
        let fit = match fit {
            Ok(f) if f.converged => Some(f),
            Ok(_) | Err(Error::RankDeficient) => None,
            Err(e) => return Err(e),
        };
        models.push(TargetModel {
            target,
            kind,
            fit,
            fallback,
        });
    }
    Ok(ImputationModelSet {
        predictors: complete_covs.to_vec(),
        models,
    })
}

/// Fill missing target cells according to `strategy`. Observed cells are
/// never touched; binary predictions are thresholded at probability 0.5.
pub fn impute(
    data: &SurvivalDataset,
    models: &ImputationModelSet,
    strategy: ImputationStrategy,
) -> Result<(SurvivalDataset, ResidualMissingReport)> {
    strategy.validate()?;
    let p = data.n_covariates();
    if let Some(j) = models.predictors.iter().chain(&models.targets()).find(|&&j| j >= p) {
        return Err(Error::DimensionMismatch { expected: p, actual: j + 1 });
    }
    let mut out = data.clone();
    let mut imputed_cells = 0;

    for model in &models.models {
        let j = model.target;
        if let ImputationStrategy::OnlyHighMissing { threshold } = strategy {
            if data.missing_fraction(j) <= threshold {
                continue;
            }
        }
        let rows: Vec<usize> = (0..data.len())
            .filter(|&i| data.value(i, j).is_none())
            .filter(|&i| match strategy {
                ImputationStrategy::OnlyFewMissing { max_missing } => {
                    data.missing_in_row(i) <= max_missing
                }
                _ => true,
            })
            .collect();
        if rows.is_empty() {
            continue;
        }
        let predictions = match &model.fit {
            Some(fit) => {
                let design_rows = rows
                    .iter()
                    .map(|&i| predictor_row(data, i, &models.predictors))
                    .collect::<Result<Vec<_>>>()?;
                predict_response(fit, &DenseMatrix::from_rows(&design_rows)?)?
            }
            None => vec![model.fallback; rows.len()],
        };
        for (&i, &v) in rows.iter().zip(&predictions) {
            let v = match model.kind {
                TargetKind::Binary => (v > 0.5) as u8 as f64,
                TargetKind::Continuous => v,
            };
            out.set_value(i, j, Some(v));
            imputed_cells += 1;
        }
    }
    let rows = (0..out.len()).filter(|&i| !out.is_complete_row(i)).collect();
    Ok((out, ResidualMissingReport { rows, imputed_cells }))
}

/// Fit models for every incomplete column of `data` on its complete columns
/// and impute with `strategy`.
pub fn fit_and_impute(
    data: &SurvivalDataset,
    strategy: ImputationStrategy,
) -> Result<(SurvivalDataset, ResidualMissingReport, ImputationModelSet)> {
    let targets = data.incomplete_columns();
    let predictors = complete_columns(data);
    let models = fit_imputation_models(data, &targets, &predictors)?;
    let (imputed, report) = impute(data, &models, strategy)?;
    Ok((imputed, report, models))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, impose_missingness, pattern_by_label, DgpConfig};
    use crate::glm::Link;
    use crate::numerics::RngStream;
    use proptest::prelude::*;

    fn masked(label: &str, n: usize, seed: u64) -> SurvivalDataset {
        let rng = RngStream::new(seed, 0);
        let full = generate_dataset(&DgpConfig::with_n(n), &rng).unwrap();
        let pattern = pattern_by_label(label).unwrap();
        impose_missingness(&full, &pattern, &mut rng.substream(2)).unwrap()
    }

    fn assert_observed_unchanged(before: &SurvivalDataset, after: &SurvivalDataset) {
        for i in 0..before.len() {
            for j in 0..before.n_covariates() {
                if let Some(v) = before.value(i, j) {
                    assert_eq!(after.value(i, j).unwrap().to_bits(), v.to_bits());
                }
            }
        }
    }

    #[test]
    fn guided_models_use_expected_links() {
        let data = masked("guided", 2000, 4);
        assert_eq!(data.incomplete_columns(), vec![0, 2, 3]);
        let predictors = complete_columns(&data);
        assert_eq!(predictors, vec![1, 4, 5, 6, 7, 8, 9, 10]);
        let models = fit_imputation_models(&data, &[0, 2, 3], &predictors).unwrap();
        let links: Vec<Link> = models
            .models
            .iter()
            .map(|m| m.fit.as_ref().unwrap().link)
            .collect();
        assert_eq!(links, vec![Link::Logit, Link::Identity, Link::Logit]);
        assert_eq!(models.n_fallbacks(), 0);

        let (imputed, report) = impute(&data, &models, ImputationStrategy::All).unwrap();
        assert!(report.is_empty());
        assert!(!imputed.has_missing());
        assert_observed_unchanged(&data, &imputed);
        for i in 0..imputed.len() {
            for j in [0, 3] {
                let v = imputed.value(i, j).unwrap();
                assert!(v == 0.0 || v == 1.0);
            }
            assert!(imputed.value(i, 2).unwrap().is_finite());
        }
    }

    #[test]
    fn fully_observed_target_uses_all_rows() {
        let data = masked("none", 300, 1);
        let models = fit_imputation_models(&data, &[2], &[1, 4]).unwrap();
        assert_eq!(models.models[0].fit.as_ref().unwrap().n_used, 300);
    }

    #[test]
    fn constant_binary_target_falls_back_to_mode() {
        let mut data = masked("none", 200, 2);
        for i in 0..data.len() {
            data.set_value(i, 0, Some(1.0));
        }
        data.set_value(0, 0, None);
        data.set_value(5, 0, None);
        let models = fit_imputation_models(&data, &[0], &[1, 2]).unwrap();
        assert!(models.models[0].uses_fallback());
        assert_eq!(models.models[0].fallback, 1.0);
        let (imputed, _) = impute(&data, &models, ImputationStrategy::All).unwrap();
        assert_eq!(imputed.value(0, 0), Some(1.0));
        assert_eq!(imputed.value(5, 0), Some(1.0));
    }

    #[test]
    fn all_missing_target_is_an_error() {
        let mut data = masked("none", 20, 3);
        for i in 0..data.len() {
            data.set_value(i, 2, None);
        }
        assert!(matches!(
            fit_imputation_models(&data, &[2], &[1]),
            Err(Error::EmptyTrainingSet { target: 2 })
        ));
    }

    #[test]
    fn complete_data_is_left_alone() {
        let data = masked("none", 100, 5);
        for strategy in ImputationStrategy::defaults() {
            let (out, report, _) = fit_and_impute(&data, strategy).unwrap();
            assert_eq!(out, data);
            assert!(report.is_empty());
            assert_eq!(report.imputed_cells, 0);
        }
    }

    #[test]
    fn high_missing_skips_low_fraction_targets() {
        let data = masked("E", 3000, 6);
        let n_x1 = (0..data.len()).filter(|&i| data.value(i, 0).is_none()).count();
        let (out, report, _) = fit_and_impute(&data, ImputationStrategy::high_missing()).unwrap();
        for i in 0..data.len() {
            assert_eq!(out.value(i, 0).is_none(), data.value(i, 0).is_none());
        }
        assert!(!out.column(2).iter().any(Option::is_none));
        assert!(!out.column(3).iter().any(Option::is_none));
        assert_eq!(report.rows.len(), n_x1);
        let frac = n_x1 as f64 / data.len() as f64;
        assert!((frac - 0.05).abs() < 0.015, "{frac}");
    }

    #[test]
    fn few_missing_skips_heavily_missing_rows() {
        let data = masked("I", 2000, 7);
        let (out, report, _) = fit_and_impute(&data, ImputationStrategy::OnlyFewMissing { max_missing: 1 }).unwrap();
        assert_observed_unchanged(&data, &out);
        for i in 0..data.len() {
            let k = data.missing_in_row(i);
            if k <= 1 {
                assert!(out.is_complete_row(i));
            } else {
                assert_eq!(out.missing_in_row(i), k);
            }
        }
        let expected: Vec<usize> = (0..data.len()).filter(|&i| data.missing_in_row(i) > 1).collect();
        assert_eq!(report.rows, expected);
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("all".parse::<ImputationStrategy>().unwrap(), ImputationStrategy::All);
        assert_eq!("HIGH".parse::<ImputationStrategy>().unwrap(), ImputationStrategy::high_missing());
        assert_eq!(
            "few:3".parse::<ImputationStrategy>().unwrap(),
            ImputationStrategy::OnlyFewMissing { max_missing: 3 }
        );
        assert!("high:1.5".parse::<ImputationStrategy>().is_err());
        assert!("mice".parse::<ImputationStrategy>().is_err());
        for s in ImputationStrategy::defaults() {
            assert_eq!(s.to_string().parse::<ImputationStrategy>().unwrap(), s);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn imputation_is_deterministic_and_preserves_observed(seed in 0u64..500, which in 0usize..3, label in "[A-I]") {
            let data = masked(&label, 400, seed);
            let strategy = ImputationStrategy::defaults()[which];
            let (a, ra, _) = fit_and_impute(&data, strategy).unwrap();
            let (b, rb, _) = fit_and_impute(&data, strategy).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(ra, rb);
            assert_observed_unchanged(&data, &a);
            if strategy == ImputationStrategy::All {
                prop_assert!(!a.has_missing());
            }
        }
    }
}
