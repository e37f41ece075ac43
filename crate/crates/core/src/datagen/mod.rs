//! Synthetic survival cohorts and MAR covariate masking.

mod config;
mod dataset;
mod generate;
mod missing;

pub use config::{
    default_covariance, DgpConfig, BINARY_COVARIATES, COVARIATE_MEANS, HAZARD_RATIOS, N_COVARIATES,
};
pub use dataset::SurvivalDataset;
pub use generate::{
    generate_covariates, generate_dataset, generate_survival, weibull_event_time, SimulatedOutcome,
};
pub use missing::{
    calibrate_intercept, compute_gamma0, compute_gamma1, impose_missingness, InterceptRule, pattern_by_label, pattern_catalog,
    JointProportion, MissingEntry, MissingPattern, MissingnessCoefficients,
};
