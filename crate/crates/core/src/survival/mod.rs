//! Cox regression, its Breslow baseline, and the censoring-distribution estimate.

mod cox;
mod km;

pub use cox::{
    breslow_baseline, cox_partial_likelihood, fit_cox, fit_cox_with, predict_risk, CoxFit, CoxOptions,
};
pub use km::{kaplan_meier, km_censoring, KmCurve};
