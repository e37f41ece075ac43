use super::config::DgpConfig;
use super::dataset::SurvivalDataset;
use crate::error::{Error, Result};
use crate::numerics::{dot, sample_mvn, sample_uniform, sample_weibull, DenseMatrix, RngStream};

/// Multivariate normal covariates with the binary columns thresholded
/// (`1` if the raw draw exceeds 0.5, else `0`).
pub fn generate_covariates(config: &DgpConfig, rng: &mut RngStream) -> Result<DenseMatrix> {
    config.validate()?;
    let mut x = sample_mvn(&config.mean, &config.covariance, config.n, rng)?;
    for i in 0..x.rows() {
        let row = x.row_mut(i);
        for &j in &config.binary {
            row[j] = if row[j] > 0.5 { 1.0 } else { 0.0 };
        }
    }
    Ok(x)
}

/// Observed outcome plus the latent times it was built from.
#[derive(Debug, Clone)]
pub struct SimulatedOutcome {
    pub time: Vec<f64>,
    pub event: Vec<bool>,
    pub event_time: Vec<f64>,
    pub censor_time: Vec<f64>,
}

/// Event time by inverse transform, `t = b((-ln u)/exp(β'x))^(1/a)`.
pub fn weibull_event_time(u: f64, linear_predictor: f64, shape: f64, scale: f64) -> f64 {
    scale * ((-u.ln()) / linear_predictor.exp()).powf(1.0 / shape)
}

/// Proportional-hazards Weibull event times and independent Weibull censoring.
/// All uniforms for the event times are drawn before the censoring times.
pub fn generate_survival(
    covariates: &DenseMatrix,
    config: &DgpConfig,
    rng: &mut RngStream,
) -> Result<SimulatedOutcome> {
    if covariates.cols() != config.log_hr.len() {
        return Err(Error::DimensionMismatch {
            expected: config.log_hr.len(),
            actual: covariates.cols(),
        });
    }
    let n = covariates.rows();
    let u = sample_uniform(n, rng);
    let event_time: Vec<f64> = (0..n)
        .map(|i| {
            let lp = dot(covariates.row(i), &config.log_hr);
            weibull_event_time(u[i], lp, config.event_shape, config.event_scale)
        })
        .collect();
    let censor_time = sample_weibull(config.cens_shape, config.cens_scale, n, rng)?;
    let time = event_time
        .iter()
        .zip(&censor_time)
        .map(|(t, c)| t.min(*c))
        .collect();
    let event = event_time
        .iter()
        .zip(&censor_time)
        .map(|(t, c)| t <= c)
        .collect();
    Ok(SimulatedOutcome {
        time,
        event,
        event_time,
        censor_time,
    })
}

/// A complete synthetic cohort. Covariates come from `rng.substream(0)` and
/// outcomes from `rng.substream(1)`.
pub fn generate_dataset(config: &DgpConfig, rng: &RngStream) -> Result<SurvivalDataset> {
    let x = generate_covariates(config, &mut rng.substream(0))?;
    let outcome = generate_survival(&x, config, &mut rng.substream(1))?;
    SurvivalDataset::from_complete(outcome.time, outcome.event, &x)
}
