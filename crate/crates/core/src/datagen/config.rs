use crate::error::{Error, Result};
use crate::numerics::{cholesky, DenseMatrix};

pub const N_COVARIATES: usize = 11;

/// Covariate means estimated from the motivating cohort.
pub const COVARIATE_MEANS: [f64; N_COVARIATES] = [
    0.6145, 57.6495, 2.3665, 0.4225, 0.1538, 0.2421, 0.4142, 0.8680, 0.1695, 0.1636, 0.8891,
];

/// Lower triangle of the covariate covariance matrix, row by row.
const COVARIANCE_LOWER: [&[f64]; N_COVARIATES] = [
    &[0.2370],
    &[-1.3349, 196.2990],
    &[0.0812, 0.6471, 1.0967],
    &[0.0247, -0.6314, 0.0680, 0.2441],
    &[0.0298, -0.0759, 0.0452, 0.0063, 0.1302],
    &[0.0134, 0.3167, 0.0063, -0.0089, 0.0070, 0.0558],
    &[0.0280, -0.7944, 0.0740, 0.0468, 0.0214, -0.0015, 0.2427],
    &[-0.0069, 0.0156, -0.0190, -0.0581, -0.0026, 0.0050, -0.0119, 0.1146],
    &[0.0039, -0.1261, -0.0080, 0.0484, 0.0016, -0.0026, 0.0131, -0.0318, 0.1408],
    &[0.0002, 0.0294, -0.0147, 0.0003, -0.0001, 0.0003, 0.0017, 0.0001, 0.0050, 0.1369],
    &[0.0223, -0.8057, -0.0075, -0.0139, 0.0043, 0.0000, 0.0012, 0.0086, -0.0267, 0.0014, 0.0986],
];

/// True hazard ratios for x1..x11.
pub const HAZARD_RATIOS: [f64; N_COVARIATES] =
    [0.80, 1.05, 1.25, 1.54, 1.18, 1.45, 1.10, 0.76, 0.64, 1.25, 0.48];

/// Zero-based indices of the covariates dichotomised at 0.5 (x1, x4, x5, x7..x11).
pub const BINARY_COVARIATES: [usize; 8] = [0, 3, 4, 6, 7, 8, 9, 10];

/// Parameters of the synthetic cohort. Weibull parameters are `(shape, scale)`
/// with `S(t) = exp(-(t/scale)^shape)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpConfig {
    pub n: usize,
    pub mean: Vec<f64>,
    pub covariance: DenseMatrix,
    pub binary: Vec<usize>,
    pub log_hr: Vec<f64>,
    pub event_shape: f64,
    pub event_scale: f64,
    pub cens_shape: f64,
    pub cens_scale: f64,
    pub horizon: f64,
}

pub fn default_covariance() -> DenseMatrix {
    let mut m = DenseMatrix::zeros(N_COVARIATES, N_COVARIATES);
    for (i, row) in COVARIANCE_LOWER.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            n: 3500,
            mean: COVARIATE_MEANS.to_vec(),
            covariance: default_covariance(),
            binary: BINARY_COVARIATES.to_vec(),
            log_hr: HAZARD_RATIOS.iter().map(|hr| hr.ln()).collect(),
            event_shape: 1.6,
            event_scale: 122.0,
            cens_shape: 2.6,
            cens_scale: 8.2,
            horizon: 5.0,
        }
    }
}

impl DgpConfig {
    pub fn with_n(n: usize) -> Self {
        Self {
            n,
            ..Self::default()
        }
    }

    pub fn n_covariates(&self) -> usize {
        self.mean.len()
    }

    pub fn is_binary(&self, j: usize) -> bool {
        self.binary.contains(&j)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.mean.len();
        if self.log_hr.len() != p || self.covariance.rows() != p || self.covariance.cols() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                actual: self.log_hr.len().min(self.covariance.rows()),
            });
        }
        if let Some(&j) = self.binary.iter().find(|&&j| j >= p) {
            return Err(Error::InvalidInput(format!("binary index {j} out of range")));
        }
        let positive = [
            self.event_shape,
            self.event_scale,
            self.cens_shape,
            self.cens_scale,
            self.horizon,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidInput(
                "Weibull parameters and horizon must be positive".into(),
            ));
        }
        cholesky(&self.covariance).map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = DgpConfig::default();
        c.validate().unwrap();
        assert_eq!(c.n_covariates(), 11);
        assert_eq!(c.covariance[(1, 1)], 196.2990);
        assert_eq!(c.covariance[(10, 1)], -0.8057);
        assert_eq!(c.covariance[(1, 10)], -0.8057);
        assert!((c.log_hr[10] - 0.48f64.ln()).abs() < 1e-15);
        assert!(c.is_binary(0) && !c.is_binary(1) && !c.is_binary(2) && !c.is_binary(5));
    }

    #[test]
    fn broken_config_rejected() {
        let mut c = DgpConfig::default();
        c.covariance[(0, 0)] = -1.0;
        assert!(c.validate().is_err());
        let mut c = DgpConfig::default();
        c.log_hr.pop();
        assert!(c.validate().is_err());
        let mut c = DgpConfig::default();
        c.event_shape = 0.0;
        assert!(c.validate().is_err());
    }
}
