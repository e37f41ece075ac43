//! Random streams, samplers and the small SPD linear algebra the models need.

mod linalg;
mod rng;
mod sampling;

pub use linalg::{cholesky, cholesky_solve, dot, solve_spd, solve_spd_scaled, DenseMatrix, PIVOT_TOLERANCE};
pub use rng::RngStream;
pub use sampling::{sample_bernoulli, sample_mvn, sample_uniform, sample_weibull, weibull_quantile};

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
