//! Samplers used by the data-generating process.
//!
//! Weibull draws use the `(shape k, scale λ)` parameterisation with survival
//! function `S(t) = exp(-(t/λ)^k)`; `λ` is the characteristic life, not a rate.

use rand::Rng;
use rand_distr::{Open01, StandardNormal};

use super::linalg::{cholesky, DenseMatrix};
use super::rng::RngStream;
use crate::error::{Error, Result};

/// `n` i.i.d. rows of `mean + L z`, `L` the Cholesky factor of `cov`.
pub fn sample_mvn(
    mean: &[f64],
    cov: &DenseMatrix,
    n: usize,
    rng: &mut RngStream,
) -> Result<DenseMatrix> {
    let p = mean.len();
    if cov.rows() != p || cov.cols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            actual: cov.rows(),
        });
    }
    let l = cholesky(cov)?;
    let mut out = DenseMatrix::zeros(n, p);
    let mut z = vec![0.0; p];
    for i in 0..n {
        for zj in z.iter_mut() {
            *zj = rng.sample(StandardNormal);
        }
        let row = out.row_mut(i);
        for j in 0..p {
            let lj = l.row(j);
            row[j] = mean[j] + lj[..=j].iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Ok(out)
}

fn check_weibull(shape: f64, scale: f64) -> Result<()> {
    if !(shape > 0.0 && shape.is_finite() && scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "Weibull shape and scale must be positive (got {shape}, {scale})"
        )));
    }
    Ok(())
}

/// Inverse-transform Weibull draws, `scale * (-ln u)^(1/shape)` with `u ∈ (0,1)`.
pub fn sample_weibull(shape: f64, scale: f64, n: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    check_weibull(shape, scale)?;
    Ok((0..n)
        .map(|_| {
            let u: f64 = rng.sample(Open01);
            scale * (-u.ln()).powf(1.0 / shape)
        })
        .collect())
}

/// Closed-form Weibull quantile `scale * (-ln(1-q))^(1/shape)`.
pub fn weibull_quantile(shape: f64, scale: f64, q: f64) -> f64 {
    scale * (-(1.0 - q).ln()).powf(1.0 / shape)
}

/// Uniform draws on the open interval (0, 1).
pub fn sample_uniform(n: usize, rng: &mut RngStream) -> Vec<f64> {
    (0..n).map(|_| rng.sample(Open01)).collect()
}

/// One Bernoulli draw per probability.
pub fn sample_bernoulli(probs: &[f64], rng: &mut RngStream) -> Vec<bool> {
    probs
        .iter()
        .map(|&p| rng.random::<f64>() < p)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn mvn_standard_mean() {
        let m = sample_mvn(&[0.0, 0.0], &DenseMatrix::identity(2), 10_000, &mut RngStream::new(1, 0))
            .unwrap();
        for j in 0..2 {
            assert!(mean(&m.column(j)).abs() < 0.05);
        }
    }

    #[test]
    fn mvn_correlation() {
        let cov = DenseMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let m = sample_mvn(&[0.0, 0.0], &cov, 10_000, &mut RngStream::new(2, 0)).unwrap();
        let (a, b) = (m.column(0), m.column(1));
        let (ma, mb) = (mean(&a), mean(&b));
        let cov_ab: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        let r = cov_ab / (va * vb).sqrt();
        assert!((r - 0.5).abs() < 0.05, "r = {r}");
    }

    #[test]
    fn mvn_empty_and_bad_cov() {
        let m = sample_mvn(&[1.0], &DenseMatrix::identity(1), 0, &mut RngStream::new(3, 0)).unwrap();
        assert_eq!(m.rows(), 0);
        let bad = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(sample_mvn(&[0.0, 0.0], &bad, 5, &mut RngStream::new(3, 0)).is_err());
    }

    #[test]
    fn weibull_exponential_mean() {
        let v = sample_weibull(1.0, 1.0, 10_000, &mut RngStream::new(4, 0)).unwrap();
        assert!((mean(&v) - 1.0).abs() < 0.03);
        assert!(v.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn weibull_censoring_median() {
        let mut v = sample_weibull(2.6, 8.2, 10_000, &mut RngStream::new(5, 0)).unwrap();
        v.sort_by(f64::total_cmp);
        let median = 0.5 * (v[4999] + v[5000]);
        let expected = 8.2 * 2f64.ln().powf(1.0 / 2.6);
        assert!((expected - 7.12).abs() < 0.01);
        assert!((median - expected).abs() < 0.1, "median {median}");
    }

    #[test]
    fn weibull_quantiles_within_three_sigma() {
        let (shape, scale, n) = (1.6, 3.0, 100_000);
        let v = sample_weibull(shape, scale, n, &mut RngStream::new(6, 0)).unwrap();
        for q in [0.1, 0.25, 0.5, 0.75, 0.9] {
            let x = weibull_quantile(shape, scale, q);
            let frac = v.iter().filter(|&&d| d <= x).count() as f64 / n as f64;
            let sigma = (q * (1.0 - q) / n as f64).sqrt();
            assert!((frac - q).abs() < 3.0 * sigma, "q={q} frac={frac}");
        }
    }

    #[test]
    fn weibull_rejects_bad_parameters() {
        assert!(sample_weibull(0.0, 1.0, 3, &mut RngStream::new(0, 0)).is_err());
        assert!(sample_weibull(1.0, -1.0, 3, &mut RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn replay_is_bit_identical() {
        let a = sample_weibull(1.6, 122.0, 100, &mut RngStream::new(7, 2)).unwrap();
        let b = sample_weibull(1.6, 122.0, 100, &mut RngStream::new(7, 2)).unwrap();
        assert_eq!(a, b);
        let ua = sample_uniform(50, &mut RngStream::new(8, 1));
        let ub = sample_uniform(50, &mut RngStream::new(8, 1));
        assert_eq!(ua, ub);
        assert!(ua.iter().all(|&u| u > 0.0 && u < 1.0));
        let p = vec![0.3; 200];
        assert_eq!(
            sample_bernoulli(&p, &mut RngStream::new(9, 0)),
            sample_bernoulli(&p, &mut RngStream::new(9, 0))
        );
    }

    #[test]
    fn bernoulli_extremes() {
        let draws = sample_bernoulli(&[0.0, 1.0, 0.0, 1.0], &mut RngStream::new(10, 0));
        assert_eq!(draws, vec![false, true, false, true]);
    }
}
