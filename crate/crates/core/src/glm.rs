//! Linear and logistic regression for the imputation models.

use crate::error::{Error, Result};
use crate::numerics::{dot, logistic, solve_spd_scaled, DenseMatrix};

pub const MAX_ITER: usize = 25;
pub const MAX_HALVINGS: usize = 10;
const SCORE_TOL: f64 = 1e-8;
const REL_LL_TOL: f64 = 1e-10;
const SCORE_TOL_LOOSE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Identity,
    Logit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub link: Link,
    /// Intercept first, matching the design column order.
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub n_used: usize,
}

fn check_shape(design: &DenseMatrix, y: &[f64]) -> Result<()> {
    if design.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: design.rows(),
            actual: y.len(),
        });
    }
    if design.rows() < design.cols() || design.cols() == 0 {
        return Err(Error::RankDeficient);
    }
    Ok(())
}

/// `X'WX` and `X'v` in one pass; `w = None` means unit weights.
fn cross_products(design: &DenseMatrix, w: Option<&[f64]>, v: &[f64]) -> (DenseMatrix, Vec<f64>) {
    let p = design.cols();
    let mut xtx = DenseMatrix::zeros(p, p);
    let mut xtv = vec![0.0; p];
    for i in 0..design.rows() {
        let row = design.row(i);
        let wi = w.map_or(1.0, |w| w[i]);
        for a in 0..p {
            let ra = row[a] * wi;
            xtv[a] += row[a] * v[i];
            for b in 0..=a {
                xtx[(a, b)] += ra * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[(b, a)] = xtx[(a, b)];
        }
    }
    (xtx, xtv)
}

/// Ordinary least squares through the normal equations.
pub fn fit_linear(design: &DenseMatrix, y: &[f64]) -> Result<GlmFit> {
    check_shape(design, y)?;
    let (xtx, xty) = cross_products(design, None, y);
    let coefficients = solve_spd_scaled(&xtx, &xty).map_err(|_| Error::RankDeficient)?;
    Ok(GlmFit {
        link: Link::Identity,
        coefficients,
        converged: true,
        iterations: 1,
        n_used: y.len(),
    })
}

/// Bernoulli log-likelihood at linear predictor values `eta`.
pub fn logistic_loglik(eta: &[f64], y: &[f64]) -> f64 {
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| {
            // y*e - ln(1 + e^e), evaluated without overflow
            let softplus = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            yi * e - softplus
        })
        .sum()
}

/// Gradient of the Bernoulli log-likelihood, `X'(y - p)`.
pub fn logistic_score(design: &DenseMatrix, coefficients: &[f64], y: &[f64]) -> Vec<f64> {
    let mut score = vec![0.0; design.cols()];
    for i in 0..design.rows() {
        let r = y[i] - logistic(dot(design.row(i), coefficients));
        for (s, x) in score.iter_mut().zip(design.row(i)) {
            *s += x * r;
        }
    }
    score
}

fn linear_predictor(design: &DenseMatrix, beta: &[f64]) -> Vec<f64> {
    (0..design.rows()).map(|i| dot(design.row(i), beta)).collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// IRLS with step-halving. Returns the fit and the log-likelihood after each
/// accepted step (starting value first).
fn irls(design: &DenseMatrix, y: &[f64]) -> Result<(GlmFit, Vec<f64>)> {
    check_shape(design, y)?;
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidInput("logistic response must be 0/1".into()));
    }
    let p = design.cols();
    let mut beta = vec![0.0; p];
    let mut eta = vec![0.0; y.len()];
    let mut ll = logistic_loglik(&eta, y);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITER {
        let mu: Vec<f64> = eta.iter().map(|&e| logistic(e)).collect();
        let w: Vec<f64> = mu.iter().map(|m| m * (1.0 - m)).collect();
        let resid: Vec<f64> = y.iter().zip(&mu).map(|(a, b)| a - b).collect();
        let (info, score) = cross_products(design, Some(&w), &resid);
        if max_abs(&score) < SCORE_TOL {
            converged = true;
            break;
        }
        let step = match solve_spd_scaled(&info, &score) {
            Ok(s) => s,
            Err(_) if iterations == 0 => return Err(Error::RankDeficient),
            // information collapsed while coefficients ran off: separation
            Err(_) => break,
        };
        iterations += 1;

        let mut scale = 1.0;
        let mut candidate;
        let mut cand_eta;
        let mut cand_ll;
        let mut halvings = 0;
        loop {
            candidate = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect::<Vec<_>>();
            cand_eta = linear_predictor(design, &candidate);
            cand_ll = logistic_loglik(&cand_eta, y);
            if cand_ll >= ll || halvings == MAX_HALVINGS {
                break;
            }
            scale *= 0.5;
            halvings += 1;
        }
        if cand_ll < ll {
            // no ascent along the Newton direction; keep the better point
            break;
        }
        let rel = (cand_ll - ll).abs() / ll.abs().max(f64::MIN_POSITIVE);
        beta = candidate;
        eta = cand_eta;
        ll = cand_ll;
        trace.push(ll);
        if rel < REL_LL_TOL && max_abs(&logistic_score(design, &beta, y)) < SCORE_TOL_LOOSE {
            converged = true;
            break;
        }
    }
    if converged && diverging(design, y, &beta) {
        converged = false;
    }
    if beta.iter().any(|b| !b.is_finite()) {
        converged = false;
    }
    Ok((
        GlmFit {
            link: Link::Logit,
            coefficients: beta,
            converged,
            iterations,
            n_used: y.len(),
        },
        trace,
    ))
}

/// Under separation the score vanishes as coefficients run off, so a small
/// score alone is not proof of a finite maximum. A finite maximum has a
/// negligible next Newton step; a diverging one keeps stepping by O(1).
fn diverging(design: &DenseMatrix, y: &[f64], beta: &[f64]) -> bool {
    let eta = linear_predictor(design, beta);
    let mu: Vec<f64> = eta.iter().map(|&e| logistic(e)).collect();
    let w: Vec<f64> = mu.iter().map(|m| m * (1.0 - m)).collect();
    let resid: Vec<f64> = y.iter().zip(&mu).map(|(a, b)| a - b).collect();
    let (info, score) = cross_products(design, Some(&w), &resid);
    match solve_spd_scaled(&info, &score) {
        Ok(step) => step
            .iter()
            .zip(beta)
            .any(|(d, b)| d.abs() > 1e-2 * b.abs().max(1.0)),
        Err(_) => true,
    }
}

/// Logistic regression by IRLS. Separation is reported through
/// `converged = false` rather than an error.
pub fn fit_logistic(design: &DenseMatrix, y: &[f64]) -> Result<GlmFit> {
    irls(design, y).map(|(fit, _)| fit)
}

/// Fitted mean on the response scale.
pub fn predict_response(fit: &GlmFit, design: &DenseMatrix) -> Result<Vec<f64>> {
    if design.cols() != fit.coefficients.len() {
        return Err(Error::DimensionMismatch {
            expected: fit.coefficients.len(),
            actual: design.cols(),
        });
    }
    let eta = linear_predictor(design, &fit.coefficients);
    Ok(match fit.link {
        Link::Identity => eta,
        Link::Logit => eta.into_iter().map(logistic).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use proptest::prelude::*;
    use rand::Rng;

    fn with_intercept(cols: &[Vec<f64>]) -> DenseMatrix {
        let n = cols.first().map_or(0, |c| c.len());
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| std::iter::once(1.0).chain(cols.iter().map(|c| c[i])).collect())
            .collect();
        DenseMatrix::from_rows(&rows).unwrap()
    }

    fn intercept_only(n: usize) -> DenseMatrix {
        DenseMatrix::from_rows(&vec![vec![1.0]; n]).unwrap()
    }

    /// Gaussian elimination with partial pivoting on a general square system.
    fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a
            .iter()
            .zip(b)
            .map(|(r, v)| r.iter().copied().chain([*v]).collect())
            .collect();
        for k in 0..n {
            let piv = (k..n)
                .max_by(|&i, &j| m[i][k].abs().partial_cmp(&m[j][k].abs()).unwrap())
                .unwrap();
            m.swap(k, piv);
            for i in k + 1..n {
                let f = m[i][k] / m[k][k];
                for j in k..=n {
                    m[i][j] -= f * m[k][j];
                }
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let s: f64 = (k + 1..n).map(|j| m[k][j] * x[j]).sum();
            x[k] = (m[k][n] - s) / m[k][k];
        }
        x
    }

    fn normal_equations(x: &DenseMatrix, y: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let p = x.cols();
        let mut a = vec![vec![0.0; p]; p];
        let mut b = vec![0.0; p];
        for i in 0..x.rows() {
            for j in 0..p {
                b[j] += x[(i, j)] * y[i];
                for k in 0..p {
                    a[j][k] += x[(i, j)] * x[(i, k)];
                }
            }
        }
        (a, b)
    }

    fn random_problem(seed: u64, n: usize, p: usize) -> (DenseMatrix, Vec<f64>) {
        let mut rng = RngStream::new(seed, 0);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                std::iter::once(1.0)
                    .chain((1..p).map(|_| rng.random_range(-3.0..3.0)))
                    .collect()
            })
            .collect();
        let y = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        (DenseMatrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn exact_linear_relation() {
        let a = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [1.0, -1.0, 0.5, 2.0, 0.0, 3.0];
        let y: Vec<f64> = a.iter().zip(&b).map(|(a, b)| 1.0 + 2.0 * a - 3.0 * b).collect();
        let fit = fit_linear(&with_intercept(&[a.to_vec(), b.to_vec()]), &y).unwrap();
        for (c, e) in fit.coefficients.iter().zip([1.0, 2.0, -3.0]) {
            assert!((c - e).abs() < 1e-10);
        }
        assert!(fit.converged);
        assert_eq!(fit.iterations, 1);
        assert_eq!(fit.n_used, 6);
    }

    #[test]
    fn intercept_only_linear_is_mean() {
        let y = [2.0, 4.0, 9.0];
        let fit = fit_linear(&intercept_only(3), &y).unwrap();
        assert!((fit.coefficients[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn linear_matches_independent_solve() {
        let (x, y) = random_problem(5, 50, 4);
        let (a, b) = normal_equations(&x, &y);
        let expected = gauss_solve(&a, &b);
        let fit = fit_linear(&x, &y).unwrap();
        for (c, e) in fit.coefficients.iter().zip(&expected) {
            assert!((c - e).abs() < 1e-8);
        }
    }

    #[test]
    fn fitted_values_match_hat_matrix() {
        let (x, y) = random_problem(9, 30, 3);
        let p = x.cols();
        let (a, _) = normal_equations(&x, &y);
        // columns of (X'X)^-1 by solving against unit vectors
        let inv: Vec<Vec<f64>> = (0..p)
            .map(|k| gauss_solve(&a, &(0..p).map(|j| (j == k) as u8 as f64).collect::<Vec<_>>()))
            .collect();
        let fit = fit_linear(&x, &y).unwrap();
        let fitted = predict_response(&fit, &x).unwrap();
        for i in 0..x.rows() {
            let mut yhat = 0.0;
            for l in 0..x.rows() {
                let mut h = 0.0;
                for j in 0..p {
                    for k in 0..p {
                        h += x[(i, j)] * inv[k][j] * x[(l, k)];
                    }
                }
                yhat += h * y[l];
            }
            assert!((fitted[i] - yhat).abs() < 1e-8);
        }
    }

    #[test]
    fn collinear_design_is_rank_deficient() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        let x = with_intercept(&[a, b]);
        assert!(matches!(fit_linear(&x, &[1.0, 2.0, 3.0, 5.0]), Err(Error::RankDeficient)));
        assert!(matches!(fit_logistic(&x, &[0.0, 1.0, 0.0, 1.0]), Err(Error::RankDeficient)));
        let constant = with_intercept(&[vec![1.0; 4]]);
        assert!(matches!(fit_linear(&constant, &[1.0, 2.0, 3.0, 5.0]), Err(Error::RankDeficient)));
    }

    #[test]
    fn too_few_rows() {
        let x = with_intercept(&[vec![1.0]]);
        assert!(fit_linear(&x, &[1.0]).is_err());
    }

    #[test]
    fn logistic_intercept_only_is_logit_of_mean() {
        let y: Vec<f64> = (0..10).map(|i| (i < 3) as u8 as f64).collect();
        let fit = fit_logistic(&intercept_only(10), &y).unwrap();
        assert!(fit.converged);
        assert!((fit.coefficients[0] - (0.3f64 / 0.7).ln()).abs() < 1e-6, "{fit:?}");
        assert!((fit.coefficients[0] + 0.8473).abs() < 1e-4);
    }

    #[test]
    fn logistic_two_by_two_is_log_odds_ratio() {
        // cells: x=0 -> 12 events / 30 non-events; x=1 -> 25 / 9
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (xv, events, non) in [(0.0, 12, 30), (1.0, 25, 9)] {
            for k in 0..events + non {
                x.push(xv);
                y.push((k < events) as u8 as f64);
            }
        }
        let fit = fit_logistic(&with_intercept(&[x]), &y).unwrap();
        let lor = ((25.0 * 30.0) / (12.0 * 9.0) as f64).ln();
        assert!(fit.converged);
        assert!((fit.coefficients[1] - lor).abs() < 1e-6);
        assert!((fit.coefficients[0] - (12.0f64 / 30.0).ln()).abs() < 1e-6);
    }

    #[test]
    fn separation_is_flagged() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&v| (v >= 10.0) as u8 as f64).collect();
        let fit = fit_logistic(&with_intercept(&[x]), &y).unwrap();
        assert!(!fit.converged);
        assert!(fit.iterations <= MAX_ITER);
        let all_zero = fit_logistic(&intercept_only(8), &[0.0; 8]).unwrap();
        assert!(!all_zero.converged);
    }

    #[test]
    fn loglik_non_decreasing() {
        let mut rng = RngStream::new(3, 0);
        let x: Vec<f64> = (0..200).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| (rng.random::<f64>() < logistic(0.3 + 3.0 * v)) as u8 as f64)
            .collect();
        let (fit, trace) = irls(&with_intercept(&[x]), &y).unwrap();
        assert!(fit.converged);
        assert!(trace.windows(2).all(|w| w[1] >= w[0]));
        let (_, sep_trace) = irls(
            &with_intercept(&[(0..10).map(f64::from).collect()]),
            &(0..10).map(|i| (i >= 5) as u8 as f64).collect::<Vec<_>>(),
        )
        .unwrap();
        assert!(sep_trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn predict_with_zero_coefficients() {
        let x = with_intercept(&[vec![1.0, -2.0, 3.0]]);
        let mut fit = GlmFit {
            link: Link::Logit,
            coefficients: vec![0.0, 0.0],
            converged: true,
            iterations: 0,
            n_used: 0,
        };
        assert_eq!(predict_response(&fit, &x).unwrap(), vec![0.5; 3]);
        fit.link = Link::Identity;
        assert_eq!(predict_response(&fit, &x).unwrap(), vec![0.0; 3]);
        assert!(matches!(
            predict_response(&fit, &intercept_only(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn linear_residuals_orthogonal(seed in 0u64..1000, n in 6usize..60, p in 1usize..5) {
            prop_assume!(n > p + 1);
            let (x, y) = random_problem(seed, n, p);
            let fit = fit_linear(&x, &y).unwrap();
            let fitted = predict_response(&fit, &x).unwrap();
            for j in 0..x.cols() {
                let r: f64 = (0..n).map(|i| x[(i, j)] * (y[i] - fitted[i])).sum();
                prop_assert!(r.abs() < 1e-8);
            }
        }

        #[test]
        fn converged_logistic_has_small_score(seed in 0u64..1000, n in 20usize..200, slope in -2.0f64..2.0) {
            let mut rng = RngStream::new(seed, 1);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let z: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() < 0.4) as u8 as f64).collect();
            let y: Vec<f64> = x.iter().zip(&z)
                .map(|(a, b)| (rng.random::<f64>() < logistic(slope * a - 0.5 * b)) as u8 as f64)
                .collect();
            let design = with_intercept(&[x, z]);
            if let Ok(fit) = fit_logistic(&design, &y) {
                if fit.converged {
                    let s = logistic_score(&design, &fit.coefficients, &y);
                    prop_assert!(max_abs(&s) < 1e-6);
                }
                let fitted = predict_response(&fit, &design).unwrap();
                prop_assert!(fitted.iter().all(|p| *p >= 0.0 && *p <= 1.0));
            }
        }
    }
}
