use crate::error::{Error, Result};
use crate::numerics::{dot, solve_spd_scaled, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoxOptions {
    pub max_iter: usize,
    /// Stop when `|1 - ll_new / ll_old|` drops below this.
    pub tol: f64,
    pub max_halvings: usize,
    /// Reject fits whose next Newton step is still large, i.e. coefficients
    /// heading to infinity under monotone likelihood.
    pub check_divergence: bool,
}

impl Default for CoxOptions {
    fn default() -> Self {
        Self {
            max_iter: 20,
            tol: 1e-9,
            max_halvings: 10,
            check_divergence: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoxFit {
    pub beta: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// `(event time, cumulative baseline hazard)`, times strictly increasing.
    pub baseline: Vec<(f64, f64)>,
}

impl CoxFit {
    /// Step value of the baseline at the largest event time `<= t`.
    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        let k = self.baseline.partition_point(|&(s, _)| s <= t);
        if k == 0 {
            0.0
        } else {
            self.baseline[k - 1].1
        }
    }

    pub fn hazard_ratios(&self) -> Vec<f64> {
        self.beta.iter().map(|b| b.exp()).collect()
    }
}

/// Rows sorted by decreasing time, covariates centred.
struct Prepared {
    x: Vec<f64>,
    time: Vec<f64>,
    event: Vec<bool>,
    p: usize,
}

impl Prepared {
    fn new(x: &DenseMatrix, s: &[f64], delta: &[bool], center: bool) -> Self {
        let (n, p) = (x.rows(), x.cols());
        let means: Vec<f64> = (0..p)
            .map(|j| {
                if center && n > 0 {
                    (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64
                } else {
                    0.0
                }
            })
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
        let mut xs = Vec::with_capacity(n * p);
        for &i in &order {
            xs.extend(x.row(i).iter().zip(&means).map(|(v, m)| v - m));
        }
        Self {
            x: xs,
            time: order.iter().map(|&i| s[i]).collect(),
            event: order.iter().map(|&i| delta[i]).collect(),
            p,
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    /// Efron partial log-likelihood, and optionally its gradient and
    /// information matrix (row-major).
    fn evaluate(&self, beta: &[f64], derivs: bool) -> (f64, Vec<f64>, Vec<f64>) {
        let p = self.p;
        let n = self.time.len();
        let eta: Vec<f64> = (0..n).map(|i| dot(self.row(i), beta)).collect();
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0);
        let w: Vec<f64> = eta.iter().map(|e| (e - shift).exp()).collect();

        let mut ll = 0.0;
        let mut grad = vec![0.0; if derivs { p } else { 0 }];
        let mut info = vec![0.0; if derivs { p * p } else { 0 }];
        let (mut s0, mut s1, mut s2) = (0.0, vec![0.0; p], vec![0.0; p * p]);
        let (mut e1, mut e2) = (vec![0.0; p], vec![0.0; p * p]);
        let mut a1 = vec![0.0; p];

        let mut i = 0;
        while i < n {
            let t = self.time[i];
            let mut e0 = 0.0;
            let mut d = 0usize;
            if derivs {
                e1.fill(0.0);
                e2.fill(0.0);
            }
            while i < n && self.time[i] == t {
                let xi = self.row(i);
                let wi = w[i];
                s0 += wi;
                if derivs {
                    for a in 0..p {
                        let wa = wi * xi[a];
                        s1[a] += wa;
                        for b in 0..=a {
                            s2[a * p + b] += wa * xi[b];
                        }
                    }
                }
                if self.event[i] {
                    d += 1;
                    e0 += wi;
                    ll += eta[i];
                    if derivs {
                        for a in 0..p {
                            let wa = wi * xi[a];
                            e1[a] += wa;
                            grad[a] += xi[a];
                            for b in 0..=a {
                                e2[a * p + b] += wa * xi[b];
                            }
                        }
                    }
                }
                i += 1;
            }
            for l in 0..d {
                let f = l as f64 / d as f64;
                let r0 = s0 - f * e0;
                ll -= r0.ln() + shift;
                if derivs {
                    for a in 0..p {
                        a1[a] = (s1[a] - f * e1[a]) / r0;
                        grad[a] -= a1[a];
                    }
                    for a in 0..p {
                        for b in 0..=a {
                            let r2 = (s2[a * p + b] - f * e2[a * p + b]) / r0;
                            info[a * p + b] += r2 - a1[a] * a1[b];
                        }
                    }
                }
            }
        }
        if derivs {
            for a in 0..p {
                for b in 0..a {
                    info[b * p + a] = info[a * p + b];
                }
            }
        }
        (ll, grad, info)
    }
}

fn check_inputs(x: &DenseMatrix, s: &[f64], delta: &[bool]) -> Result<()> {
    let n = x.rows();
    if s.len() != n || delta.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: s.len().min(delta.len()),
        });
    }
    if s.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("non-finite survival time".into()));
    }
    Ok(())
}

/// Efron partial log-likelihood at `beta` with its gradient and observed
/// information.
pub fn cox_partial_likelihood(
    x: &DenseMatrix,
    s: &[f64],
    delta: &[bool],
    beta: &[f64],
) -> Result<(f64, Vec<f64>, DenseMatrix)> {
    check_inputs(x, s, delta)?;
    if beta.len() != x.cols() {
        return Err(Error::DimensionMismatch {
            expected: x.cols(),
            actual: beta.len(),
        });
    }
    let prep = Prepared::new(x, s, delta, false);
    let (ll, grad, info) = prep.evaluate(beta, true);
    Ok((ll, grad, DenseMatrix::new(x.cols(), x.cols(), info)?))
}

fn newton_step(info: Vec<f64>, grad: &[f64]) -> Result<Vec<f64>> {
    let p = grad.len();
    let info = DenseMatrix::new(p, p, info).map_err(|_| Error::SingularInformation)?;
    solve_spd_scaled(&info, grad).map_err(|_| Error::SingularInformation)
}

pub(crate) fn fit_traced(
    x: &DenseMatrix,
    s: &[f64],
    delta: &[bool],
    opts: &CoxOptions,
) -> Result<(CoxFit, Vec<f64>)> {
    check_inputs(x, s, delta)?;
    let (n, p) = (x.rows(), x.cols());
    if n <= p {
        return Err(Error::InsufficientData(format!("{n} subjects for {p} covariates")));
    }
    if !delta.iter().any(|&d| d) {
        return Err(Error::InsufficientData("no events".into()));
    }
    let prep = Prepared::new(x, s, delta, true);
    let mut beta = vec![0.0; p];
    let (mut ll, mut grad, mut info) = prep.evaluate(&beta, true);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        let step = newton_step(info, &grad)?;
        iterations += 1;
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, d)| b + scale * d).collect();
            let (cll, _, _) = prep.evaluate(&cand, false);
            if cll.is_finite() && cll >= ll {
                accepted = Some((cand, cll));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, cll)) = accepted else {
            // no ascent left along the Newton direction
            let (_, g, i) = prep.evaluate(&beta, true);
            grad = g;
            info = i;
            converged = true;
            break;
        };
        let rel = if ll != 0.0 { (1.0 - cll / ll).abs() } else { (cll - ll).abs() };
        beta = cand;
        let (l, g, i) = prep.evaluate(&beta, true);
        ll = l;
        grad = g;
        info = i;
        trace.push(cll);
        if rel < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence(format!(
            "no convergence after {} iterations",
            opts.max_iter
        )));
    }
    let last = newton_step(info, &grad)?;
    if opts.check_divergence {
        if let Some(j) = (0..p).find(|&j| last[j].abs() > 1e-2 * beta[j].abs().max(1.0)) {
            return Err(Error::NonConvergence(format!(
                "coefficient {} is diverging (beta = {:.3}, next step {:.3})",
                j + 1,
                beta[j],
                last[j]
            )));
        }
    }
    // One last full Newton step from the converged point. The tolerance stops
    // on likelihood change, so this removes the leftover O(sqrt(tol)) error in
    // beta and makes the result independent of summation order.
    if last.iter().zip(&beta).all(|(d, b)| d.abs() <= 1e-2 * b.abs().max(1.0)) {
        let polished: Vec<f64> = beta.iter().zip(&last).map(|(b, d)| b + d).collect();
        let (pll, _, _) = prep.evaluate(&polished, false);
        if pll.is_finite() && pll >= ll - 1e-12 * ll.abs() {
            beta = polished;
            ll = pll;
        }
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonConvergence("non-finite coefficients".into()));
    }
    let baseline = breslow_baseline(&beta, x, s, delta)?;
    Ok((
        CoxFit {
            beta,
            loglik: ll,
            converged,
            iterations,
            baseline,
        },
        trace,
    ))
}

/// Newton-Raphson on the Efron partial likelihood with default options.
pub fn fit_cox(x: &DenseMatrix, s: &[f64], delta: &[bool]) -> Result<CoxFit> {
    fit_cox_with(x, s, delta, &CoxOptions::default())
}

pub fn fit_cox_with(x: &DenseMatrix, s: &[f64], delta: &[bool], opts: &CoxOptions) -> Result<CoxFit> {
    fit_traced(x, s, delta, opts).map(|(fit, _)| fit)
}

/// Breslow cumulative baseline hazard: at each distinct event time the
/// increment is `d_t / sum_{risk set} exp(beta'x)` on the raw covariates.
pub fn breslow_baseline(
    beta: &[f64],
    x: &DenseMatrix,
    s: &[f64],
    delta: &[bool],
) -> Result<Vec<(f64, f64)>> {
    check_inputs(x, s, delta)?;
    if beta.len() != x.cols() {
        return Err(Error::DimensionMismatch {
            expected: x.cols(),
            actual: beta.len(),
        });
    }
    let prep = Prepared::new(x, s, delta, false);
    let n = prep.time.len();
    let mut increments = Vec::new();
    let mut s0 = 0.0;
    let mut i = 0;
    while i < n {
        let t = prep.time[i];
        let mut d = 0usize;
        while i < n && prep.time[i] == t {
            s0 += dot(prep.row(i), beta).exp();
            d += prep.event[i] as usize;
            i += 1;
        }
        if d > 0 {
            increments.push((t, d as f64 / s0));
        }
    }
    increments.reverse();
    let mut h = 0.0;
    Ok(increments
        .into_iter()
        .map(|(t, dh)| {
            h += dh;
            (t, h)
        })
        .collect())
}

/// Absolute risk by `t`: `1 - exp(-H0(t) exp(beta'x))`.
pub fn predict_risk(fit: &CoxFit, x_new: &DenseMatrix, t: f64) -> Result<Vec<f64>> {
    if x_new.cols() != fit.beta.len() {
        return Err(Error::DimensionMismatch {
            expected: fit.beta.len(),
            actual: x_new.cols(),
        });
    }
    let h0 = fit.cumulative_hazard(t);
    Ok((0..x_new.rows())
        .map(|i| -(-h0 * dot(x_new.row(i), &fit.beta).exp()).exp_m1())
        .collect())
}
