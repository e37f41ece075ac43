//! IPCW time-dependent AUC and Brier score at a fixed horizon.

use crate::error::{Error, Result};
use crate::survival::{km_censoring, KmCurve};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Event observed at or before the horizon.
    Case,
    /// Still under observation after the horizon.
    Control,
    /// Censored at or before the horizon; status unknown.
    Censored,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScorePair {
    pub auc: f64,
    pub brier: f64,
    pub horizon: f64,
    pub n_cases: usize,
    pub n_controls: usize,
}

pub fn classify(s: f64, delta: bool, t: f64) -> Status {
    if s > t {
        Status::Control
    } else if delta {
        Status::Case
    } else {
        Status::Censored
    }
}

pub fn classify_at_horizon(s: &[f64], delta: &[bool], t: f64) -> Vec<Status> {
    s.iter().zip(delta).map(|(&si, &di)| classify(si, di, t)).collect()
}

fn check(risk: &[f64], s: &[f64], delta: &[bool], t: f64) -> Result<()> {
    let n = risk.len();
    if s.len() != n || delta.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: s.len().min(delta.len()),
        });
    }
    if !(t > 0.0) {
        return Err(Error::InvalidInput(format!("horizon must be positive, got {t}")));
    }
    if n == 0 {
        return Err(Error::InvalidInput("nothing to score".into()));
    }
    if risk.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::InvalidInput("risk outside [0,1]".into()));
    }
    Ok(())
}

fn weight(g: f64, time: f64) -> Result<f64> {
    if g > 0.0 {
        Ok(1.0 / g)
    } else {
        Err(Error::ZeroWeight { time })
    }
}

/// IPCW Brier score: cases weighted by `1/G(s-)`, controls by `1/G(t)`,
/// censored-before-horizon subjects contribute zero.
pub fn brier_score(risk: &[f64], s: &[f64], delta: &[bool], t: f64, g: &KmCurve) -> Result<f64> {
    check(risk, s, delta, t)?;
    let mut sum = 0.0;
    let mut control_w = None;
    for i in 0..risk.len() {
        match classify(s[i], delta[i], t) {
            Status::Case => sum += (1.0 - risk[i]).powi(2) * weight(g.before(s[i]), s[i])?,
            Status::Control => {
                let w = match control_w {
                    Some(w) => w,
                    None => *control_w.insert(weight(g.at(t), t)?),
                };
                sum += risk[i].powi(2) * w;
            }
            Status::Censored => {}
        }
    }
    Ok(sum / risk.len() as f64)
}

/// Cumulative/dynamic AUC with IPCW weights. Every control carries the same
/// weight `1/G(t)`, so each case's concordance reduces to counting controls
/// below (and tied with) its risk.
pub fn auc_td(risk: &[f64], s: &[f64], delta: &[bool], t: f64, g: &KmCurve) -> Result<f64> {
    check(risk, s, delta, t)?;
    let mut controls = Vec::new();
    let mut cases = Vec::new();
    for i in 0..risk.len() {
        match classify(s[i], delta[i], t) {
            Status::Case => cases.push((risk[i], weight(g.before(s[i]), s[i])?)),
            Status::Control => controls.push(risk[i]),
            Status::Censored => {}
        }
    }
    if cases.is_empty() {
        return Err(Error::NoCases);
    }
    if controls.is_empty() {
        return Err(Error::NoControls);
    }
    weight(g.at(t), t)?;
    controls.sort_by(f64::total_cmp);
    let m = controls.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (r, w) in cases {
        let below = controls.partition_point(|&c| c < r);
        let not_above = controls.partition_point(|&c| c <= r);
        num += w * (below as f64 + 0.5 * (not_above - below) as f64);
        den += w * m;
    }
    Ok(num / den)
}

/// Both metrics, with the censoring distribution estimated on the scored data.
pub fn score(risk: &[f64], s: &[f64], delta: &[bool], t: f64) -> Result<ScorePair> {
    check(risk, s, delta, t)?;
    let g = km_censoring(s, delta)?;
    let status = classify_at_horizon(s, delta, t);
    Ok(ScorePair {
        auc: auc_td(risk, s, delta, t, &g)?,
        brier: brier_score(risk, s, delta, t, &g)?,
        horizon: t,
        n_cases: status.iter().filter(|&&c| c == Status::Case).count(),
        n_controls: status.iter().filter(|&&c| c == Status::Control).count(),
    })
}
