use crate::error::{Error, Result};

/// Right-continuous step function starting at 1 before the first step.
#[derive(Debug, Clone, PartialEq)]
pub struct KmCurve {
    times: Vec<f64>,
    surv: Vec<f64>,
}

impl KmCurve {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn survival(&self) -> &[f64] {
        &self.surv
    }

    pub fn steps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.surv.iter().copied())
    }

    /// Value at `t`, including a step located exactly at `t`.
    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            1.0
        } else {
            self.surv[k - 1]
        }
    }

    /// Left limit at `t`, excluding a step located exactly at `t`.
    pub fn before(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 {
            1.0
        } else {
            self.surv[k - 1]
        }
    }
}

/// Product-limit estimate where `counts[i]` says whether observation `i` is an
/// occurrence of the event being estimated.
pub fn kaplan_meier(time: &[f64], counts: &[bool]) -> Result<KmCurve> {
    if time.len() != counts.len() {
        return Err(Error::DimensionMismatch {
            expected: time.len(),
            actual: counts.len(),
        });
    }
    if time.is_empty() {
        return Err(Error::InvalidInput("Kaplan-Meier needs at least one observation".into()));
    }
    if time.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("non-finite time".into()));
    }
    let mut order: Vec<usize> = (0..time.len()).collect();
    order.sort_by(|&a, &b| time[a].total_cmp(&time[b]));

    let mut times = Vec::new();
    let mut surv = Vec::new();
    let mut s = 1.0;
    let mut at_risk = time.len();
    let mut k = 0;
    while k < order.len() {
        let t = time[order[k]];
        let mut tied = 0;
        let mut hits = 0;
        while k < order.len() && time[order[k]] == t {
            tied += 1;
            hits += counts[order[k]] as usize;
            k += 1;
        }
        if hits > 0 {
            s *= 1.0 - hits as f64 / at_risk as f64;
            times.push(t);
            surv.push(s);
        }
        at_risk -= tied;
    }
    Ok(KmCurve { times, surv })
}

/// Reverse Kaplan-Meier: the survival function of the censoring time,
/// `G(t) = P(C > t)`, with censorings (`delta = false`) as the events.
pub fn km_censoring(time: &[f64], event: &[bool]) -> Result<KmCurve> {
    let censored: Vec<bool> = event.iter().map(|e| !e).collect();
    kaplan_meier(time, &censored)
}
