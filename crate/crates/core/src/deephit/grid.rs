//! Discretization of the time axis into left-open bins.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SurvError};

/// Cut points `c_0 < c_1 < … < c_{B-1}`; bin `b` (0-based) is `(c_{b-1}, c_b]`
/// with `c_{-1} = 0`. Times past the last cut fall in the last bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    cuts: Vec<f64>,
}

impl TimeGrid {
    pub fn new(cuts: Vec<f64>) -> Result<Self> {
        if cuts.len() < 2 {
            return Err(SurvError::TooFewDistinctTimes);
        }
        if cuts.iter().any(|c| !c.is_finite() || *c <= 0.0) || cuts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SurvError::InvalidInput(
                "cut points must be positive and strictly increasing".into(),
            ));
        }
        Ok(Self { cuts })
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn n_bins(&self) -> usize {
        self.cuts.len()
    }

    /// 0-based bin of `t`: the number of cuts strictly below `t`, capped at
    /// the last bin.
    pub fn bin(&self, t: f64) -> usize {
        self.cuts.partition_point(|&c| c < t).min(self.cuts.len() - 1)
    }

    /// Survival at `t` from bin probabilities `q`.
    ///
    /// Below the first cut no mass has been passed and `S = 1`. Otherwise the
    /// subject is treated as having survived its whole bin, `S = Σ_{m > bin(t)} q_m`,
    /// matching the censored term of the training loss.
    pub fn survival(&self, q: &[f64], t: f64) -> f64 {
        if t < self.cuts[0] {
            return 1.0;
        }
        q[self.bin(t) + 1..].iter().sum()
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let pos = prob * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Cuts at the `(b+1)/B` quantiles of event times (all times when fewer than
/// two distinct event times exist), deduplicated, with the last cut raised to
/// the largest observed time.
pub fn make_time_grid(time: &[f64], event: &[bool], bins: usize) -> Result<TimeGrid> {
    if bins < 2 {
        return Err(SurvError::InvalidHyperparameter(format!("bins = {bins} (need >= 2)")));
    }
    if time.len() != event.len() {
        return Err(SurvError::ShapeMismatch(format!(
            "{} times for {} event flags",
            time.len(),
            event.len()
        )));
    }
    if time.is_empty() {
        return Err(SurvError::TooFewDistinctTimes);
    }
    let mut source: Vec<f64> = time
        .iter()
        .zip(event)
        .filter(|(_, &e)| e)
        .map(|(&t, _)| t)
        .collect();
    source.sort_by(f64::total_cmp);
    let distinct_events = source.windows(2).filter(|w| w[0] != w[1]).count() + 1;
    if source.is_empty() || distinct_events < 2 {
        source = time.to_vec();
        source.sort_by(f64::total_cmp);
    }
    let max_time = time.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut cuts: Vec<f64> = (0..bins)
        .map(|b| quantile(&source, (b + 1) as f64 / bins as f64))
        .collect();
    let last = cuts.len() - 1;
    cuts[last] = cuts[last].max(max_time);
    cuts.dedup();
    TimeGrid::new(cuts)
}
