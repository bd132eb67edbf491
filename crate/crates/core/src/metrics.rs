//! Discrimination and calibration metrics for censored data.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SurvError};

/// Harrell's C-index with its pair counts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceResult {
    pub c_index: f64,
    pub concordant: u64,
    pub discordant: u64,
    pub tied_risk: u64,
    pub comparable: u64,
}

impl ConcordanceResult {
    fn from_counts(concordant: u64, discordant: u64, tied_risk: u64) -> Result<Self> {
        let comparable = concordant + discordant + tied_risk;
        if comparable == 0 {
            return Err(SurvError::NoComparablePairs);
        }
        Ok(Self {
            c_index: (concordant as f64 + 0.5 * tied_risk as f64) / comparable as f64,
            concordant,
            discordant,
            tied_risk,
            comparable,
        })
    }
}

/// Below this size the quadratic scan is used directly.
const PAIRWISE_LIMIT: usize = 256;

fn check(time: &[f64], event: &[bool], risk: &[f64]) -> Result<()> {
    if time.len() != event.len() || time.len() != risk.len() {
        return Err(SurvError::ShapeMismatch(format!(
            "{} times, {} event flags, {} risk scores",
            time.len(),
            event.len(),
            risk.len()
        )));
    }
    if risk.iter().any(|r| !r.is_finite()) {
        return Err(SurvError::InvalidInput("risk scores must be finite".into()));
    }
    Ok(())
}

/// Harrell's C-index.
///
/// A pair is comparable when the subject with the strictly earlier observed
/// time had the event. It is concordant when that subject also has the higher
/// risk score; equal scores earn half credit.
pub fn c_index(time: &[f64], event: &[bool], risk: &[f64]) -> Result<ConcordanceResult> {
    if time.len() <= PAIRWISE_LIMIT {
        c_index_pairwise(time, event, risk)
    } else {
        c_index_fast(time, event, risk)
    }
}

/// Exhaustive O(n²) scan over ordered pairs.
pub fn c_index_pairwise(time: &[f64], event: &[bool], risk: &[f64]) -> Result<ConcordanceResult> {
    check(time, event, risk)?;
    let (mut conc, mut disc, mut tied) = (0u64, 0u64, 0u64);
    for i in 0..time.len() {
        if !event[i] {
            continue;
        }
        for j in 0..time.len() {
            if time[i] < time[j] {
                if risk[i] > risk[j] {
                    conc += 1;
                } else if risk[i] < risk[j] {
                    disc += 1;
                } else {
                    tied += 1;
                }
            }
        }
    }
    ConcordanceResult::from_counts(conc, disc, tied)
}

/// Fenwick tree of counts over risk ranks.
struct RankCounts {
    tree: Vec<u64>,
}

impl RankCounts {
    fn new(n: usize) -> Self {
        Self { tree: vec![0; n + 1] }
    }

    fn insert(&mut self, rank: usize) {
        let mut i = rank + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Number of inserted ranks strictly below `rank`.
    fn below(&self, rank: usize) -> u64 {
        let mut i = rank;
        let mut total = 0;
        while i > 0 {
            total += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        total
    }
}

/// O(n log n) merge-count over time-descending order; returns the same
/// counts as [`c_index_pairwise`].
pub fn c_index_fast(time: &[f64], event: &[bool], risk: &[f64]) -> Result<ConcordanceResult> {
    check(time, event, risk)?;
    let n = time.len();
    let mut levels: Vec<f64> = risk.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let rank: Vec<usize> = risk
        .iter()
        .map(|r| levels.partition_point(|l| l < r))
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| time[b].total_cmp(&time[a]));

    let mut later = RankCounts::new(levels.len());
    let mut inserted = 0u64;
    let (mut conc, mut disc, mut tied) = (0u64, 0u64, 0u64);
    let mut start = 0;
    while start < n {
        let t = time[order[start]];
        let end = start + order[start..].iter().take_while(|&&s| time[s] == t).count();
        // Everything in the tree has a strictly later time.
        for &i in order[start..end].iter().filter(|&&i| event[i]) {
            let below = later.below(rank[i]);
            let at_or_below = later.below(rank[i] + 1);
            conc += below;
            tied += at_or_below - below;
            disc += inserted - at_or_below;
        }
        for &i in &order[start..end] {
            later.insert(rank[i]);
            inserted += 1;
        }
        start = end;
    }
    ConcordanceResult::from_counts(conc, disc, tied)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub alpha: f64,
    pub event_sum: f64,
    pub hazard_sum: f64,
}

/// Calibration ratio `α = Σδ_i / Σ H_i(t_i)`; 1 means the predicted hazard
/// level matches the observed event count.
pub fn calibration_alpha(
    time: &[f64],
    event: &[bool],
    cumhaz_at_t: &[f64],
) -> Result<CalibrationResult> {
    if time.len() != event.len() || time.len() != cumhaz_at_t.len() {
        return Err(SurvError::ShapeMismatch(format!(
            "{} times, {} event flags, {} hazards",
            time.len(),
            event.len(),
            cumhaz_at_t.len()
        )));
    }
    if cumhaz_at_t.iter().any(|h| !(h.is_finite() && *h >= 0.0)) {
        return Err(SurvError::InvalidInput(
            "cumulative hazards must be finite and nonnegative".into(),
        ));
    }
    let event_sum = event.iter().filter(|&&e| e).count() as f64;
    if event_sum == 0.0 {
        return Err(SurvError::NoEvents);
    }
    let hazard_sum: f64 = cumhaz_at_t.iter().sum();
    if hazard_sum <= 0.0 {
        return Err(SurvError::ZeroHazardSum);
    }
    Ok(CalibrationResult {
        alpha: event_sum / hazard_sum,
        event_sum,
        hazard_sum,
    })
}
