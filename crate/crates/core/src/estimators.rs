//! Risk-set estimators: Nelson–Aalen, Kaplan–Meier, and the two-sample
//! log-rank statistic.
//!
//! Ties between an event and a censoring at the same time put the censored
//! subject in the risk set of that event (events happen first).

use serde::{Deserialize, Serialize};

use crate::error::{Result, SurvError};

/// Right-continuous step function `H(t)`; zero before the first grid time and
/// constant after the last.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CumulativeHazardCurve {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl CumulativeHazardCurve {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(SurvError::ShapeMismatch(format!(
                "{} grid times for {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SurvError::InvalidInput("grid times must strictly increase".into()));
        }
        if values.first().is_some_and(|&v| v < 0.0) || values.windows(2).any(|w| w[0] > w[1]) {
            return Err(SurvError::InvalidInput(
                "cumulative hazard must be nonnegative and nondecreasing".into(),
            ));
        }
        Ok(Self { times, values })
    }

    /// The identically-zero curve.
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self.times.partition_point(|&g| g <= t) {
            0 => 0.0,
            k => self.values[k - 1],
        }
    }

    /// Curve multiplied by a nonnegative constant.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            times: self.times.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Product-limit survival step function; one before the first grid time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl SurvivalCurve {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self.times.partition_point(|&g| g <= t) {
            0 => 1.0,
            k => self.values[k - 1],
        }
    }
}

/// Per distinct event time: (time, events d_j, at-risk Y_j).
pub(crate) fn risk_table(time: &[f64], event: &[bool]) -> Vec<(f64, f64, f64)> {
    let mut order: Vec<usize> = (0..time.len()).collect();
    order.sort_by(|&a, &b| time[a].total_cmp(&time[b]));
    let mut table = Vec::new();
    let mut at_risk = time.len();
    let mut i = 0;
    while i < order.len() {
        let t = time[order[i]];
        let mut j = i;
        let mut deaths = 0usize;
        while j < order.len() && time[order[j]] == t {
            deaths += usize::from(event[order[j]]);
            j += 1;
        }
        if deaths > 0 {
            table.push((t, deaths as f64, at_risk as f64));
        }
        at_risk -= j - i;
        i = j;
    }
    table
}

fn check_inputs(time: &[f64], event: &[bool]) -> Result<()> {
    if time.len() != event.len() {
        return Err(SurvError::ShapeMismatch(format!(
            "{} times, {} event flags",
            time.len(),
            event.len()
        )));
    }
    if !event.iter().any(|&e| e) {
        return Err(SurvError::NoEvents);
    }
    Ok(())
}

/// Nelson–Aalen cumulative hazard `Σ_{t_j ≤ t} d_j / Y_j`.
pub fn nelson_aalen(time: &[f64], event: &[bool]) -> Result<CumulativeHazardCurve> {
    check_inputs(time, event)?;
    let mut h = 0.0;
    let (times, values) = risk_table(time, event)
        .into_iter()
        .map(|(t, d, y)| {
            h += d / y;
            (t, h)
        })
        .unzip();
    Ok(CumulativeHazardCurve { times, values })
}

/// Kaplan–Meier product-limit estimate `Π_{t_j ≤ t} (1 − d_j / Y_j)`.
pub fn kaplan_meier(time: &[f64], event: &[bool]) -> Result<SurvivalCurve> {
    check_inputs(time, event)?;
    let mut s = 1.0;
    let (times, values) = risk_table(time, event)
        .into_iter()
        .map(|(t, d, y)| {
            s *= 1.0 - d / y;
            (t, s)
        })
        .unzip();
    Ok(SurvivalCurve { times, values })
}

/// Running sums of the log-rank numerator and hypergeometric variance.
///
/// All inputs are integer counts stored as `f64`, so every product below is
/// exact and the statistic is bit-identical under group relabeling.
#[derive(Default, Clone, Copy)]
pub(crate) struct LogRank {
    numerator: f64,
    variance: f64,
}

impl LogRank {
    /// One event time: `d` events of which `d1` in group 1, `y` at risk of
    /// which `y1` in group 1.
    #[inline]
    pub(crate) fn add(&mut self, d: f64, d1: f64, y: f64, y1: f64) {
        if y <= 1.0 {
            return;
        }
        self.numerator += (d1 * y - y1 * d) / y;
        self.variance += d * y1 * (y - y1) * (y - d) / (y * y * (y - 1.0));
    }

    pub(crate) fn statistic(&self) -> Option<f64> {
        (self.variance > 0.0).then(|| self.numerator.abs() / self.variance.sqrt())
    }
}

/// Standardized two-sample log-rank statistic `|O_1 − E_1| / sqrt(V)`.
///
/// `group[i] == true` puts subject `i` in group 1.
pub fn logrank_statistic(time: &[f64], event: &[bool], group: &[bool]) -> Result<f64> {
    check_inputs(time, event)?;
    if group.len() != time.len() {
        return Err(SurvError::ShapeMismatch(format!(
            "{} group labels for {} subjects",
            group.len(),
            time.len()
        )));
    }
    let n1 = group.iter().filter(|&&g| g).count();
    if n1 == 0 || n1 == group.len() {
        return Err(SurvError::DegenerateSplit("a group is empty"));
    }

    let mut order: Vec<usize> = (0..time.len()).collect();
    order.sort_by(|&a, &b| time[a].total_cmp(&time[b]));
    let mut acc = LogRank::default();
    let (mut y, mut y1) = (time.len() as f64, n1 as f64);
    let mut i = 0;
    while i < order.len() {
        let t = time[order[i]];
        let (mut d, mut d1, mut leaving, mut leaving1) = (0.0, 0.0, 0.0, 0.0);
        while i < order.len() && time[order[i]] == t {
            let s = order[i];
            let g = f64::from(u8::from(group[s]));
            if event[s] {
                d += 1.0;
                d1 += g;
            }
            leaving += 1.0;
            leaving1 += g;
            i += 1;
        }
        if d > 0.0 {
            acc.add(d, d1, y, y1);
        }
        y -= leaving;
        y1 -= leaving1;
    }
    acc.statistic()
        .ok_or(SurvError::DegenerateSplit("zero variance"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_event_among_four() {
        let h = nelson_aalen(&[2.0, 3.0, 4.0, 5.0], &[true, false, false, false]).unwrap();
        assert_eq!(h.times(), &[2.0]);
        assert_eq!(h.eval(1.9), 0.0);
        assert_eq!(h.eval(2.0), 0.25);
        assert_eq!(h.eval(100.0), 0.25);
    }

    #[test]
    fn textbook_increments() {
        let h = nelson_aalen(&[1.0, 2.0, 3.0, 4.0], &[true; 4]).unwrap();
        let expected = [0.25, 0.25 + 1.0 / 3.0, 0.25 + 1.0 / 3.0 + 0.5, 0.25 + 1.0 / 3.0 + 1.5];
        for (v, e) in h.values().iter().zip(expected) {
            assert_abs_diff_eq!(*v, e, epsilon = 1e-15);
        }
    }

    fn random_sample(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<bool>) {
        // Integer-valued times force ties between events and censorings.
        let time = (0..n).map(|_| rng.random_range(1..12) as f64).collect();
        let mut event: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
        event[0] = true;
        (time, event)
    }

    #[test]
    fn matches_brute_force_risk_set_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (time, event) = random_sample(&mut rng, 30);
            let curve = nelson_aalen(&time, &event).unwrap();
            for probe in 0..14 {
                let t = probe as f64;
                // O(n^2): for every distinct event time s <= t, count directly.
                let mut expected = 0.0;
                let mut seen: Vec<f64> = Vec::new();
                for (i, &s) in time.iter().enumerate() {
                    if !event[i] || s > t || seen.contains(&s) {
                        continue;
                    }
                    seen.push(s);
                    let d = (0..time.len()).filter(|&k| time[k] == s && event[k]).count();
                    let y = time.iter().filter(|&&u| u >= s).count();
                    expected += d as f64 / y as f64;
                }
                assert_abs_diff_eq!(curve.eval(t), expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn order_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (time, event) = random_sample(&mut rng, 25);
        let a = nelson_aalen(&time, &event).unwrap();
        let rev_t: Vec<f64> = time.iter().rev().copied().collect();
        let rev_e: Vec<bool> = event.iter().rev().copied().collect();
        assert_eq!(a, nelson_aalen(&rev_t, &rev_e).unwrap());
    }

    #[test]
    fn distinct_uncensored_times_drop_risk_set_by_one() {
        let time: Vec<f64> = (1..=6).map(f64::from).collect();
        let table = risk_table(&time, &[true; 6]);
        for (k, (_, _, y)) in table.iter().enumerate() {
            assert_eq!(*y, (6 - k) as f64);
        }
    }

    #[test]
    fn no_events_is_an_error() {
        assert!(matches!(
            nelson_aalen(&[1.0, 2.0], &[false, false]),
            Err(SurvError::NoEvents)
        ));
        assert!(matches!(
            kaplan_meier(&[1.0, 2.0], &[false, false]),
            Err(SurvError::NoEvents)
        ));
    }

    #[test]
    fn km_without_censoring_is_empirical_survival() {
        let time = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let km = kaplan_meier(&time, &[true; 8]).unwrap();
        for &t in &time {
            let ecdf = time.iter().filter(|&&u| u <= t).count() as f64 / 8.0;
            assert_abs_diff_eq!(km.eval(t), 1.0 - ecdf, epsilon = 1e-12);
        }
    }

    #[test]
    fn km_single_event_among_censored() {
        let time = [1.0, 2.0, 3.0, 4.0, 5.0];
        let event = [true, false, false, false, false];
        let km = kaplan_meier(&time, &event).unwrap();
        assert_abs_diff_eq!(km.eval(1.0), 1.0 - 1.0 / 5.0, epsilon = 1e-15);
        assert_eq!(km.eval(0.5), 1.0);
    }

    #[test]
    fn km_consistent_with_nelson_aalen() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let time: Vec<f64> = (0..50).map(|_| rng.random::<f64>() * 10.0 + 0.01).collect();
        let event: Vec<bool> = (0..50).map(|_| rng.random_bool(0.7)).collect();
        let km = kaplan_meier(&time, &event).unwrap();
        let na = nelson_aalen(&time, &event).unwrap();
        for &t in na.times() {
            assert!((km.eval(t) - (-na.eval(t)).exp()).abs() < 0.05);
        }
    }

    #[test]
    fn logrank_two_group_table() {
        // Group 1: ten events at t=1. Group 2: ten events at t=2.
        // t=1: Y=20, Y1=10, d=10, d1=10 -> O-E = 5, V = 10*.5*.5*10/19 = 25/19.
        // t=2: Y1=0 -> no contribution. Statistic = 5 / sqrt(25/19) = sqrt(19).
        let time: Vec<f64> = (0..20).map(|i| if i < 10 { 1.0 } else { 2.0 }).collect();
        let group: Vec<bool> = (0..20).map(|i| i < 10).collect();
        let stat = logrank_statistic(&time, &[true; 20], &group).unwrap();
        assert_abs_diff_eq!(stat, 19f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn logrank_symmetric_in_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let (time, event) = random_sample(&mut rng, 20);
            let mut group: Vec<bool> = (0..20).map(|_| rng.random_bool(0.5)).collect();
            group[0] = true;
            group[1] = false;
            let swapped: Vec<bool> = group.iter().map(|g| !g).collect();
            let a = logrank_statistic(&time, &event, &group);
            let b = logrank_statistic(&time, &event, &swapped);
            match (a, b) {
                (Ok(a), Ok(b)) => assert_eq!(a, b),
                (Err(_), Err(_)) => {}
                _ => panic!("asymmetric degeneracy"),
            }
        }
    }

    #[test]
    fn logrank_empty_group_is_degenerate() {
        let err = logrank_statistic(&[1.0, 2.0], &[true, true], &[true, true]).unwrap_err();
        assert!(matches!(err, SurvError::DegenerateSplit(_)));
    }

    #[test]
    fn logrank_null_is_calibrated_by_permutation() {
        // Under identical survival the observed statistic should look like a
        // draw from its own permutation distribution.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let runs = 40;
        let mut within = 0;
        for _ in 0..runs {
            let n = 200;
            let time: Vec<f64> = (0..n)
                .map(|_| -(1.0 - rng.random::<f64>()).ln() + 0.01)
                .collect();
            let event: Vec<bool> = (0..n).map(|_| rng.random_bool(0.8)).collect();
            let group: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
            let observed = logrank_statistic(&time, &event, &group).unwrap();
            let mut perm = group.clone();
            let mut null: Vec<f64> = (0..500)
                .map(|_| {
                    use rand::seq::SliceRandom;
                    perm.shuffle(&mut rng);
                    logrank_statistic(&time, &event, &perm).unwrap()
                })
                .collect();
            null.sort_by(f64::total_cmp);
            if null[474] >= observed {
                within += 1;
            }
        }
        assert!(within as f64 >= 0.9 * runs as f64, "{within}/{runs}");
    }

    #[test]
    fn curve_rejects_decreasing_values() {
        assert!(CumulativeHazardCurve::new(vec![1.0, 2.0], vec![0.5, 0.4]).is_err());
        assert!(CumulativeHazardCurve::new(vec![2.0, 1.0], vec![0.1, 0.4]).is_err());
    }
}
