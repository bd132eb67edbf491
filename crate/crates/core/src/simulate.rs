//! Synthetic censored cohorts with a known Weibull proportional-hazards truth.
//!
//! Subject `i` has cumulative hazard `H_i(t) = (t/λ)^k · exp(score_i)`, where
//! the score is `βᵀx` (linear scenario) or `1.5·x1·x2 + βᵀx` (interaction
//! scenario). Event times come from inverting `S_i(t) = exp(−H_i(t))`;
//! censoring is exponential and independent of covariates, with its rate
//! solved so the expected censored fraction hits the target.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Exp, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::SurvivalDataset;
use crate::error::{Result, SurvError};
use crate::seed;

/// Coefficient on `x1·x2` in the interaction scenario.
pub const INTERACTION_STRENGTH: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    #[serde(alias = "linear-ph")]
    Linear,
    #[serde(alias = "nonlinear-interaction")]
    Nonlinear,
}

impl std::str::FromStr for Scenario {
    type Err = SurvError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" | "linear-ph" => Ok(Self::Linear),
            "nonlinear" | "nonlinear-interaction" | "interaction" => Ok(Self::Nonlinear),
            other => Err(SurvError::InvalidSpec(format!("unknown scenario `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n: usize,
    pub p: usize,
    pub beta: Vec<f64>,
    pub scenario: Scenario,
    /// Weibull shape `k`.
    pub shape: f64,
    /// Weibull scale `λ`, in months.
    pub scale: f64,
    pub censor_rate_target: f64,
    pub seed: u64,
}

impl SimSpec {
    /// Linear-PH cohort of 1000 subjects with `p = beta.len()`.
    pub fn linear(beta: Vec<f64>, seed: u64) -> Self {
        Self {
            n: 1000,
            p: beta.len(),
            beta,
            scenario: Scenario::Linear,
            shape: 1.5,
            scale: 60.0,
            censor_rate_target: 0.3,
            seed,
        }
    }

    /// Interaction cohort: hazard driven by `x1·x2` only, `p - 2` noise columns.
    pub fn nonlinear(p: usize, seed: u64) -> Self {
        Self {
            beta: vec![0.0; p],
            scenario: Scenario::Nonlinear,
            ..Self::linear(vec![0.0; p], seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(SurvError::InvalidSpec(m));
        if self.n < 2 {
            return fail(format!("n = {} (need at least 2)", self.n));
        }
        if self.p == 0 {
            return fail("p = 0".into());
        }
        if self.beta.len() != self.p {
            return fail(format!("beta has {} entries for p = {}", self.beta.len(), self.p));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return fail("beta must be finite".into());
        }
        if self.scenario == Scenario::Nonlinear && self.p < 2 {
            return fail("interaction scenario needs p >= 2".into());
        }
        if !(self.shape > 0.0 && self.shape.is_finite()) {
            return fail(format!("shape k = {} must be positive", self.shape));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return fail(format!("scale λ = {} must be positive", self.scale));
        }
        if !(0.0..1.0).contains(&self.censor_rate_target) {
            return fail(format!(
                "censor_rate_target = {} outside [0, 1)",
                self.censor_rate_target
            ));
        }
        Ok(())
    }

    /// True log relative hazard for one covariate row.
    pub fn score(&self, x: &[f64]) -> f64 {
        let linear: f64 = self.beta.iter().zip(x).map(|(b, v)| b * v).sum();
        match self.scenario {
            Scenario::Linear => linear,
            Scenario::Nonlinear => INTERACTION_STRENGTH * x[0] * x[1] + linear,
        }
    }

    /// `H_0(t) = (t/λ)^k`.
    pub fn baseline_cumhaz(&self, t: f64) -> f64 {
        (t / self.scale).powf(self.shape)
    }

    /// Inverse of `S(t) = exp(−H_0(t)·e^score)` at survival probability `u`.
    fn event_time(&self, score: f64, u: f64) -> f64 {
        self.scale * (-u.ln() * (-score).exp()).powf(1.0 / self.shape)
    }

    fn draw_subject<R: Rng>(&self, rng: &mut R, x: &mut [f64]) -> (f64, f64) {
        for v in x.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let score = self.score(x);
        let u: f64 = Open01.sample(rng);
        (score, self.event_time(score, u))
    }
}

/// Exponential censoring rate whose expected censored fraction over the given
/// event times equals `target`, found by bisection.
pub fn calibrate_censoring(event_times: &[f64], target: f64) -> f64 {
    if target <= 0.0 {
        return 0.0;
    }
    let expected = |rate: f64| {
        event_times.iter().map(|t| -(-rate * t).exp_m1()).sum::<f64>() / event_times.len() as f64
    };
    let mut hi = 1.0 / event_times.iter().sum::<f64>().max(f64::MIN_POSITIVE);
    while expected(hi) < target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimCohort {
    pub dataset: SurvivalDataset,
    pub true_risk: Vec<f64>,
    pub spec: SimSpec,
    /// Exponential censoring rate; zero means no censoring.
    pub censor_rate: f64,
    /// Latent event times (censored subjects included).
    pub event_times: Vec<f64>,
    /// Latent censoring times; infinite when censoring is disabled.
    pub censor_times: Vec<f64>,
}

impl SimCohort {
    /// `H_i(t) = H_0(t)·exp(score_i)`.
    pub fn true_cumhaz(&self, i: usize, t: f64) -> f64 {
        self.spec.baseline_cumhaz(t) * self.true_risk[i].exp()
    }

    pub fn censored_fraction(&self) -> f64 {
        1.0 - self.dataset.event_count() as f64 / self.dataset.n() as f64
    }

    pub fn truth(&self) -> SimTruth {
        SimTruth {
            spec: self.spec.clone(),
            interaction_strength: match self.spec.scenario {
                Scenario::Linear => 0.0,
                Scenario::Nonlinear => INTERACTION_STRENGTH,
            },
            censor_rate: self.censor_rate,
            realized_censored_fraction: self.censored_fraction(),
            true_risk: self.true_risk.clone(),
        }
    }
}

/// JSON sidecar describing the generating model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub spec: SimSpec,
    pub interaction_strength: f64,
    pub censor_rate: f64,
    pub realized_censored_fraction: f64,
    pub true_risk: Vec<f64>,
}

pub fn simulate_cohort(spec: &SimSpec) -> Result<SimCohort> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed);
    let mut features = Array2::<f64>::zeros((spec.n, spec.p));
    let mut true_risk = Vec::with_capacity(spec.n);
    let mut event_times = Vec::with_capacity(spec.n);
    let mut x = vec![0.0; spec.p];
    for i in 0..spec.n {
        let (score, t) = spec.draw_subject(&mut rng, &mut x);
        features.row_mut(i).assign(&ndarray::ArrayView1::from(&x[..]));
        true_risk.push(score);
        event_times.push(t);
    }

    let censor_rate = calibrate_censoring(&event_times, spec.censor_rate_target);
    let mut censor_rng = seed::rng(seed::derive(spec.seed, seed::STREAM_CENSOR, 0));
    let censor_times: Vec<f64> = if censor_rate > 0.0 {
        let exp = Exp::new(censor_rate).expect("positive rate");
        (0..spec.n).map(|_| exp.sample(&mut censor_rng)).collect()
    } else {
        vec![f64::INFINITY; spec.n]
    };

    let mut time = Vec::with_capacity(spec.n);
    let mut event = Vec::with_capacity(spec.n);
    for (&t, &c) in event_times.iter().zip(&censor_times) {
        let observed = t.min(c);
        if !(observed > 0.0 && observed.is_finite()) {
            return Err(SurvError::InvalidSpec(format!(
                "generated time {observed} is not positive and finite; rescale λ or β"
            )));
        }
        time.push(observed);
        event.push(t <= c);
    }

    Ok(SimCohort {
        dataset: SurvivalDataset::from_parts(features, time, event)?,
        true_risk,
        spec: spec.clone(),
        censor_rate,
        event_times,
        censor_times,
    })
}

/// Monte Carlo estimate of the concordance attainable by the true score:
/// `trials` fresh subject pairs are drawn from the cohort's generator (same
/// censoring rate) and scored with the C-index comparability rule.
pub fn true_concordance(cohort: &SimCohort, trials: usize, seed: u64) -> Result<f64> {
    if trials < 1000 {
        return Err(SurvError::InvalidInput(format!(
            "true_concordance needs at least 1000 trials, got {trials}"
        )));
    }
    let spec = &cohort.spec;
    let mut rng = seed::rng(seed);
    let censor = (cohort.censor_rate > 0.0).then(|| Exp::new(cohort.censor_rate).expect("rate"));
    let mut x = vec![0.0; spec.p];
    let mut draw = |rng: &mut rand_chacha::ChaCha8Rng| {
        let (score, t) = spec.draw_subject(rng, &mut x);
        let c = censor.map_or(f64::INFINITY, |e| e.sample(rng));
        (score, t.min(c), t <= c)
    };

    let (mut comparable, mut credit) = (0u64, 0u64);
    for _ in 0..trials {
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        let (early, late) = if a.1 < b.1 { (a, b) } else { (b, a) };
        if early.1 == late.1 || !early.2 {
            continue;
        }
        comparable += 1;
        // Twice the credit so ties stay integral.
        credit += match early.0.total_cmp(&late.0) {
            std::cmp::Ordering::Greater => 2,
            std::cmp::Ordering::Equal => 1,
            std::cmp::Ordering::Less => 0,
        };
    }
    if comparable == 0 {
        return Err(SurvError::NoComparablePairs);
    }
    Ok(credit as f64 / (2.0 * comparable as f64))
}
