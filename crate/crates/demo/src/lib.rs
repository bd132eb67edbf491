//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each exported function takes a JSON options string and returns a JSON
//! result string, so the page needs no generated TypeScript types.

use serde::{Deserialize, Serialize};
use survml::cox::{fit_cox, CoxParams};
use survml::deephit::{fit_deephit, Activation, DeepHitParams};
use survml::estimators::{kaplan_meier, logrank_statistic};
use survml::metrics::{c_index, calibration_alpha};
use survml::rsf::{fit_rsf, RsfParams};
use survml::simulate::{simulate_cohort, true_concordance, Scenario, SimSpec};
use survml::{SurvivalDataset, SurvivalModel};
use wasm_bindgen::prelude::*;

#[derive(Debug, Deserialize)]
#[serde(default)]
pub struct CohortOptions {
    pub n: usize,
    pub scenario: Scenario,
    pub censoring: f64,
    pub seed: u64,
}

impl Default for CohortOptions {
    fn default() -> Self {
        Self {
            n: 400,
            scenario: Scenario::Linear,
            censoring: 0.3,
            seed: 1,
        }
    }
}

impl CohortOptions {
    fn spec(&self) -> SimSpec {
        let base = match self.scenario {
            Scenario::Linear => SimSpec::linear(vec![1.0, -0.5, 0.5, 0.0, 0.0], self.seed),
            Scenario::Nonlinear => SimSpec::nonlinear(5, self.seed),
        };
        SimSpec {
            n: self.n,
            censor_rate_target: self.censoring,
            ..base
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Curve {
    pub label: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct CohortCurves {
    pub curves: Vec<Curve>,
    pub logrank: f64,
    pub censored_fraction: f64,
    pub max_time: f64,
}

fn km_curve(data: &SurvivalDataset, rows: &[usize], label: &str) -> Result<Curve, String> {
    let part = data.subset(rows);
    let km = kaplan_meier(part.time(), part.event()).map_err(|e| e.to_string())?;
    Ok(Curve {
        label: label.into(),
        times: km.times().to_vec(),
        values: km.values().to_vec(),
    })
}

/// Kaplan–Meier curves of the low- and high-risk halves (split at the median
/// true risk score) and the log-rank statistic between them.
pub fn cohort_curves_json(options: &str) -> Result<String, String> {
    let opts: CohortOptions = serde_json::from_str(options).map_err(|e| e.to_string())?;
    let cohort = simulate_cohort(&opts.spec()).map_err(|e| e.to_string())?;
    let data = &cohort.dataset;
    let mut sorted = cohort.true_risk.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let high: Vec<bool> = cohort.true_risk.iter().map(|&r| r >= median).collect();
    let (hi_rows, lo_rows): (Vec<usize>, Vec<usize>) = (0..data.n()).partition(|&i| high[i]);
    let all: Vec<usize> = (0..data.n()).collect();
    let result = CohortCurves {
        curves: vec![
            km_curve(data, &all, "All")?,
            km_curve(data, &lo_rows, "Low true risk")?,
            km_curve(data, &hi_rows, "High true risk")?,
        ],
        logrank: logrank_statistic(data.time(), data.event(), &high).map_err(|e| e.to_string())?,
        censored_fraction: cohort.censored_fraction(),
        max_time: data.max_time(),
    };
    serde_json::to_string(&result).map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize)]
#[serde(default)]
pub struct CompareOptions {
    #[serde(flatten)]
    pub cohort: CohortOptions,
    pub n_trees: usize,
    pub mtry: usize,
    pub min_node_size: usize,
    pub deephit: bool,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            cohort: CohortOptions::default(),
            n_trees: 100,
            mtry: 3,
            min_node_size: 10,
            deephit: true,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ModelScore {
    pub model: String,
    pub c_index: f64,
    pub alpha: Option<f64>,
    /// Predicted survival `exp(−H(t))` for the example subject over `grid`.
    pub example_survival: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub train_size: usize,
    pub test_size: usize,
    pub true_concordance: f64,
    pub grid: Vec<f64>,
    pub scores: Vec<ModelScore>,
}

fn score(label: &str, model: &dyn SurvivalModel, test: &SurvivalDataset, grid: &[f64]) -> Result<ModelScore, String> {
    let risk = model.risk_scores(test.features()).map_err(|e| e.to_string())?;
    let c = c_index(test.time(), test.event(), &risk).map_err(|e| e.to_string())?;
    let alpha = model
        .cumhaz_at(test.features(), test.time())
        .and_then(|h| calibration_alpha(test.time(), test.event(), &h))
        .ok()
        .map(|a| a.alpha);
    let example_survival = grid
        .iter()
        .map(|&t| model.cumhaz(test.row(0), t).map(|h| (-h).exp()))
        .collect::<survml::Result<Vec<f64>>>()
        .map_err(|e| e.to_string())?;
    Ok(ModelScore {
        model: label.into(),
        c_index: c.c_index,
        alpha,
        example_survival,
    })
}

/// Fit Cox, a random survival forest and optionally DeepHit on the first
/// half of a simulated cohort and score them on the second half.
pub fn compare_models_json(options: &str) -> Result<String, String> {
    let opts: CompareOptions = serde_json::from_str(options).map_err(|e| e.to_string())?;
    let cohort = simulate_cohort(&opts.cohort.spec()).map_err(|e| e.to_string())?;
    let data = &cohort.dataset;
    let half = data.n() / 2;
    let train = data.subset(&(0..half).collect::<Vec<_>>());
    let test = data.subset(&(half..data.n()).collect::<Vec<_>>());
    let grid: Vec<f64> = (0..=50).map(|k| data.max_time() * k as f64 / 50.0).collect();

    let mut scores = Vec::new();
    let cox = fit_cox(&train, &CoxParams::default()).map_err(|e| e.to_string())?;
    scores.push(score("Cox", &cox, &test, &grid)?);
    let rsf = fit_rsf(
        &train,
        &RsfParams {
            mtry: opts.mtry.clamp(1, data.p()),
            min_node_size: opts.min_node_size,
            n_trees: opts.n_trees,
            bootstrap: true,
        },
        opts.cohort.seed,
    )
    .map_err(|e| e.to_string())?;
    scores.push(score("RSF", &rsf, &test, &grid)?);
    if opts.deephit {
        let hp = DeepHitParams {
            nodes: 32,
            epochs: 60,
            activation: Activation::Relu,
            ..DeepHitParams::default()
        };
        let net = fit_deephit(&train, &hp, opts.cohort.seed).map_err(|e| e.to_string())?;
        scores.push(score("DeepHit", &net, &test, &grid)?);
    }
    let result = Comparison {
        train_size: train.n(),
        test_size: test.n(),
        true_concordance: true_concordance(&cohort, 4000, opts.cohort.seed).map_err(|e| e.to_string())?,
        grid,
        scores,
    };
    serde_json::to_string(&result).map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize)]
#[serde(default)]
pub struct TrainingOptions {
    #[serde(flatten)]
    pub cohort: CohortOptions,
    pub nodes: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub alpha_rank: f64,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        Self {
            cohort: CohortOptions::default(),
            nodes: 32,
            epochs: 100,
            learning_rate: 0.01,
            patience: 10,
            alpha_rank: 0.1,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct TrainingTrace {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub best_epoch: usize,
    pub cuts: Vec<f64>,
}

/// Per-epoch training and validation loss of one DeepHit fit.
pub fn deephit_training_json(options: &str) -> Result<String, String> {
    let opts: TrainingOptions = serde_json::from_str(options).map_err(|e| e.to_string())?;
    let cohort = simulate_cohort(&opts.cohort.spec()).map_err(|e| e.to_string())?;
    let hp = DeepHitParams {
        nodes: opts.nodes,
        epochs: opts.epochs,
        learning_rate: opts.learning_rate,
        patience: opts.patience,
        alpha_rank: opts.alpha_rank,
        ..DeepHitParams::default()
    };
    let net = fit_deephit(&cohort.dataset, &hp, opts.cohort.seed).map_err(|e| e.to_string())?;
    let trace = TrainingTrace {
        train_loss: net.history.train_loss.clone(),
        validation_loss: net.history.validation_loss.clone(),
        best_epoch: net.history.best_epoch,
        cuts: net.grid.cuts().to_vec(),
    };
    serde_json::to_string(&trace).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn cohort_curves(options: &str) -> Result<String, JsValue> {
    cohort_curves_json(options).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn compare_models(options: &str) -> Result<String, JsValue> {
    compare_models_json(options).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn deephit_training(options: &str) -> Result<String, JsValue> {
    deephit_training_json(options).map_err(|e| JsValue::from_str(&e))
}
