//! Evaluation protocol: stratified folds, inner grid-search tuning, outer
//! assessment, and Monte Carlo repetition of the whole nested CV.
//!
//! Every work unit draws its seed from `(master seed, stream, index)`, so
//! results do not depend on how units are scheduled across threads.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::dataset::{apply_preprocess, fit_preprocess, PreprocessRecipe, RawTable, SurvivalDataset};
use crate::deephit::{Activation, DeepHitParams, Optimizer};
use crate::error::{Result, SurvError};
use crate::metrics::{c_index, calibration_alpha};
use crate::model::{FittedModel, ModelKind, ModelParams, SurvivalModel};
use crate::rsf::RsfParams;
use crate::seed;

#[cfg(feature = "parallel")]
fn par_map<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Fold index per subject.
///
/// Each stratum (`true`, then `false`) is shuffled and dealt round-robin. The
/// dealing position carries over from one stratum to the next, so overall fold
/// sizes also differ by at most one.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || k > labels.len() {
        return Err(SurvError::InvalidK(k));
    }
    let mut rng = seed::rng(seed);
    let mut folds = vec![0; labels.len()];
    let mut position = 0;
    for stratum in [true, false] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == stratum).collect();
        rand::seq::SliceRandom::shuffle(members.as_mut_slice(), &mut rng);
        for i in members {
            folds[i] = position % k;
            position += 1;
        }
    }
    Ok(folds)
}

/// Outer fold assignment plus, for every outer fold, an inner assignment of
/// that fold's training subjects (in ascending index order).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub outer: Vec<usize>,
    pub inner: Vec<Vec<usize>>,
    pub strata: Vec<bool>,
    pub outer_k: usize,
    pub inner_k: usize,
    pub seed: u64,
}

impl SplitPlan {
    pub fn new(strata: &[bool], outer_k: usize, inner_k: usize, seed: u64) -> Result<Self> {
        if inner_k < 2 {
            return Err(SurvError::InvalidK(inner_k));
        }
        let outer = stratified_folds(strata, outer_k, seed::derive(seed, seed::STREAM_OUTER, 0))?;
        let inner = (0..outer_k)
            .map(|f| {
                let train: Vec<bool> = (0..strata.len())
                    .filter(|&i| outer[i] != f)
                    .map(|i| strata[i])
                    .collect();
                stratified_folds(&train, inner_k, seed::derive(seed, seed::STREAM_INNER, f as u64))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            outer,
            inner,
            strata: strata.to_vec(),
            outer_k,
            inner_k,
            seed,
        })
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.outer.len()).filter(|&i| self.outer[i] != fold).collect()
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.outer.len()).filter(|&i| self.outer[i] == fold).collect()
    }
}

/// Outcome of inner-CV tuning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: ModelParams,
    pub best_index: usize,
    /// Mean inner C-index per grid point; `None` where a fit or metric
    /// failed on some inner fold. Empty when the grid is a singleton.
    pub scores: Vec<Option<f64>>,
}

fn fit_and_score(params: &ModelParams, train: &SurvivalDataset, valid: &SurvivalDataset, seed: u64) -> Result<f64> {
    let model = params.fit(train, seed)?;
    let risk = model.risk_scores(valid.features())?;
    Ok(c_index(valid.time(), valid.event(), &risk)?.c_index)
}

fn tune_with_folds(data: &SurvivalDataset, grid: &[ModelParams], folds: &[usize], k: usize, seed: u64) -> Result<TuneResult> {
    match grid {
        [] => return Err(SurvError::InvalidHyperparameter("empty grid".into())),
        [only] => {
            return Ok(TuneResult {
                best: only.clone(),
                best_index: 0,
                scores: Vec::new(),
            })
        }
        _ => {}
    }
    let splits: Vec<(SurvivalDataset, SurvivalDataset)> = (0..k)
        .map(|j| {
            let (valid, train): (Vec<usize>, Vec<usize>) = (0..data.n()).partition(|&i| folds[i] == j);
            (data.subset(&train), data.subset(&valid))
        })
        .collect();
    // Fit seeds depend on the fold only, so duplicate grid entries score
    // identically.
    let cells = par_map(grid.len() * k, |u| {
        let (g, j) = (u / k, u % k);
        let (train, valid) = &splits[j];
        fit_and_score(&grid[g], train, valid, seed::derive(seed, seed::STREAM_FIT, j as u64)).ok()
    });
    let scores: Vec<Option<f64>> = cells
        .chunks(k)
        .map(|row| {
            row.iter()
                .copied()
                .collect::<Option<Vec<f64>>>()
                .map(|v| v.iter().sum::<f64>() / k as f64)
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (g, s) in scores.iter().enumerate() {
        if let Some(s) = *s {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((g, s));
            }
        }
    }
    let (best_index, _) = best.ok_or(SurvError::AllFitsFailed)?;
    Ok(TuneResult {
        best: grid[best_index].clone(),
        best_index,
        scores,
    })
}

/// Pick the grid point with the highest mean inner-validation C-index over
/// `k` stratified folds of `train`; ties go to the earliest point.
pub fn tune_inner(train: &SurvivalDataset, grid: &[ModelParams], k: usize, seed: u64) -> Result<TuneResult> {
    let folds = stratified_folds(train.event(), k, seed::derive(seed, seed::STREAM_INNER, 0))?;
    tune_with_folds(train, grid, &folds, k, seed)
}

/// Data for the protocol: a raw table whose preprocessing recipe is refit on
/// every outer training set, or an already numeric dataset.
#[derive(Clone, Copy, Debug)]
pub enum EvalData<'a> {
    Raw { table: &'a RawTable, drop_threshold: f64 },
    Prepared(&'a SurvivalDataset),
}

impl EvalData<'_> {
    pub fn n(&self) -> usize {
        match self {
            Self::Raw { table, .. } => table.n_rows(),
            Self::Prepared(d) => d.n(),
        }
    }

    pub fn strata(&self) -> Result<Vec<bool>> {
        match self {
            Self::Raw { table, .. } => table.event_flags(),
            Self::Prepared(d) => Ok(d.event().to_vec()),
        }
    }

    /// Training and test datasets for the given rows, plus the recipe fitted
    /// on the training rows when preprocessing applies.
    fn split(&self, train: &[usize], test: &[usize]) -> Result<(SurvivalDataset, SurvivalDataset, Option<PreprocessRecipe>)> {
        match self {
            Self::Raw { table, drop_threshold } => {
                let train_table = table.select_rows(train);
                let recipe = fit_preprocess(&train_table, *drop_threshold)?;
                let train_data = apply_preprocess(&train_table, &recipe)?;
                let test_data = apply_preprocess(&table.select_rows(test), &recipe)?;
                Ok((train_data, test_data, Some(recipe)))
            }
            Self::Prepared(d) => Ok((d.subset(train), d.subset(test), None)),
        }
    }
}

/// Everything produced by one outer fold.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OuterFoldOutcome {
    pub fold: usize,
    pub test_indices: Vec<usize>,
    pub recipe: Option<PreprocessRecipe>,
    pub tuning: TuneResult,
    pub model: FittedModel,
    pub c_index: f64,
    pub alpha: Option<f64>,
    /// Why α is missing, when it is.
    pub alpha_error: Option<String>,
}

/// Preprocess, tune, refit and score one outer fold of `plan`.
pub fn run_outer_fold(data: &EvalData<'_>, plan: &SplitPlan, fold: usize, grid: &[ModelParams]) -> Result<OuterFoldOutcome> {
    let train_idx = plan.train_indices(fold);
    let test_idx = plan.test_indices(fold);
    let (train, test, recipe) = data.split(&train_idx, &test_idx)?;
    let fold_seed = seed::derive(plan.seed, seed::STREAM_FIT, fold as u64);
    let tuning = tune_with_folds(&train, grid, &plan.inner[fold], plan.inner_k, fold_seed)?;
    let model = tuning.best.fit(&train, seed::derive(fold_seed, seed::STREAM_FIT, u64::MAX))?;
    let risk = model.risk_scores(test.features())?;
    let c = c_index(test.time(), test.event(), &risk)?.c_index;
    let (alpha, alpha_error) = match model
        .cumhaz_at(test.features(), test.time())
        .and_then(|h| calibration_alpha(test.time(), test.event(), &h))
    {
        Ok(r) => (Some(r.alpha), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(OuterFoldOutcome {
        fold,
        test_indices: test_idx,
        recipe,
        tuning,
        model,
        c_index: c,
        alpha,
        alpha_error,
    })
}

/// Metrics of one outer fold, or the reason it failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub test_size: usize,
    pub c_index: Option<f64>,
    pub alpha: Option<f64>,
    pub chosen: Option<ModelParams>,
    pub error: Option<String>,
}

/// Nested cross-validation; a failing fold is recorded with its error.
pub fn nested_cv(data: &EvalData<'_>, grid: &[ModelParams], outer_k: usize, inner_k: usize, seed: u64) -> Result<Vec<FoldRecord>> {
    if grid.is_empty() {
        return Err(SurvError::InvalidHyperparameter("empty grid".into()));
    }
    let plan = SplitPlan::new(&data.strata()?, outer_k, inner_k, seed)?;
    Ok(par_map(outer_k, |f| {
        let test_size = plan.outer.iter().filter(|&&o| o == f).count();
        match run_outer_fold(data, &plan, f, grid) {
            Ok(o) => FoldRecord {
                fold: f,
                test_size,
                c_index: Some(o.c_index),
                alpha: o.alpha,
                chosen: Some(o.tuning.best),
                error: o.alpha_error.map(|e| format!("calibration: {e}")),
            },
            Err(e) => {
                log::warn!("outer fold {f} failed: {e}");
                FoldRecord {
                    fold: f,
                    test_size,
                    c_index: None,
                    alpha: None,
                    chosen: None,
                    error: Some(e.to_string()),
                }
            }
        }
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRecord {
    pub repetition: usize,
    pub seed: u64,
    pub folds: Vec<FoldRecord>,
    /// Mean over folds with a recorded value.
    pub mean_c_index: Option<f64>,
    pub mean_alpha: Option<f64>,
    /// Every fold produced both metrics.
    pub complete: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (n − 1); 0 for a single value.
    pub sd: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self {
            mean,
            sd,
            count: values.len(),
        })
    }
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn summarize(reps: &[RepetitionRecord]) -> (Option<Summary>, Option<Summary>) {
    let c: Vec<f64> = reps.iter().filter_map(|r| r.mean_c_index).collect();
    let a: Vec<f64> = reps.iter().filter_map(|r| r.mean_alpha).collect();
    (Summary::of(&c), Summary::of(&a))
}

pub const SD_BASIS: &str = "sample sd across per-repetition means of the outer folds";

/// Raw per-fold values of every repetition plus their aggregates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub group: String,
    pub model: ModelKind,
    pub master_seed: u64,
    pub outer_k: usize,
    pub inner_k: usize,
    pub grid: Vec<ModelParams>,
    pub sd_basis: String,
    pub repetitions: Vec<RepetitionRecord>,
    pub c_index: Option<Summary>,
    pub alpha: Option<Summary>,
    pub elapsed_seconds: f64,
}

impl EvalReport {
    /// All raw C-index values, repetition-major.
    pub fn c_index_values(&self) -> Vec<f64> {
        self.repetitions
            .iter()
            .flat_map(|r| r.folds.iter().filter_map(|f| f.c_index))
            .collect()
    }

    pub fn failures(&self) -> Vec<(usize, usize, String)> {
        self.repetitions
            .iter()
            .flat_map(|r| {
                r.folds
                    .iter()
                    .filter_map(move |f| f.error.clone().map(|e| (r.repetition, f.fold, e)))
            })
            .collect()
    }

    /// Recompute per-repetition means and the summaries from the raw fold
    /// values and compare bit for bit.
    pub fn verify(&self) -> bool {
        let recomputed: Vec<RepetitionRecord> = self
            .repetitions
            .iter()
            .map(|r| repetition_record(r.repetition, r.seed, r.folds.clone()))
            .collect();
        let (c, a) = summarize(&recomputed);
        recomputed == self.repetitions && c == self.c_index && a == self.alpha
    }

    /// Equality of everything except wall-clock timing.
    pub fn same_results(&self, other: &Self) -> bool {
        Self {
            elapsed_seconds: 0.0,
            ..self.clone()
        } == Self {
            elapsed_seconds: 0.0,
            ..other.clone()
        }
    }

    pub fn table_row(&self) -> String {
        let cell = |s: &Option<Summary>| match s {
            Some(s) => format!("{:.2}({})", s.mean, format_sd(s.sd)),
            None => "NA".to_string(),
        };
        format!(
            "{} ({}) | {} | {}",
            self.group,
            self.model.display_name(),
            cell(&self.c_index),
            cell(&self.alpha)
        )
    }
}

/// Two decimals, or one significant digit when smaller than 0.01.
fn format_sd(sd: f64) -> String {
    if sd == 0.0 {
        return "0".into();
    }
    if sd >= 0.01 {
        return format!("{sd:.2}");
    }
    let digits = (-sd.log10().floor()) as usize;
    format!("{sd:.digits$}")
}

/// Plain-text table with one row per report.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut out = String::from("Group (Model) | Mean C-index (sd) | Mean Calibration (sd)\n");
    for r in reports {
        let _ = writeln!(out, "{}", r.table_row());
    }
    out
}

fn repetition_record(repetition: usize, seed: u64, folds: Vec<FoldRecord>) -> RepetitionRecord {
    let complete = folds.iter().all(|f| f.c_index.is_some() && f.alpha.is_some());
    RepetitionRecord {
        repetition,
        seed,
        mean_c_index: mean_of(folds.iter().filter_map(|f| f.c_index)),
        mean_alpha: mean_of(folds.iter().filter_map(|f| f.alpha)),
        complete,
        folds,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub outer_k: usize,
    pub inner_k: usize,
    pub repetitions: usize,
    pub master_seed: u64,
    pub group: String,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            outer_k: 5,
            inner_k: 5,
            repetitions: 100,
            master_seed: 1,
            group: "All".into(),
        }
    }
}

/// Repeat nested CV with seeds derived from `(master_seed, repetition)`.
pub fn monte_carlo(data: &EvalData<'_>, grid: &[ModelParams], config: &MonteCarloConfig) -> Result<EvalReport> {
    if config.repetitions == 0 {
        return Err(SurvError::InvalidInput("repetitions must be at least 1".into()));
    }
    let model = grid
        .first()
        .ok_or_else(|| SurvError::InvalidHyperparameter("empty grid".into()))?
        .kind();
    if grid.iter().any(|p| p.kind() != model) {
        return Err(SurvError::InvalidHyperparameter("grid mixes model kinds".into()));
    }
    let start = Instant::now();
    let reps = par_map(config.repetitions, |r| {
        let rep_seed = seed::derive(config.master_seed, seed::STREAM_REP, r as u64);
        nested_cv(data, grid, config.outer_k, config.inner_k, rep_seed)
            .map(|folds| repetition_record(r, rep_seed, folds))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (c_index, alpha) = summarize(&reps);
    Ok(EvalReport {
        group: config.group.clone(),
        model,
        master_seed: config.master_seed,
        outer_k: config.outer_k,
        inner_k: config.inner_k,
        grid: grid.to_vec(),
        sd_basis: SD_BASIS.into(),
        repetitions: reps,
        c_index,
        alpha,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Expand a grid description into concrete settings.
///
/// Accepts an object such as `{"model": "rsf", "mtry": [1, 2], "n_trees": 500}`
/// (list-valued fields form a Cartesian product, in key order) or an array
/// of such objects, concatenated.
pub fn expand_grid(spec: &Value) -> Result<Vec<ModelParams>> {
    match spec {
        Value::Array(items) => {
            let mut out = Vec::new();
            for item in items {
                out.extend(expand_grid(item)?);
            }
            Ok(out)
        }
        Value::Object(map) => {
            let mut combos: Vec<Map<String, Value>> = vec![Map::new()];
            for (key, value) in map {
                let options: Vec<Value> = match value {
                    Value::Array(list) if list.is_empty() => {
                        return Err(SurvError::InvalidHyperparameter(format!("`{key}` has no values")))
                    }
                    Value::Array(list) => list.clone(),
                    v => vec![v.clone()],
                };
                combos = combos
                    .into_iter()
                    .flat_map(|c| {
                        options.iter().map(move |o| {
                            let mut c = c.clone();
                            c.insert(key.clone(), o.clone());
                            c
                        })
                    })
                    .collect();
            }
            combos
                .into_iter()
                .map(|c| {
                    serde_json::from_value(Value::Object(c))
                        .map_err(|e| SurvError::InvalidHyperparameter(e.to_string()))
                })
                .collect()
        }
        _ => Err(SurvError::InvalidHyperparameter("grid must be an object or array".into())),
    }
}

/// Default search space for `kind` on `p` features.
///
/// Cox is not tuned. The forest grid crosses `mtry ∈ 1..=min(20, p)` with
/// `min_node_size ∈ {10, 20, 30, 40, 50}` at 1000 trees. The network grid is a
/// small slice of its domain: 16 or 64 nodes and learning rate 0.001 or 0.01.
pub fn default_grid(kind: ModelKind, p: usize) -> Vec<ModelParams> {
    match kind {
        ModelKind::Cox => vec![ModelParams::default_for(ModelKind::Cox)],
        ModelKind::Rsf => {
            let mut grid = Vec::new();
            for mtry in 1..=p.clamp(1, 20) {
                for min_node_size in [10, 20, 30, 40, 50] {
                    grid.push(ModelParams::Rsf(RsfParams {
                        mtry,
                        min_node_size,
                        n_trees: 1000,
                        bootstrap: true,
                    }));
                }
            }
            grid
        }
        ModelKind::DeepHit => {
            let mut grid = Vec::new();
            for nodes in [16, 64] {
                for learning_rate in [0.001, 0.01] {
                    grid.push(ModelParams::DeepHit(DeepHitParams {
                        nodes,
                        epochs: 100,
                        batch_size: 32,
                        learning_rate,
                        activation: Activation::Relu,
                        optimizer: Optimizer::Adam,
                        patience: 10,
                        ..DeepHitParams::default()
                    }));
                }
            }
            grid
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cox::CoxParams;
    use crate::simulate::{simulate_cohort, SimSpec};
    use proptest::prelude::*;

    fn cohort(n: usize, seed: u64) -> SurvivalDataset {
        simulate_cohort(&SimSpec {
            n,
            ..SimSpec::linear(vec![1.0, -0.5], seed)
        })
        .unwrap()
        .dataset
    }

    fn counts(folds: &[usize], labels: &[bool], k: usize) -> Vec<(usize, usize)> {
        (0..k)
            .map(|f| {
                let members: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] == f).collect();
                let events = members.iter().filter(|&&i| labels[i]).count();
                (members.len(), events)
            })
            .collect()
    }

    #[test]
    fn divisible_case_is_exact() {
        let labels: Vec<bool> = (0..100).map(|i| i < 30).collect();
        let folds = stratified_folds(&labels, 5, 3).unwrap();
        for (size, events) in counts(&folds, &labels, 5) {
            assert_eq!((size, events), (20, 6));
        }
    }

    #[test]
    fn single_event_stratum() {
        let labels: Vec<bool> = (0..10).map(|i| i == 4).collect();
        let folds = stratified_folds(&labels, 5, 8).unwrap();
        let c = counts(&folds, &labels, 5);
        assert_eq!(c.iter().filter(|(_, e)| *e == 1).count(), 1);
        assert!(c.iter().all(|(s, _)| *s == 2));
    }

    #[test]
    fn invalid_k() {
        assert!(matches!(stratified_folds(&[true; 5], 1, 0), Err(SurvError::InvalidK(1))));
        assert!(matches!(stratified_folds(&[true; 5], 6, 0), Err(SurvError::InvalidK(6))));
    }

    proptest! {
        #[test]
        fn folds_partition_and_balance(
            labels in prop::collection::vec(any::<bool>(), 10..200),
            k in 2usize..8,
            seed in any::<u64>(),
        ) {
            prop_assume!(k <= labels.len());
            let folds = stratified_folds(&labels, k, seed).unwrap();
            prop_assert!(folds.iter().all(|&f| f < k));
            let c = counts(&folds, &labels, k);
            let sizes: Vec<usize> = c.iter().map(|x| x.0).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let events: Vec<usize> = c.iter().map(|x| x.1).collect();
            prop_assert!(events.iter().max().unwrap() - events.iter().min().unwrap() <= 1);
            let censored: Vec<usize> = c.iter().map(|x| x.0 - x.1).collect();
            prop_assert!(censored.iter().max().unwrap() - censored.iter().min().unwrap() <= 1);
            // Event proportion within one subject of the global proportion.
            let global = labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64;
            for (size, ev) in c {
                prop_assert!((ev as f64 - global * size as f64).abs() <= 1.0);
            }
        }

        #[test]
        fn plan_inner_folds_partition_outer_training(
            labels in prop::collection::vec(any::<bool>(), 30..120),
            seed in any::<u64>(),
        ) {
            let plan = SplitPlan::new(&labels, 5, 3, seed).unwrap();
            for f in 0..5 {
                let train = plan.train_indices(f);
                prop_assert_eq!(plan.inner[f].len(), train.len());
                prop_assert!(plan.inner[f].iter().all(|&j| j < 3));
                let mut all = train.clone();
                all.extend(plan.test_indices(f));
                all.sort_unstable();
                prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn singleton_grid_skips_search() {
        let data = cohort(60, 1);
        let grid = [ModelParams::Cox(CoxParams::default())];
        let t = tune_inner(&data, &grid, 5, 0).unwrap();
        assert_eq!(t.best_index, 0);
        assert!(t.scores.is_empty());
    }

    #[test]
    fn duplicate_grid_entries_do_not_change_selection() {
        let data = cohort(120, 2);
        let a = ModelParams::Rsf(RsfParams { mtry: 1, min_node_size: 10, n_trees: 10, bootstrap: true });
        let b = ModelParams::Rsf(RsfParams { mtry: 2, min_node_size: 10, n_trees: 10, bootstrap: true });
        let plain = tune_inner(&data, &[a.clone(), b.clone()], 3, 4).unwrap();
        let dup = tune_inner(&data, &[a.clone(), a.clone(), b.clone(), b], 3, 4).unwrap();
        assert_eq!(plain.best, dup.best);
        assert_eq!(dup.scores[0], dup.scores[1]);
        assert_eq!(dup.scores[2], dup.scores[3]);
    }

    #[test]
    fn all_failures_are_reported() {
        let data = cohort(60, 3);
        // mtry larger than p fails validation on every fold.
        let bad = ModelParams::Rsf(RsfParams { mtry: 9, ..RsfParams::default() });
        assert!(matches!(tune_inner(&data, &[bad.clone(), bad], 3, 0), Err(SurvError::AllFitsFailed)));
    }

    #[test]
    fn nested_cv_records_each_outer_fold() {
        let data = cohort(150, 4);
        let grid = [ModelParams::Cox(CoxParams::default())];
        let folds = nested_cv(&EvalData::Prepared(&data), &grid, 5, 3, 9).unwrap();
        assert_eq!(folds.len(), 5);
        assert_eq!(folds.iter().map(|f| f.test_size).sum::<usize>(), 150);
        assert!(folds.iter().all(|f| f.c_index.is_some() && f.error.is_none()));
    }

    #[test]
    fn failing_fold_is_recorded_not_skipped() {
        let data = cohort(100, 5);
        let grid = [ModelParams::Rsf(RsfParams { mtry: 7, ..RsfParams::default() })];
        let folds = nested_cv(&EvalData::Prepared(&data), &grid, 4, 2, 1).unwrap();
        assert_eq!(folds.len(), 4);
        assert!(folds.iter().all(|f| f.c_index.is_none() && f.error.is_some()));
    }

    #[test]
    fn single_repetition_summary() {
        let data = cohort(100, 6);
        let grid = [ModelParams::Cox(CoxParams::default())];
        let config = MonteCarloConfig { outer_k: 5, inner_k: 2, repetitions: 1, master_seed: 3, group: "All".into() };
        let report = monte_carlo(&EvalData::Prepared(&data), &grid, &config).unwrap();
        let values = report.c_index_values();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let s = report.c_index.unwrap();
        assert_eq!(s.mean, mean);
        assert_eq!(s.sd, 0.0);
        assert!(report.verify());
    }

    #[test]
    fn monte_carlo_is_reproducible_and_self_auditing() {
        let data = cohort(120, 7);
        let grid = [ModelParams::Cox(CoxParams::default())];
        let config = MonteCarloConfig { outer_k: 4, inner_k: 2, repetitions: 3, master_seed: 11, group: "All".into() };
        let a = monte_carlo(&EvalData::Prepared(&data), &grid, &config).unwrap();
        let b = monte_carlo(&EvalData::Prepared(&data), &grid, &config).unwrap();
        assert!(a.same_results(&b));
        assert!(a.verify());
        assert_eq!(a.c_index_values().len(), 12);
        let mut tampered = a.clone();
        tampered.repetitions[0].folds[0].c_index = Some(0.123);
        assert!(!tampered.verify());
        let json = serde_json::to_string(&a).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn table_layout() {
        let data = cohort(80, 8);
        let grid = [ModelParams::Cox(CoxParams::default())];
        let config = MonteCarloConfig { outer_k: 4, inner_k: 2, repetitions: 2, master_seed: 1, group: "Sim".into() };
        let report = monte_carlo(&EvalData::Prepared(&data), &grid, &config).unwrap();
        let table = render_table(&[report]);
        let mut lines = table.lines();
        assert_eq!(lines.next().unwrap(), "Group (Model) | Mean C-index (sd) | Mean Calibration (sd)");
        assert!(lines.next().unwrap().starts_with("Sim (Cox) | 0."));
    }

    #[test]
    fn sd_formatting() {
        assert_eq!(format_sd(0.0213), "0.02");
        assert_eq!(format_sd(0.0081), "0.008");
        assert_eq!(format_sd(0.0), "0");
    }

    #[test]
    fn grid_expansion() {
        let spec = serde_json::json!({"model": "rsf", "mtry": [1, 2, 3], "min_node_size": [10, 20], "n_trees": 50});
        let grid = expand_grid(&spec).unwrap();
        assert_eq!(grid.len(), 6);
        assert!(grid.iter().all(|g| matches!(g, ModelParams::Rsf(RsfParams { n_trees: 50, .. }))));
        let both = expand_grid(&serde_json::json!([{"model": "cox"}, {"model": "cox", "ridge": [0.1, 1.0]}])).unwrap();
        assert_eq!(both.len(), 3);
        assert!(expand_grid(&serde_json::json!({"model": "rsf", "mtry": []})).is_err());
        assert!(expand_grid(&serde_json::json!(3)).is_err());
    }

    #[test]
    fn default_grids() {
        assert_eq!(default_grid(ModelKind::Cox, 5).len(), 1);
        assert_eq!(default_grid(ModelKind::Rsf, 3).len(), 15);
        assert_eq!(default_grid(ModelKind::Rsf, 40).len(), 100);
        assert_eq!(default_grid(ModelKind::DeepHit, 3).len(), 4);
    }
}
