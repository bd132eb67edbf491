use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use survml::dataset::{
    apply_preprocess, fit_preprocess, transform_features, unknown_columns, PreprocessRecipe, RawTable, Schema,
};
use survml::harness::{default_grid, expand_grid, monte_carlo, render_table, EvalData, EvalReport, MonteCarloConfig};
use survml::simulate::{simulate_cohort, Scenario, SimSpec, SimTruth};
use survml::{FittedModel, ModelKind, ModelParams, SurvError, SurvivalModel};

use crate::config;
use crate::{Cli, Command, EvaluateArgs, FitArgs, PredictArgs, SimulateArgs};

#[derive(Debug)]
pub enum Failure {
    /// Bad or missing arguments; exits with status 2.
    Usage(String),
    /// Anything that went wrong while running; exits with status 1.
    Runtime(String),
}

impl From<SurvError> for Failure {
    fn from(e: SurvError) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

pub fn dispatch(cli: Cli) -> Result<(), Failure> {
    let cfg = config::load(cli.config.as_deref())?;
    if let Some(jobs) = config::jobs(cli.jobs, &cfg) {
        if jobs == 0 {
            return Err(Failure::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate(a) => simulate(config::resolve(&a, &cfg, "simulate")?),
        Command::Fit(a) => fit(config::resolve(&a, &cfg, "fit")?),
        Command::Predict(a) => predict(config::resolve(&a, &cfg, "predict")?),
        Command::Evaluate(a) => evaluate(config::resolve(&a, &cfg, "evaluate")?),
    }
}

fn echo<T: Serialize>(command: &str, resolved: &T) {
    if let Ok(json) = serde_json::to_string(resolved) {
        eprintln!("survml {command}: {json}");
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Inline JSON, or the contents of the file it names.
fn json_arg(arg: &str) -> Result<Value, Failure> {
    let trimmed = arg.trim_start();
    let text = if trimmed.starts_with('{') || trimmed.starts_with('[') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).map_err(|e| Failure::Runtime(format!("reading {arg}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| Failure::Runtime(format!("parsing {arg}: {e}")))
}

fn load_schema(path: Option<&Path>) -> Result<Schema, Failure> {
    Ok(match path {
        Some(p) => Schema::from_json_file(p)?,
        None => Schema::simulated(),
    })
}

fn parse_kind(model: Option<&str>, default: Option<ModelKind>) -> Result<ModelKind, Failure> {
    match (model, default) {
        (Some(m), _) => m.parse().map_err(|e: SurvError| Failure::Usage(e.to_string())),
        (None, Some(k)) => Ok(k),
        (None, None) => Err(Failure::Usage("--model is required".into())),
    }
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    config: &'a SimulateArgs,
    truth: SimTruth,
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let n = args.n.ok_or_else(|| Failure::Usage("--n is required".into()))?;
    let p = args.p.unwrap_or(5);
    let scenario: Scenario = match &args.scenario {
        Some(s) => s.parse().map_err(|e: SurvError| Failure::Usage(e.to_string()))?,
        None => Scenario::Linear,
    };
    let beta = match (&args.beta, scenario) {
        (Some(b), _) => b.clone(),
        (None, Scenario::Linear) => (0..p).map(|j| [1.0, -0.5, 0.5].get(j).copied().unwrap_or(0.0)).collect(),
        (None, Scenario::Nonlinear) => vec![0.0; p],
    };
    let base = SimSpec::linear(beta, args.seed.unwrap_or(1));
    let spec = SimSpec {
        n,
        p,
        scenario,
        shape: args.shape.unwrap_or(base.shape),
        scale: args.scale.unwrap_or(base.scale),
        censor_rate_target: args.censoring.unwrap_or(base.censor_rate_target),
        ..base
    };
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("cohort.csv"));
    let truth_path = args
        .truth
        .clone()
        .unwrap_or_else(|| out.with_extension("truth.json"));
    let resolved = SimulateArgs {
        n: Some(n),
        p: Some(p),
        scenario: Some(format!("{:?}", scenario).to_lowercase()),
        beta: Some(spec.beta.clone()),
        shape: Some(spec.shape),
        scale: Some(spec.scale),
        censoring: Some(spec.censor_rate_target),
        seed: Some(spec.seed),
        out: Some(out.clone()),
        truth: Some(truth_path.clone()),
    };
    echo("simulate", &resolved);

    let cohort = simulate_cohort(&spec)?;
    let mut w = BufWriter::new(File::create(&out)?);
    cohort.dataset.write_csv(&mut w)?;
    w.flush()?;
    write_json(
        &truth_path,
        &SimulateOutput {
            config: &resolved,
            truth: cohort.truth(),
        },
    )
}

/// A fitted model together with what is needed to apply it to raw CSV rows.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    config: FitArgs,
    schema: Schema,
    recipe: PreprocessRecipe,
    model: FittedModel,
}

fn fit(args: FitArgs) -> Result<(), Failure> {
    let data_path = args.data.clone().ok_or_else(|| Failure::Usage("--data is required".into()))?;
    let kind = parse_kind(args.model.as_deref(), Some(ModelKind::Cox))?;
    let params: ModelParams = match &args.params {
        Some(p) => {
            let mut v = json_arg(p)?;
            if let Value::Object(map) = &mut v {
                map.entry("model").or_insert_with(|| Value::String(kind.name().into()));
            }
            let params: ModelParams =
                serde_json::from_value(v).map_err(|e| Failure::Usage(format!("--params: {e}")))?;
            if params.kind() != kind {
                return Err(Failure::Usage(format!("--params describe {} but --model is {kind}", params.kind())));
            }
            params
        }
        None => ModelParams::default_for(kind),
    };
    let resolved = FitArgs {
        data: Some(data_path.clone()),
        model: Some(kind.name().into()),
        params: Some(serde_json::to_string(&params)?),
        drop_threshold: Some(args.drop_threshold.unwrap_or(0.9)),
        seed: Some(args.seed.unwrap_or(1)),
        out: Some(args.out.clone().unwrap_or_else(|| PathBuf::from("model.json"))),
        schema: args.schema.clone(),
    };
    echo("fit", &resolved);

    let schema = load_schema(args.schema.as_deref())?;
    let table = RawTable::load_csv(&data_path, &schema)?;
    let recipe = fit_preprocess(&table, resolved.drop_threshold.unwrap_or(0.9))?;
    let data = apply_preprocess(&table, &recipe)?;
    let model = params.fit(&data, resolved.seed.unwrap_or(1))?;
    if let FittedModel::Cox(m) = &model {
        if !m.converged {
            log::warn!("Cox fit did not converge in {} iterations", m.iterations);
        }
    }
    let out = resolved.out.clone().unwrap_or_default();
    write_json(
        &out,
        &ModelFile {
            config: resolved,
            schema,
            recipe,
            model,
        },
    )
}

fn predict(args: PredictArgs) -> Result<(), Failure> {
    let model_path = args
        .model_file
        .clone()
        .ok_or_else(|| Failure::Usage("--model-file is required".into()))?;
    let data_path = args.data.clone().ok_or_else(|| Failure::Usage("--data is required".into()))?;
    let resolved = PredictArgs {
        model_file: Some(model_path.clone()),
        data: Some(data_path.clone()),
        horizon: Some(args.horizon.clone().unwrap_or_default()),
        out: Some(args.out.clone().unwrap_or_else(|| PathBuf::from("predictions.csv"))),
    };
    echo("predict", &resolved);

    let file: ModelFile = serde_json::from_reader(std::io::BufReader::new(File::open(&model_path)?))?;
    let table = RawTable::load_features_csv(&data_path, &file.schema)?;
    let expected = file.recipe.input_columns().len() + file.recipe.dropped_columns.len();
    if table.columns().len() != expected {
        return Err(SurvError::DimensionMismatch {
            expected,
            found: table.columns().len(),
        }
        .into());
    }
    let extra = unknown_columns(&table, &file.recipe);
    if !extra.is_empty() {
        return Err(SurvError::IncompatibleSchema(format!("columns unknown to the model: {}", extra.join(", "))).into());
    }
    let x = transform_features(&table, &file.recipe)?;
    if x.ncols() != file.model.n_features() {
        return Err(SurvError::DimensionMismatch {
            expected: file.model.n_features(),
            found: x.ncols(),
        }
        .into());
    }

    let horizons = resolved.horizon.clone().unwrap_or_default();
    let times = table.time();
    let mut w = csv::Writer::from_path(resolved.out.as_ref().expect("resolved"))?;
    let mut header = vec!["row".to_string(), "risk_score".to_string()];
    if times.is_some() {
        header.push("cumhaz_at_time".into());
    }
    header.extend(horizons.iter().map(|h| format!("cumhaz_{h}")));
    w.write_record(&header)?;
    for (i, row) in x.rows().into_iter().enumerate() {
        let mut record = vec![i.to_string(), file.model.risk_score(row)?.to_string()];
        if let Some(times) = times {
            record.push(match times[i] {
                Some(t) => file.model.cumhaz(row, t)?.to_string(),
                None => String::new(),
            });
        }
        for &h in &horizons {
            record.push(file.model.cumhaz(row, h)?.to_string());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct EvaluateOutput<'a> {
    config: &'a EvaluateArgs,
    report: &'a EvalReport,
}

fn evaluate(args: EvaluateArgs) -> Result<(), Failure> {
    let data_path = args.data.clone().ok_or_else(|| Failure::Usage("--data is required".into()))?;
    let kind = parse_kind(args.model.as_deref(), None)?;
    let schema = load_schema(args.schema.as_deref())?;
    let table = RawTable::load_csv(&data_path, &schema)?;
    let drop_threshold = args.drop_threshold.unwrap_or(0.9);

    let grid = match &args.grid {
        Some(g) => expand_grid(&json_arg(g)?).map_err(|e| Failure::Usage(format!("--grid: {e}")))?,
        None => {
            // Only the feature count is taken from the full table, to size mtry.
            let p = fit_preprocess(&table, drop_threshold)?.n_features();
            default_grid(kind, p)
        }
    };
    if let Some(bad) = grid.iter().find(|g| g.kind() != kind) {
        return Err(Failure::Usage(format!("grid contains a {} entry for --model {kind}", bad.kind())));
    }
    let mc = MonteCarloConfig {
        outer_k: args.outer_k.unwrap_or(5),
        inner_k: args.inner_k.unwrap_or(5),
        repetitions: args.reps.unwrap_or(100),
        master_seed: args.seed.unwrap_or(1),
        group: args.group.clone().unwrap_or_else(|| "All".into()),
    };
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("report.json"));
    let table_path = args.table.clone().unwrap_or_else(|| out.with_extension("txt"));
    let resolved = EvaluateArgs {
        data: Some(data_path),
        schema: args.schema.clone(),
        model: Some(kind.name().into()),
        grid: Some(serde_json::to_string(&grid)?),
        outer_k: Some(mc.outer_k),
        inner_k: Some(mc.inner_k),
        reps: Some(mc.repetitions),
        seed: Some(mc.master_seed),
        group: Some(mc.group.clone()),
        drop_threshold: Some(drop_threshold),
        out: Some(out.clone()),
        table: Some(table_path.clone()),
    };
    echo("evaluate", &resolved);

    let report = monte_carlo(
        &EvalData::Raw {
            table: &table,
            drop_threshold,
        },
        &grid,
        &mc,
    )?;
    write_json(
        &out,
        &EvaluateOutput {
            config: &resolved,
            report: &report,
        },
    )?;
    let text = render_table(std::slice::from_ref(&report));
    std::fs::write(&table_path, &text)?;
    print!("{text}");

    let failures = report.failures();
    if failures.iter().any(|(_, _, e)| !e.starts_with("calibration:")) {
        let mut msg = format!("{} outer fold(s) failed:", failures.len());
        for (rep, fold, e) in &failures {
            msg.push_str(&format!("\n  repetition {rep}, fold {fold}: {e}"));
        }
        return Err(Failure::Runtime(msg));
    }
    for (rep, fold, e) in &failures {
        log::warn!("repetition {rep}, fold {fold}: {e}");
    }
    Ok(())
}
