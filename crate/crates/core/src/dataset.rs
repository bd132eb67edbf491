//! Censored survival data: CSV ingestion and the preprocessing recipe.
//!
//! A [`RawTable`] holds cells as read from disk (numeric or nominal, with
//! missing cells preserved). [`fit_preprocess`] learns a [`PreprocessRecipe`]
//! from one table only, and [`apply_preprocess`] turns any compatible table
//! into a complete numeric [`SurvivalDataset`]:
//!
//! 1. columns whose missing fraction reaches the drop threshold are removed,
//! 2. every surviving column with at least one missing cell gets a
//!    `<name>_missing` 0/1 indicator,
//! 3. nominal columns are expanded into one `<name>=<level>` column per level,
//! 4. remaining gaps are filled with the training median (numeric) or mode
//!    (nominal).

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SurvError};

/// Complete numeric survival data: one row per subject.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalDataset {
    features: Array2<f64>,
    feature_names: Vec<String>,
    time: Vec<f64>,
    event: Vec<bool>,
}

impl SurvivalDataset {
    pub fn new(
        features: Array2<f64>,
        feature_names: Vec<String>,
        time: Vec<f64>,
        event: Vec<bool>,
    ) -> Result<Self> {
        let n = features.nrows();
        if time.len() != n || event.len() != n {
            return Err(SurvError::ShapeMismatch(format!(
                "{} feature rows, {} times, {} event flags",
                n,
                time.len(),
                event.len()
            )));
        }
        if feature_names.len() != features.ncols() {
            return Err(SurvError::ShapeMismatch(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.ncols()
            )));
        }
        if let Some((index, &t)) = time
            .iter()
            .enumerate()
            .find(|(_, t)| !(t.is_finite() && **t > 0.0))
        {
            return Err(SurvError::NonPositiveTime { index, time: t });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(SurvError::InvalidInput(
                "features must be finite after preprocessing".into(),
            ));
        }
        Ok(Self {
            features,
            feature_names,
            time,
            event,
        })
    }

    /// Build a dataset with generated names `x1..xp`.
    pub fn from_parts(features: Array2<f64>, time: Vec<f64>, event: Vec<bool>) -> Result<Self> {
        let names = (1..=features.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(features, names, time, event)
    }

    pub fn n(&self) -> usize {
        self.time.len()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn event(&self) -> &[bool] {
        &self.event
    }

    pub fn event_count(&self) -> usize {
        self.event.iter().filter(|&&e| e).count()
    }

    pub fn max_time(&self) -> f64 {
        self.time.iter().copied().fold(0.0, f64::max)
    }

    /// Rows selected by index, in the given order (duplicates allowed).
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select(ndarray::Axis(0), indices),
            feature_names: self.feature_names.clone(),
            time: indices.iter().map(|&i| self.time[i]).collect(),
            event: indices.iter().map(|&i| self.event[i]).collect(),
        }
    }

    /// Mutable feature access, used by leakage probes and demos.
    pub fn features_mut(&mut self) -> ndarray::ArrayViewMut2<'_, f64> {
        self.features.view_mut()
    }

    /// Write as CSV: feature columns, then `time`, then `event` as 0/1.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push("time");
        header.push("event");
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut record: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            record.push(self.time[i].to_string());
            record.push(if self.event[i] { "1" } else { "0" }.to_string());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Column roles for a CSV cohort.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub time: String,
    pub outcome: String,
    /// Outcome levels that count as an observed event (a worse diagnosis).
    pub event_labels: Vec<String>,
    /// Columns read as nominal strings; everything else is numeric.
    #[serde(default)]
    pub nominal: Vec<String>,
    /// Full set of allowed outcome levels; unchecked when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome_labels: Option<Vec<String>>,
    /// Columns ignored entirely (identifiers and the like).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exclude: Vec<String>,
}

impl Schema {
    /// The layout written by [`SurvivalDataset::write_csv`].
    pub fn simulated() -> Self {
        Self {
            time: "time".into(),
            outcome: "event".into(),
            event_labels: vec!["1".into()],
            nominal: Vec::new(),
            outcome_labels: Some(vec!["0".into(), "1".into()]),
            exclude: Vec::new(),
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    fn is_event(&self, label: &str) -> bool {
        self.event_labels.iter().any(|l| l == label)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<Option<f64>>),
    Nominal(Vec<Option<String>>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Nominal(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            ColumnData::Numeric(v) => v[row].is_none(),
            ColumnData::Nominal(v) => v[row].is_none(),
        }
    }

    pub fn missing_count(&self) -> usize {
        (0..self.len()).filter(|&r| self.is_missing(r)).count()
    }

    fn select(&self, rows: &[usize]) -> Self {
        match self {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Nominal(v) => {
                ColumnData::Nominal(rows.iter().map(|&r| v[r].clone()).collect())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawColumn {
    pub name: String,
    pub data: ColumnData,
}

/// Cells exactly as loaded; covariates keep their file order.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    schema: Schema,
    columns: Vec<RawColumn>,
    time: Option<Vec<Option<f64>>>,
    outcome: Option<Vec<Option<String>>>,
    n_rows: usize,
}

impl RawTable {
    /// Load a cohort; the schema's time and outcome columns must exist.
    pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?, schema, true)
    }

    /// Load covariates only; time and outcome are read when present.
    pub fn load_features_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?, schema, false)
    }

    pub fn from_reader<R: Read>(reader: R, schema: &Schema, require_outcome: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let position = |name: &str| header.iter().position(|h| h == name);

        let time_col = position(&schema.time);
        let outcome_col = position(&schema.outcome);
        if require_outcome {
            if time_col.is_none() {
                return Err(SurvError::MissingColumn(schema.time.clone()));
            }
            if outcome_col.is_none() {
                return Err(SurvError::MissingColumn(schema.outcome.clone()));
            }
        }
        for name in &schema.nominal {
            if position(name).is_none() {
                return Err(SurvError::MissingColumn(name.clone()));
            }
        }

        let covariate_cols: Vec<usize> = (0..header.len())
            .filter(|&c| Some(c) != time_col && Some(c) != outcome_col)
            .filter(|&c| !schema.exclude.contains(&header[c]))
            .collect();
        let mut columns: Vec<RawColumn> = covariate_cols
            .iter()
            .map(|&c| RawColumn {
                name: header[c].clone(),
                data: if schema.nominal.contains(&header[c]) {
                    ColumnData::Nominal(Vec::new())
                } else {
                    ColumnData::Numeric(Vec::new())
                },
            })
            .collect();
        let mut time = time_col.map(|_| Vec::new());
        let mut outcome = outcome_col.map(|_| Vec::new());

        let mut n_rows = 0;
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            // Row numbers in messages are 1-based data rows (header excluded).
            let line = row + 1;
            for (column, &c) in columns.iter_mut().zip(&covariate_cols) {
                let cell = record.get(c).unwrap_or("");
                match &mut column.data {
                    ColumnData::Numeric(v) => v.push(parse_numeric(cell, line, &column.name)?),
                    ColumnData::Nominal(v) => {
                        v.push((!cell.is_empty()).then(|| cell.to_string()))
                    }
                }
            }
            if let (Some(c), Some(times)) = (time_col, time.as_mut()) {
                let t = parse_numeric(record.get(c).unwrap_or(""), line, &schema.time)?;
                if let Some(t) = t {
                    if t < 0.0 {
                        return Err(SurvError::Parse {
                            row: line,
                            column: schema.time.clone(),
                            message: format!("negative time {t}"),
                        });
                    }
                }
                times.push(t);
            }
            if let (Some(c), Some(labels)) = (outcome_col, outcome.as_mut()) {
                let cell = record.get(c).unwrap_or("");
                if let (Some(allowed), false) = (&schema.outcome_labels, cell.is_empty()) {
                    if !allowed.iter().any(|l| l == cell) {
                        return Err(SurvError::Parse {
                            row: line,
                            column: schema.outcome.clone(),
                            message: format!("undeclared outcome label `{cell}`"),
                        });
                    }
                }
                labels.push((!cell.is_empty()).then(|| cell.to_string()));
            }
            n_rows += 1;
        }

        Ok(Self {
            schema: schema.clone(),
            columns,
            time,
            outcome,
            n_rows,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// (rows, columns) counting covariates plus the time and outcome columns.
    pub fn shape(&self) -> (usize, usize) {
        let extra = usize::from(self.time.is_some()) + usize::from(self.outcome.is_some());
        (self.n_rows, self.columns.len() + extra)
    }

    pub fn columns(&self) -> &[RawColumn] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&RawColumn> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_mut(&mut self, name: &str) -> Option<&mut RawColumn> {
        self.columns.iter_mut().find(|c| c.name == name)
    }

    pub fn missing_cells(&self) -> usize {
        self.columns.iter().map(|c| c.data.missing_count()).sum()
    }

    pub fn time(&self) -> Option<&[Option<f64>]> {
        self.time.as_deref()
    }

    pub fn outcome(&self) -> Option<&[Option<String>]> {
        self.outcome.as_deref()
    }

    /// Event flags from the outcome column via the schema's event labels.
    pub fn event_flags(&self) -> Result<Vec<bool>> {
        let outcome = self
            .outcome
            .as_ref()
            .ok_or_else(|| SurvError::MissingColumn(self.schema.outcome.clone()))?;
        outcome
            .iter()
            .enumerate()
            .map(|(row, label)| match label {
                Some(l) => Ok(self.schema.is_event(l)),
                None => Err(SurvError::Parse {
                    row: row + 1,
                    column: self.schema.outcome.clone(),
                    message: "missing outcome".into(),
                }),
            })
            .collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            schema: self.schema.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| RawColumn {
                    name: c.name.clone(),
                    data: c.data.select(rows),
                })
                .collect(),
            time: self.time.as_ref().map(|t| rows.iter().map(|&r| t[r]).collect()),
            outcome: self
                .outcome
                .as_ref()
                .map(|o| rows.iter().map(|&r| o[r].clone()).collect()),
            n_rows: rows.len(),
        }
    }
}

fn parse_numeric(cell: &str, row: usize, column: &str) -> Result<Option<f64>> {
    if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Some)
        .ok_or_else(|| SurvError::Parse {
            row,
            column: column.to_string(),
            message: format!("`{cell}` is not a finite number"),
        })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnTransform {
    Numeric { fill: f64 },
    Nominal { levels: Vec<String>, fill: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStep {
    pub column: String,
    pub transform: ColumnTransform,
    /// Emit a `<column>_missing` indicator after the column's value(s).
    pub indicator: bool,
}

/// Preprocessing learned from a training table; serializable for audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessRecipe {
    pub drop_threshold: f64,
    pub dropped_columns: Vec<String>,
    pub steps: Vec<ColumnStep>,
    pub feature_names: Vec<String>,
}

impl PreprocessRecipe {
    pub fn indicator_columns(&self) -> Vec<String> {
        self.steps
            .iter()
            .filter(|s| s.indicator)
            .map(|s| indicator_name(&s.column))
            .collect()
    }

    /// Nominal column -> output dummy column names, in level order.
    pub fn dummy_map(&self) -> BTreeMap<String, Vec<String>> {
        self.steps
            .iter()
            .filter_map(|s| match &s.transform {
                ColumnTransform::Nominal { levels, .. } => Some((
                    s.column.clone(),
                    levels.iter().map(|l| dummy_name(&s.column, l)).collect(),
                )),
                ColumnTransform::Numeric { .. } => None,
            })
            .collect()
    }

    pub fn imputation_values(&self) -> BTreeMap<String, String> {
        self.steps
            .iter()
            .map(|s| {
                let fill = match &s.transform {
                    ColumnTransform::Numeric { fill } => fill.to_string(),
                    ColumnTransform::Nominal { fill, .. } => fill.clone(),
                };
                (s.column.clone(), fill)
            })
            .collect()
    }

    /// Input columns the recipe reads.
    pub fn input_columns(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.column.as_str()).collect()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }
}

fn indicator_name(column: &str) -> String {
    format!("{column}_missing")
}

fn dummy_name(column: &str, level: &str) -> String {
    format!("{column}={level}")
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Learn the preprocessing recipe from `table` alone.
pub fn fit_preprocess(table: &RawTable, drop_threshold: f64) -> Result<PreprocessRecipe> {
    if !(drop_threshold > 0.0 && drop_threshold <= 1.0) {
        return Err(SurvError::InvalidInput(format!(
            "drop threshold {drop_threshold} outside (0, 1]"
        )));
    }
    let n = table.n_rows();
    if n < 2 {
        return Err(SurvError::EmptyTable(n));
    }

    let mut dropped_columns = Vec::new();
    let mut steps = Vec::new();
    let mut feature_names = Vec::new();
    for column in table.columns() {
        let missing = column.data.missing_count();
        if missing as f64 / n as f64 >= drop_threshold {
            dropped_columns.push(column.name.clone());
            continue;
        }
        let transform = match &column.data {
            ColumnData::Numeric(values) => {
                let mut present: Vec<f64> = values.iter().flatten().copied().collect();
                let fill = median(&mut present);
                feature_names.push(column.name.clone());
                ColumnTransform::Numeric { fill }
            }
            ColumnData::Nominal(values) => {
                let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                for v in values.iter().flatten() {
                    *counts.entry(v.as_str()).or_default() += 1;
                }
                // Mode; BTreeMap order makes ties resolve to the smallest level.
                let fill = counts
                    .iter()
                    .fold(None::<(&str, usize)>, |best, (&level, &count)| match best {
                        Some((_, c)) if c >= count => best,
                        _ => Some((level, count)),
                    })
                    .map(|(l, _)| l.to_string())
                    .unwrap_or_default();
                let levels: Vec<String> = counts.keys().map(|l| l.to_string()).collect();
                feature_names.extend(levels.iter().map(|l| dummy_name(&column.name, l)));
                ColumnTransform::Nominal { levels, fill }
            }
        };
        let indicator = missing > 0;
        if indicator {
            feature_names.push(indicator_name(&column.name));
        }
        steps.push(ColumnStep {
            column: column.name.clone(),
            transform,
            indicator,
        });
    }

    Ok(PreprocessRecipe {
        drop_threshold,
        dropped_columns,
        steps,
        feature_names,
    })
}

/// Feature matrix only; does not need time or outcome columns.
pub fn transform_features(table: &RawTable, recipe: &PreprocessRecipe) -> Result<Array2<f64>> {
    let n = table.n_rows();
    let mut out = Array2::<f64>::zeros((n, recipe.n_features()));
    let mut col = 0;
    for step in &recipe.steps {
        let source = table.column(&step.column).ok_or_else(|| {
            SurvError::IncompatibleSchema(format!("column `{}` not in table", step.column))
        })?;
        match (&step.transform, &source.data) {
            (ColumnTransform::Numeric { fill }, ColumnData::Numeric(values)) => {
                for (r, v) in values.iter().enumerate() {
                    out[[r, col]] = v.unwrap_or(*fill);
                }
                col += 1;
            }
            (ColumnTransform::Nominal { levels, fill }, ColumnData::Nominal(values)) => {
                for (r, v) in values.iter().enumerate() {
                    let level = v.as_deref().unwrap_or(fill.as_str());
                    // Unseen levels leave the whole block at zero.
                    if let Ok(k) = levels.binary_search_by(|l| l.as_str().cmp(level)) {
                        out[[r, col + k]] = 1.0;
                    }
                }
                col += levels.len();
            }
            _ => {
                return Err(SurvError::IncompatibleSchema(format!(
                    "column `{}` changed kind between fit and apply",
                    step.column
                )))
            }
        }
        if step.indicator {
            for r in 0..n {
                if source.data.is_missing(r) {
                    out[[r, col]] = 1.0;
                }
            }
            col += 1;
        }
    }
    debug_assert_eq!(col, recipe.n_features());
    Ok(out)
}

/// Apply a fitted recipe, producing a complete dataset.
pub fn apply_preprocess(table: &RawTable, recipe: &PreprocessRecipe) -> Result<SurvivalDataset> {
    let features = transform_features(table, recipe)?;
    let times = table.time().ok_or_else(|| {
        SurvError::IncompatibleSchema(format!("time column `{}` absent", table.schema().time))
    })?;
    let time = times
        .iter()
        .enumerate()
        .map(|(index, t)| match t {
            Some(t) if *t > 0.0 => Ok(*t),
            Some(t) => Err(SurvError::NonPositiveTime { index, time: *t }),
            None => Err(SurvError::NonPositiveTime {
                index,
                time: f64::NAN,
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    let event = table.event_flags()?;
    SurvivalDataset::new(features, recipe.feature_names.clone(), time, event)
}

/// Column names present in the table but unknown to the recipe.
pub fn unknown_columns(table: &RawTable, recipe: &PreprocessRecipe) -> Vec<String> {
    let known: BTreeSet<&str> = recipe
        .input_columns()
        .into_iter()
        .chain(recipe.dropped_columns.iter().map(String::as_str))
        .collect();
    table
        .columns()
        .iter()
        .filter(|c| !known.contains(c.name.as_str()))
        .map(|c| c.name.clone())
        .collect()
}
