//! Logistic regression, CART and random forest behind one spec/fit/score
//! interface, plus grid expansion over hyperparameters.

pub mod logistic;
pub mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use logistic::LogisticModel;
use tree::{Binned, Tree};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Count(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    /// Unlimited when absent.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub max_bins: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
            max_bins: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Lr,
    Dt,
    Rf,
    /// Accepted in grids so full configurations parse; fitting is not implemented.
    Lgbm,
    Xgb,
    AdaBoost,
}

impl Family {
    pub fn parse(s: &str) -> Result<Family> {
        match s.to_ascii_lowercase().as_str() {
            "lr" | "logistic_regression" => Ok(Family::Lr),
            "dt" | "decision_tree" => Ok(Family::Dt),
            "rf" | "random_forest" => Ok(Family::Rf),
            "lgbm" | "lightgbm" => Ok(Family::Lgbm),
            "xgb" | "xgboost" => Ok(Family::Xgb),
            "adaboost" | "ada_boost" => Ok(Family::AdaBoost),
            other => Err(Error::Config(format!("unknown model family `{other}`"))),
        }
    }

    /// Grid parameters in expansion order (the last varies fastest).
    pub fn params(self) -> &'static [&'static str] {
        match self {
            Family::Lr => &["C", "penalty"],
            Family::Dt => &["max_depth", "min_samples_split", "min_samples_leaf", "max_bins"],
            Family::Rf => &[
                "n_estimators",
                "max_depth",
                "min_samples_split",
                "min_samples_leaf",
                "max_features",
                "bootstrap",
                "max_bins",
            ],
            Family::Lgbm | Family::Xgb | Family::AdaBoost => &[],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::Lr => "lr",
            Family::Dt => "dt",
            Family::Rf => "rf",
            Family::Lgbm => "lgbm",
            Family::Xgb => "xgb",
            Family::AdaBoost => "adaboost",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Lr { c: f64, penalty: Penalty },
    Dt { tree: TreeParams, seed: u64 },
    Rf { tree: TreeParams, n_estimators: usize, bootstrap: bool, seed: u64 },
}

fn depth_tag(d: Option<usize>) -> String {
    d.map_or("none".to_string(), |d| d.to_string())
}

impl ModelSpec {
    pub fn family(&self) -> Family {
        match self {
            ModelSpec::Lr { .. } => Family::Lr,
            ModelSpec::Dt { .. } => Family::Dt,
            ModelSpec::Rf { .. } => Family::Rf,
        }
    }

    /// Short, unique, filesystem-safe identifier.
    pub fn id(&self) -> String {
        match self {
            ModelSpec::Lr { c, penalty } => {
                format!("lr_c{c}_{}", if *penalty == Penalty::L1 { "l1" } else { "l2" })
            }
            ModelSpec::Dt { tree, .. } => format!(
                "dt_d{}_mss{}_msl{}",
                depth_tag(tree.max_depth),
                tree.min_samples_split,
                tree.min_samples_leaf
            ),
            ModelSpec::Rf { tree, n_estimators, bootstrap, .. } => {
                let mf = match tree.max_features {
                    MaxFeatures::All => "all".to_string(),
                    MaxFeatures::Sqrt => "sqrt".to_string(),
                    MaxFeatures::Count(k) => k.to_string(),
                };
                format!(
                    "rf_n{}_d{}_mss{}_msl{}_mf{}{}",
                    n_estimators,
                    depth_tag(tree.max_depth),
                    tree.min_samples_split,
                    tree.min_samples_leaf,
                    mf,
                    if *bootstrap { "" } else { "_nobs" }
                )
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Lr { c, .. } if !(*c > 0.0 && c.is_finite()) => {
                Err(Error::Config(format!("C must be positive, got {c}")))
            }
            ModelSpec::Rf { n_estimators: 0, .. } => Err(Error::Config("n_estimators must be >= 1".into())),
            ModelSpec::Dt { tree, .. } | ModelSpec::Rf { tree, .. }
                if tree.min_samples_split < 2 || tree.min_samples_leaf < 1 || tree.max_depth == Some(0) =>
            {
                Err(Error::Config("need min_samples_split >= 2, min_samples_leaf >= 1, max_depth >= 1".into()))
            }
            _ => Ok(()),
        }
    }
}

/// A grid value as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl fmt::Display for GridValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridValue::Bool(b) => write!(f, "{b}"),
            GridValue::Int(i) => write!(f, "{i}"),
            GridValue::Float(x) => write!(f, "{x}"),
            GridValue::Text(s) => write!(f, "{s}"),
        }
    }
}

fn bad(family: Family, param: &str, v: &GridValue) -> Error {
    Error::Config(format!("invalid value `{v}` for {family} parameter {param}"))
}

fn as_count(family: Family, param: &str, v: &GridValue) -> Result<usize> {
    match v {
        GridValue::Int(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(bad(family, param, v)),
    }
}

fn as_depth(family: Family, v: &GridValue) -> Result<Option<usize>> {
    match v {
        GridValue::Text(s) if s.eq_ignore_ascii_case("none") => Ok(None),
        _ => as_count(family, "max_depth", v).map(Some),
    }
}

fn apply(spec: &mut ModelSpec, param: &str, v: &GridValue) -> Result<()> {
    let family = spec.family();
    match spec {
        ModelSpec::Lr { c, penalty } => match param {
            "C" => {
                *c = match v {
                    GridValue::Float(x) => *x,
                    GridValue::Int(i) => *i as f64,
                    _ => return Err(bad(family, param, v)),
                }
            }
            "penalty" => {
                *penalty = match v {
                    GridValue::Text(s) if s.eq_ignore_ascii_case("l1") => Penalty::L1,
                    GridValue::Text(s) if s.eq_ignore_ascii_case("l2") => Penalty::L2,
                    _ => return Err(bad(family, param, v)),
                }
            }
            _ => unreachable!(),
        },
        ModelSpec::Dt { tree, .. } | ModelSpec::Rf { tree, .. } => match param {
            "max_depth" => tree.max_depth = as_depth(family, v)?,
            "min_samples_split" => tree.min_samples_split = as_count(family, param, v)?,
            "min_samples_leaf" => tree.min_samples_leaf = as_count(family, param, v)?,
            "max_bins" => tree.max_bins = as_count(family, param, v)?,
            "max_features" => {
                tree.max_features = match v {
                    GridValue::Text(s) if s == "sqrt" => MaxFeatures::Sqrt,
                    GridValue::Text(s) if s == "all" => MaxFeatures::All,
                    _ => MaxFeatures::Count(as_count(family, param, v)?),
                }
            }
            "n_estimators" | "bootstrap" => {
                let ModelSpec::Rf { n_estimators, bootstrap, .. } = spec else { unreachable!() };
                if param == "n_estimators" {
                    *n_estimators = as_count(family, param, v)?;
                } else {
                    *bootstrap = match v {
                        GridValue::Bool(b) => *b,
                        _ => return Err(bad(family, param, v)),
                    };
                }
            }
            _ => unreachable!(),
        },
    }
    Ok(())
}

pub fn default_spec(family: Family, seed: u64) -> Result<ModelSpec> {
    match family {
        Family::Lr => Ok(ModelSpec::Lr { c: 1.0, penalty: Penalty::L2 }),
        Family::Dt => Ok(ModelSpec::Dt { tree: TreeParams::default(), seed }),
        Family::Rf => Ok(ModelSpec::Rf {
            tree: TreeParams { max_features: MaxFeatures::Sqrt, ..TreeParams::default() },
            n_estimators: 200,
            bootstrap: true,
            seed,
        }),
        other => Err(Error::NotImplemented(format!("{other} models are not implemented"))),
    }
}

/// Cartesian product of the grid, in the family's canonical parameter order.
/// Parameters not in the grid keep their defaults.
pub fn expand_grid(family: Family, grid: &BTreeMap<String, Vec<GridValue>>, seed: u64) -> Result<Vec<ModelSpec>> {
    let base = default_spec(family, seed)?;
    let known = family.params();
    if let Some(unknown) = grid.keys().find(|k| !known.contains(&k.as_str())) {
        return Err(Error::UnknownParam { family: family.to_string(), param: unknown.clone() });
    }
    if let Some((k, _)) = grid.iter().find(|(_, v)| v.is_empty()) {
        return Err(Error::Config(format!("grid for {family} parameter {k} is empty")));
    }
    let mut specs = vec![base];
    for &param in known {
        let Some(values) = grid.get(param) else { continue };
        let mut next = Vec::with_capacity(specs.len() * values.len());
        for s in &specs {
            for v in values {
                let mut s = s.clone();
                apply(&mut s, param, v)?;
                next.push(s);
            }
        }
        specs = next;
    }
    for s in &specs {
        s.validate()?;
    }
    Ok(specs)
}

/// The hyperparameter grids from the model-selection table.
pub fn reference_grids() -> Vec<(Family, BTreeMap<String, Vec<GridValue>>)> {
    use GridValue::*;
    let g = |pairs: Vec<(&str, Vec<GridValue>)>| pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    vec![
        (
            Family::Lr,
            g(vec![
                ("C", vec![Float(0.001), Float(0.01), Float(0.1), Float(1.0)]),
                ("penalty", vec![Text("l1".into()), Text("l2".into())]),
            ]),
        ),
        (
            Family::Dt,
            g(vec![
                ("max_depth", vec![Int(1), Int(2), Int(5), Int(10), Text("none".into())]),
                ("min_samples_split", vec![Int(2), Int(10)]),
            ]),
        ),
        (
            Family::Rf,
            g(vec![
                ("n_estimators", vec![Int(1000), Int(5000), Int(10000)]),
                ("max_depth", vec![Int(5), Int(10), Int(25), Int(50)]),
                ("min_samples_split", vec![Int(10), Int(100)]),
                ("min_samples_leaf", vec![Int(10), Int(100)]),
            ]),
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Learned {
    Logistic(LogisticModel),
    Tree { tree: Tree },
    Forest { trees: Vec<Tree>, seeds: Vec<u64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub schema_hash: String,
    pub columns: Vec<String>,
    pub learned: Learned,
}

/// Row order used inside `fit`, so results do not depend on input order.
fn canonical_order(m: &FeatureMatrix) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..m.n_rows()).collect();
    let p = m.n_cols();
    idx.sort_by(|&a, &b| {
        let (ra, rb) = (&m.rows[a], &m.rows[b]);
        (ra.as_of, ra.person, ra.label)
            .cmp(&(rb.as_of, rb.person, rb.label))
            .then_with(|| {
                m.data[a * p..(a + 1) * p]
                    .iter()
                    .zip(&m.data[b * p..(b + 1) * p])
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    idx
}

pub fn fit(spec: &ModelSpec, train: &FeatureMatrix) -> Result<FittedModel> {
    spec.validate()?;
    let labels = train
        .labels()
        .ok_or_else(|| Error::Config("training matrix has unlabeled rows".into()))?;
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::DegenerateLabels);
    }
    if train.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("training features must be finite".into()));
    }
    let order = canonical_order(train);
    let m = train.select_rows(&order);
    let y: Vec<bool> = order.iter().map(|&i| labels[i]).collect();
    let (n, p) = (m.n_rows(), m.n_cols());
    let learned = match spec {
        ModelSpec::Lr { c, penalty } => Learned::Logistic(logistic::fit(&m.data, n, p, &y, *c, *penalty)),
        ModelSpec::Dt { tree: params, seed } => {
            let data = Binned::new(&m.data, n, p, params.max_bins);
            Learned::Tree { tree: tree::grow_tree(&data, &y, &vec![1; n], params, *seed) }
        }
        ModelSpec::Rf { tree: params, n_estimators, bootstrap, seed } => {
            let data = Binned::new(&m.data, n, p, params.max_bins);
            let (trees, seeds) = tree::grow_forest(&data, &y, params, *n_estimators, *bootstrap, *seed);
            Learned::Forest { trees, seeds }
        }
    };
    Ok(FittedModel {
        format_version: MODEL_FORMAT_VERSION,
        spec: spec.clone(),
        schema_hash: train.schema_hash.clone(),
        columns: train.columns.iter().map(|c| c.name.clone()).collect(),
        learned,
    })
}

impl FittedModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match &self.learned {
            Learned::Logistic(m) => m.predict(row),
            Learned::Tree { tree } => tree.predict(row),
            Learned::Forest { trees, .. } => trees.iter().map(|t| t.predict(row)).sum::<f64>() / trees.len() as f64,
        }
    }

    pub fn id(&self) -> String {
        self.spec.id()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<FittedModel> {
        if !path.exists() {
            return Err(Error::MissingArtifact { what: "model".into(), path: path.display().to_string() });
        }
        let m: FittedModel = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                m.format_version
            )));
        }
        Ok(m)
    }
}

/// Risk scores in `[0, 1]`, one per matrix row.
pub fn score(model: &FittedModel, eval: &FeatureMatrix) -> Result<Vec<f64>> {
    if model.schema_hash != eval.schema_hash {
        return Err(Error::SchemaMismatch { expected: model.schema_hash.clone(), found: eval.schema_hash.clone() });
    }
    Ok((0..eval.n_rows()).into_par_iter().map(|i| model.predict_row(eval.row(i))).collect())
}

/// Features ranked by importance, normalized to sum to one: absolute
/// standardized weight for logistic models, total Gini decrease for trees.
/// A model with no splits or all-zero weights yields all zeros.
pub fn feature_importance(model: &FittedModel) -> Vec<(String, f64)> {
    let p = model.columns.len();
    let mut raw = vec![0.0; p];
    match &model.learned {
        Learned::Logistic(m) => raw.iter_mut().zip(&m.weights).for_each(|(r, w)| *r = w.abs()),
        Learned::Tree { tree } => tree.add_importance(&mut raw),
        Learned::Forest { trees, .. } => trees.iter().for_each(|t| t.add_importance(&mut raw)),
    }
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter_mut().for_each(|r| *r /= total);
    }
    let mut ranked: Vec<(String, f64)> = model.columns.iter().cloned().zip(raw).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

#[cfg(test)]
mod tests;
