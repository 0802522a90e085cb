//! The experiment config: one TOML file that drives every stage. Unknown
//! keys are rejected everywhere, and the whole file is validated before any
//! data is generated.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{BaselineKind, BaselineSpec};
use crate::cohort::CohortSpec;
use crate::dates::ymd;
use crate::error::{Error, Result};
use crate::features::FeatureSpec;
use crate::learners::{expand_grid, Family, GridValue, ModelSpec};
use crate::splits::SplitParams;
use crate::synthgen::PopulationConfig;
use crate::trial::{Assignment, ShadowConfig};

pub type Grid = BTreeMap<String, Vec<GridValue>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Drives the population, model randomness, tie-breaking and B2. It
    /// replaces `population.seed`.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub k: usize,
    /// Splits whose cohort or label window touches this range are flagged.
    /// Defaults to the population's moratorium.
    pub moratorium: Option<(NaiveDate, NaiveDate)>,
    /// Leave flagged splits out of the summary averages.
    pub exclude_moratorium: bool,
    /// Write train/eval feature matrices per split.
    pub save_matrices: bool,
    pub population: PopulationConfig,
    pub cohort: CohortSpec,
    pub features: FeatureSpec,
    pub splits: SplitParams,
    /// Hyperparameter grid per learner family, keyed `lr`, `dt`, `rf`. An
    /// empty table means the family's defaults.
    pub models: BTreeMap<String, Grid>,
    /// Baseline ids such as `b1`.
    pub baselines: Vec<String>,
    pub shadow: ShadowSection,
    pub rct: RctSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            k: 100,
            moratorium: None,
            exclude_moratorium: true,
            save_matrices: true,
            population: PopulationConfig::default(),
            cohort: CohortSpec::default(),
            features: FeatureSpec::default(),
            splits: SplitParams { n_splits: Some(4), max_train_as_ofs: Some(8), ..SplitParams::default() },
            models: [("lr".to_string(), Grid::new()), ("rf".to_string(), Grid::new())].into(),
            baselines: vec!["b1".into(), "b2".into(), "b3".into()],
            shadow: ShadowSection::default(),
            rct: RctSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShadowSection {
    pub freeze_dates: Vec<NaiveDate>,
    /// Learner family (default hyperparameters) or baseline id.
    pub model: String,
    pub horizon_months: u32,
}

impl Default for ShadowSection {
    fn default() -> Self {
        ShadowSection { freeze_dates: vec![ymd(2019, 1, 1)], model: "rf".into(), horizon_months: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RctSection {
    /// Enrollment window `[from, to)` on filing or contact dates.
    pub from: NaiveDate,
    pub to: NaiveDate,
    pub treatment_fraction: f64,
    pub assignment: Assignment,
    pub replications: usize,
    /// `current`, `all_filings`, a learner family or a baseline id. Ranked
    /// arms enroll from lists frozen every `list_cadence_months`.
    pub arms: Vec<String>,
    pub list_cadence_months: u32,
}

impl Default for RctSection {
    fn default() -> Self {
        RctSection {
            from: ymd(2016, 1, 1),
            to: ymd(2019, 1, 1),
            treatment_fraction: 0.5,
            assignment: Assignment::PureRandom,
            replications: 100,
            arms: vec!["current".into(), "all_filings".into()],
            list_cadence_months: 1,
        }
    }
}

/// What a ranked list comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Ranker {
    Model(ModelSpec),
    Baseline(BaselineSpec),
}

impl Ranker {
    pub fn id(&self) -> String {
        match self {
            Ranker::Model(m) => m.id(),
            Ranker::Baseline(b) => b.kind.id().to_string(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        if !path.exists() {
            return Err(Error::MissingArtifact { what: "config".into(), path: path.display().to_string() });
        }
        let cfg: ExperimentConfig = toml::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Hex SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn validate(&self) -> Result<()> {
        self.population_config().validate()?;
        self.cohort.validate()?;
        self.features.validate()?;
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.splits.moratorium.is_some() {
            return Err(Error::Config("set the moratorium window at the top level, not under [splits]".into()));
        }
        if let Some((a, b)) = self.moratorium {
            if a > b {
                return Err(Error::Config(format!("moratorium starts {a} after it ends {b}")));
            }
        }
        let spans = [self.cohort.label_span_months, self.splits.label_span_months, self.population.label_span_months];
        if spans.iter().any(|&s| s != spans[0]) {
            return Err(Error::Config(format!(
                "label spans disagree: cohort {}, splits {}, population {}",
                spans[0], spans[1], spans[2]
            )));
        }
        if self.splits.cohort_lookback_months != self.cohort.filing_lookback_months {
            return Err(Error::Config("splits.cohort_lookback_months must equal cohort.filing_lookback_months".into()));
        }
        self.learner_specs(None)?;
        self.baseline_specs()?;
        self.ranker(&self.shadow.model)?;
        for arm in &self.rct.arms {
            if arm != "current" && arm != "all_filings" {
                self.ranker(arm)?;
            }
        }
        if !(self.rct.treatment_fraction > 0.0 && self.rct.treatment_fraction < 1.0) {
            return Err(Error::Config("rct.treatment_fraction must be in (0, 1)".into()));
        }
        if self.rct.from >= self.rct.to || self.rct.list_cadence_months == 0 {
            return Err(Error::Config("rct window must be non-empty with a positive list cadence".into()));
        }
        Ok(())
    }

    /// The population config with the global seed applied.
    pub fn population_config(&self) -> PopulationConfig {
        PopulationConfig { seed: self.seed, ..self.population.clone() }
    }

    pub fn split_params(&self) -> SplitParams {
        let window = self.moratorium.or(self.population.moratorium.as_ref().map(|m| (m.start, m.end)));
        SplitParams { moratorium: window, ..self.splits.clone() }
    }

    /// Every learner spec in the grid, optionally for one family only.
    pub fn learner_specs(&self, family: Option<Family>) -> Result<Vec<ModelSpec>> {
        let mut specs = Vec::new();
        for (name, grid) in &self.models {
            let f = Family::parse(name)?;
            if family.is_none_or(|only| only == f) {
                specs.extend(expand_grid(f, grid, self.seed)?);
            }
        }
        Ok(specs)
    }

    pub fn baseline_specs(&self) -> Result<Vec<BaselineSpec>> {
        self.baselines
            .iter()
            .map(|b| {
                let kind = BaselineKind::parse(b)?;
                Ok(BaselineSpec { filing_lookback_months: self.cohort.filing_lookback_months, ..BaselineSpec::new(kind) }
                    .with_seed(self.seed))
            })
            .collect()
    }

    /// A learner family with default hyperparameters, or a baseline.
    pub fn ranker(&self, name: &str) -> Result<Ranker> {
        if let Ok(kind) = BaselineKind::parse(name) {
            let spec = BaselineSpec { filing_lookback_months: self.cohort.filing_lookback_months, ..BaselineSpec::new(kind) };
            return Ok(Ranker::Baseline(spec.with_seed(self.seed)));
        }
        let family = Family::parse(name)?;
        Ok(Ranker::Model(crate::learners::default_spec(family, self.seed)?))
    }

    pub fn shadow_config(&self) -> ShadowConfig {
        ShadowConfig {
            k: self.k,
            horizon_months: self.shadow.horizon_months,
            tie_seed: self.seed,
            cohort: self.cohort.clone(),
            features: self.features.clone(),
            split: self.split_params(),
        }
    }
}
