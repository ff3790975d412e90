//! Experiment configuration: a versioned JSON document validated before any
//! computation starts.

use std::path::{Path, PathBuf};

use mlas::adaptive::{PolyapproxConfig, RankSchedule};
use mlas::mlas::{FnHierarchy, IndexRule};
use mlas::{BenchmarkConfig, LognormalBenchmark, ModelHierarchy};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Published JSON Schema of [`ExperimentConfig`].
pub const SCHEMA: &str = include_str!("../schema/experiment.schema.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub model: ModelConfig,
    pub study: Study,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    LognormalPde(BenchmarkConfig),
    /// `f_l(y) = c . y` at every level; a closed-form check model.
    Linear(LinearModel),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub max_level: usize,
    /// Per-level cost; `4^l` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub work: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Study {
    ProjectionError(ProjectionStudy),
    Complexity(ComplexityStudy),
    Fit(FitStudy),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// `grad f_l`
    Function,
    /// `grad f_l - grad f_{l-1}`
    Difference,
}

fn both_targets() -> Vec<Target> {
    vec![Target::Function, Target::Difference]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionStudy {
    pub levels: Vec<usize>,
    pub ranks: Vec<usize>,
    pub gradient_samples: usize,
    #[serde(default = "both_targets")]
    pub targets: Vec<Target>,
}

fn default_t() -> f64 {
    1.0
}
fn default_c_m() -> f64 {
    2.0
}
fn default_ratio() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinglePoint {
    pub level: usize,
    pub rank: usize,
    pub degree: u32,
    /// Defaults to the rank-driven rule `max(ceil(c_m r ln(r + 1)), r + 1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient_samples: Option<usize>,
    #[serde(default = "default_c_m")]
    pub c_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSpec {
    /// Finest level `L`.
    pub levels: usize,
    pub r_base: usize,
    #[serde(default = "default_ratio")]
    pub rank_ratio: f64,
    #[serde(default = "default_c_m")]
    pub c_m: f64,
    pub index_rule: IndexRule,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptiveMethod {
    /// Adaptive ranks and polynomials at one fixed level.
    Aslaspa,
    Amlaspa,
    /// Adaptive multilevel polynomials on coordinate axes, no subspaces.
    Amlpa,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveSettings {
    #[serde(default = "default_c_m")]
    pub c_m: f64,
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(default)]
    pub schedule: RankSchedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polyapprox: Option<PolyapproxConfig>,
}

impl Default for AdaptiveSettings {
    fn default() -> Self {
        Self {
            c_m: default_c_m(),
            t: default_t(),
            schedule: RankSchedule::default(),
            polyapprox: None,
        }
    }
}

impl AdaptiveSettings {
    pub fn with_budget(&self, budget: f64, identity_subspace: bool) -> mlas::AdaptiveConfig {
        let mut cfg = mlas::AdaptiveConfig::new(budget);
        cfg.c_m = self.c_m;
        cfg.t = self.t;
        cfg.schedule = self.schedule.clone();
        cfg.polyapprox = self.polyapprox.clone();
        cfg.identity_subspace = identity_subspace;
        cfg
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveSweep {
    pub budgets: Vec<f64>,
    pub methods: Vec<AdaptiveMethod>,
    /// Level used by `aslaspa`; defaults to one below the reference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub single_level: Option<usize>,
    #[serde(default)]
    pub settings: AdaptiveSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexityStudy {
    pub reference_level: usize,
    pub n_test: usize,
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(default)]
    pub single_level: Vec<SinglePoint>,
    #[serde(default)]
    pub multilevel: Vec<PlanSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptive: Option<AdaptiveSweep>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FitStudy {
    Slaspa {
        point: SinglePoint,
        #[serde(default = "default_t")]
        t: f64,
    },
    Mlaspa {
        plan: PlanSpec,
        #[serde(default = "default_t")]
        t: f64,
    },
    Amlaspa {
        work_budget: f64,
        #[serde(default)]
        settings: AdaptiveSettings,
    },
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::config(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        Self::from_json(&text)
    }

    pub fn dim(&self) -> usize {
        match &self.model {
            ModelConfig::LognormalPde(b) => b.d,
            ModelConfig::Linear(m) => m.coefficients.len(),
        }
    }

    pub fn max_level(&self) -> usize {
        match &self.model {
            ModelConfig::LognormalPde(b) => b.max_level,
            ModelConfig::Linear(m) => m.max_level,
        }
    }

    /// Semantic checks beyond the schema; errors name the offending field.
    pub fn validate(&self) -> CliResult<()> {
        let cfg_err = |path: &str, msg: String| Err(CliError::config(path, msg));
        if self.schema_version != SCHEMA_VERSION {
            return cfg_err(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            );
        }
        match &self.model {
            ModelConfig::LognormalPde(b) => {
                if let Err(e) = b.validate() {
                    return cfg_err("model.lognormal_pde", e.to_string());
                }
            }
            ModelConfig::Linear(m) => {
                if m.coefficients.is_empty() || m.coefficients.iter().any(|c| !c.is_finite()) {
                    return cfg_err("model.linear.coefficients", "need at least one finite coefficient".into());
                }
                if let Some(w) = &m.work {
                    if w.len() != m.max_level + 1 || w.iter().any(|v| !(*v > 0.0)) || w.windows(2).any(|p| p[1] < p[0]) {
                        return cfg_err(
                            "model.linear.work",
                            format!("need {} positive nondecreasing costs", m.max_level + 1),
                        );
                    }
                }
            }
        }
        let d = self.dim();
        let top = self.max_level();
        match &self.study {
            Study::ProjectionError(p) => {
                if p.levels.is_empty() || p.ranks.is_empty() || p.targets.is_empty() {
                    return cfg_err("study.projection_error", "levels, ranks and targets must be non-empty".into());
                }
                if let Some(l) = p.levels.iter().find(|&&l| l > top) {
                    return cfg_err("study.projection_error.levels", format!("level {l} exceeds max_level {top}"));
                }
                if let Some(r) = p.ranks.iter().find(|&&r| r > d) {
                    return cfg_err("study.projection_error.ranks", format!("rank {r} exceeds the dimension {d}"));
                }
                if p.gradient_samples < 2 {
                    return cfg_err("study.projection_error.gradient_samples", "need at least 2".into());
                }
            }
            Study::Complexity(c) => {
                let base = "study.complexity";
                if c.reference_level > top {
                    return cfg_err(&format!("{base}.reference_level"), format!("exceeds max_level {top}"));
                }
                if c.n_test < 2 {
                    return cfg_err(&format!("{base}.n_test"), "need at least 2 test points".into());
                }
                if !(c.t > 0.0) {
                    return cfg_err(&format!("{base}.t"), "must be positive".into());
                }
                let finest_allowed = c.reference_level.checked_sub(1);
                let too_fine = |l: usize| finest_allowed.is_none_or(|f| l > f);
                for (i, p) in c.single_level.iter().enumerate() {
                    let path = format!("{base}.single_level[{i}]");
                    if too_fine(p.level) {
                        return cfg_err(&format!("{path}.level"), "must be below the reference level".into());
                    }
                    check_single(&path, p, d)?;
                }
                for (i, p) in c.multilevel.iter().enumerate() {
                    let path = format!("{base}.multilevel[{i}]");
                    if too_fine(p.levels) {
                        return cfg_err(&format!("{path}.levels"), "must be below the reference level".into());
                    }
                    check_plan(&path, p, d)?;
                }
                if let Some(a) = &c.adaptive {
                    let path = format!("{base}.adaptive");
                    if finest_allowed.is_none() {
                        return cfg_err(&format!("{base}.reference_level"), "adaptive runs need a reference above level 0".into());
                    }
                    if a.budgets.is_empty() || a.budgets.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
                        return cfg_err(&format!("{path}.budgets"), "need positive finite budgets".into());
                    }
                    if a.methods.is_empty() {
                        return cfg_err(&format!("{path}.methods"), "need at least one method".into());
                    }
                    if let Some(l) = a.single_level {
                        if too_fine(l) {
                            return cfg_err(&format!("{path}.single_level"), "must be below the reference level".into());
                        }
                    }
                    check_adaptive(&format!("{path}.settings"), &a.settings, 1.0)?;
                }
            }
            Study::Fit(f) => match f {
                FitStudy::Slaspa { point, t } => {
                    if point.level > top {
                        return cfg_err("study.fit.slaspa.point.level", format!("exceeds max_level {top}"));
                    }
                    if !(*t > 0.0) {
                        return cfg_err("study.fit.slaspa.t", "must be positive".into());
                    }
                    check_single("study.fit.slaspa.point", point, d)?;
                }
                FitStudy::Mlaspa { plan, t } => {
                    if plan.levels > top {
                        return cfg_err("study.fit.mlaspa.plan.levels", format!("exceeds max_level {top}"));
                    }
                    if !(*t > 0.0) {
                        return cfg_err("study.fit.mlaspa.t", "must be positive".into());
                    }
                    check_plan("study.fit.mlaspa.plan", plan, d)?;
                }
                FitStudy::Amlaspa { work_budget, settings } => {
                    check_adaptive("study.fit.amlaspa.settings", settings, *work_budget)
                        .map_err(|_| CliError::config("study.fit.amlaspa", "invalid budget or settings"))?;
                }
            },
        }
        Ok(())
    }

    /// SHA-256 of the canonical config with `seed` and `output_dir` removed,
    /// first 16 hex digits.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.seed = 0;
        c.output_dir = None;
        // serde_json maps are key-sorted, so this is canonical
        let value = serde_json::to_value(&c).expect("config serializes");
        let digest = Sha256::digest(value.to_string().as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn build_model(&self) -> CliResult<Box<dyn ModelHierarchy<f64>>> {
        Ok(match &self.model {
            ModelConfig::LognormalPde(b) => Box::new(LognormalBenchmark::<f64>::new(b.clone())?),
            ModelConfig::Linear(m) => {
                let c = DVector::from_vec(m.coefficients.clone());
                let g = c.clone();
                let h = FnHierarchy::new(
                    c.len(),
                    m.max_level,
                    move |_, y: &DVector<f64>| Ok(c.dot(y)),
                    move |_, _: &DVector<f64>| Ok(g.clone()),
                );
                match &m.work {
                    Some(w) => Box::new(h.with_work(w.clone())?),
                    None => Box::new(h),
                }
            }
        })
    }
}

fn check_single(path: &str, p: &SinglePoint, d: usize) -> CliResult<()> {
    if p.rank == 0 || p.rank > d {
        return Err(CliError::config(format!("{path}.rank"), format!("must lie in 1..={d}")));
    }
    if !(p.c_m > 1.0) {
        return Err(CliError::config(format!("{path}.c_m"), "must exceed 1"));
    }
    if let Some(m) = p.gradient_samples {
        if m < p.rank {
            return Err(CliError::config(format!("{path}.gradient_samples"), "must be at least the rank"));
        }
    }
    Ok(())
}

fn check_plan(path: &str, p: &PlanSpec, d: usize) -> CliResult<()> {
    let plan = mlas::mlas::geometric_plan(p.levels, p.r_base, p.rank_ratio, p.c_m, &p.index_rule)
        .map_err(|e| CliError::config(path, e.to_string()))?;
    if plan.ranks().iter().any(|&r| r > d) {
        return Err(CliError::config(format!("{path}.r_base"), format!("ranks {:?} exceed the dimension {d}", plan.ranks())));
    }
    Ok(())
}

fn check_adaptive(path: &str, s: &AdaptiveSettings, budget: f64) -> CliResult<()> {
    s.with_budget(budget, false)
        .validate()
        .map_err(|e| CliError::config(path, e.to_string()))
}

impl SinglePoint {
    pub fn samples(&self) -> usize {
        self.gradient_samples
            .unwrap_or_else(|| mlas::mlas::sample_rule(self.c_m, self.rank).max(self.rank + 1))
    }
}

impl PlanSpec {
    pub fn build(&self) -> CliResult<mlas::MultilevelPlan> {
        Ok(mlas::mlas::geometric_plan(self.levels, self.r_base, self.rank_ratio, self.c_m, &self.index_rule)?)
    }
}
