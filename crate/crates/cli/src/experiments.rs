//! Batch studies. Every CSV row carries the seed and the config hash, and
//! identical configs and seeds produce byte-identical files.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use mlas::adaptive::{amlaspa, AdaptiveOutcome};
use mlas::mlas::{FixedLevel, ReferenceSample};
use mlas::polyspace::MultiIndexSet;
use mlas::sampling::draw_gaussian;
use mlas::{mlaspa_fit, slaspa_fit, GradientSpectrum, ModelHierarchy, MlasSurrogate, SeededStream};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{
    AdaptiveMethod, ComplexityStudy, ExperimentConfig, FitStudy, ProjectionStudy, SinglePoint, Study, Target,
};
use crate::error::{CliError, CliResult};

/// Stream id of the projection-error gradient points.
const PROJECTION_STREAM: u64 = 2;
/// Stream id of the complexity test points; fits use stream 0.
const REFERENCE_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub target: Target,
    pub level: usize,
    pub rank: usize,
    pub tail_norm: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub seed: u64,
    pub config_hash: String,
}

/// `sqrt` of the eigenvalue tails of the empirical gradient covariance for
/// every requested target, level and rank. All levels share one set of
/// Gaussian points, so difference gradients are formed pointwise.
pub fn run_projection_error(
    model: &dyn ModelHierarchy<f64>,
    study: &ProjectionStudy,
    seed: u64,
    config_hash: &str,
) -> CliResult<Vec<ProjectionRow>> {
    let points = draw_gaussian::<f64>(model.dim(), SeededStream::new(seed, PROJECTION_STREAM), study.gradient_samples);
    let mut needed = BTreeSet::new();
    for &l in &study.levels {
        needed.insert(l);
        if l > 0 && study.targets.contains(&Target::Difference) {
            needed.insert(l - 1);
        }
    }
    let mut grads: BTreeMap<usize, Vec<DVector<f64>>> = BTreeMap::new();
    for &l in &needed {
        let g = points.par_iter().map(|y| model.grad(l, y)).collect::<mlas::Result<Vec<_>>>()?;
        grads.insert(l, g);
    }
    let mut rows = Vec::new();
    for &target in &study.targets {
        for &l in &study.levels {
            let g: Vec<DVector<f64>> = match target {
                Target::Function => grads[&l].clone(),
                Target::Difference if l == 0 => grads[&0].clone(),
                Target::Difference => grads[&l].iter().zip(&grads[&(l - 1)]).map(|(a, b)| a - b).collect(),
            };
            let spectrum = GradientSpectrum::from_gradients(&g)?;
            for &r in &study.ranks {
                rows.push(ProjectionRow {
                    target,
                    level: l,
                    rank: r,
                    tail_norm: spectrum.tail(r).max(0.0).sqrt(),
                    m: study.gradient_samples,
                    seed,
                    config_hash: config_hash.to_string(),
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub method: String,
    pub run: usize,
    pub finest_level: usize,
    pub setting: String,
    pub work: f64,
    pub error: f64,
    pub std_error: f64,
    pub error_estimate: Option<f64>,
    pub partial: bool,
    pub seed: u64,
    pub config_hash: String,
}

/// A (work, error) pair with the Monte Carlo standard error of the error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkErrorPoint {
    pub work: f64,
    pub error: f64,
    pub std_error: f64,
}

impl From<&ComplexityRow> for WorkErrorPoint {
    fn from(r: &ComplexityRow) -> Self {
        Self {
            work: r.work,
            error: r.error,
            std_error: r.std_error,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchedComparison {
    pub target_error: f64,
    pub target_std_error: f64,
    pub single_work: f64,
    pub multilevel_work: Option<f64>,
    pub multilevel_error: Option<f64>,
    /// `multilevel_work / single_work`.
    pub ratio: Option<f64>,
}

/// Compares the two families at matched error. Targets are the single-level
/// Pareto points (each strictly more accurate than every cheaper one). For a
/// target the cheapest multilevel point whose error is within three combined
/// standard errors of it is chosen.
pub fn matched_error_comparison(single: &[WorkErrorPoint], multi: &[WorkErrorPoint]) -> Vec<MatchedComparison> {
    let mut sorted = single.to_vec();
    sorted.sort_by(|a, b| a.work.total_cmp(&b.work).then(a.error.total_cmp(&b.error)));
    let mut best = f64::INFINITY;
    let mut out = Vec::new();
    for t in sorted {
        if t.error >= best {
            continue;
        }
        best = t.error;
        let hit = multi
            .iter()
            .filter(|m| m.error <= t.error + 3.0 * (t.std_error.powi(2) + m.std_error.powi(2)).sqrt())
            .min_by(|a, b| a.work.total_cmp(&b.work));
        out.push(MatchedComparison {
            target_error: t.error,
            target_std_error: t.std_error,
            single_work: t.work,
            multilevel_work: hit.map(|m| m.work),
            multilevel_error: hit.map(|m| m.error),
            ratio: hit.map(|m| m.work / t.work),
        });
    }
    out
}

/// One adaptive run kept for its trace.
#[derive(Clone, Debug)]
pub struct AdaptiveRun {
    pub method: AdaptiveMethod,
    pub budget: f64,
    pub outcome: AdaptiveOutcome<f64>,
}

#[derive(Clone, Debug)]
pub struct ComplexityReport {
    pub rows: Vec<ComplexityRow>,
    pub comparison: Vec<MatchedComparison>,
    pub adaptive: Vec<AdaptiveRun>,
}

impl ComplexityReport {
    pub fn partial(&self) -> bool {
        self.rows.iter().any(|r| r.partial)
    }
}

/// Caps a hierarchy below its own finest level.
struct Capped<'a> {
    inner: &'a dyn ModelHierarchy<f64>,
    max_level: usize,
}

impl ModelHierarchy<f64> for Capped<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn max_level(&self) -> usize {
        self.max_level
    }
    fn eval(&self, level: usize, y: &DVector<f64>) -> mlas::Result<f64> {
        self.check(level)?;
        self.inner.eval(level, y)
    }
    fn grad(&self, level: usize, y: &DVector<f64>) -> mlas::Result<DVector<f64>> {
        self.check(level)?;
        self.inner.grad(level, y)
    }
    fn work(&self, level: usize) -> f64 {
        self.inner.work(level)
    }
}

impl Capped<'_> {
    fn check(&self, level: usize) -> mlas::Result<()> {
        if level > self.max_level {
            return Err(mlas::Error::InvalidInput(format!("level {level} above the cap {}", self.max_level)));
        }
        Ok(())
    }
}

fn method_name(m: AdaptiveMethod) -> &'static str {
    match m {
        AdaptiveMethod::Aslaspa => "aslaspa",
        AdaptiveMethod::Amlaspa => "amlaspa",
        AdaptiveMethod::Amlpa => "amlpa",
    }
}

pub fn fit_single(model: &dyn ModelHierarchy<f64>, p: &SinglePoint, t: f64, seed: u64) -> CliResult<MlasSurrogate<f64>> {
    let xi = MultiIndexSet::total_degree(p.rank, p.degree);
    Ok(slaspa_fit(model, p.level, p.rank, p.samples(), &xi, t, SeededStream::new(seed, 0))?)
}

/// Runs every configured method against one shared reference sample at
/// `reference_level`.
pub fn run_complexity(
    model: &dyn ModelHierarchy<f64>,
    study: &ComplexityStudy,
    seed: u64,
    config_hash: &str,
) -> CliResult<ComplexityReport> {
    let reference = ReferenceSample::new(model, study.reference_level, study.n_test, SeededStream::new(seed, REFERENCE_STREAM))?;
    let fit_stream = SeededStream::new(seed, 0);
    let mut rows = Vec::new();
    let row = |method: &str, run: usize, finest: usize, setting: String, s: &MlasSurrogate<f64>, est: Option<f64>, partial: bool| -> CliResult<ComplexityRow> {
        let e = reference.l2_error(s)?;
        Ok(ComplexityRow {
            method: method.to_string(),
            run,
            finest_level: finest,
            setting,
            work: s.work_ledger.total(),
            error: e.estimate,
            std_error: e.std_error,
            error_estimate: est,
            partial,
            seed,
            config_hash: config_hash.to_string(),
        })
    };
    for (i, p) in study.single_level.iter().enumerate() {
        let s = fit_single(model, p, study.t, seed)?;
        let setting = format!("level={};rank={};degree={};M={}", p.level, p.rank, p.degree, p.samples());
        rows.push(row("slaspa", i, p.level, setting, &s, None, false)?);
    }
    for (i, p) in study.multilevel.iter().enumerate() {
        let plan = p.build()?;
        let s = mlaspa_fit(model, &plan, study.t, fit_stream)?;
        let setting = format!("levels={};ranks={:?};M={:?};sizes={:?}", p.levels, plan.ranks(), plan.gradient_samples(), plan.sizes());
        rows.push(row("mlaspa", i, p.levels, setting, &s, None, false)?);
    }
    let mut adaptive = Vec::new();
    if let Some(a) = &study.adaptive {
        let cap = study.reference_level - 1;
        let capped = Capped {
            inner: model,
            max_level: cap.min(model.max_level()),
        };
        let single = a.single_level.unwrap_or(cap);
        for &method in &a.methods {
            for (i, &budget) in a.budgets.iter().enumerate() {
                let cfg = a.settings.with_budget(budget, method == AdaptiveMethod::Amlpa);
                let (outcome, finest) = match method {
                    AdaptiveMethod::Aslaspa => (amlaspa(&FixedLevel::new(model, single), &cfg, fit_stream)?, single),
                    _ => {
                        let o = amlaspa(&capped, &cfg, fit_stream)?;
                        let f = o.surrogate.finest_level().unwrap_or(0);
                        (o, f)
                    }
                };
                let setting = format!("budget={budget}");
                let r = row(
                    method_name(method),
                    i,
                    finest,
                    setting,
                    &outcome.surrogate,
                    Some(outcome.error_estimate),
                    outcome.partial(),
                )?;
                rows.push(r);
                adaptive.push(AdaptiveRun { method, budget, outcome });
            }
        }
    }
    let pick = |m: &str| rows.iter().filter(|r| r.method == m).map(WorkErrorPoint::from).collect::<Vec<_>>();
    let comparison = matched_error_comparison(&pick("slaspa"), &pick("mlaspa"));
    Ok(ComplexityReport {
        rows,
        comparison,
        adaptive,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: usize,
    pub rank: usize,
    pub basis_size: usize,
    pub gradient_samples: usize,
    pub n_samples: usize,
    pub gram_deviation: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub method: String,
    pub seed: u64,
    pub config_hash: String,
    pub total_work: f64,
    pub levels: Vec<LevelSummary>,
    pub error_estimate: Option<f64>,
    pub partial: bool,
}

pub struct FitReport {
    pub surrogate: MlasSurrogate<f64>,
    pub summary: FitSummary,
    pub trace: Option<String>,
}

pub fn run_fit(model: &dyn ModelHierarchy<f64>, study: &FitStudy, seed: u64, config_hash: &str) -> CliResult<FitReport> {
    let stream = SeededStream::new(seed, 0);
    let (method, surrogate, error_estimate, partial, trace) = match study {
        FitStudy::Slaspa { point, t } => ("slaspa", fit_single(model, point, *t, seed)?, None, false, None),
        FitStudy::Mlaspa { plan, t } => ("mlaspa", mlaspa_fit(model, &plan.build()?, *t, stream)?, None, false, None),
        FitStudy::Amlaspa { work_budget, settings } => {
            let out = amlaspa(model, &settings.with_budget(*work_budget, false), stream)?;
            let trace = out.trace_jsonl()?;
            let partial = out.partial();
            ("amlaspa", out.surrogate, Some(out.error_estimate), partial, Some(trace))
        }
    };
    let levels = surrogate
        .levels
        .iter()
        .map(|l| LevelSummary {
            level: l.level,
            rank: l.rank(),
            basis_size: l.index_set.len(),
            gradient_samples: l.diagnostics.gradient_samples,
            n_samples: l.diagnostics.n_samples,
            gram_deviation: l.diagnostics.gram_deviation,
            residual: l.diagnostics.residual,
        })
        .collect();
    let summary = FitSummary {
        method: method.to_string(),
        seed,
        config_hash: config_hash.to_string(),
        total_work: surrogate.work_ledger.total(),
        levels,
        error_estimate,
        partial,
    };
    Ok(FitReport { surrogate, summary, trace })
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R], header: &[&str]) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    Ok(())
}

pub const PROJECTION_HEADER: [&str; 7] = ["target", "level", "rank", "tail_norm", "M", "seed", "config_hash"];
pub const COMPLEXITY_HEADER: [&str; 11] = [
    "method",
    "run",
    "finest_level",
    "setting",
    "work",
    "error",
    "std_error",
    "error_estimate",
    "partial",
    "seed",
    "config_hash",
];

/// Files written by [`run_study`].
#[derive(Clone, Debug, Default)]
pub struct StudyOutput {
    pub files: Vec<PathBuf>,
    pub partial: bool,
}

/// Runs the configured study and writes its artifacts into `out`.
pub fn run_study(cfg: &ExperimentConfig, seed: u64, out: &Path) -> CliResult<StudyOutput> {
    fs::create_dir_all(out).map_err(|e| CliError::io(format!("creating {}", out.display()), e))?;
    let model = cfg.build_model()?;
    let hash = cfg.hash();
    let mut result = StudyOutput::default();
    match &cfg.study {
        Study::ProjectionError(p) => {
            let rows = run_projection_error(&*model, p, seed, &hash)?;
            let path = out.join("projection_error.csv");
            write_csv(&path, &rows, &PROJECTION_HEADER)?;
            result.files.push(path);
        }
        Study::Complexity(c) => {
            let report = run_complexity(&*model, c, seed, &hash)?;
            let path = out.join("complexity.csv");
            write_csv(&path, &report.rows, &COMPLEXITY_HEADER)?;
            result.files.push(path);
            let path = out.join("comparison.json");
            write_file(&path, &(serde_json::to_string_pretty(&report.comparison).expect("serializable") + "\n"))?;
            result.files.push(path);
            for (i, run) in report.adaptive.iter().enumerate() {
                let path = out.join(format!("trace_{}_{i}.jsonl", method_name(run.method)));
                write_file(&path, &run.outcome.trace_jsonl()?)?;
                result.files.push(path);
            }
            result.partial = report.partial();
        }
        Study::Fit(f) => {
            let report = run_fit(&*model, f, seed, &hash)?;
            let path = out.join("surrogate.json");
            write_file(&path, &report.surrogate.to_json()?)?;
            result.files.push(path);
            let path = out.join("fit_summary.json");
            write_file(&path, &(serde_json::to_string_pretty(&report.summary).expect("serializable") + "\n"))?;
            result.files.push(path);
            if let Some(trace) = &report.trace {
                let path = out.join("trace.jsonl");
                write_file(&path, trace)?;
                result.files.push(path);
            }
            result.partial = report.summary.partial;
        }
    }
    Ok(result)
}
