//! Adaptive multilevel construction over `(rank block k, level l)` cells,
//! driven by gain/work profits, with adaptive polynomial fits per level.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asm::{GradientSpectrum, Subspace};
use crate::error::{Error, Result};
use crate::lstsq::required_samples;
use crate::mlas::{
    delta_eval, delta_grad, delta_work, fit_in_subspace, FitDiagnostics, LevelSurrogate, MlasSurrogate,
    ModelHierarchy, WorkLedger, GRAD_TAG,
};
use crate::polyspace::{MultiIndex, MultiIndexSet};
use crate::sampling::{gaussian_point, SeededStream};
use crate::scalar::Real;

const POLY_TAG: u64 = 4;

/// Cell `(k, l)`: rank block `k` of the difference at level `l`. Ordered by
/// `(l, k)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellIndex {
    pub k: usize,
    pub l: usize,
}

impl CellIndex {
    pub fn new(k: usize, l: usize) -> Self {
        Self { k, l }
    }
}

impl Ord for CellIndex {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.l, self.k).cmp(&(other.l, other.k))
    }
}

impl PartialOrd for CellIndex {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Rank `r(k)` reached after block `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RankSchedule {
    /// `r(k) = ceil(base ratio^k)`.
    Geometric { base: usize, ratio: f64 },
    /// `r(k) = base + step k`.
    Linear { base: usize, step: usize },
}

impl Default for RankSchedule {
    fn default() -> Self {
        RankSchedule::Geometric { base: 1, ratio: 2.0 }
    }
}

impl RankSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            RankSchedule::Geometric { base, ratio } => base >= 1 && ratio > 1.0 && ratio.is_finite(),
            RankSchedule::Linear { base, step } => base >= 1 && step >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput("rank schedule must start at 1 or more and grow strictly".into()))
        }
    }

    pub fn rank(&self, k: usize) -> usize {
        match *self {
            RankSchedule::Geometric { base, ratio } => {
                // strictly increasing even when rounding would stall
                let mut r = base;
                for _ in 0..k {
                    r = ((r as f64 * ratio - 1e-9).ceil() as usize).max(r + 1);
                }
                r
            }
            RankSchedule::Linear { base, step } => base + step * k,
        }
    }

    /// `r(k - 1)`, with `r(-1) = 0`.
    pub fn previous(&self, k: usize) -> usize {
        if k == 0 {
            0
        } else {
            self.rank(k - 1)
        }
    }
}

/// Neighbours of `cell` that may join `set`: `(k + 1, l)`, plus
/// `(0, l_max + 1)` when `cell = (0, l_max)`. Candidates already in `set`
/// or with a missing predecessor are dropped.
pub fn admissible_neighbors(set: &BTreeSet<CellIndex>, cell: CellIndex) -> Result<Vec<CellIndex>> {
    if !set.contains(&cell) {
        return Err(Error::UnknownCell(cell.k, cell.l));
    }
    let l_max = set.iter().filter(|c| c.k == 0).map(|c| c.l).max().unwrap_or(0);
    let mut out = vec![CellIndex::new(cell.k + 1, cell.l)];
    if cell.k == 0 && cell.l == l_max {
        out.push(CellIndex::new(0, l_max + 1));
    }
    out.retain(|c| {
        !set.contains(c)
            && (c.k == 0 || set.contains(&CellIndex::new(c.k - 1, c.l)))
            && (c.l == 0 || set.contains(&CellIndex::new(c.k, c.l - 1)))
    });
    Ok(out)
}

pub fn is_downward_closed_cells(set: &BTreeSet<CellIndex>) -> bool {
    set.iter().all(|c| {
        (c.k == 0 || set.contains(&CellIndex::new(c.k - 1, c.l))) && (c.l == 0 || set.contains(&CellIndex::new(c.k, c.l - 1)))
    })
}

fn default_bulk() -> f64 {
    0.5
}
fn default_max_evals() -> usize {
    1_000_000
}
fn default_max_iterations() -> usize {
    64
}

/// Settings of the adaptive polynomial fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyapproxConfig {
    /// Confidence exponent of the sample-size rule.
    pub t: f64,
    /// Evaluation cap; the first fit always runs.
    #[serde(default = "default_max_evals")]
    pub max_evals: usize,
    /// Margin indices with `|c| >= bulk * max |c|` are added together.
    #[serde(default = "default_bulk")]
    pub bulk: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

impl Default for PolyapproxConfig {
    fn default() -> Self {
        Self {
            t: 1.0,
            max_evals: default_max_evals(),
            bulk: default_bulk(),
            max_iterations: default_max_iterations(),
        }
    }
}

/// Result of [`polyapprox`].
#[derive(Clone, Debug, PartialEq)]
pub struct PolyResult<T: Real> {
    pub index_set: MultiIndexSet,
    pub coefficients: Vec<T>,
    /// Function evaluations spent by this call.
    pub evaluations: usize,
    /// Norm of the reduced-margin coefficients.
    pub error_estimate: f64,
    pub converged: bool,
    pub diagnostics: FitDiagnostics,
}

/// Grows a downward-closed Hermite space on the active variables of `u`
/// until the estimated error is below `tol`.
///
/// Each round fits on the current set together with its reduced margin using
/// fresh optimal samples (`stream.child(round)`), estimates the error from the
/// margin coefficients, and adds the margin indices whose
/// coefficients are within `bulk` of the largest one.
pub fn polyapprox<T, F>(
    value: F,
    u: &Subspace<T>,
    tol: f64,
    warm_start: Option<&MultiIndexSet>,
    cfg: &PolyapproxConfig,
    stream: SeededStream,
) -> Result<PolyResult<T>>
where
    T: Real,
    F: Fn(&DVector<T>) -> Result<T> + Sync,
{
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let r = u.rank();
    let mut xi = match warm_start {
        Some(s) if s.dim() > r => {
            return Err(Error::InvalidInput("warm start uses more variables than the subspace".into()))
        }
        Some(s) if !s.is_empty() => s.with_dim(r)?,
        _ => MultiIndexSet::constant(r),
    };
    let w = u.complement();
    let mut evaluations = 0;
    let mut best: Option<PolyResult<T>> = None;
    for round in 0..cfg.max_iterations.max(1) {
        let margin = xi.reduced_margin();
        let enlarged = xi.extended(margin.iter().cloned())?;
        let n = required_samples(enlarged.len(), cfg.t);
        if best.is_some() && evaluations + n.max(enlarged.len()) > cfg.max_evals {
            break;
        }
        let out = fit_in_subspace(u, &w, &enlarged, n, stream.child(round as u64), &value)?;
        evaluations += out.evaluations;
        let coef = &out.fit.coefficients;
        let margin_coefs: Vec<f64> = margin
            .iter()
            .map(|nu| coef[enlarged.position(nu).expect("margin index in enlarged set")].as_f64())
            .collect();
        // The residual also carries the variation off the subspace, which
        // the eigenvalue tail already accounts for.
        let error = margin_coefs.iter().map(|c| c * c).sum::<f64>().sqrt();
        let restricted: Vec<T> = xi
            .iter()
            .map(|nu| coef[enlarged.position(nu).expect("set index in enlarged set")])
            .collect();
        let diagnostics = FitDiagnostics {
            gram_deviation: out.fit.gram_deviation.as_f64(),
            n_samples: out.fit.n_samples,
            residual: out.fit.residual.as_f64(),
            gradient_samples: 0,
        };
        let converged = error <= tol;
        best = Some(PolyResult {
            index_set: xi.clone(),
            coefficients: restricted,
            evaluations,
            error_estimate: error,
            converged,
            diagnostics,
        });
        if converged || margin.is_empty() {
            break;
        }
        let top = margin_coefs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let batch: Vec<MultiIndex> = margin
            .iter()
            .zip(&margin_coefs)
            .filter(|(_, c)| top == 0.0 || c.abs() >= cfg.bulk * top)
            .map(|(nu, _)| nu.clone())
            .collect();
        xi = xi.extended(batch)?;
    }
    let mut res = best.expect("at least one fit is performed");
    res.evaluations = evaluations;
    Ok(res)
}

fn default_c_m() -> f64 {
    2.0
}
fn default_t() -> f64 {
    1.0
}
fn default_tol_floor() -> f64 {
    1e-12
}

/// Settings of [`amlaspa`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveConfig {
    /// Modeled work after which no further cell is selected.
    pub work_budget: f64,
    /// Gradient samples `M = ceil(c_m r ln(r + 1))` for rank `r`.
    #[serde(default = "default_c_m")]
    pub c_m: f64,
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(default)]
    pub schedule: RankSchedule,
    #[serde(default)]
    pub polyapprox: Option<PolyapproxConfig>,
    /// Use the leading coordinate axes instead of estimated subspaces.
    #[serde(default)]
    pub identity_subspace: bool,
    #[serde(default = "default_tol_floor")]
    pub tol_floor: f64,
}

impl AdaptiveConfig {
    pub fn new(work_budget: f64) -> Self {
        Self {
            work_budget,
            c_m: default_c_m(),
            t: default_t(),
            schedule: RankSchedule::default(),
            polyapprox: None,
            identity_subspace: false,
            tol_floor: default_tol_floor(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.work_budget > 0.0) {
            return Err(Error::InvalidInput("work budget must be positive".into()));
        }
        if !(self.c_m > 1.0) || !(self.t > 0.0) || !(self.tol_floor > 0.0) {
            return Err(Error::InvalidInput("c_m must exceed 1; t and tol_floor must be positive".into()));
        }
        self.schedule.validate()
    }

    fn poly(&self) -> PolyapproxConfig {
        self.polyapprox.clone().unwrap_or(PolyapproxConfig {
            t: self.t,
            ..PolyapproxConfig::default()
        })
    }

    pub fn gradient_samples(&self, r: usize) -> usize {
        ((self.c_m * r as f64 * (r as f64 + 1.0).ln()).ceil() as usize).max(1)
    }
}

/// Bookkeeping for one explored cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub cell: CellIndex,
    pub rank: usize,
    /// `sqrt` of the eigenvalue mass in this block; refreshed when the
    /// level's sample pool grows.
    pub gain: f64,
    pub work: f64,
    pub svd_work: f64,
    pub poly_work: f64,
    pub new_gradients: usize,
    pub poly_evaluations: usize,
}

impl CellRecord {
    pub fn profit(&self) -> f64 {
        self.gain / self.work.max(f64::MIN_POSITIVE)
    }
}

/// Polynomial part of a level.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelPoly<T: Real> {
    pub subspace: Subspace<T>,
    pub index_set: MultiIndexSet,
    pub coefficients: Vec<T>,
    pub error_estimate: f64,
    pub tolerance: f64,
    pub converged: bool,
    pub diagnostics: FitDiagnostics,
}

/// Everything known about one level.
#[derive(Clone, Debug)]
pub struct LevelState<T: Real> {
    pub gradients: Vec<DVector<T>>,
    pub spectrum: Option<GradientSpectrum<T>>,
    pub k_max: usize,
    /// `sqrt` of the eigenvalue tail beyond `r(k_max)`.
    pub svd_error: f64,
    pub poly: Option<LevelPoly<T>>,
}

impl<T: Real> LevelState<T> {
    fn empty() -> Self {
        Self {
            gradients: Vec::new(),
            spectrum: None,
            k_max: 0,
            svd_error: f64::INFINITY,
            poly: None,
        }
    }
}

/// State of an adaptive run.
#[derive(Clone, Debug)]
pub struct AdaptiveState<T: Real> {
    pub cells: BTreeMap<CellIndex, CellRecord>,
    pub levels: BTreeMap<usize, LevelState<T>>,
    pub ledger: WorkLedger,
}

impl<T: Real> Default for AdaptiveState<T> {
    fn default() -> Self {
        Self {
            cells: BTreeMap::new(),
            levels: BTreeMap::new(),
            ledger: WorkLedger::default(),
        }
    }
}

impl<T: Real> AdaptiveState<T> {
    pub fn index_set(&self) -> BTreeSet<CellIndex> {
        self.cells.keys().copied().collect()
    }

    pub fn total_work(&self) -> f64 {
        self.ledger.total()
    }

    fn l_max(&self) -> usize {
        self.levels.keys().copied().max().unwrap_or(0)
    }

    /// Sum over levels of subspace and polynomial error estimates, plus the
    /// gradient norm of the finest difference when finer levels remain.
    pub fn error_estimate(&self, max_level: usize) -> f64 {
        let mut total = 0.0;
        for lvl in self.levels.values() {
            total += lvl.svd_error;
            total += lvl.poly.as_ref().map_or(f64::INFINITY, |p| p.error_estimate);
        }
        let l_max = self.l_max();
        if l_max < max_level {
            if let Some(s) = self.levels.get(&l_max).and_then(|s| s.spectrum.as_ref()) {
                total += s.trace.as_f64().max(0.0).sqrt();
            }
        }
        total
    }

    pub fn surrogate(&self, dim: usize) -> Result<MlasSurrogate<T>> {
        let mut s = MlasSurrogate::empty(dim);
        for (&l, lvl) in &self.levels {
            if let Some(p) = &lvl.poly {
                let mut level = LevelSurrogate::new(l, p.subspace.clone(), p.index_set.clone(), p.coefficients.clone())?;
                level.diagnostics = FitDiagnostics {
                    gradient_samples: lvl.gradients.len(),
                    ..p.diagnostics.clone()
                };
                s.push(level)?;
            }
        }
        s.work_ledger = self.ledger.clone();
        Ok(s)
    }
}

/// Spectrum whose "eigenvectors" are the coordinate axes and whose values
/// are the covariance diagonal.
fn axis_spectrum<T: Real>(grads: &[DVector<T>]) -> GradientSpectrum<T> {
    let d = grads[0].len();
    let m = T::from_usize_lossy(grads.len());
    let mut diag = vec![T::zero(); d];
    for g in grads {
        for (acc, v) in diag.iter_mut().zip(g.iter()) {
            *acc += *v * *v;
        }
    }
    for v in diag.iter_mut() {
        *v /= m;
    }
    let trace = diag.iter().fold(T::zero(), |a, &v| a + v);
    GradientSpectrum {
        eigvecs: DMatrix::identity(d, d),
        eigvals: diag,
        trace,
        samples: grads.len(),
    }
}

/// Explores `cell`: tops up the gradient pool of level `l`, refreshes the
/// level's spectrum and gains, and refits the level polynomial on the
/// leading `r(k)` directions. Returns the new cell's record.
pub fn explore_cell<T, H>(
    state: &mut AdaptiveState<T>,
    cell: CellIndex,
    hier: &H,
    cfg: &AdaptiveConfig,
    stream: SeededStream,
) -> Result<CellRecord>
where
    T: Real,
    H: ModelHierarchy<T> + ?Sized,
{
    let d = hier.dim();
    let l = cell.l;
    if l > hier.max_level() {
        return Err(Error::InvalidInput(format!("level {l} exceeds the hierarchy")));
    }
    if state.cells.contains_key(&cell) {
        return Err(Error::InvalidInput(format!("cell ({}, {l}) already explored", cell.k)));
    }
    let r_prev = cfg.schedule.previous(cell.k);
    if r_prev >= d {
        return Err(Error::InvalidInput("rank schedule already covers every direction".into()));
    }
    let rank = cfg.schedule.rank(cell.k).min(d);
    let unit = delta_work(hier, l);
    let level_stream = stream.child(l as u64);

    let lvl = state.levels.entry(l).or_insert_with(LevelState::empty);
    let target = cfg.gradient_samples(rank);
    let have = lvl.gradients.len();
    let new_gradients = target.saturating_sub(have);
    if new_gradients > 0 {
        let grad_stream = level_stream.child(GRAD_TAG);
        let fresh: Vec<DVector<T>> = (have..target)
            .into_par_iter()
            .map(|i| delta_grad(hier, l, &gaussian_point::<T>(d, grad_stream.child(i as u64))))
            .collect::<Result<_>>()?;
        lvl.gradients.extend(fresh);
        lvl.spectrum = Some(if cfg.identity_subspace {
            axis_spectrum(&lvl.gradients)
        } else {
            GradientSpectrum::from_gradients(&lvl.gradients)?
        });
    }
    let spectrum = lvl.spectrum.as_ref().expect("spectrum exists once gradients do");
    lvl.k_max = lvl.k_max.max(cell.k);
    let covered = cfg.schedule.rank(lvl.k_max).min(d);
    lvl.svd_error = spectrum.tail(covered).as_f64().max(0.0).sqrt();
    let svd_work = new_gradients as f64 * unit;
    state.ledger.record_gradients(l, new_gradients, unit);

    // refresh gains of every explored block at this level
    let block_gain = |k: usize| {
        let lo = cfg.schedule.previous(k).min(d);
        let hi = cfg.schedule.rank(k).min(d);
        spectrum.block_energy(lo, hi).as_f64().max(0.0).sqrt()
    };
    for (c, rec) in state.cells.iter_mut() {
        if c.l == l {
            rec.gain = block_gain(c.k);
        }
    }
    let gain = block_gain(cell.k);

    let u = spectrum.subspace(covered);
    let tol = lvl.svd_error.max(cfg.tol_floor);
    let mut poly_cfg = cfg.poly();
    let remaining = (cfg.work_budget - state.ledger.total()).max(0.0);
    poly_cfg.max_evals = poly_cfg.max_evals.min((remaining / unit).floor() as usize);
    let warm = lvl.poly.as_ref().map(|p| p.index_set.clone());
    let poly = polyapprox(
        |y| delta_eval(hier, l, y),
        &u,
        tol,
        warm.as_ref(),
        &poly_cfg,
        level_stream.child(POLY_TAG).child(cell.k as u64),
    )
    .map_err(|e| match e {
        Error::Conditioning { deviation, .. } => Error::Conditioning {
            deviation,
            level: Some(l),
        },
        other => other,
    })?;
    let poly_work = poly.evaluations as f64 * unit;
    state.ledger.record_functions(l, poly.evaluations, unit);
    lvl.poly = Some(LevelPoly {
        subspace: u,
        index_set: poly.index_set,
        coefficients: poly.coefficients,
        error_estimate: poly.error_estimate,
        tolerance: tol,
        converged: poly.converged,
        diagnostics: poly.diagnostics,
    });
    let record = CellRecord {
        cell,
        rank,
        gain,
        work: svd_work + poly_work,
        svd_work,
        poly_work,
        new_gradients,
        poly_evaluations: poly.evaluations,
    };
    state.cells.insert(cell, record.clone());
    Ok(record)
}

/// One line of the exploration trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    /// `None` for the initial cell.
    pub selected: Option<CellIndex>,
    pub profit: Option<f64>,
    pub added: Vec<CellRecord>,
    pub total_work: f64,
    pub error_estimate: f64,
    pub levels: usize,
}

/// Result of [`amlaspa`].
#[derive(Clone, Debug)]
pub struct AdaptiveOutcome<T: Real> {
    pub surrogate: MlasSurrogate<T>,
    pub trace: Vec<TraceRecord>,
    pub state: AdaptiveState<T>,
    pub error_estimate: f64,
}

impl<T: Real> AdaptiveOutcome<T> {
    /// The trace as JSON lines.
    pub fn trace_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for rec in &self.trace {
            out.push_str(&serde_json::to_string(rec)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// `true` when some level stopped at its evaluation cap.
    pub fn partial(&self) -> bool {
        self.state
            .levels
            .values()
            .any(|l| l.poly.as_ref().is_some_and(|p| !p.converged))
    }
}

/// Adaptive multilevel active-subspace approximation.
///
/// Starts from `I = {(0, 0)}`; while the modeled work is below the budget,
/// selects the explored cell with the largest gain/work ratio among those
/// with admissible neighbours (ties go to the smallest `(l, k)`) and
/// explores all of its neighbours.
pub fn amlaspa<T, H>(hier: &H, cfg: &AdaptiveConfig, stream: SeededStream) -> Result<AdaptiveOutcome<T>>
where
    T: Real,
    H: ModelHierarchy<T> + ?Sized,
{
    cfg.validate()?;
    let d = hier.dim();
    let max_level = hier.max_level();
    let mut state = AdaptiveState::default();
    let first = explore_cell(&mut state, CellIndex::new(0, 0), hier, cfg, stream)?;
    let mut trace = vec![TraceRecord {
        iteration: 0,
        selected: None,
        profit: None,
        added: vec![first],
        total_work: state.total_work(),
        error_estimate: state.error_estimate(max_level),
        levels: state.levels.len(),
    }];
    let feasible = |c: &CellIndex| c.l <= max_level && cfg.schedule.previous(c.k) < d;
    let mut iteration = 0;
    while state.total_work() < cfg.work_budget {
        let set = state.index_set();
        let mut best: Option<(f64, CellIndex, Vec<CellIndex>)> = None;
        for (&cell, rec) in &state.cells {
            let nbrs: Vec<CellIndex> = admissible_neighbors(&set, cell)?.into_iter().filter(feasible).collect();
            if nbrs.is_empty() {
                continue;
            }
            let p = rec.profit();
            // cells iterate in (l, k) order, so strict improvement keeps ties on the smallest
            if best.as_ref().is_none_or(|(bp, _, _)| p > *bp) {
                best = Some((p, cell, nbrs));
            }
        }
        let Some((profit, cell, nbrs)) = best else { break };
        iteration += 1;
        let mut added = Vec::with_capacity(nbrs.len());
        for n in nbrs {
            added.push(explore_cell(&mut state, n, hier, cfg, stream)?);
        }
        trace.push(TraceRecord {
            iteration,
            selected: Some(cell),
            profit: Some(profit),
            added,
            total_work: state.total_work(),
            error_estimate: state.error_estimate(max_level),
            levels: state.levels.len(),
        });
    }
    let surrogate = state.surrogate(d)?;
    let error_estimate = state.error_estimate(max_level);
    Ok(AdaptiveOutcome {
        surrogate,
        trace,
        state,
        error_estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlas::{FixedLevel, FnHierarchy};
    use crate::polyspace::hermite;
    use crate::sampling::draw_gaussian;

    fn cells(v: &[(usize, usize)]) -> BTreeSet<CellIndex> {
        v.iter().map(|&(k, l)| CellIndex::new(k, l)).collect()
    }

    #[test]
    fn default_schedule_doubles() {
        let s = RankSchedule::default();
        assert_eq!(s.rank(0), 1);
        assert_eq!(s.rank(3), 8);
        assert_eq!(s.previous(0), 0);
        // blocks tile 1..=r(k_max)
        for k_max in 0..=6 {
            let mut covered = vec![];
            for k in 0..=k_max {
                covered.extend(s.previous(k) + 1..=s.rank(k));
            }
            assert_eq!(covered, (1..=s.rank(k_max)).collect::<Vec<_>>());
        }
        let lin = RankSchedule::Linear { base: 2, step: 3 };
        assert_eq!((lin.rank(0), lin.rank(2)), (2, 8));
        let slow = RankSchedule::Geometric { base: 1, ratio: 1.2 };
        assert!((0..10).all(|k| slow.rank(k + 1) > slow.rank(k)));
        assert!(RankSchedule::Linear { base: 0, step: 1 }.validate().is_err());
    }

    #[test]
    fn admissible_neighbor_examples() {
        let one = cells(&[(0, 0)]);
        assert_eq!(admissible_neighbors(&one, CellIndex::new(0, 0)).unwrap(), vec![CellIndex::new(1, 0), CellIndex::new(0, 1)]);
        let three = cells(&[(0, 0), (1, 0), (0, 1)]);
        assert_eq!(admissible_neighbors(&three, CellIndex::new(1, 0)).unwrap(), vec![CellIndex::new(2, 0)]);
        assert_eq!(admissible_neighbors(&three, CellIndex::new(0, 1)).unwrap(), vec![CellIndex::new(1, 1), CellIndex::new(0, 2)]);
        assert_eq!(admissible_neighbors(&three, CellIndex::new(0, 0)).unwrap(), vec![]);
        assert!(matches!(admissible_neighbors(&three, CellIndex::new(2, 2)), Err(Error::UnknownCell(2, 2))));
        // (2, 1) would need (2, 0)
        let s = cells(&[(0, 0), (1, 0), (0, 1), (1, 1)]);
        assert_eq!(admissible_neighbors(&s, CellIndex::new(1, 1)).unwrap(), vec![]);
    }

    #[test]
    fn cell_order_is_level_first() {
        assert!(CellIndex::new(5, 0) < CellIndex::new(0, 1));
        assert!(CellIndex::new(0, 1) < CellIndex::new(1, 1));
    }

    fn one_dim(r: usize) -> Subspace<f64> {
        Subspace::identity(r, r)
    }

    #[test]
    fn polyapprox_constant() {
        let cfg = PolyapproxConfig::default();
        let res = polyapprox(|_| Ok(3.5), &one_dim(1), 1e-6, None, &cfg, SeededStream::new(1, 0)).unwrap();
        assert_eq!(res.index_set, MultiIndexSet::constant(1));
        assert!((res.coefficients[0] - 3.5).abs() < 1e-12);
        assert!(res.error_estimate < 1e-12);
        assert!(res.converged);
    }

    #[test]
    fn polyapprox_finds_second_hermite_polynomial() {
        let cfg = PolyapproxConfig::default();
        let res = polyapprox(|y| Ok(hermite(2, y[0])), &one_dim(1), 1e-8, None, &cfg, SeededStream::new(2, 0)).unwrap();
        let two = MultiIndex::from_dense(&[2]);
        let pos = res.index_set.position(&two).expect("degree two selected");
        assert!((res.coefficients[pos] - 1.0).abs() < 1e-8);
        for (i, c) in res.coefficients.iter().enumerate() {
            if i != pos {
                assert!(c.abs() <= 1e-8);
            }
        }
        assert!(res.converged);
    }

    #[test]
    fn warm_start_saves_work() {
        let f = |y: &DVector<f64>| Ok(1.0 + y[0] * y[1] - 0.5 * hermite(2, y[1]));
        let cfg = PolyapproxConfig::default();
        let u = one_dim(2);
        let cold = polyapprox(f, &u, 1e-8, None, &cfg, SeededStream::new(3, 0)).unwrap();
        let warm = polyapprox(f, &u, 1e-8, Some(&cold.index_set), &cfg, SeededStream::new(3, 0)).unwrap();
        assert_eq!(warm.index_set, cold.index_set);
        assert!(warm.evaluations < cold.evaluations);
    }

    #[test]
    fn polyapprox_cap_gives_partial_result() {
        let cfg = PolyapproxConfig {
            max_evals: 10,
            ..Default::default()
        };
        let res = polyapprox(|y| Ok(y[0].sin()), &one_dim(1), 1e-10, None, &cfg, SeededStream::new(4, 0)).unwrap();
        assert!(!res.converged);
        assert!(res.error_estimate > 1e-10);
    }

    fn linear_hierarchy(d: usize, levels: usize) -> impl ModelHierarchy<f64> {
        let c = DVector::from_fn(d, |i, _| 2.0 / (1.0 + i as f64).powi(2));
        let c2 = c.clone();
        FnHierarchy::new(d, levels, move |_, y: &DVector<f64>| Ok(c.dot(y)), move |_, _: &DVector<f64>| Ok(c2.clone()))
    }

    #[test]
    fn explore_cell_gains_for_linear_model() {
        let h = linear_hierarchy(6, 2);
        let cfg = AdaptiveConfig::new(1e9);
        let mut st = AdaptiveState::<f64>::default();
        let s = SeededStream::new(1, 0);
        let c00 = explore_cell(&mut st, CellIndex::new(0, 0), &h, &cfg, s).unwrap();
        let norm = DVector::from_fn(6, |i, _| 2.0 / (1.0 + i as f64).powi(2)).norm();
        assert!((c00.gain - norm).abs() < 1e-12);
        let c10 = explore_cell(&mut st, CellIndex::new(1, 0), &h, &cfg, s).unwrap();
        assert!(c10.gain < 1e-6);
        let c01 = explore_cell(&mut st, CellIndex::new(0, 1), &h, &cfg, s).unwrap();
        assert_eq!(c01.gain, 0.0);
        let c20 = explore_cell(&mut st, CellIndex::new(2, 0), &h, &cfg, s).unwrap();
        assert!(c20.gain < 1e-6);
        assert!((st.total_work() - st.cells.values().map(|c| c.work).sum::<f64>()).abs() < 1e-9);
    }

    #[test]
    fn gains_and_tail_reproduce_the_trace() {
        let d = 6;
        let h = FnHierarchy::new(
            d,
            1,
            |l, y: &DVector<f64>| Ok((1.0 + 0.1 * l as f64) * (y[0] * y[1]).sin() + y.iter().map(|v| v * v).sum::<f64>() * 0.05),
            |l, y: &DVector<f64>| {
                let s = 1.0 + 0.1 * l as f64;
                let c = (y[0] * y[1]).cos() * s;
                let mut g = y * 0.1;
                g[0] += c * y[1];
                g[1] += c * y[0];
                Ok(g)
            },
        );
        let mut cfg = AdaptiveConfig::new(1e9);
        cfg.polyapprox = Some(PolyapproxConfig {
            max_evals: 2000,
            ..Default::default()
        });
        let mut st = AdaptiveState::<f64>::default();
        let s = SeededStream::new(2, 0);
        for cell in [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1)] {
            explore_cell(&mut st, CellIndex::new(cell.0, cell.1), &h, &cfg, s).unwrap();
            for (&l, lvl) in &st.levels {
                let gains: f64 = st.cells.values().filter(|c| c.cell.l == l).map(|c| c.gain * c.gain).sum();
                let trace = lvl.spectrum.as_ref().unwrap().trace;
                assert!((gains + lvl.svd_error.powi(2) - trace).abs() < 1e-10 * trace.max(1.0));
            }
        }
        assert!(is_downward_closed_cells(&st.index_set()));
    }

    #[test]
    fn first_expansion_and_downward_closure() {
        let h = linear_hierarchy(5, 3);
        let s = SeededStream::new(5, 0);
        let mut probe = AdaptiveState::<f64>::default();
        let w00 = explore_cell(&mut probe, CellIndex::new(0, 0), &h, &AdaptiveConfig::new(1e9), s).unwrap().work;
        let out = amlaspa(&h, &AdaptiveConfig::new(w00 * 1.0001), s).unwrap();
        assert_eq!(out.state.index_set(), cells(&[(0, 0), (1, 0), (0, 1)]));
        assert_eq!(out.surrogate.levels.len(), 2);
        assert_eq!(out.trace.len(), 2);
        let big = amlaspa(&h, &AdaptiveConfig::new(w00 * 200.0), s).unwrap();
        assert!(is_downward_closed_cells(&big.state.index_set()));
        for w in big.trace.windows(2) {
            assert!(w[1].total_work >= w[0].total_work);
        }
    }

    #[test]
    fn linear_model_is_reproduced() {
        let d = 5;
        let h = FixedLevel::new(linear_hierarchy(d, 0), 0);
        let out = amlaspa(&h, &AdaptiveConfig::new(500.0), SeededStream::new(6, 0)).unwrap();
        let c = DVector::from_fn(d, |i, _| 2.0 / (1.0 + i as f64).powi(2));
        for y in draw_gaussian::<f64>(d, SeededStream::new(60, 0), 50) {
            assert!((out.surrogate.evaluate(&y).unwrap() - c.dot(&y)).abs() < 1e-6);
        }
        assert_eq!(out.trace[1].selected, Some(CellIndex::new(0, 0)));
    }

    #[test]
    fn reruns_reproduce_ledger_and_trace() {
        let h = linear_hierarchy(4, 2);
        let cfg = AdaptiveConfig::new(300.0);
        let a = amlaspa(&h, &cfg, SeededStream::new(7, 0)).unwrap();
        let b = amlaspa(&h, &cfg, SeededStream::new(7, 0)).unwrap();
        assert_eq!(a.trace_jsonl().unwrap(), b.trace_jsonl().unwrap());
        assert_eq!(a.surrogate.to_json().unwrap(), b.surrogate.to_json().unwrap());
        let sum: f64 = a.state.cells.values().map(|c| c.work).sum();
        assert!((a.state.total_work() - sum).abs() < 1e-9);
    }

    #[test]
    fn identity_mode_uses_coordinate_axes() {
        let h = linear_hierarchy(4, 1);
        let mut cfg = AdaptiveConfig::new(200.0);
        cfg.identity_subspace = true;
        let out = amlaspa(&h, &cfg, SeededStream::new(8, 0)).unwrap();
        for lvl in &out.surrogate.levels {
            let r = lvl.rank();
            assert_eq!(lvl.subspace.basis, DMatrix::<f64>::identity(4, r));
        }
    }

    #[test]
    fn config_validation() {
        assert!(AdaptiveConfig::new(0.0).validate().is_err());
        let mut c = AdaptiveConfig::new(1.0);
        c.c_m = 1.0;
        assert!(c.validate().is_err());
        assert_eq!(AdaptiveConfig::new(1.0).gradient_samples(1), 2);
        assert_eq!(AdaptiveConfig::new(1.0).gradient_samples(4), 13);
    }
}
