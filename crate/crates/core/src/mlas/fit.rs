use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::hierarchy::{Differences, ModelHierarchy, WorkLedger};
use super::plan::MultilevelPlan;
use super::surrogate::{FitDiagnostics, LevelSurrogate, MlasSurrogate};
use crate::asm::{sample_gradients, GradientSpectrum, Subspace};
use crate::error::{Error, Result};
use crate::lstsq::{draw_well_conditioned, required_samples, LsFit};
use crate::polyspace::MultiIndexSet;
use crate::sampling::{draw_gaussian, draw_optimal, SeededStream};
use crate::scalar::Real;

/// Child-stream tags used inside one level.
pub(crate) const GRAD_TAG: u64 = 1;
pub(crate) const FIT_TAG: u64 = 2;
pub(crate) const INACTIVE_TAG: u64 = 3;

/// Outcome of a least-squares fit inside a subspace.
pub(crate) struct SubspaceFit<T: Real> {
    pub fit: LsFit<T>,
    pub index_set: MultiIndexSet,
    /// Model evaluations spent.
    pub evaluations: usize,
}

/// Fits `value` restricted to `u`: active coordinates from the optimal
/// measure for `xi`, inactive ones Gaussian in the complement `w`.
pub(crate) fn fit_in_subspace<T, F>(
    u: &Subspace<T>,
    w: &DMatrix<T>,
    xi: &MultiIndexSet,
    n: usize,
    stream: SeededStream,
    value: F,
) -> Result<SubspaceFit<T>>
where
    T: Real,
    F: Fn(&DVector<T>) -> Result<T> + Sync,
{
    let xi = if xi.dim() == u.rank() {
        xi.clone()
    } else {
        xi.with_dim(u.rank())?
    };
    let fit_stream = stream.child(FIT_TAG);
    let inactive_stream = stream.child(INACTIVE_TAG);
    let (samples, system) =
        draw_well_conditioned(&xi, n, |count, attempt| draw_optimal(&xi, fit_stream.child(attempt as u64), count))?;
    let inactive = draw_gaussian::<T>(w.ncols(), inactive_stream, samples.len());
    let values: Vec<T> = samples
        .par_iter()
        .zip(inactive.par_iter())
        .map(|(s, z)| value(&(u.lift(&s.point) + w * z)))
        .collect::<Result<_>>()?;
    let multi = system.solve(&DMatrix::from_column_slice(values.len(), 1, &values))?;
    Ok(SubspaceFit {
        fit: LsFit {
            coefficients: multi.coefficients.column(0).into_owned(),
            gram_deviation: multi.gram_deviation,
            n_samples: multi.n_samples,
            residual: multi.residual,
        },
        index_set: xi,
        evaluations: values.len(),
    })
}

fn with_level(err: Error, level: usize) -> Error {
    match err {
        Error::Conditioning { deviation, .. } => Error::Conditioning {
            deviation,
            level: Some(level),
        },
        other => other,
    }
}

/// Subspace detection plus one least-squares fit of `model` at `level`.
#[allow(clippy::too_many_arguments)]
fn fit_level<T, H>(
    model: &H,
    level: usize,
    rank: usize,
    gradient_samples: usize,
    xi: &MultiIndexSet,
    t: f64,
    stream: SeededStream,
    ledger: &mut WorkLedger,
) -> Result<LevelSurrogate<T>>
where
    T: Real,
    H: ModelHierarchy<T> + ?Sized,
{
    let d = model.dim();
    if rank == 0 || rank > d {
        return Err(Error::InvalidInput(format!("rank {rank} must lie in 1..={d}")));
    }
    if xi.dim() > rank {
        return Err(Error::InvalidInput("index set uses more variables than the rank".into()));
    }
    let unit = model.work(level);
    let points = draw_gaussian::<T>(d, stream.child(GRAD_TAG), gradient_samples);
    let grads = sample_gradients(&points, |y| model.grad(level, y))?;
    ledger.record_gradients(level, gradient_samples, unit);
    let spectrum = GradientSpectrum::from_gradients(&grads)?;
    let u = spectrum.subspace(rank);
    let w = u.complement();
    let n = required_samples(xi.len(), t);
    let out = fit_in_subspace(&u, &w, xi, n, stream, |y| model.eval(level, y)).map_err(|e| with_level(e, level))?;
    ledger.record_functions(level, out.evaluations, unit);
    let mut surrogate = LevelSurrogate::new(level, u, out.index_set, out.fit.coefficients.iter().copied().collect())?;
    surrogate.diagnostics = FitDiagnostics {
        gram_deviation: out.fit.gram_deviation.as_f64(),
        n_samples: out.fit.n_samples,
        residual: out.fit.residual.as_f64(),
        gradient_samples,
    };
    Ok(surrogate)
}

/// Multilevel fit: the difference at level `l` gets rank `r_{L-l}`, `M_{L-l}`
/// gradient samples and the index set of slot `L - l`. Level `l` draws from
/// `stream.child(l)`.
pub fn mlaspa_fit<T, H>(hier: &H, plan: &MultilevelPlan, t: f64, stream: SeededStream) -> Result<MlasSurrogate<T>>
where
    T: Real,
    H: ModelHierarchy<T> + ?Sized,
{
    let big_l = plan.levels();
    if big_l > hier.max_level() {
        return Err(Error::InvalidInput(format!(
            "plan has {} levels but the hierarchy stops at {}",
            big_l + 1,
            hier.max_level()
        )));
    }
    let deltas = Differences(hier);
    let mut surrogate = MlasSurrogate::empty(hier.dim());
    let mut ledger = WorkLedger::default();
    for l in 0..=big_l {
        let k = plan.slot(l);
        let level = fit_level(
            &deltas,
            l,
            plan.ranks()[k],
            plan.gradient_samples()[k],
            &plan.index_sets()[k],
            t,
            stream.child(l as u64),
            &mut ledger,
        )?;
        surrogate.push(level)?;
    }
    surrogate.work_ledger = ledger;
    Ok(surrogate)
}

/// Single-level fit of `f_level`; with `level = 0` this coincides with a
/// one-level [`mlaspa_fit`] on the same stream.
pub fn slaspa_fit<T, H>(
    hier: &H,
    level: usize,
    rank: usize,
    gradient_samples: usize,
    xi: &MultiIndexSet,
    t: f64,
    stream: SeededStream,
) -> Result<MlasSurrogate<T>>
where
    T: Real,
    H: ModelHierarchy<T> + ?Sized,
{
    if level > hier.max_level() {
        return Err(Error::InvalidInput(format!("level {level} exceeds the hierarchy")));
    }
    let mut ledger = WorkLedger::default();
    let lvl = fit_level(hier, level, rank, gradient_samples, xi, t, stream.child(level as u64), &mut ledger)?;
    let mut surrogate = MlasSurrogate::empty(hier.dim());
    surrogate.push(lvl)?;
    surrogate.work_ledger = ledger;
    Ok(surrogate)
}
