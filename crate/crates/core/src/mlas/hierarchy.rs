use std::collections::BTreeMap;
use std::marker::PhantomData;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Sequence of models `f_0, f_1, ...` of increasing accuracy and cost.
pub trait ModelHierarchy<T: Real>: Sync {
    /// Number of parameters `d`.
    fn dim(&self) -> usize;
    fn max_level(&self) -> usize;
    fn eval(&self, level: usize, y: &DVector<T>) -> Result<T>;
    fn grad(&self, level: usize, y: &DVector<T>) -> Result<DVector<T>>;
    /// Modeled cost of one evaluation (value or gradient) at `level`.
    fn work(&self, level: usize) -> f64;
}

impl<T: Real, H: ModelHierarchy<T> + ?Sized> ModelHierarchy<T> for &H {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn max_level(&self) -> usize {
        (**self).max_level()
    }
    fn eval(&self, level: usize, y: &DVector<T>) -> Result<T> {
        (**self).eval(level, y)
    }
    fn grad(&self, level: usize, y: &DVector<T>) -> Result<DVector<T>> {
        (**self).grad(level, y)
    }
    fn work(&self, level: usize) -> f64 {
        (**self).work(level)
    }
}

fn check_level<T: Real, H: ModelHierarchy<T> + ?Sized>(hier: &H, level: usize) -> Result<()> {
    if level > hier.max_level() {
        return Err(Error::InvalidInput(format!(
            "level {level} exceeds the hierarchy's maximum level {}",
            hier.max_level()
        )));
    }
    Ok(())
}

/// `f_l(y) - f_{l-1}(y)`, with `f_{-1} = 0`.
pub fn delta_eval<T: Real, H: ModelHierarchy<T> + ?Sized>(hier: &H, level: usize, y: &DVector<T>) -> Result<T> {
    check_level(hier, level)?;
    let fine = hier.eval(level, y)?;
    if level == 0 {
        return Ok(fine);
    }
    Ok(fine - hier.eval(level - 1, y)?)
}

pub fn delta_grad<T: Real, H: ModelHierarchy<T> + ?Sized>(
    hier: &H,
    level: usize,
    y: &DVector<T>,
) -> Result<DVector<T>> {
    check_level(hier, level)?;
    let fine = hier.grad(level, y)?;
    if level == 0 {
        return Ok(fine);
    }
    Ok(fine - hier.grad(level - 1, y)?)
}

/// Cost of one evaluation of the difference at `level`.
pub fn delta_work<T: Real, H: ModelHierarchy<T> + ?Sized>(hier: &H, level: usize) -> f64 {
    if level == 0 {
        hier.work(0)
    } else {
        hier.work(level) + hier.work(level - 1)
    }
}

/// The hierarchy of differences `Delta_l`, presented as a hierarchy itself so
/// that level `l` of the view evaluates `f_l - f_{l-1}`.
pub struct Differences<H>(pub H);

impl<T: Real, H: ModelHierarchy<T>> ModelHierarchy<T> for Differences<H> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn max_level(&self) -> usize {
        self.0.max_level()
    }
    fn eval(&self, level: usize, y: &DVector<T>) -> Result<T> {
        delta_eval(&self.0, level, y)
    }
    fn grad(&self, level: usize, y: &DVector<T>) -> Result<DVector<T>> {
        delta_grad(&self.0, level, y)
    }
    fn work(&self, level: usize) -> f64 {
        delta_work(&self.0, level)
    }
}

/// One level of another hierarchy, exposed as a single-level model.
pub struct FixedLevel<H> {
    pub inner: H,
    pub level: usize,
}

impl<H> FixedLevel<H> {
    pub fn new(inner: H, level: usize) -> Self {
        Self { inner, level }
    }
}

impl<T: Real, H: ModelHierarchy<T>> ModelHierarchy<T> for FixedLevel<H> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn max_level(&self) -> usize {
        0
    }
    fn eval(&self, level: usize, y: &DVector<T>) -> Result<T> {
        check_level(self, level)?;
        self.inner.eval(self.level, y)
    }
    fn grad(&self, level: usize, y: &DVector<T>) -> Result<DVector<T>> {
        check_level(self, level)?;
        self.inner.grad(self.level, y)
    }
    fn work(&self, _level: usize) -> f64 {
        self.inner.work(self.level)
    }
}

/// Hierarchy built from closures; work defaults to `4^l`.
pub struct FnHierarchy<T, F, G> {
    dim: usize,
    max_level: usize,
    eval: F,
    grad: G,
    work: Vec<f64>,
    _scalar: PhantomData<fn() -> T>,
}

impl<T, F, G> FnHierarchy<T, F, G>
where
    T: Real,
    F: Fn(usize, &DVector<T>) -> Result<T> + Sync,
    G: Fn(usize, &DVector<T>) -> Result<DVector<T>> + Sync,
{
    pub fn new(dim: usize, max_level: usize, eval: F, grad: G) -> Self {
        let work = (0..=max_level).map(|l| 4f64.powi(l as i32)).collect();
        Self {
            dim,
            max_level,
            eval,
            grad,
            work,
            _scalar: PhantomData,
        }
    }

    /// Per-level costs; must be nondecreasing.
    pub fn with_work(mut self, work: Vec<f64>) -> Result<Self> {
        if work.len() != self.max_level + 1 {
            return Err(Error::DimensionMismatch {
                expected: self.max_level + 1,
                found: work.len(),
            });
        }
        if work.iter().any(|w| !(*w > 0.0)) || work.windows(2).any(|p| p[1] < p[0]) {
            return Err(Error::InvalidInput("work must be positive and nondecreasing".into()));
        }
        self.work = work;
        Ok(self)
    }
}

impl<T, F, G> ModelHierarchy<T> for FnHierarchy<T, F, G>
where
    T: Real,
    F: Fn(usize, &DVector<T>) -> Result<T> + Sync,
    G: Fn(usize, &DVector<T>) -> Result<DVector<T>> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn max_level(&self) -> usize {
        self.max_level
    }
    fn eval(&self, level: usize, y: &DVector<T>) -> Result<T> {
        check_level(self, level)?;
        if y.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: y.len(),
            });
        }
        (self.eval)(level, y)
    }
    fn grad(&self, level: usize, y: &DVector<T>) -> Result<DVector<T>> {
        check_level(self, level)?;
        if y.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: y.len(),
            });
        }
        (self.grad)(level, y)
    }
    fn work(&self, level: usize) -> f64 {
        self.work[level]
    }
}

/// Evaluation counts and modeled cost for one level.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelWork {
    pub gradient_evals: usize,
    pub function_evals: usize,
    pub cost: f64,
}

/// Per-level evaluation counts with modeled cost.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkLedger {
    pub levels: BTreeMap<usize, LevelWork>,
}

impl WorkLedger {
    pub fn record_gradients(&mut self, level: usize, count: usize, unit_cost: f64) {
        let e = self.levels.entry(level).or_default();
        e.gradient_evals += count;
        e.cost += count as f64 * unit_cost;
    }

    pub fn record_functions(&mut self, level: usize, count: usize, unit_cost: f64) {
        let e = self.levels.entry(level).or_default();
        e.function_evals += count;
        e.cost += count as f64 * unit_cost;
    }

    pub fn merge(&mut self, other: &WorkLedger) {
        for (&l, w) in &other.levels {
            let e = self.levels.entry(l).or_default();
            e.gradient_evals += w.gradient_evals;
            e.function_evals += w.function_evals;
            e.cost += w.cost;
        }
    }

    pub fn total(&self) -> f64 {
        self.levels.values().map(|w| w.cost).sum()
    }

    pub fn total_gradients(&self) -> usize {
        self.levels.values().map(|w| w.gradient_evals).sum()
    }

    pub fn total_functions(&self) -> usize {
        self.levels.values().map(|w| w.function_evals).sum()
    }
}
