//! Monte Carlo reference quantities: conditional expectations on a subspace,
//! reconstruction errors, projected gradient energy and `L^2` errors of
//! surrogates.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hierarchy::ModelHierarchy;
use super::surrogate::MlasSurrogate;
use crate::asm::Subspace;
use crate::error::{Error, Result};
use crate::sampling::{draw_gaussian, gaussian_point, SeededStream};
use crate::scalar::Real;

/// Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Self { mean, std_error: f64::INFINITY };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            std_error: (var / n).sqrt(),
        }
    }
}

fn complete<T: Real>(v: &Subspace<T>) -> DMatrix<T> {
    v.complement()
}

/// `E[f(V x + W z)]` over Gaussian `z`, from `k` draws.
pub fn conditional_expectation<T, F>(f: F, v: &Subspace<T>, x: &DVector<T>, k: usize, stream: SeededStream) -> Result<Estimate>
where
    T: Real,
    F: Fn(&DVector<T>) -> T + Sync,
{
    if x.len() != v.rank() {
        return Err(Error::DimensionMismatch {
            expected: v.rank(),
            found: x.len(),
        });
    }
    let w = complete(v);
    let base = v.lift(x);
    let vals: Vec<f64> = (0..k)
        .into_par_iter()
        .map(|i| {
            let z = gaussian_point::<T>(w.ncols(), stream.child(i as u64));
            f(&(&base + &w * z)).as_f64()
        })
        .collect();
    Ok(Estimate::from_samples(&vals))
}

/// Estimate of `||f - g* o V^T||^2` in `L^2` of the Gaussian, where `g*` is
/// the conditional expectation. Each of the `n_outer` points uses `k_inner`
/// independent inner draws; the inner sampling variance is subtracted so the
/// estimator is unbiased.
pub fn reconstruction_error_sq<T, F>(
    f: F,
    v: &Subspace<T>,
    n_outer: usize,
    k_inner: usize,
    stream: SeededStream,
) -> Result<Estimate>
where
    T: Real,
    F: Fn(&DVector<T>) -> T + Sync,
{
    if k_inner < 2 {
        return Err(Error::InvalidInput("need at least two inner draws".into()));
    }
    let w = complete(v);
    let d = v.dim();
    let terms: Vec<f64> = (0..n_outer)
        .into_par_iter()
        .map(|i| {
            let s = stream.child(i as u64);
            let y = gaussian_point::<T>(d, s.child(0));
            let x = v.project(&y);
            let base = v.lift(&x);
            let inner: Vec<f64> = (0..k_inner)
                .map(|j| {
                    let z = gaussian_point::<T>(w.ncols(), s.child(1).child(j as u64));
                    f(&(&base + &w * z)).as_f64()
                })
                .collect();
            let est = Estimate::from_samples(&inner);
            let var_mean = est.std_error * est.std_error;
            (f(&y).as_f64() - est.mean).powi(2) - var_mean
        })
        .collect();
    Ok(Estimate::from_samples(&terms))
}

/// Estimate of `E |(I - V V^T) grad f|^2`.
pub fn projected_gradient_energy<T, G>(grad: G, v: &Subspace<T>, n: usize, stream: SeededStream) -> Result<Estimate>
where
    T: Real,
    G: Fn(&DVector<T>) -> DVector<T> + Sync,
{
    let pts = draw_gaussian::<T>(v.dim(), stream, n);
    let vals: Vec<f64> = pts
        .par_iter()
        .map(|y| {
            let g = grad(y);
            let r = &g - v.lift(&v.project(&g));
            r.norm_squared().as_f64()
        })
        .collect();
    Ok(Estimate::from_samples(&vals))
}

/// `L^2` error estimate: RMS together with the delta-method standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct L2Error {
    pub estimate: f64,
    pub std_error: f64,
    pub mean_square: Estimate,
}

impl L2Error {
    fn from_squares(sq: &[f64]) -> Self {
        let mean_square = Estimate::from_samples(sq);
        let estimate = mean_square.mean.max(0.0).sqrt();
        let std_error = if estimate > 0.0 {
            mean_square.std_error / (2.0 * estimate)
        } else {
            0.0
        };
        Self {
            estimate,
            std_error,
            mean_square,
        }
    }
}

/// Gaussian test points with cached reference values `f_ref`.
#[derive(Clone, Debug)]
pub struct ReferenceSample<T: Real> {
    pub level: usize,
    pub points: Vec<DVector<T>>,
    pub values: Vec<T>,
}

impl<T: Real> ReferenceSample<T> {
    pub fn new<H: ModelHierarchy<T> + ?Sized>(hier: &H, level: usize, n: usize, stream: SeededStream) -> Result<Self> {
        if level > hier.max_level() {
            return Err(Error::InvalidInput(format!("reference level {level} exceeds the hierarchy")));
        }
        if n < 2 {
            return Err(Error::InvalidInput("need at least two test points".into()));
        }
        let points = draw_gaussian::<T>(hier.dim(), stream, n);
        let values = points
            .par_iter()
            .map(|y| hier.eval(level, y))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { level, points, values })
    }

    pub fn l2_error(&self, surrogate: &MlasSurrogate<T>) -> Result<L2Error> {
        if let Some(fine) = surrogate.finest_level() {
            if fine > self.level {
                return Err(Error::InvalidInput(format!(
                    "surrogate level {fine} is finer than the reference level {}",
                    self.level
                )));
            }
        }
        let approx = surrogate.evaluate_many(&self.points)?;
        let sq: Vec<f64> = approx
            .iter()
            .zip(&self.values)
            .map(|(a, v)| (*v - *a).as_f64().powi(2))
            .collect();
        Ok(L2Error::from_squares(&sq))
    }

    /// `L^2` norm of the reference values themselves.
    pub fn norm(&self) -> L2Error {
        let sq: Vec<f64> = self.values.iter().map(|v| v.as_f64().powi(2)).collect();
        L2Error::from_squares(&sq)
    }
}

/// `||f_ref - S||` from `n_test` fresh Gaussian points.
pub fn mc_l2_error<T, H>(
    surrogate: &MlasSurrogate<T>,
    hier: &H,
    ref_level: usize,
    n_test: usize,
    stream: SeededStream,
) -> Result<L2Error>
where
    T: Real,
    H: ModelHierarchy<T> + ?Sized,
{
    ReferenceSample::new(hier, ref_level, n_test, stream)?.l2_error(surrogate)
}
