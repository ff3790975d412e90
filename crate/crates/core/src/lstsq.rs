//! Optimally weighted discrete least squares on Hermite spaces.
//!
//! The Gram matrix `G = (1/N) sum_i w_i phi(x_i) phi(x_i)^T` and the right-hand
//! side `J = (1/N) sum_i w_i phi(x_i) v_i^T` are assembled explicitly and the
//! normal equations are solved by Cholesky. `||G - I||_2` is reported as the
//! stability diagnostic.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::polyspace::{BasisEvaluator, MultiIndexSet};
use crate::sampling::WeightedSample;
use crate::scalar::Real;

/// Largest accepted `||G - I||_2` before samples are redrawn.
pub const GRAM_TOLERANCE: f64 = 0.5;
/// Redraws (each doubling `N`) attempted before giving up.
pub const MAX_REDRAWS: usize = 3;

/// Scalar-valued weighted least-squares fit.
#[derive(Clone, Debug, PartialEq)]
pub struct LsFit<T: Real> {
    /// Coefficients in the order of the index set.
    pub coefficients: DVector<T>,
    pub gram_deviation: T,
    pub n_samples: usize,
    /// `sqrt((1/N) sum_i w_i (v(x_i) - value_i)^2)`.
    pub residual: T,
}

/// Fit with several right-hand sides sharing one Gram matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct LsFitMulti<T: Real> {
    /// `m x q` coefficient matrix, one column per output component.
    pub coefficients: DMatrix<T>,
    pub gram_deviation: T,
    pub n_samples: usize,
    pub residual: T,
}

/// `kappa = (1 - ln 2) / (2 + 2t)`.
pub fn kappa(t: f64) -> f64 {
    (1.0 - std::f64::consts::LN_2) / (2.0 + 2.0 * t)
}

/// Smallest `N >= 2` with `m <= kappa(t) N / ln N`, using `K = m` for the
/// optimal measure.
pub fn required_samples(m: usize, t: f64) -> usize {
    assert!(m >= 1, "space dimension must be positive");
    assert!(t > 0.0, "confidence exponent must be positive");
    let k = kappa(t);
    let ok = |n: usize| m as f64 * (n as f64).ln() <= k * n as f64;
    if ok(2) {
        return 2;
    }
    // kappa N - m ln N decreases then increases, so past N = 2 the feasible
    // set is an interval [N*, inf)
    let mut hi = 4usize;
    while !ok(hi) {
        hi *= 2;
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Assembled Gram matrix together with the basis evaluations it came from.
#[derive(Clone, Debug)]
pub struct GramSystem<T: Real> {
    /// `N x m` unweighted basis evaluations.
    pub basis: DMatrix<T>,
    pub weights: DVector<T>,
    pub gram: DMatrix<T>,
    pub deviation: T,
}

/// Spectral norm of `G - I` for symmetric `G`.
pub fn identity_deviation<T: Real>(gram: &DMatrix<T>) -> T {
    let shifted = gram - DMatrix::<T>::identity(gram.nrows(), gram.ncols());
    SymmetricEigen::new(shifted)
        .eigenvalues
        .iter()
        .fold(T::zero(), |acc, &v| acc.max(v.abs()))
}

pub fn assemble_gram<T: Real>(xi: &MultiIndexSet, samples: &[WeightedSample<T>]) -> Result<GramSystem<T>> {
    if xi.is_empty() {
        return Err(Error::InvalidInput("empty index set".into()));
    }
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    let m = xi.len();
    let n = samples.len();
    let evaluator = BasisEvaluator::new(xi);
    let rows: Vec<Vec<T>> = samples
        .par_iter()
        .map(|s| {
            if !(s.weight > T::zero()) {
                return Err(Error::InvalidInput("sample weights must be positive".into()));
            }
            let mut row = vec![T::zero(); m];
            evaluator.eval(xi, s.point.as_slice(), &mut row)?;
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let basis = DMatrix::from_fn(n, m, |i, j| rows[i][j]);
    let weights = DVector::from_iterator(n, samples.iter().map(|s| s.weight));
    let inv_n = T::one() / T::from_usize_lossy(n);
    // sequential accumulation keeps the reduction order fixed
    let mut gram = DMatrix::<T>::zeros(m, m);
    for (row, &w) in rows.iter().zip(weights.iter()) {
        for a in 0..m {
            let wa = w * row[a];
            for b in a..m {
                gram[(a, b)] += wa * row[b];
            }
        }
    }
    for a in 0..m {
        for b in a..m {
            gram[(a, b)] *= inv_n;
            gram[(b, a)] = gram[(a, b)];
        }
    }
    let deviation = identity_deviation(&gram);
    Ok(GramSystem {
        basis,
        weights,
        gram,
        deviation,
    })
}

impl<T: Real> GramSystem<T> {
    /// Solves the normal equations for `values` (`N x q`).
    pub fn solve(&self, values: &DMatrix<T>) -> Result<LsFitMulti<T>> {
        let n = self.basis.nrows();
        if values.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: values.nrows(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("least-squares values"));
        }
        if self.deviation >= T::one() {
            return Err(Error::Conditioning {
                deviation: self.deviation.as_f64(),
                level: None,
            });
        }
        let chol = Cholesky::new(self.gram.clone()).ok_or(Error::Conditioning {
            deviation: self.deviation.as_f64(),
            level: None,
        })?;
        let inv_n = T::one() / T::from_usize_lossy(n);
        let mut weighted = values.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            row *= self.weights[i];
        }
        let rhs = self.basis.transpose() * weighted * inv_n;
        let coefficients = chol.solve(&rhs);
        let misfit = &self.basis * &coefficients - values;
        let mut acc = T::zero();
        for (i, row) in misfit.row_iter().enumerate() {
            acc += self.weights[i] * row.norm_squared();
        }
        Ok(LsFitMulti {
            coefficients,
            gram_deviation: self.deviation,
            n_samples: n,
            residual: (acc * inv_n).sqrt(),
        })
    }
}

/// Weighted least-squares projection of scalar `values` onto `span(xi)`.
pub fn fit<T: Real>(xi: &MultiIndexSet, samples: &[WeightedSample<T>], values: &[T]) -> Result<LsFit<T>> {
    if samples.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: samples.len(),
            found: values.len(),
        });
    }
    if samples.len() < xi.len() {
        return Err(Error::InvalidInput(format!(
            "{} samples cannot determine {} coefficients",
            samples.len(),
            xi.len()
        )));
    }
    let system = assemble_gram(xi, samples)?;
    let multi = system.solve(&DMatrix::from_column_slice(values.len(), 1, values))?;
    Ok(LsFit {
        coefficients: multi.coefficients.column(0).into_owned(),
        gram_deviation: multi.gram_deviation,
        n_samples: multi.n_samples,
        residual: multi.residual,
    })
}

/// Vector-valued variant; `values` is `N x q`.
pub fn fit_multi<T: Real>(
    xi: &MultiIndexSet,
    samples: &[WeightedSample<T>],
    values: &DMatrix<T>,
) -> Result<LsFitMulti<T>> {
    if samples.len() < xi.len() {
        return Err(Error::InvalidInput("fewer samples than basis functions".into()));
    }
    assemble_gram(xi, samples)?.solve(values)
}

/// Draws `n` samples through `draw(n, attempt)` and redraws with `2n`,
/// `4n`, ... while `||G - I||_2 > GRAM_TOLERANCE`, at most [`MAX_REDRAWS`]
/// times. Only the sample locations are needed, so no model evaluations are
/// spent on rejected draws.
pub fn draw_well_conditioned<T, F>(
    xi: &MultiIndexSet,
    n: usize,
    mut draw: F,
) -> Result<(Vec<WeightedSample<T>>, GramSystem<T>)>
where
    T: Real,
    F: FnMut(usize, usize) -> Result<Vec<WeightedSample<T>>>,
{
    let mut count = n.max(xi.len());
    let mut last = T::zero();
    for attempt in 0..=MAX_REDRAWS {
        let samples = draw(count, attempt)?;
        let system = assemble_gram(xi, &samples)?;
        if system.deviation <= T::lit(GRAM_TOLERANCE) {
            return Ok((samples, system));
        }
        last = system.deviation;
        count *= 2;
    }
    Err(Error::Conditioning {
        deviation: last.as_f64(),
        level: None,
    })
}
