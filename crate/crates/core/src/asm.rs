//! Active-subspace linear algebra: gradient covariance, its spectrum, and
//! orthonormal subspaces.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::mlas::{ModelHierarchy, WorkLedger};
use crate::sampling::{draw_gaussian, SeededStream};
use crate::scalar::Real;

/// Leading eigenpairs of a symmetric positive semidefinite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDecomposition<T: Real> {
    /// `d x k`, orthonormal columns.
    pub eigvecs: DMatrix<T>,
    /// Nonincreasing and nonnegative.
    pub eigvals: Vec<T>,
}

/// `C = (1/M) sum_i g_i g_i^T`.
pub fn sample_covariance<T: Real>(grads: &[DVector<T>]) -> Result<DMatrix<T>> {
    let first = grads
        .first()
        .ok_or_else(|| Error::InvalidInput("no gradients".into()))?;
    let d = first.len();
    let mut c = DMatrix::<T>::zeros(d, d);
    for g in grads {
        if g.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: g.len(),
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        c.ger(T::one(), g, g, T::one());
    }
    c /= T::from_usize_lossy(grads.len());
    Ok(c)
}

fn check_symmetric<T: Real>(c: &DMatrix<T>) -> Result<()> {
    if !c.is_square() {
        return Err(Error::DimensionMismatch {
            expected: c.nrows(),
            found: c.ncols(),
        });
    }
    let scale = c.iter().fold(T::one(), |acc, v| acc.max(v.abs()));
    let mut worst = T::zero();
    for i in 0..c.nrows() {
        for j in 0..i {
            worst = worst.max((c[(i, j)] - c[(j, i)]).abs());
        }
    }
    if worst > T::lit(1e-10) * scale {
        return Err(Error::NotSymmetric(worst.as_f64()));
    }
    Ok(())
}

/// Sorted (descending) eigenpairs with nonnegative eigenvalues and the sign
/// convention applied.
fn sorted_eigen<T: Real>(c: DMatrix<T>) -> (DMatrix<T>, Vec<T>) {
    let eig = SymmetricEigen::new(c);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut vecs = DMatrix::<T>::zeros(eig.eigenvectors.nrows(), n);
    let mut vals = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
        vals.push(eig.eigenvalues[src].max(T::zero()));
    }
    (vecs, vals)
}

/// Flips columns so their first non-negligible entry is positive.
fn fix_signs<T: Real>(vecs: &mut DMatrix<T>) {
    let eps = T::default_epsilon().sqrt();
    for mut col in vecs.column_iter_mut() {
        if let Some(v) = col.iter().find(|v| v.abs() > eps).copied() {
            if v < T::zero() {
                col.neg_mut();
            }
        }
    }
}

/// Top-`r` eigenpairs of a symmetric PSD matrix.
pub fn truncated_eig<T: Real>(c: &DMatrix<T>, r: usize) -> Result<SpectralDecomposition<T>> {
    check_symmetric(c)?;
    if r > c.nrows() {
        return Err(Error::InvalidInput(format!("rank {r} exceeds dimension {}", c.nrows())));
    }
    let (mut vecs, mut vals) = sorted_eigen(c.clone());
    fix_signs(&mut vecs);
    vals.truncate(r);
    Ok(SpectralDecomposition {
        eigvecs: vecs.columns(0, r).into_owned(),
        eigvals: vals,
    })
}

/// Modified Gram–Schmidt (two passes) of `v` against the columns of `basis`.
fn orthogonalize<T: Real>(basis: &[DVector<T>], v: &mut DVector<T>) {
    for _ in 0..2 {
        for b in basis {
            let p = b.dot(v);
            v.axpy(-p, b, T::one());
        }
    }
}

/// Extends orthonormal columns to `target` columns using coordinate axes.
fn complete_basis<T: Real>(mut cols: Vec<DVector<T>>, d: usize, target: usize) -> Vec<DVector<T>> {
    let threshold = T::lit(1e-6);
    let mut axis = 0;
    while cols.len() < target && axis < d {
        let mut e = DVector::<T>::zeros(d);
        e[axis] = T::one();
        orthogonalize(&cols, &mut e);
        let norm = e.norm();
        if norm > threshold {
            cols.push(e / norm);
        }
        axis += 1;
    }
    assert_eq!(cols.len(), target, "basis completion ran out of axes");
    cols
}

/// Full spectrum of the empirical gradient covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSpectrum<T: Real> {
    /// `d x d` orthogonal matrix, columns sorted by eigenvalue.
    pub eigvecs: DMatrix<T>,
    pub eigvals: Vec<T>,
    /// `(1/M) sum_i |g_i|^2`.
    pub trace: T,
    pub samples: usize,
}

impl<T: Real> GradientSpectrum<T> {
    /// Uses the `d x d` covariance when `M >= d` and the `M x M` reduced
    /// problem otherwise.
    pub fn from_gradients(grads: &[DVector<T>]) -> Result<Self> {
        let m = grads.len();
        let first = grads
            .first()
            .ok_or_else(|| Error::InvalidInput("no gradients".into()))?;
        let d = first.len();
        if m >= d {
            let c = sample_covariance(grads)?;
            let trace = c.trace();
            let (mut vecs, vals) = sorted_eigen(c);
            fix_signs(&mut vecs);
            return Ok(Self {
                eigvecs: vecs,
                eigvals: vals,
                trace,
                samples: m,
            });
        }
        for g in grads {
            if g.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: g.len(),
                });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("gradient"));
            }
        }
        // A = QR, so C = (1/M) Q (R R^T) Q^T and the eigenvectors of C are Q
        // times those of the small matrix
        let a = DMatrix::from_columns(grads);
        let trace = a.iter().fold(T::zero(), |acc, &v| acc + v * v) / T::from_usize_lossy(m);
        let qr = a.qr();
        let q = qr.q();
        let r = qr.r();
        let small = &r * r.transpose() / T::from_usize_lossy(m);
        let (w, vals_small) = sorted_eigen(small);
        let lead = &q * w;
        let cols: Vec<DVector<T>> = lead.column_iter().map(|c| c.into_owned()).collect();
        let cols = complete_basis(cols, d, d);
        let mut vecs = DMatrix::from_columns(&cols);
        fix_signs(&mut vecs);
        let mut vals = vals_small;
        vals.resize(d, T::zero());
        Ok(Self {
            eigvecs: vecs,
            eigvals: vals,
            trace,
            samples: m,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigvecs.nrows()
    }

    pub fn truncate(&self, r: usize) -> SpectralDecomposition<T> {
        let r = r.min(self.eigvals.len());
        SpectralDecomposition {
            eigvecs: self.eigvecs.columns(0, r).into_owned(),
            eigvals: self.eigvals[..r].to_vec(),
        }
    }

    pub fn subspace(&self, r: usize) -> Subspace<T> {
        let r = r.min(self.eigvals.len());
        Subspace {
            basis: self.eigvecs.columns(0, r).into_owned(),
            singular_values: self.eigvals[..r].iter().map(|v| v.sqrt()).collect(),
        }
    }

    /// `sum_{j > r} lambda_j`.
    pub fn tail(&self, r: usize) -> T {
        self.eigvals
            .iter()
            .skip(r)
            .fold(T::zero(), |acc, &v| acc + v)
    }

    /// Sum of eigenvalues in positions `from..to` (0-based, half open).
    pub fn block_energy(&self, from: usize, to: usize) -> T {
        let to = to.min(self.eigvals.len());
        self.eigvals[from.min(to)..to]
            .iter()
            .fold(T::zero(), |acc, &v| acc + v)
    }
}

/// Column-orthonormal `d x r` basis together with its singular values.
#[derive(Clone, Debug, PartialEq)]
pub struct Subspace<T: Real> {
    pub basis: DMatrix<T>,
    pub singular_values: Vec<T>,
}

impl<T: Real> Subspace<T> {
    pub fn new(basis: DMatrix<T>, singular_values: Vec<T>) -> Result<Self> {
        if singular_values.len() != basis.ncols() {
            return Err(Error::DimensionMismatch {
                expected: basis.ncols(),
                found: singular_values.len(),
            });
        }
        if basis.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("subspace basis"));
        }
        let gram = basis.transpose() * &basis;
        let dev = (gram - DMatrix::<T>::identity(basis.ncols(), basis.ncols())).amax();
        let tol = T::default_epsilon() * T::lit(1e3) * T::from_usize_lossy(basis.nrows().max(1));
        if dev > tol {
            return Err(Error::InvalidInput(format!(
                "basis columns are not orthonormal (deviation {:e})",
                dev.as_f64()
            )));
        }
        Ok(Self {
            basis,
            singular_values,
        })
    }

    /// Span of the first `r` coordinate axes.
    pub fn identity(d: usize, r: usize) -> Self {
        assert!(r <= d, "rank exceeds dimension");
        Self {
            basis: DMatrix::identity(d, r),
            singular_values: vec![T::one(); r],
        }
    }

    /// Normalized span of a single vector.
    pub fn from_direction(v: &DVector<T>) -> Result<Self> {
        let norm = v.norm();
        if !(norm > T::zero()) {
            return Err(Error::InvalidInput("zero direction".into()));
        }
        Self::new(DMatrix::from_column_slice(v.len(), 1, (v / norm).as_slice()), vec![norm])
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// Active coordinates `U^T y`.
    pub fn project(&self, y: &DVector<T>) -> DVector<T> {
        self.basis.tr_mul(y)
    }

    /// `U x`.
    pub fn lift(&self, x: &DVector<T>) -> DVector<T> {
        &self.basis * x
    }

    /// Orthonormal basis of the orthogonal complement, `d x (d - r)`.
    pub fn complement(&self) -> DMatrix<T> {
        let d = self.dim();
        let r = self.rank();
        let cols: Vec<DVector<T>> = self.basis.column_iter().map(|c| c.into_owned()).collect();
        let full = complete_basis(cols, d, d);
        if r == d {
            return DMatrix::zeros(d, 0);
        }
        DMatrix::from_columns(&full[r..])
    }

    /// Orthogonal projector `U U^T`.
    pub fn projector(&self) -> DMatrix<T> {
        &self.basis * self.basis.transpose()
    }
}

/// `||U U^T - V V^T||_2`.
pub fn projector_distance<T: Real>(u: &Subspace<T>, v: &Subspace<T>) -> Result<T> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            found: v.dim(),
        });
    }
    let diff = u.projector() - v.projector();
    Ok(SymmetricEigen::new(diff)
        .eigenvalues
        .iter()
        .fold(T::zero(), |acc, &e| acc.max(e.abs())))
}

#[derive(Serialize, Deserialize)]
struct SubspaceWire<T> {
    basis: Vec<Vec<T>>,
    singular_values: Vec<T>,
}

impl<T: Real> Serialize for Subspace<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SubspaceWire {
            basis: self
                .basis
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            singular_values: self.singular_values.clone(),
        }
        .serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for Subspace<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let wire = SubspaceWire::<T>::deserialize(d)?;
        let rows = wire.basis.len();
        let cols = wire.singular_values.len();
        if wire.basis.iter().any(|r| r.len() != cols) {
            return Err(D::Error::custom("basis rows must have one entry per singular value"));
        }
        let basis = DMatrix::from_fn(rows, cols, |i, j| wire.basis[i][j]);
        Subspace::new(basis, wire.singular_values).map_err(D::Error::custom)
    }
}

/// Evaluates `grad` at every point in parallel, preserving order.
pub fn sample_gradients<T, F>(points: &[DVector<T>], grad: F) -> Result<Vec<DVector<T>>>
where
    T: Real,
    F: Fn(&DVector<T>) -> Result<DVector<T>> + Sync + Send,
{
    points.par_iter().map(grad).collect()
}

/// Gradient spectrum of `f_level` from `m` Gaussian draws.
pub fn slas_spectrum<T, H>(
    hier: &H,
    level: usize,
    m: usize,
    stream: SeededStream,
    ledger: &mut WorkLedger,
) -> Result<GradientSpectrum<T>>
where
    T: Real,
    H: ModelHierarchy<T> + ?Sized,
{
    if m == 0 {
        return Err(Error::InvalidInput("at least one gradient sample is required".into()));
    }
    let points = draw_gaussian::<T>(hier.dim(), stream, m);
    let grads = sample_gradients(&points, |y| hier.grad(level, y))?;
    ledger.record_gradients(level, m, hier.work(level));
    GradientSpectrum::from_gradients(&grads)
}

/// Single-level active subspace of rank `r` for `f_level` from `m` gradients.
pub fn slas_subspace<T, H>(
    hier: &H,
    level: usize,
    r: usize,
    m: usize,
    stream: SeededStream,
    ledger: &mut WorkLedger,
) -> Result<Subspace<T>>
where
    T: Real,
    H: ModelHierarchy<T> + ?Sized,
{
    if r > hier.dim() {
        return Err(Error::InvalidInput(format!("rank {r} exceeds dimension {}", hier.dim())));
    }
    Ok(slas_spectrum(hier, level, m, stream, ledger)?.subspace(r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlas::FnHierarchy;
    use rand::Rng;

    fn e(d: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(d);
        v[i] = 1.0;
        v
    }

    #[test]
    fn covariance_examples() {
        let c = sample_covariance(&[e(3, 0), e(3, 0)]).unwrap();
        assert_eq!(c, e(3, 0) * e(3, 0).transpose());
        let c = sample_covariance(&[e(3, 0), e(3, 1)]).unwrap();
        assert_eq!(c, DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.5, 0.0])));
        assert!(sample_covariance::<f64>(&[]).is_err());
    }

    #[test]
    fn quadratic_gradient_covariance_matches_second_moment() {
        // grad of y^T A y / 2 is A y, second moment A^2 = diag(4, 1)
        let pts = draw_gaussian::<f64>(2, SeededStream::new(3, 0), 500);
        let grads: Vec<_> = pts.iter().map(|y| DVector::from_vec(vec![2.0 * y[0], y[1]])).collect();
        let c = sample_covariance(&grads).unwrap();
        // standard error of the mean of (a y)^2 is a^2 sqrt(2/n)
        let se = |a: f64| a * a * (2.0 / 500.0f64).sqrt();
        assert!((c[(0, 0)] - 4.0).abs() < 3.0 * se(2.0));
        assert!((c[(1, 1)] - 1.0).abs() < 3.0 * se(1.0));
        assert!(c[(0, 1)].abs() < 3.0 * 2.0 / 500.0f64.sqrt());
    }

    #[test]
    fn truncated_eig_examples() {
        let id = truncated_eig(&DMatrix::<f64>::identity(3, 3), 3).unwrap();
        assert_eq!(id.eigvals, vec![1.0, 1.0, 1.0]);
        let rank1 = truncated_eig(&(e(3, 0) * e(3, 0).transpose()), 1).unwrap();
        assert!((rank1.eigvals[0] - 1.0).abs() < 1e-15);
        assert!((rank1.eigvecs[(0, 0)].abs() - 1.0).abs() < 1e-15);
        let mut bad = DMatrix::<f64>::identity(2, 2);
        bad[(0, 1)] = 1e-3;
        assert!(matches!(truncated_eig(&bad, 1), Err(Error::NotSymmetric(_))));
        assert!(truncated_eig(&DMatrix::<f64>::identity(2, 2), 3).is_err());
    }

    #[test]
    fn truncated_eig_matches_full_eigensolve() {
        let mut rng = SeededStream::new(11, 0).rng();
        let f = DMatrix::<f64>::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
        let c = &f * f.transpose();
        let got = truncated_eig(&c, 2).unwrap();
        let full = SymmetricEigen::new(c.clone());
        let mut idx: Vec<usize> = (0..6).collect();
        idx.sort_by(|&a, &b| full.eigenvalues[b].partial_cmp(&full.eigenvalues[a]).unwrap());
        for (k, &i) in idx.iter().take(2).enumerate() {
            assert!((got.eigvals[k] - full.eigenvalues[i]).abs() < 1e-10);
            let dot = got.eigvecs.column(k).dot(&full.eigenvectors.column(i));
            assert!((dot.abs() - 1.0).abs() < 1e-10);
        }
        let recon = &got.eigvecs * DMatrix::from_diagonal(&DVector::from_vec(got.eigvals.clone())) * got.eigvecs.transpose();
        let resid = SymmetricEigen::new(c - recon).eigenvalues.amax();
        assert!((resid - full.eigenvalues[idx[2]]).abs() < 1e-10);
    }

    #[test]
    fn projector_distance_examples() {
        let a = Subspace::<f64>::identity(2, 1);
        let b = Subspace::from_direction(&e(2, 1)).unwrap();
        let c = Subspace::from_direction(&DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert!(projector_distance(&a, &a).unwrap() < 1e-15);
        assert!((projector_distance(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        assert!((projector_distance(&a, &c).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
    }

    fn random_grads(d: usize, m: usize, rank: usize, seed: u64) -> Vec<DVector<f64>> {
        let mut rng = SeededStream::new(seed, 0).rng();
        let basis = DMatrix::<f64>::from_fn(d, rank, |_, _| rng.random_range(-1.0..1.0));
        (0..m)
            .map(|_| &basis * DVector::from_fn(rank, |_, _| rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn snapshot_route_matches_dense_route() {
        let d = 12;
        let grads = random_grads(d, 5, 5, 4);
        let small = GradientSpectrum::from_gradients(&grads).unwrap();
        let dense_c = sample_covariance(&grads).unwrap();
        let dense = truncated_eig(&dense_c, d).unwrap();
        for j in 0..d {
            assert!((small.eigvals[j] - dense.eigvals[j]).abs() < 1e-12);
        }
        for j in 0..5 {
            let dot = small.eigvecs.column(j).dot(&dense.eigvecs.column(j));
            assert!((dot - 1.0).abs() < 1e-10, "column {j}: {dot}");
        }
        let ortho = small.eigvecs.transpose() * &small.eigvecs - DMatrix::identity(d, d);
        assert!(ortho.amax() < 1e-12);
        assert!((small.trace - dense_c.trace()).abs() < 1e-12);
    }

    #[test]
    fn trace_equals_eigenvalue_sum_and_tail_is_monotone() {
        for (m, seed) in [(4usize, 1u64), (30, 2)] {
            let grads = random_grads(10, m, 6, seed);
            let s = GradientSpectrum::from_gradients(&grads).unwrap();
            let direct: f64 = grads.iter().map(|g| g.norm_squared()).sum::<f64>() / m as f64;
            let sum: f64 = s.eigvals.iter().sum();
            assert!((sum - direct).abs() < 1e-10);
            assert!((s.trace - direct).abs() < 1e-10);
            for r in 0..10 {
                assert!(s.tail(r + 1) <= s.tail(r));
                assert!((s.tail(r) - s.block_energy(r, 10)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn complement_is_orthonormal_and_orthogonal() {
        let grads = random_grads(7, 20, 3, 9);
        let u = GradientSpectrum::from_gradients(&grads).unwrap().subspace(3);
        let w = u.complement();
        assert_eq!(w.ncols(), 4);
        assert!((w.transpose() * &w - DMatrix::identity(4, 4)).amax() < 1e-12);
        assert!((u.basis.transpose() * &w).amax() < 1e-12);
        assert_eq!(Subspace::<f64>::identity(3, 3).complement().ncols(), 0);
    }

    #[test]
    fn sign_convention_makes_first_entry_positive() {
        let grads = random_grads(5, 10, 5, 12);
        let s = GradientSpectrum::from_gradients(&grads).unwrap();
        for col in s.eigvecs.column_iter() {
            let first = col.iter().find(|v| v.abs() > 1e-8).unwrap();
            assert!(*first > 0.0);
        }
    }

    fn linear(c: DVector<f64>) -> FnHierarchy<f64, impl Fn(usize, &DVector<f64>) -> Result<f64> + Sync, impl Fn(usize, &DVector<f64>) -> Result<DVector<f64>> + Sync> {
        let c2 = c.clone();
        FnHierarchy::new(
            c.len(),
            0,
            move |_, y: &DVector<f64>| Ok(c.dot(y)),
            move |_, _: &DVector<f64>| Ok(c2.clone()),
        )
    }

    #[test]
    fn slas_recovers_linear_direction() {
        let c = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let hier = linear(c.clone());
        let mut ledger = WorkLedger::default();
        let u = slas_subspace(&hier, 0, 1, 1, SeededStream::new(1, 0), &mut ledger).unwrap();
        let target = Subspace::from_direction(&c).unwrap();
        assert!(projector_distance(&u, &target).unwrap() < 1e-12);
        assert!((u.singular_values[0].powi(2) - c.norm_squared()).abs() < 1e-12);
        assert_eq!(ledger.total_gradients(), 1);
    }

    #[test]
    fn slas_on_constant_model() {
        let hier = linear(DVector::zeros(5));
        let mut ledger = WorkLedger::default();
        let u = slas_subspace(&hier, 0, 2, 3, SeededStream::new(1, 0), &mut ledger).unwrap();
        assert!(u.singular_values.iter().all(|&s| s == 0.0));
        assert!((u.basis.transpose() * &u.basis - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn slas_recovers_sine_ridge() {
        let d = 10;
        let c = DVector::from_fn(d, |i, _| 1.0 / (1.0 + i as f64));
        let c2 = c.clone();
        let c3 = c.clone();
        let hier = FnHierarchy::new(
            d,
            0,
            move |_, y: &DVector<f64>| Ok(c2.dot(y).sin()),
            move |_, y: &DVector<f64>| Ok(&c3 * c3.dot(y).cos()),
        );
        let mut ledger = WorkLedger::default();
        let u = slas_subspace(&hier, 0, 1, 200, SeededStream::new(2, 0), &mut ledger).unwrap();
        let dist = projector_distance(&u, &Subspace::from_direction(&c).unwrap()).unwrap();
        assert!(dist < 1e-8, "{dist}");
    }

    #[test]
    fn ridge_of_rank_two_stays_in_span() {
        let d = 8;
        let v1 = DVector::from_fn(d, |i, _| (i as f64).cos());
        let v2 = DVector::from_fn(d, |i, _| 1.0 / (1.0 + i as f64));
        let (a1, a2, b1, b2) = (v1.clone(), v2.clone(), v1.clone(), v2.clone());
        let hier = FnHierarchy::new(
            d,
            0,
            move |_, y: &DVector<f64>| Ok((a1.dot(y)).exp() * 0.1 + a2.dot(y).powi(2)),
            move |_, y: &DVector<f64>| Ok(&b1 * (0.1 * b1.dot(y).exp()) + &b2 * (2.0 * b2.dot(y))),
        );
        let mut ledger = WorkLedger::default();
        let s = slas_spectrum(&hier, 0, 20, SeededStream::new(5, 0), &mut ledger).unwrap();
        assert!(s.tail(2) < 1e-10 * s.trace);
        let span = Subspace::new(
            DMatrix::from_columns(&[v1.normalize(), {
                let mut w = v2.clone();
                let n1 = v1.normalize();
                w.axpy(-n1.dot(&v2), &n1, 1.0);
                w.normalize()
            }]),
            vec![1.0, 1.0],
        )
        .unwrap();
        assert!(projector_distance(&s.subspace(2), &span).unwrap() < 1e-8);
    }

    #[test]
    fn subspace_json_round_trip_and_validation() {
        let grads = random_grads(4, 10, 2, 3);
        let u = GradientSpectrum::from_gradients(&grads).unwrap().subspace(2);
        let text = serde_json::to_string(&u).unwrap();
        let back: Subspace<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, u);
        assert!(serde_json::from_str::<Subspace<f64>>(r#"{"basis":[[1.0],[1.0]],"singular_values":[1.0]}"#).is_err());
    }

    #[test]
    fn single_precision_spectrum() {
        let grads: Vec<DVector<f32>> = vec![DVector::from_vec(vec![1.0, 0.0, 0.0]), DVector::from_vec(vec![0.0, 2.0, 0.0])];
        let s = GradientSpectrum::from_gradients(&grads).unwrap();
        assert!((s.eigvals[0] - 2.0).abs() < 1e-6);
        assert!((s.eigvals[1] - 0.5).abs() < 1e-6);
    }
}
