//! Normalized probabilists' Hermite polynomials, their tensor products, and
//! downward-closed multi-index sets.
//!
//! `H_n` is orthonormal with respect to the standard Gaussian density and is
//! generated by the recurrence
//! `H_{n+1}(x) = (x H_n(x) - sqrt(n) H_{n-1}(x)) / sqrt(n + 1)`.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Evaluates `H_0(x), ..., H_nmax(x)`.
pub fn hermite_eval_all<T: Real>(nmax: usize, x: T) -> Result<Vec<T>> {
    if !x.is_finite() {
        return Err(Error::NonFinite("hermite_eval_all"));
    }
    let mut out = vec![T::zero(); nmax + 1];
    hermite_fill(x, &mut out);
    Ok(out)
}

/// Fills `out[n] = H_n(x)` for `n < out.len()`. No input checks.
#[inline]
pub(crate) fn hermite_fill<T: Real>(x: T, out: &mut [T]) {
    if out.is_empty() {
        return;
    }
    out[0] = T::one();
    if out.len() > 1 {
        out[1] = x;
    }
    for n in 1..out.len().saturating_sub(1) {
        let nf = T::from_usize_lossy(n);
        out[n + 1] = (x * out[n] - nf.sqrt() * out[n - 1]) / (nf + T::one()).sqrt();
    }
}

/// Single normalized Hermite polynomial `H_n(x)`.
pub fn hermite<T: Real>(n: usize, x: T) -> T {
    let mut buf = vec![T::zero(); n + 1];
    hermite_fill(x, &mut buf);
    buf[n]
}

/// Gauss–Hermite rule for the standard Gaussian measure (weights sum to one),
/// computed by Golub–Welsch on the Jacobi matrix of the normalized recurrence.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature needs at least one node");
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        jacobi[(k, k - 1)] = b;
        jacobi[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Degree multi-index stored sparsely as `(position, degree)` pairs with
/// strictly increasing positions and nonzero degrees.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct MultiIndex {
    entries: Vec<(u32, u32)>,
}

impl MultiIndex {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_dense(degrees: &[u32]) -> Self {
        let entries = degrees
            .iter()
            .enumerate()
            .filter(|(_, &d)| d > 0)
            .map(|(p, &d)| (p as u32, d))
            .collect();
        Self { entries }
    }

    /// Builds an index from `(position, degree)` pairs in any order. Zero
    /// degrees are dropped; repeated positions are rejected.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        let mut entries: Vec<(u32, u32)> = pairs.into_iter().filter(|&(_, d)| d > 0).collect();
        entries.sort_unstable();
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidInput("repeated position in multi-index".into()));
        }
        Ok(Self { entries })
    }

    /// Unit index `e_pos`.
    pub fn unit(pos: usize) -> Self {
        Self {
            entries: vec![(pos as u32, 1)],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn degree(&self, pos: usize) -> u32 {
        self.entries
            .binary_search_by_key(&(pos as u32), |e| e.0)
            .map(|i| self.entries[i].1)
            .unwrap_or(0)
    }

    pub fn total_degree(&self) -> u32 {
        self.entries.iter().map(|e| e.1).sum()
    }

    /// One past the last position carrying a nonzero degree.
    pub fn support_len(&self) -> usize {
        self.entries.last().map_or(0, |e| e.0 as usize + 1)
    }

    /// Nonzero `(position, degree)` entries in increasing position.
    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.entries.iter().map(|&(p, d)| (p as usize, d))
    }

    pub fn to_dense(&self, dim: usize) -> Vec<u32> {
        let mut out = vec![0; dim.max(self.support_len())];
        for (p, d) in self.iter() {
            out[p] = d;
        }
        out
    }

    pub fn incremented(&self, pos: usize) -> Self {
        let mut entries = self.entries.clone();
        match entries.binary_search_by_key(&(pos as u32), |e| e.0) {
            Ok(i) => entries[i].1 += 1,
            Err(i) => entries.insert(i, (pos as u32, 1)),
        }
        Self { entries }
    }

    pub fn decremented(&self, pos: usize) -> Option<Self> {
        let i = self.entries.binary_search_by_key(&(pos as u32), |e| e.0).ok()?;
        let mut entries = self.entries.clone();
        if entries[i].1 == 1 {
            entries.remove(i);
        } else {
            entries[i].1 -= 1;
        }
        Some(Self { entries })
    }

    /// All indices obtained by lowering one nonzero entry by one.
    pub fn predecessors(&self) -> impl Iterator<Item = MultiIndex> + '_ {
        self.iter().filter_map(move |(p, _)| self.decremented(p))
    }
}

/// Graded order: total degree first, then dense degree vectors compared
/// lexicographically in decreasing order, so `(1,0) < (0,1)` and
/// `(2,0) < (1,1) < (0,2)`.
impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.total_degree()
            .cmp(&other.total_degree())
            .then_with(|| {
                let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
                loop {
                    match (a.peek(), b.peek()) {
                        (None, None) => return Ordering::Equal,
                        (Some(_), None) => return Ordering::Less,
                        (None, Some(_)) => return Ordering::Greater,
                        (Some(&&(pa, da)), Some(&&(pb, db))) => {
                            if pa != pb {
                                // the index with the earlier nonzero position is larger there
                                return if pa < pb { Ordering::Less } else { Ordering::Greater };
                            }
                            if da != db {
                                return db.cmp(&da);
                            }
                            a.next();
                            b.next();
                        }
                    }
                }
            })
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Serialize for MultiIndex {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.entries.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MultiIndex {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pairs = Vec::<(u32, u32)>::deserialize(d)?;
        MultiIndex::from_pairs(pairs).map_err(serde::de::Error::custom)
    }
}

/// Product `prod_j H_{nu_j}(x_j)`.
pub fn tensor_eval<T: Real>(nu: &MultiIndex, x: &[T]) -> Result<T> {
    if nu.support_len() > x.len() {
        return Err(Error::DimensionMismatch {
            expected: nu.support_len(),
            found: x.len(),
        });
    }
    Ok(nu.iter().fold(T::one(), |acc, (p, d)| acc * hermite(d as usize, x[p])))
}

/// True iff every predecessor of every member is also a member.
pub fn is_downward_closed<'a>(set: impl IntoIterator<Item = &'a MultiIndex>) -> bool {
    let members: HashSet<&MultiIndex> = set.into_iter().collect();
    members
        .iter()
        .all(|nu| nu.predecessors().all(|p| members.contains(&p)))
}

/// Downward-closed set of multi-indices supported on the first `dim`
/// coordinates. Member order is fixed at construction and defines the order of
/// coefficient vectors.
#[derive(Clone, Debug)]
pub struct MultiIndexSet {
    dim: usize,
    indices: Vec<MultiIndex>,
    lookup: HashMap<MultiIndex, usize>,
}

impl PartialEq for MultiIndexSet {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.indices == other.indices
    }
}

impl MultiIndexSet {
    pub fn new(dim: usize, indices: Vec<MultiIndex>) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(indices.len());
        for (i, nu) in indices.iter().enumerate() {
            if nu.support_len() > dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: nu.support_len(),
                });
            }
            if lookup.insert(nu.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate multi-index {nu:?}")));
            }
        }
        let set = Self { dim, indices, lookup };
        if !set
            .indices
            .iter()
            .all(|nu| nu.predecessors().all(|p| set.lookup.contains_key(&p)))
        {
            return Err(Error::NotDownwardClosed);
        }
        Ok(set)
    }

    /// `{0}` on `dim` active variables.
    pub fn constant(dim: usize) -> Self {
        Self::new(dim, vec![MultiIndex::zero()]).expect("zero index is downward closed")
    }

    /// All indices with total degree at most `degree`, in graded order.
    pub fn total_degree(dim: usize, degree: u32) -> Self {
        let mut out = Vec::new();
        let mut current = vec![0u32; dim];
        fn rec(pos: usize, left: u32, current: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
            if pos == current.len() {
                out.push(MultiIndex::from_dense(current));
                return;
            }
            for d in 0..=left {
                current[pos] = d;
                rec(pos + 1, left - d, current, out);
            }
            current[pos] = 0;
        }
        if dim == 0 {
            out.push(MultiIndex::zero());
        } else {
            rec(0, degree, &mut current, &mut out);
        }
        out.sort();
        Self::new(dim, out).expect("total-degree sets are downward closed")
    }

    /// First `m` indices of the graded order on `dim` variables. Every prefix
    /// of the graded order is downward closed.
    pub fn graded(dim: usize, m: usize) -> Self {
        assert!(m >= 1, "graded set needs at least one index");
        let mut degree = 0;
        loop {
            let full = Self::total_degree(dim, degree);
            if full.len() >= m || dim == 0 {
                let mut indices = full.indices;
                indices.truncate(m);
                return Self::new(dim, indices).expect("graded prefix is downward closed");
            }
            degree += 1;
        }
    }

    /// Number of indices of total degree at most `degree` on `dim` variables,
    /// `binom(dim + degree, degree)`.
    pub fn total_degree_size(dim: usize, degree: u32) -> usize {
        let mut acc: u128 = 1;
        for i in 1..=degree as u128 {
            acc = acc * (dim as u128 + i) / i;
        }
        acc as usize
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn iter(&self) -> std::slice::Iter<'_, MultiIndex> {
        self.indices.iter()
    }

    pub fn contains(&self, nu: &MultiIndex) -> bool {
        self.lookup.contains_key(nu)
    }

    pub fn position(&self, nu: &MultiIndex) -> Option<usize> {
        self.lookup.get(nu).copied()
    }

    /// Same indices viewed on a different number of active variables.
    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        Self::new(dim, self.indices.clone())
    }

    /// Appends `extra` (in the given order) and re-validates closure.
    pub fn extended(&self, extra: impl IntoIterator<Item = MultiIndex>) -> Result<Self> {
        let mut indices = self.indices.clone();
        indices.extend(extra.into_iter().filter(|nu| !self.contains(nu)));
        Self::new(self.dim, indices)
    }

    /// Indices outside the set whose predecessors all lie inside it, in graded
    /// order. Adding any subset of them keeps the set downward closed.
    pub fn reduced_margin(&self) -> Vec<MultiIndex> {
        let mut out = BTreeSet::new();
        for nu in &self.indices {
            for pos in 0..self.dim {
                let cand = nu.incremented(pos);
                if !self.contains(&cand) && cand.predecessors().all(|p| self.contains(&p)) {
                    out.insert(cand);
                }
            }
        }
        out.into_iter().collect()
    }

    /// Largest degree per active coordinate.
    pub fn max_degrees(&self) -> Vec<u32> {
        let mut out = vec![0; self.dim];
        for nu in &self.indices {
            for (p, d) in nu.iter() {
                out[p] = out[p].max(d);
            }
        }
        out
    }

    /// Writes every basis function `H_nu(x)` into `out` (set order).
    pub fn eval_basis<T: Real>(&self, x: &[T], out: &mut [T]) -> Result<()> {
        let evaluator = BasisEvaluator::new(self);
        evaluator.eval(self, x, out)
    }
}

/// Caches per-coordinate degree bounds for repeated basis evaluation.
pub(crate) struct BasisEvaluator {
    max_degrees: Vec<u32>,
}

impl BasisEvaluator {
    pub(crate) fn new(set: &MultiIndexSet) -> Self {
        Self {
            max_degrees: set.max_degrees(),
        }
    }

    pub(crate) fn eval<T: Real>(&self, set: &MultiIndexSet, x: &[T], out: &mut [T]) -> Result<()> {
        if x.len() != set.dim() {
            return Err(Error::DimensionMismatch {
                expected: set.dim(),
                found: x.len(),
            });
        }
        debug_assert_eq!(out.len(), set.len());
        let tables: Vec<Vec<T>> = self
            .max_degrees
            .iter()
            .zip(x)
            .map(|(&n, &xi)| {
                let mut t = vec![T::zero(); n as usize + 1];
                hermite_fill(xi, &mut t);
                t
            })
            .collect();
        for (slot, nu) in out.iter_mut().zip(set.iter()) {
            *slot = nu
                .iter()
                .fold(T::one(), |acc, (p, d)| acc * tables[p][d as usize]);
        }
        Ok(())
    }
}

impl Serialize for MultiIndexSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.indices.serialize(s)
    }
}

/// Deserializes from the bare array-of-pair-lists form; the active dimension
/// is taken as the largest support. Callers that know the true dimension
/// should follow up with [`MultiIndexSet::with_dim`].
impl<'de> Deserialize<'de> for MultiIndexSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let indices = Vec::<MultiIndex>::deserialize(d)?;
        let dim = indices.iter().map(MultiIndex::support_len).max().unwrap_or(0);
        MultiIndexSet::new(dim, indices).map_err(serde::de::Error::custom)
    }
}
