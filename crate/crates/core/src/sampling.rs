//! Gaussian and optimal least-squares sampling.
//!
//! The optimal measure for a space spanned by `{H_nu : nu in Xi}` has density
//! `(1/m) sum_nu H_nu(x)^2` with respect to the Gaussian. It is an equal-weight
//! mixture of product densities `prod_j H_{nu_j}(x_j)^2 phi(x_j)`, so a draw
//! picks a component uniformly and then samples each coordinate independently
//! from its univariate factor by numerical inverse CDF.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polyspace::{hermite_fill, MultiIndexSet};
use crate::scalar::Real;

/// Reproducible random stream identified by `(seed, stream)`.
///
/// Distinct stream ids select independent ChaCha streams. [`child`](Self::child)
/// derives sub-streams by mixing a tag into the id, so every Monte Carlo index
/// can own a stream and parallel and serial runs draw identical numbers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeededStream {
    pub seed: u64,
    pub stream: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeededStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn child(&self, tag: u64) -> Self {
        Self {
            seed: self.seed,
            stream: splitmix64(self.stream ^ splitmix64(tag.wrapping_add(0x5851_F42D_4C95_7F2D))),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// An optimal-measure draw with its weight `w(x) = m / sum_nu H_nu(x)^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSample<T: Real> {
    pub point: DVector<T>,
    pub weight: T,
}

/// `n` i.i.d. standard normal vectors in `R^dim`; draw `i` uses `stream.child(i)`.
pub fn draw_gaussian<T: Real>(dim: usize, stream: SeededStream, n: usize) -> Vec<DVector<T>> {
    (0..n)
        .into_par_iter()
        .map(|i| gaussian_point(dim, stream.child(i as u64)))
        .collect()
}

pub(crate) fn gaussian_point<T: Real>(dim: usize, stream: SeededStream) -> DVector<T> {
    let mut rng = stream.rng();
    DVector::from_iterator(
        dim,
        (0..dim).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))),
    )
}

/// `w(x) = m / sum_nu H_nu(x)^2`.
pub fn optimal_weight<T: Real>(xi: &MultiIndexSet, x: &[T]) -> Result<T> {
    if xi.is_empty() {
        return Err(Error::InvalidInput("optimal weight needs a nonempty index set".into()));
    }
    let mut basis = vec![T::zero(); xi.len()];
    xi.eval_basis(x, &mut basis)?;
    let denom = basis.iter().fold(T::zero(), |acc, &v| acc + v * v);
    if !(denom > T::zero()) || !denom.is_finite() {
        return Err(Error::InvalidInput("Christoffel sum vanished".into()));
    }
    Ok(T::from_usize_lossy(xi.len()) / denom)
}

/// `n` i.i.d. draws from the optimal measure of `xi`; draw `i` uses
/// `stream.child(i)`.
pub fn draw_optimal<T: Real>(
    xi: &MultiIndexSet,
    stream: SeededStream,
    n: usize,
) -> Result<Vec<WeightedSample<T>>> {
    if xi.is_empty() {
        return Err(Error::InvalidInput("cannot sample an empty index set".into()));
    }
    let max_deg = xi.max_degrees().into_iter().max().unwrap_or(0);
    let tables: Vec<Option<Arc<SquaredHermiteTable>>> = (0..=max_deg)
        .map(|d| (d > 0).then(|| SquaredHermiteTable::cached(d)))
        .collect();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.child(i as u64).rng();
            let component = &xi.indices()[rng.random_range(0..xi.len())];
            let point = DVector::from_iterator(
                xi.dim(),
                (0..xi.dim()).map(|j| {
                    let x = match &tables[component.degree(j) as usize] {
                        None => rng.sample::<f64, _>(StandardNormal),
                        Some(table) => table.sample(open_unit(&mut rng)),
                    };
                    T::lit(x)
                }),
            );
            let weight = optimal_weight(xi, point.as_slice())?;
            Ok(WeightedSample { point, weight })
        })
        .collect()
}

fn open_unit(rng: &mut impl Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

const TABLE_TOLERANCE: f64 = 1e-10;

/// Tabulated CDF of the density `H_n(t)^2 phi(t)` on `[-R_n, R_n]` with
/// `R_n = sqrt(2(2n+1)) + 6`.
///
/// Cell masses come from composite Simpson; the grid is halved until both the
/// cumulative values and the cubic Hermite interpolant at cell midpoints agree
/// with the refined grid to `1e-10`. Inversion solves the interpolant on the
/// bracketing cell.
#[derive(Debug)]
pub(crate) struct SquaredHermiteTable {
    lo: f64,
    step: f64,
    cdf: Vec<f64>,
    pdf: Vec<f64>,
}

fn squared_hermite_density(n: usize, t: f64, buf: &mut [f64]) -> f64 {
    hermite_fill(t, &mut buf[..=n]);
    buf[n] * buf[n] * (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

impl SquaredHermiteTable {
    pub(crate) fn cached(degree: u32) -> Arc<Self> {
        static CACHE: OnceLock<RwLock<HashMap<u32, Arc<SquaredHermiteTable>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(t) = cache.read().expect("table cache poisoned").get(&degree) {
            return Arc::clone(t);
        }
        let table = Arc::new(Self::build(degree as usize));
        cache
            .write()
            .expect("table cache poisoned")
            .entry(degree)
            .or_insert(table)
            .clone()
    }

    fn tabulate(n: usize, radius: f64, cells: usize) -> (Vec<f64>, Vec<f64>) {
        let step = 2.0 * radius / cells as f64;
        let mut buf = vec![0.0; n + 1];
        let pdf: Vec<f64> = (0..=cells)
            .map(|i| squared_hermite_density(n, -radius + i as f64 * step, &mut buf))
            .collect();
        let mut cdf = Vec::with_capacity(cells + 1);
        cdf.push(0.0);
        for i in 0..cells {
            let mid = squared_hermite_density(n, -radius + (i as f64 + 0.5) * step, &mut buf);
            let mass = step / 6.0 * (pdf[i] + 4.0 * mid + pdf[i + 1]);
            cdf.push(cdf[i] + mass);
        }
        (cdf, pdf)
    }

    pub(crate) fn build(n: usize) -> Self {
        let radius = (2.0 * (2.0 * n as f64 + 1.0)).sqrt() + 6.0;
        let mut cells = 512usize;
        let (mut cdf, mut pdf) = Self::tabulate(n, radius, cells);
        loop {
            let (fine_cdf, fine_pdf) = Self::tabulate(n, radius, 2 * cells);
            let step = 2.0 * radius / cells as f64;
            let mut err: f64 = 0.0;
            for i in 0..cells {
                err = err.max((cdf[i + 1] - fine_cdf[2 * i + 2]).abs());
                let interp = hermite_cubic(cdf[i], cdf[i + 1], pdf[i], pdf[i + 1], step, 0.5);
                err = err.max((interp - fine_cdf[2 * i + 1]).abs());
            }
            cells *= 2;
            cdf = fine_cdf;
            pdf = fine_pdf;
            if err < TABLE_TOLERANCE || cells >= 1 << 22 {
                break;
            }
        }
        let total = *cdf.last().expect("nonempty table");
        debug_assert!((1.0 - total).abs() < 1e-9, "tail mass too large: {}", 1.0 - total);
        for (c, p) in cdf.iter_mut().zip(pdf.iter_mut()) {
            *c /= total;
            *p /= total;
        }
        Self {
            lo: -radius,
            step: 2.0 * radius / cells as f64,
            cdf,
            pdf,
        }
    }

    /// Quantile at `u` in `(0, 1)`.
    pub(crate) fn sample(&self, u: f64) -> f64 {
        let cells = self.cdf.len() - 1;
        let i = self.cdf.partition_point(|&c| c < u).clamp(1, cells) - 1;
        let (f0, f1, p0, p1) = (self.cdf[i], self.cdf[i + 1], self.pdf[i], self.pdf[i + 1]);
        let h = self.step;
        if f1 <= f0 {
            return self.lo + (i as f64 + 0.5) * h;
        }
        // safeguarded Newton on the cell's cubic interpolant, s in [0, 1]
        let (mut a, mut b) = (0.0f64, 1.0f64);
        let mut s = ((u - f0) / (f1 - f0)).clamp(0.0, 1.0);
        for _ in 0..60 {
            let g = hermite_cubic(f0, f1, p0, p1, h, s) - u;
            if g.abs() < 1e-15 {
                break;
            }
            if g > 0.0 {
                b = s;
            } else {
                a = s;
            }
            let dg = hermite_cubic_slope(f0, f1, p0, p1, h, s);
            let newton = s - g / dg;
            s = if dg > 0.0 && newton > a && newton < b {
                newton
            } else {
                0.5 * (a + b)
            };
            if b - a < 1e-15 {
                break;
            }
        }
        self.lo + (i as f64 + s) * h
    }

    #[cfg(test)]
    pub(crate) fn cdf_at(&self, x: f64) -> f64 {
        let cells = self.cdf.len() - 1;
        let pos = ((x - self.lo) / self.step).clamp(0.0, cells as f64);
        let i = (pos.floor() as usize).min(cells - 1);
        hermite_cubic(
            self.cdf[i],
            self.cdf[i + 1],
            self.pdf[i],
            self.pdf[i + 1],
            self.step,
            pos - i as f64,
        )
    }
}

/// Cubic Hermite interpolant on a cell of width `h` at relative position `s`.
fn hermite_cubic(f0: f64, f1: f64, d0: f64, d1: f64, h: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * f0
        + (s3 - 2.0 * s2 + s) * h * d0
        + (-2.0 * s3 + 3.0 * s2) * f1
        + (s3 - s2) * h * d1
}

/// Derivative of [`hermite_cubic`] with respect to `s`.
fn hermite_cubic_slope(f0: f64, f1: f64, d0: f64, d1: f64, h: f64, s: f64) -> f64 {
    let s2 = s * s;
    (6.0 * s2 - 6.0 * s) * f0
        + (3.0 * s2 - 4.0 * s + 1.0) * h * d0
        + (-6.0 * s2 + 6.0 * s) * f1
        + (3.0 * s2 - 2.0 * s) * h * d1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyspace::{gauss_hermite, hermite};

    #[test]
    fn gaussian_draws_are_deterministic() {
        let s = SeededStream::new(7, 0);
        let a: Vec<DVector<f64>> = draw_gaussian(3, s, 2);
        let b: Vec<DVector<f64>> = draw_gaussian(3, s, 2);
        assert_eq!(a, b);
        let c: Vec<DVector<f64>> = draw_gaussian(3, SeededStream::new(7, 1), 2);
        assert_ne!(a, c);
    }

    #[test]
    fn gaussian_moments() {
        let pts: Vec<DVector<f64>> = draw_gaussian(2, SeededStream::new(1, 0), 100_000);
        let n = pts.len() as f64;
        let mean0 = pts.iter().map(|p| p[0]).sum::<f64>() / n;
        let var0 = pts.iter().map(|p| (p[0] - mean0).powi(2)).sum::<f64>() / n;
        assert!(mean0.abs() < 4.0 * 10f64.powf(-2.5));
        assert!((var0 - 1.0).abs() < 0.05);
        let mean1 = pts.iter().map(|p| p[1]).sum::<f64>() / n;
        let var1 = pts.iter().map(|p| (p[1] - mean1).powi(2)).sum::<f64>() / n;
        let cov = pts.iter().map(|p| (p[0] - mean0) * (p[1] - mean1)).sum::<f64>() / n;
        assert!((cov / (var0 * var1).sqrt()).abs() < 0.02);
    }

    #[test]
    fn optimal_weight_cases() {
        let c = MultiIndexSet::constant(2);
        assert_eq!(optimal_weight(&c, &[0.3, -4.0]).unwrap(), 1.0);
        let lin = MultiIndexSet::total_degree(1, 1);
        assert_eq!(optimal_weight(&lin, &[0.0]).unwrap(), 2.0);
        // size-6 set against direct summation
        let xi = MultiIndexSet::total_degree(2, 2);
        let x = [0.83, -1.27];
        let sum: f64 = xi
            .iter()
            .map(|nu| {
                let v = crate::polyspace::tensor_eval(nu, &x).unwrap();
                v * v
            })
            .sum();
        assert!((optimal_weight(&xi, &x).unwrap() - 6.0 / sum).abs() < 1e-12);
    }

    #[test]
    fn table_cdf_matches_quadrature() {
        // CDF of H_n^2 phi at a few points vs high-order Gauss–Legendre-free check:
        // integrate with a very fine trapezoid on the truncated interval.
        for n in [1usize, 3, 7] {
            let table = SquaredHermiteTable::build(n);
            for &x in &[-1.5, -0.2, 0.0, 0.9, 2.4] {
                let steps = 200_000;
                let lo = -12.0;
                let h = (x - lo) / steps as f64;
                let mut acc = 0.0;
                for i in 0..=steps {
                    let t = lo + i as f64 * h;
                    let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
                    let hn = hermite(n, t);
                    acc += w * hn * hn * (-0.5 * t * t).exp();
                }
                acc *= h / (2.0 * std::f64::consts::PI).sqrt();
                assert!((table.cdf_at(x) - acc).abs() < 1e-8, "n={n} x={x}");
            }
        }
    }

    #[test]
    fn table_inverse_roundtrip() {
        let table = SquaredHermiteTable::build(4);
        for &u in &[1e-6, 0.01, 0.3, 0.5, 0.77, 0.999_999] {
            let x = table.sample(u);
            assert!((table.cdf_at(x) - u).abs() < 1e-12, "u={u}");
        }
    }

    #[test]
    fn constant_set_is_gaussian_with_unit_weights() {
        let xi = MultiIndexSet::constant(2);
        let s = draw_optimal::<f64>(&xi, SeededStream::new(3, 0), 1000).unwrap();
        assert!(s.iter().all(|w| w.weight == 1.0));
        let mean = s.iter().map(|w| w.point[0]).sum::<f64>() / 1000.0;
        assert!(mean.abs() < 0.15);
    }

    #[test]
    fn single_linear_component_second_moment() {
        // the mixture component nu = (1) on its own
        let table = SquaredHermiteTable::build(1);
        let mut rng = SeededStream::new(11, 0).rng();
        let n = 100_000;
        let m2 = (0..n).map(|_| table.sample(open_unit(&mut rng)).powi(2)).sum::<f64>() / n as f64;
        assert!((m2 - 3.0).abs() < 0.15, "second moment {m2}");
    }

    #[test]
    fn weighted_basis_products_are_unbiased() {
        let xi = MultiIndexSet::total_degree(2, 2);
        let n = 100_000;
        let s = draw_optimal::<f64>(&xi, SeededStream::new(5, 9), n).unwrap();
        let m = xi.len();
        let mut basis = vec![0.0; m];
        let mut sums = vec![vec![0.0; m]; m];
        let mut sq = vec![vec![0.0; m]; m];
        for w in &s {
            xi.eval_basis(w.point.as_slice(), &mut basis).unwrap();
            let k: f64 = basis.iter().map(|b| b * b).sum();
            assert!((w.weight * k - m as f64).abs() < 1e-10);
            for a in 0..m {
                for b in 0..m {
                    let v = w.weight * basis[a] * basis[b];
                    sums[a][b] += v;
                    sq[a][b] += v * v;
                }
            }
        }
        for a in 0..m {
            for b in 0..m {
                let mean = sums[a][b] / n as f64;
                let var = sq[a][b] / n as f64 - mean * mean;
                let se = (var / n as f64).sqrt();
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((mean - target).abs() <= 3.0 * se + 1e-12, "({a},{b}): {mean} ± {se}");
            }
        }
    }

    #[test]
    fn optimal_draws_are_reproducible() {
        let xi = MultiIndexSet::total_degree(3, 3);
        let a = draw_optimal::<f64>(&xi, SeededStream::new(2, 4), 50).unwrap();
        let b = draw_optimal::<f64>(&xi, SeededStream::new(2, 4), 50).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gauss_hermite_weights_sum_to_one() {
        let (x, w) = gauss_hermite(20);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        assert!((m2 - 1.0).abs() < 1e-12);
    }
}
