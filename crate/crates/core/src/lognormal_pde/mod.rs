//! Log-normal diffusion benchmark: `-div(exp(b(y)) grad u) = forcing` on the
//! unit square with zero Dirichlet data, P1 elements on uniform right-triangle
//! meshes, spatial average as quantity of interest and adjoint gradients.
//!
//! `b(y) = b_bar + sum_i y_i psi_i(x)` with Fourier modes of amplitude
//! `j^-alpha`; see [`ModeMapping`] for how parameters map to modes.

pub mod banded;

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use self::banded::{BandedCholesky, BandedSpd};
use crate::error::{Error, Result};
use crate::mlas::ModelHierarchy;
use crate::scalar::Real;

/// How parameter `i` (1-based) selects a mode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeMapping {
    /// `j = ceil(i/2)`; even `i` gives `cos(j pi x1)`, odd `i` gives
    /// `sin(j pi x2)`, so parameter 1 is `sin(pi x2)`.
    #[default]
    Interleaved,
    /// Parameter `i` is mode `m = i + 1`: even `m` gives `cos((m/2) pi x1)`,
    /// odd `m` gives `sin(((m-1)/2) pi x2)`.
    Shifted,
}

impl ModeMapping {
    /// `(j, is_cosine)` for 1-based parameter `i`.
    pub fn mode(self, i: usize) -> (usize, bool) {
        match self {
            ModeMapping::Interleaved => (i.div_ceil(2), i.is_multiple_of(2)),
            ModeMapping::Shifted => {
                let m = i + 1;
                if m.is_multiple_of(2) {
                    (m / 2, true)
                } else {
                    ((m - 1) / 2, false)
                }
            }
        }
    }
}

fn default_n0() -> usize {
    4
}
fn default_gamma() -> f64 {
    2.0
}
fn default_forcing() -> f64 {
    1.0
}
fn default_amplitude() -> f64 {
    1.0
}

/// Benchmark parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub d: usize,
    pub alpha: f64,
    pub b_bar: f64,
    /// Cells per side on level 0.
    #[serde(default = "default_n0")]
    pub n0: usize,
    pub max_level: usize,
    /// Work model exponent: cost `h_l^-gamma`.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Constant right-hand side.
    #[serde(default = "default_forcing")]
    pub forcing: f64,
    #[serde(default)]
    pub mapping: ModeMapping,
    /// Common factor on every mode.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            d: 100,
            alpha: 2.0,
            b_bar: -4.6,
            n0: 4,
            max_level: 4,
            gamma: 2.0,
            forcing: 1.0,
            mapping: ModeMapping::Interleaved,
            amplitude: 1.0,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.into()));
        if self.d == 0 {
            return bad("d must be at least 1");
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return bad("alpha must be positive");
        }
        if !self.b_bar.is_finite() || !self.forcing.is_finite() || !self.amplitude.is_finite() {
            return bad("b_bar, forcing and amplitude must be finite");
        }
        if self.n0 < 2 {
            return bad("n0 must be at least 2");
        }
        if !(self.gamma > 0.0) {
            return bad("gamma must be positive");
        }
        if self.max_level > 12 {
            return bad("max_level above 12 is not supported");
        }
        Ok(())
    }

    pub fn cells(&self, level: usize) -> usize {
        self.n0 << level
    }

    pub fn mesh_size(&self, level: usize) -> f64 {
        1.0 / self.cells(level) as f64
    }

    /// `psi_i(x)` for 1-based parameter `i`.
    pub fn psi(&self, i: usize, x: [f64; 2]) -> f64 {
        let (j, cosine) = self.mapping.mode(i);
        let amp = self.amplitude * (j as f64).powf(-self.alpha);
        let arg = j as f64 * std::f64::consts::PI;
        if cosine {
            amp * (arg * x[0]).cos()
        } else {
            amp * (arg * x[1]).sin()
        }
    }
}

/// One triangle: vertex node ids, barycentric gradients, area.
#[derive(Clone, Debug)]
struct Element {
    nodes: [usize; 3],
    grads: [[f64; 2]; 3],
    area: f64,
    centroid: [f64; 2],
}

/// Mesh data for one level; `psi` is `d x elements`.
struct Mesh<T: Real> {
    n: usize,
    elements: Vec<Element>,
    /// Grid node -> unknown index (interior nodes only).
    unknown: Vec<Option<usize>>,
    n_unknowns: usize,
    psi: DMatrix<T>,
}

fn triangle(nodes: [usize; 3], p: [[f64; 2]; 3]) -> Element {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let area = 0.5 * det.abs();
    let mut grads = [[0.0; 2]; 3];
    for a in 0..3 {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        // gradient of the hat function that is 1 at vertex a
        grads[a] = [(p[b][1] - p[c][1]) / det, (p[c][0] - p[b][0]) / det];
    }
    Element {
        nodes,
        grads,
        area,
        centroid: [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0],
    }
}

impl<T: Real> Mesh<T> {
    fn build(cfg: &BenchmarkConfig, level: usize) -> Self {
        let n = cfg.cells(level);
        let h = 1.0 / n as f64;
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut unknown = vec![None; (n + 1) * (n + 1)];
        let mut count = 0;
        for j in 1..n {
            for i in 1..n {
                unknown[id(i, j)] = Some(count);
                count += 1;
            }
        }
        let mut elements = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let x = |i: usize, j: usize| [i as f64 * h, j as f64 * h];
                // diagonal from (i, j) to (i + 1, j + 1)
                elements.push(triangle(
                    [id(i, j), id(i + 1, j), id(i + 1, j + 1)],
                    [x(i, j), x(i + 1, j), x(i + 1, j + 1)],
                ));
                elements.push(triangle(
                    [id(i, j), id(i + 1, j + 1), id(i, j + 1)],
                    [x(i, j), x(i + 1, j + 1), x(i, j + 1)],
                ));
            }
        }
        let psi = DMatrix::from_fn(cfg.d, elements.len(), |p, e| T::lit(cfg.psi(p + 1, elements[e].centroid)));
        Self {
            n,
            elements,
            unknown,
            n_unknowns: count,
            psi,
        }
    }
}

/// Nodal values on the `(n + 1)^2` grid of one level, zero on the boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteField<T> {
    pub level: usize,
    /// Cells per side.
    pub n: usize,
    /// Row-major in `x2`: node `(i, j)` is at `j (n + 1) + i`.
    pub values: Vec<T>,
}

impl<T: Real> DiscreteField<T> {
    pub fn at(&self, i: usize, j: usize) -> T {
        self.values[j * (self.n + 1) + i]
    }
}

/// Solved state together with the factorization, reused by the adjoint.
struct State<T: Real> {
    field: DiscreteField<T>,
    coefficient: Vec<T>,
    factor: BandedCholesky<T>,
}

/// The benchmark as a [`ModelHierarchy`].
pub struct LognormalBenchmark<T: Real> {
    cfg: BenchmarkConfig,
    meshes: Vec<OnceLock<Arc<Mesh<T>>>>,
}

impl<T: Real> LognormalBenchmark<T> {
    pub fn new(cfg: BenchmarkConfig) -> Result<Self> {
        cfg.validate()?;
        let meshes = (0..=cfg.max_level).map(|_| OnceLock::new()).collect();
        Ok(Self { cfg, meshes })
    }

    pub fn config(&self) -> &BenchmarkConfig {
        &self.cfg
    }

    fn mesh(&self, level: usize) -> Result<Arc<Mesh<T>>> {
        let cell = self.meshes.get(level).ok_or_else(|| {
            Error::InvalidInput(format!("level {level} exceeds max_level {}", self.cfg.max_level))
        })?;
        Ok(cell.get_or_init(|| Arc::new(Mesh::build(&self.cfg, level))).clone())
    }

    fn check_params(&self, y: &DVector<T>) -> Result<()> {
        if y.len() != self.cfg.d {
            return Err(Error::DimensionMismatch {
                expected: self.cfg.d,
                found: y.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector"));
        }
        Ok(())
    }

    /// `b(y)` at arbitrary points.
    pub fn log_coefficient(&self, y: &DVector<T>, points: &[[f64; 2]]) -> Result<Vec<T>> {
        self.check_params(y)?;
        Ok(points
            .iter()
            .map(|&x| {
                (0..self.cfg.d).fold(T::lit(self.cfg.b_bar), |acc, p| acc + y[p] * T::lit(self.cfg.psi(p + 1, x)))
            })
            .collect())
    }

    /// Element centroids of a level, in element order.
    pub fn centroids(&self, level: usize) -> Result<Vec<[f64; 2]>> {
        Ok(self.mesh(level)?.elements.iter().map(|e| e.centroid).collect())
    }

    /// `b(y)` at the element centroids of a level.
    pub fn centroid_log_coefficient(&self, level: usize, y: &DVector<T>) -> Result<Vec<T>> {
        self.check_params(y)?;
        let mesh = self.mesh(level)?;
        let b = mesh.psi.tr_mul(y);
        Ok(b.iter().map(|&v| v + T::lit(self.cfg.b_bar)).collect())
    }

    fn assemble(&self, mesh: &Mesh<T>, coefficient: &[T]) -> (BandedSpd<T>, Vec<T>) {
        // unknowns are numbered row by row, so neighbours are at most n apart
        let mut k = BandedSpd::zeros(mesh.n_unknowns, mesh.n);
        let mut rhs = vec![T::zero(); mesh.n_unknowns];
        let f = T::lit(self.cfg.forcing);
        for (e, a) in mesh.elements.iter().zip(coefficient) {
            let scale = *a * T::lit(e.area);
            for p in 0..3 {
                let Some(ip) = mesh.unknown[e.nodes[p]] else { continue };
                rhs[ip] += f * T::lit(e.area / 3.0);
                for q in 0..3 {
                    let Some(iq) = mesh.unknown[e.nodes[q]] else { continue };
                    if iq <= ip {
                        let g = e.grads[p][0] * e.grads[q][0] + e.grads[p][1] * e.grads[q][1];
                        k.add(ip, iq, scale * T::lit(g));
                    }
                }
            }
        }
        (k, rhs)
    }

    /// Stiffness matrix and load vector for `y` (exposed for diagnostics).
    pub fn system(&self, level: usize, y: &DVector<T>) -> Result<(BandedSpd<T>, Vec<T>)> {
        let mesh = self.mesh(level)?;
        let coefficient: Vec<T> = self
            .centroid_log_coefficient(level, y)?
            .into_iter()
            .map(|b| b.exp())
            .collect();
        Ok(self.assemble(&mesh, &coefficient))
    }

    fn scatter(mesh: &Mesh<T>, level: usize, interior: &[T]) -> DiscreteField<T> {
        let values = mesh
            .unknown
            .iter()
            .map(|u| u.map_or(T::zero(), |i| interior[i]))
            .collect();
        DiscreteField {
            level,
            n: mesh.n,
            values,
        }
    }

    fn solve_state(&self, level: usize, y: &DVector<T>) -> Result<(Arc<Mesh<T>>, State<T>)> {
        let mesh = self.mesh(level)?;
        let coefficient: Vec<T> = self
            .centroid_log_coefficient(level, y)?
            .into_iter()
            .map(|b| b.exp())
            .collect();
        if coefficient.iter().any(|a| !a.is_finite() || !(*a > T::zero())) {
            return Err(Error::NonFinite("diffusion coefficient"));
        }
        let (k, rhs) = self.assemble(&mesh, &coefficient);
        let factor = k.cholesky()?;
        let u = factor.solve(&rhs);
        let field = Self::scatter(&mesh, level, &u);
        Ok((
            mesh,
            State {
                field,
                coefficient,
                factor,
            },
        ))
    }

    pub fn solve(&self, level: usize, y: &DVector<T>) -> Result<DiscreteField<T>> {
        Ok(self.solve_state(level, y)?.1.field)
    }

    /// Exact integral of the piecewise-linear field (the domain has area 1).
    pub fn qoi(&self, u: &DiscreteField<T>) -> Result<T> {
        let mesh = self.mesh(u.level)?;
        if u.values.len() != mesh.unknown.len() {
            return Err(Error::DimensionMismatch {
                expected: mesh.unknown.len(),
                found: u.values.len(),
            });
        }
        Ok(mesh.elements.iter().fold(T::zero(), |acc, e| {
            let s = u.values[e.nodes[0]] + u.values[e.nodes[1]] + u.values[e.nodes[2]];
            acc + s * T::lit(e.area / 3.0)
        }))
    }

    /// Quantity of interest, its gradient, and the adjoint field.
    pub fn qoi_with_adjoint(&self, level: usize, y: &DVector<T>) -> Result<(T, DVector<T>, DiscreteField<T>)> {
        let (mesh, state) = self.solve_state(level, y)?;
        let value = self.qoi(&state.field)?;
        // the functional is the integral, so its load vector is the hat-function mass
        let mut q = vec![T::zero(); mesh.n_unknowns];
        for e in &mesh.elements {
            for &node in &e.nodes {
                if let Some(i) = mesh.unknown[node] {
                    q[i] += T::lit(e.area / 3.0);
                }
            }
        }
        let p = state.factor.solve(&q);
        let adjoint = Self::scatter(&mesh, level, &p);
        let u = &state.field.values;
        let pv = &adjoint.values;
        // d f / d y_j = -sum_e psi_j(c_e) a_e |e| grad u . grad p
        let sens = DVector::from_iterator(
            mesh.elements.len(),
            mesh.elements.iter().zip(&state.coefficient).map(|(e, &a)| {
                let mut gu_t = [T::zero(); 2];
                let mut gp_t = [T::zero(); 2];
                for v in 0..3 {
                    for c in 0..2 {
                        gu_t[c] += u[e.nodes[v]] * T::lit(e.grads[v][c]);
                        gp_t[c] += pv[e.nodes[v]] * T::lit(e.grads[v][c]);
                    }
                }
                -(a * T::lit(e.area) * (gu_t[0] * gp_t[0] + gu_t[1] * gp_t[1]))
            }),
        );
        let grad = &mesh.psi * sens;
        Ok((value, grad, adjoint))
    }

    pub fn grad_qoi(&self, level: usize, y: &DVector<T>) -> Result<DVector<T>> {
        Ok(self.qoi_with_adjoint(level, y)?.1)
    }
}

impl<T: Real> ModelHierarchy<T> for LognormalBenchmark<T> {
    fn dim(&self) -> usize {
        self.cfg.d
    }

    fn max_level(&self) -> usize {
        self.cfg.max_level
    }

    fn eval(&self, level: usize, y: &DVector<T>) -> Result<T> {
        let u = self.solve(level, y)?;
        self.qoi(&u)
    }

    fn grad(&self, level: usize, y: &DVector<T>) -> Result<DVector<T>> {
        self.grad_qoi(level, y)
    }

    fn work(&self, level: usize) -> f64 {
        self.cfg.mesh_size(level).powf(-self.cfg.gamma)
    }
}
