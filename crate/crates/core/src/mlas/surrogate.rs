use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hierarchy::WorkLedger;
use crate::asm::Subspace;
use crate::error::{Error, Result};
use crate::polyspace::{BasisEvaluator, MultiIndexSet};
use crate::scalar::Real;

pub const SURROGATE_FORMAT: &str = "mlas-surrogate";
pub const SURROGATE_VERSION: u32 = 1;

/// Fit diagnostics kept alongside a level.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub gram_deviation: f64,
    pub n_samples: usize,
    pub residual: f64,
    pub gradient_samples: usize,
}

/// Hermite expansion `g_l` composed with the projection onto a subspace.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct LevelSurrogate<T: Real> {
    pub level: usize,
    pub subspace: Subspace<T>,
    pub index_set: MultiIndexSet,
    pub coefficients: Vec<T>,
    #[serde(default)]
    pub diagnostics: FitDiagnostics,
}

#[derive(Deserialize)]
#[serde(bound = "")]
struct LevelWire<T: Real> {
    level: usize,
    subspace: Subspace<T>,
    index_set: MultiIndexSet,
    coefficients: Vec<T>,
    #[serde(default)]
    diagnostics: FitDiagnostics,
}

impl<'de, T: Real> Deserialize<'de> for LevelSurrogate<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let w = LevelWire::<T>::deserialize(d)?;
        // the wire form of an index set does not carry its dimension
        let index_set = w.index_set.with_dim(w.subspace.rank()).map_err(D::Error::custom)?;
        let s = LevelSurrogate {
            level: w.level,
            subspace: w.subspace,
            index_set,
            coefficients: w.coefficients,
            diagnostics: w.diagnostics,
        };
        s.validate().map_err(D::Error::custom)?;
        Ok(s)
    }
}

impl<T: Real> LevelSurrogate<T> {
    pub fn new(level: usize, subspace: Subspace<T>, index_set: MultiIndexSet, coefficients: Vec<T>) -> Result<Self> {
        let s = Self {
            level,
            subspace,
            index_set,
            coefficients,
            diagnostics: FitDiagnostics::default(),
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if self.index_set.dim() > self.subspace.rank() {
            return Err(Error::DimensionMismatch {
                expected: self.subspace.rank(),
                found: self.index_set.dim(),
            });
        }
        if self.coefficients.len() != self.index_set.len() {
            return Err(Error::DimensionMismatch {
                expected: self.index_set.len(),
                found: self.coefficients.len(),
            });
        }
        Ok(())
    }

    pub fn rank(&self) -> usize {
        self.subspace.rank()
    }

    /// Expansion evaluated at active coordinates `x`.
    pub fn eval_active(&self, x: &[T]) -> Result<T> {
        let mut phi = vec![T::zero(); self.index_set.len()];
        self.index_set.eval_basis(x, &mut phi)?;
        Ok(phi
            .iter()
            .zip(&self.coefficients)
            .fold(T::zero(), |acc, (&p, &c)| acc + p * c))
    }

    pub fn evaluate(&self, y: &DVector<T>) -> Result<T> {
        if y.len() != self.subspace.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.subspace.dim(),
                found: y.len(),
            });
        }
        self.eval_active(self.subspace.project(y).as_slice())
    }

    pub fn coefficient_norm(&self) -> T {
        self.coefficients
            .iter()
            .fold(T::zero(), |acc, &c| acc + c * c)
            .sqrt()
    }

    pub(crate) fn evaluator(&self) -> BasisEvaluator {
        BasisEvaluator::new(&self.index_set)
    }
}

/// Sum of level surrogates.
#[derive(Clone, Debug, PartialEq)]
pub struct MlasSurrogate<T: Real> {
    pub dim: usize,
    pub levels: Vec<LevelSurrogate<T>>,
    pub work_ledger: WorkLedger,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "")]
struct SurrogateWire<T: Real> {
    format: String,
    version: u32,
    scalar: String,
    dim: usize,
    levels: Vec<LevelSurrogate<T>>,
    work_ledger: WorkLedger,
}

impl<T: Real> MlasSurrogate<T> {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            levels: Vec::new(),
            work_ledger: WorkLedger::default(),
        }
    }

    pub fn push(&mut self, level: LevelSurrogate<T>) -> Result<()> {
        if level.subspace.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: level.subspace.dim(),
            });
        }
        level.validate()?;
        self.levels.push(level);
        Ok(())
    }

    pub fn finest_level(&self) -> Option<usize> {
        self.levels.iter().map(|l| l.level).max()
    }

    pub fn evaluate(&self, y: &DVector<T>) -> Result<T> {
        if y.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: y.len(),
            });
        }
        let mut total = T::zero();
        let mut phi = Vec::new();
        for lvl in &self.levels {
            let x = lvl.subspace.project(y);
            phi.clear();
            phi.resize(lvl.index_set.len(), T::zero());
            lvl.evaluator().eval(&lvl.index_set, x.as_slice(), &mut phi)?;
            total += phi
                .iter()
                .zip(&lvl.coefficients)
                .fold(T::zero(), |acc, (&p, &c)| acc + p * c);
        }
        Ok(total)
    }

    pub fn evaluate_many(&self, points: &[DVector<T>]) -> Result<Vec<T>> {
        points.par_iter().map(|y| self.evaluate(y)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let wire = SurrogateWire {
            format: SURROGATE_FORMAT.into(),
            version: SURROGATE_VERSION,
            scalar: T::type_name().into(),
            dim: self.dim,
            levels: self.levels.clone(),
            work_ledger: self.work_ledger.clone(),
        };
        Ok(serde_json::to_string_pretty(&wire)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let head: serde_json::Value = serde_json::from_str(text)?;
        let field = |k: &str| head.get(k).cloned().unwrap_or(serde_json::Value::Null);
        if field("format") != SURROGATE_FORMAT {
            return Err(Error::Format(format!("expected format \"{SURROGATE_FORMAT}\"")));
        }
        if field("version") != SURROGATE_VERSION {
            return Err(Error::Format(format!(
                "surrogate version {} is not supported (expected {SURROGATE_VERSION})",
                field("version")
            )));
        }
        if field("scalar") != T::type_name() {
            return Err(Error::Format(format!(
                "surrogate scalar {} does not match {}",
                field("scalar"),
                T::type_name()
            )));
        }
        // parse again from text so values never pass through an f64 detour
        let wire: SurrogateWire<T> = serde_json::from_str(text)?;
        let mut s = Self::empty(wire.dim);
        for l in wire.levels {
            s.push(l)?;
        }
        s.work_ledger = wire.work_ledger;
        Ok(s)
    }
}
