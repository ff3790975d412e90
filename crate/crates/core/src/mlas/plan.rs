use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polyspace::MultiIndexSet;

/// Ranks, gradient sample counts and polynomial spaces for a multilevel fit.
///
/// Slot `k` is paired with the difference at level `L - k`, so the coarsest
/// difference gets the largest rank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultilevelPlan {
    ranks: Vec<usize>,
    gradient_samples: Vec<usize>,
    index_sets: Vec<MultiIndexSet>,
}

/// How the polynomial space on `r_k` active variables is chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IndexRule {
    /// Total degree `<= degree` at every slot.
    TotalDegree { degree: u32 },
    /// Largest total-degree set whose size fits `budgets[k]`.
    SizeBudget { budgets: Vec<usize> },
    /// Explicit total degree per slot.
    Degrees { degrees: Vec<u32> },
}

impl MultilevelPlan {
    pub fn new(ranks: Vec<usize>, gradient_samples: Vec<usize>, index_sets: Vec<MultiIndexSet>) -> Result<Self> {
        let n = ranks.len();
        if n == 0 {
            return Err(Error::InvalidInput("plan needs at least one level".into()));
        }
        if gradient_samples.len() != n || index_sets.len() != n {
            return Err(Error::InvalidInput(
                "ranks, gradient samples and index sets must have equal length".into(),
            ));
        }
        if ranks[0] == 0 {
            return Err(Error::InvalidInput("ranks must be positive".into()));
        }
        let increasing = |v: &[usize]| v.windows(2).all(|w| w[0] < w[1]);
        let sizes: Vec<usize> = index_sets.iter().map(|s| s.len()).collect();
        if !increasing(&ranks) || !increasing(&gradient_samples) || !increasing(&sizes) {
            return Err(Error::InvalidInput(
                "ranks, gradient samples and index set sizes must be strictly increasing".into(),
            ));
        }
        for (k, (xi, &r)) in index_sets.iter().zip(&ranks).enumerate() {
            if xi.dim() != r {
                return Err(Error::InvalidInput(format!(
                    "index set {k} lives on {} variables but the rank is {r}",
                    xi.dim()
                )));
            }
            if gradient_samples[k] < r {
                return Err(Error::InvalidInput(format!("slot {k}: fewer gradient samples than the rank")));
            }
        }
        Ok(Self {
            ranks,
            gradient_samples,
            index_sets,
        })
    }

    /// Finest level `L`.
    pub fn levels(&self) -> usize {
        self.ranks.len() - 1
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn gradient_samples(&self) -> &[usize] {
        &self.gradient_samples
    }

    pub fn index_sets(&self) -> &[MultiIndexSet] {
        &self.index_sets
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.index_sets.iter().map(|s| s.len()).collect()
    }

    /// Slot used by the difference at `level`.
    pub fn slot(&self, level: usize) -> usize {
        self.levels() - level
    }
}

/// `ceil(c r ln(r + 1))`.
pub fn sample_rule(c_m: f64, r: usize) -> usize {
    (c_m * r as f64 * (r as f64 + 1.0).ln()).ceil() as usize
}

/// Largest total degree on `dim` variables whose set has at most `budget`
/// elements; `None` when even the constant does not fit.
pub fn degree_for_budget(dim: usize, budget: usize) -> Option<u32> {
    if budget == 0 {
        return None;
    }
    let mut p = 0u32;
    while MultiIndexSet::total_degree_size(dim, p + 1) <= budget {
        p += 1;
    }
    Some(p)
}

/// `r_k = ceil(r_base ratio^k)`, `M_k = max(ceil(C r_k ln(r_k + 1)), r_k + 1)`.
pub fn geometric_plan(levels: usize, r_base: usize, rank_ratio: f64, c_m: f64, rule: &IndexRule) -> Result<MultilevelPlan> {
    if r_base == 0 {
        return Err(Error::InvalidInput("base rank must be positive".into()));
    }
    if !(rank_ratio > 1.0) || !(c_m > 1.0) {
        return Err(Error::InvalidInput("rank ratio and sample constant must exceed 1".into()));
    }
    let ranks: Vec<usize> = (0..=levels)
        .map(|k| (r_base as f64 * rank_ratio.powi(k as i32) - 1e-9).ceil() as usize)
        .collect();
    let samples: Vec<usize> = ranks.iter().map(|&r| sample_rule(c_m, r).max(r + 1)).collect();
    let index_sets = ranks
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let degree = match rule {
                IndexRule::TotalDegree { degree } => *degree,
                IndexRule::Degrees { degrees } => *degrees.get(k).ok_or_else(|| {
                    Error::InvalidInput(format!("no degree given for slot {k}"))
                })?,
                IndexRule::SizeBudget { budgets } => {
                    let b = *budgets
                        .get(k)
                        .ok_or_else(|| Error::InvalidInput(format!("no budget given for slot {k}")))?;
                    degree_for_budget(r, b)
                        .ok_or_else(|| Error::InvalidInput(format!("budget of slot {k} is zero")))?
                }
            };
            Ok(MultiIndexSet::total_degree(r, degree))
        })
        .collect::<Result<Vec<_>>>()?;
    MultilevelPlan::new(ranks, samples, index_sets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_level_plan() {
        let p = geometric_plan(0, 1, 2.0, 2.0, &IndexRule::TotalDegree { degree: 3 }).unwrap();
        assert_eq!(p.levels(), 0);
        assert_eq!(p.ranks(), &[1]);
    }

    #[test]
    fn doubling_ranks_and_sample_formula() {
        let p = geometric_plan(2, 1, 2.0, 2.0, &IndexRule::TotalDegree { degree: 2 }).unwrap();
        assert_eq!(p.ranks(), &[1, 2, 4]);
        // 2 * 1 * ln 2 = 1.386 -> 2; 2 * 2 * ln 3 = 4.394 -> 5; 2 * 4 * ln 5 = 12.875 -> 13
        assert_eq!(p.gradient_samples(), &[2, 5, 13]);
        assert_eq!(p.sizes(), vec![3, 6, 15]);
        assert_eq!(p.slot(0), 2);
        let q = geometric_plan(1, 3, 1.5, 3.0, &IndexRule::TotalDegree { degree: 1 }).unwrap();
        // r = 3, ceil(4.5) = 5; M = ceil(9 ln 4) = 13, ceil(15 ln 6) = 27
        assert_eq!(q.ranks(), &[3, 5]);
        assert_eq!(q.gradient_samples(), &[13, 27]);
    }

    #[test]
    fn budget_rule_picks_largest_fitting_degree() {
        assert_eq!(degree_for_budget(2, 10), Some(3));
        assert_eq!(degree_for_budget(2, 9), Some(2));
        assert_eq!(degree_for_budget(1, 5), Some(4));
        assert_eq!(degree_for_budget(3, 0), None);
        let p = geometric_plan(1, 1, 2.0, 2.0, &IndexRule::SizeBudget { budgets: vec![4, 12] }).unwrap();
        assert_eq!(p.sizes(), vec![4, 10]);
    }

    #[test]
    fn monotonicity_is_enforced() {
        let sets = vec![MultiIndexSet::total_degree(1, 3), MultiIndexSet::total_degree(2, 1)];
        assert!(MultilevelPlan::new(vec![1, 2], vec![3, 5], sets).is_err());
        let sets = vec![MultiIndexSet::total_degree(1, 1), MultiIndexSet::total_degree(2, 1)];
        assert!(MultilevelPlan::new(vec![1, 2], vec![5, 5], sets.clone()).is_err());
        assert!(MultilevelPlan::new(vec![1, 2], vec![2, 5], sets).is_ok());
        assert!(geometric_plan(1, 1, 1.0, 2.0, &IndexRule::TotalDegree { degree: 1 }).is_err());
    }
}
