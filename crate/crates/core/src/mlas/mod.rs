//! Multilevel orchestration: model hierarchies and their differences, plans,
//! the multilevel fit, surrogate evaluation and Monte Carlo oracles.

mod fit;
mod hierarchy;
pub mod oracle;
mod plan;
mod surrogate;

pub(crate) use fit::{fit_in_subspace, GRAD_TAG};
pub use fit::{mlaspa_fit, slaspa_fit};
pub use hierarchy::{delta_eval, delta_grad, delta_work, Differences, FixedLevel, FnHierarchy, LevelWork, ModelHierarchy, WorkLedger};
pub use oracle::{mc_l2_error, Estimate, L2Error, ReferenceSample};
pub use plan::{degree_for_budget, geometric_plan, sample_rule, IndexRule, MultilevelPlan};
pub use surrogate::{FitDiagnostics, LevelSurrogate, MlasSurrogate, SURROGATE_FORMAT, SURROGATE_VERSION};
