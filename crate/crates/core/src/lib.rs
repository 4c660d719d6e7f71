//! Statistical decision theory with counterfactual losses on finite spaces.
//!
//! A counterfactual loss `ℓ(d; y_0, …, y_{K-1}, x)` scores a decision against
//! every potential outcome, not only the realised one. This crate decides when
//! the resulting risk is identified from observable marginals, computes it,
//! optimises policies against it, relates it to standard losses and certifies
//! (non-)identifiability by exact enumeration over the set of joint laws that
//! share the observed marginals.
//!
//! All algebra is exact over [`Rational`]; simulation and estimation use `f64`.

#![allow(clippy::needless_range_loop)]

pub mod additivity;
pub mod distributions;
pub mod equivalence;
pub mod error;
pub mod estimation;
pub mod examples;
pub mod linalg;
pub mod oracle;
pub mod random;
pub mod rational;
pub mod risk;
pub mod space;

pub use additivity::{
    build_structure_matrix, classify, decompose, load_decomposition, AdditiveDecomposition,
    Decomposition, Regime, RegimeLabel, StructureMatrix, Variant,
};
pub use distributions::{
    build_marginal_matrix, kernel_basis, load_model, marginalize, simulate_records, JointModel,
    MarginalMatrix, NumericMode, ObservableVariant, ObservableView, Record,
};
pub use equivalence::{
    counterfactual_family, standard_loss_exists, to_standard_loss, EquivalenceCertificate,
};
pub use error::{Error, Result};
pub use estimation::{estimate_identified_risk, EmpiricalView, Estimate};
pub use examples::{builtin_example, Params};
pub use oracle::{
    certify_identifiability, difference_bounds, risk_bounds, DifferenceProblem, FiberProblem,
    RiskInterval,
};
pub use rational::Rational;
pub use risk::{
    binary_decomposition, check_weight_ordering, identified_difference, identified_risk,
    optimize_policy, true_risk, BinaryDecomposition, ConstantHandling, OutcomeMarginals, Policy,
    RiskReport,
};
pub use space::{load_loss, load_standard_loss, LossTensor, Spaces, StandardLoss};
