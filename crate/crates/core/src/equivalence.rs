//! Standard losses that induce the same policy ranking as an additive
//! counterfactual loss.
//!
//! With two decisions every additive loss has such a standard loss, unique up
//! to a covariate-only constant, and every standard loss is reached by a
//! one-parameter family of additive losses. With three or more decisions the
//! reduction exists only when each off-diagonal weight `ω_k(d, ·)` depends on
//! `d` through an outcome-free shift.

use num_traits::Zero;
use serde::Serialize;

use crate::additivity::AdditiveDecomposition;
use crate::distributions::JointModel;
use crate::error::{Error, Result};
use crate::rational::{self, Rational};
use crate::risk::true_risk;
use crate::space::{LossTensor, Spaces, StandardLoss};

/// `ℓStd(d, y, x) = ω_d(d, y, x) − ω_d(1 − d, y, x)`, with the free constant
/// pinned to zero.
pub fn to_standard_loss(decomp: &AdditiveDecomposition) -> Result<StandardLoss> {
    let sp = decomp.spaces();
    if sp.decisions() != 2 {
        return Err(Error::DecisionNotBinary(sp.decisions()));
    }
    Ok(StandardLoss::from_fn(sp.clone(), |d, y, s| {
        decomp.weight(d, d, y, s) - decomp.weight(d, 1 - d, y, s)
    }))
}

/// `ω_d(d, y) = (1 + λ) ℓStd(d, y)`, `ω_d(1 − d, y) = λ ℓStd(d, y)`, no
/// intercept.
pub fn counterfactual_family(
    std: &StandardLoss,
    lambda: &Rational,
) -> Result<AdditiveDecomposition> {
    let sp = std.spaces();
    if sp.decisions() != 2 {
        return Err(Error::DecisionNotBinary(sp.decisions()));
    }
    let diag = lambda + Rational::from_integer(1.into());
    Ok(AdditiveDecomposition::from_fn(
        sp.clone(),
        |k, d, y, s| {
            let base = std.value(k, y, s);
            if k == d {
                &diag * base
            } else {
                lambda * base
            }
        },
        |_, _| Rational::zero(),
    ))
}

/// Why no standard loss reproduces the policy ranking.
///
/// `second_difference = [ω_k(j, y) − ω_k(j', y)] − [ω_k(j, 0) − ω_k(j', 0)]`
/// is nonzero with `k ∉ {j, j'}`. Under the two point-mass outcome laws
/// `laws[0] = 0` and `laws[1] = y·e_k`, the constant policies `j` and `j'` see
/// the same `Y(j)` and `Y(j')`, so any standard loss moves their risks
/// identically while the counterfactual risks move apart by
/// `second_difference`. `gaps[law][policy]` lists
/// `R(π; ℓAdd) − R(π; ℓStd)` for the reference standard loss
/// `ℓStd(d, y) = ω_d(d, y)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NoStandardWitness {
    pub stratum: String,
    pub k: usize,
    pub j: usize,
    pub j_prime: usize,
    pub y: usize,
    #[serde(with = "rational::serde_str")]
    pub second_difference: Rational,
    pub laws: [Vec<usize>; 2],
    #[serde(serialize_with = "ser_gaps")]
    pub gaps: [[Rational; 2]; 2],
}

fn ser_gaps<S: serde::Serializer>(g: &[[Rational; 2]; 2], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(
        g.iter()
            .map(|r| [rational::format(&r[0]), rational::format(&r[1])]),
    )
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EquivalenceCertificate {
    StandardLossExists {
        standard: StandardLoss,
        /// Whether `ω_k(d, y) = ω_k(d', y)` already holds for the weights as
        /// given; `false` means only the shift-invariant test passed.
        raw_decision_free: bool,
    },
    NoStandardLoss(Box<NoStandardWitness>),
}

impl EquivalenceCertificate {
    pub fn exists(&self) -> bool {
        matches!(self, Self::StandardLossExists { .. })
    }

    pub fn to_json(&self) -> String {
        let value = match self {
            Self::StandardLossExists {
                standard,
                raw_decision_free,
            } => serde_json::json!({
                "kind": "standard_loss_exists",
                "raw_decision_free": raw_decision_free,
                "standard_loss": standard.to_document(),
            }),
            Self::NoStandardLoss(w) => serde_json::json!({
                "kind": "no_standard_loss",
                "witness": w,
            }),
        };
        serde_json::to_string_pretty(&value).expect("certificate serialises")
    }
}

/// Smallest decision other than `k`.
fn reference(k: usize) -> usize {
    usize::from(k == 0)
}

/// Decides whether a standard loss with policy-independent risk gap exists.
///
/// The test uses the shift-invariant second differences of the off-diagonal
/// weights, so it gives the same answer for every decomposition of the same
/// loss.
pub fn standard_loss_exists(decomp: &AdditiveDecomposition) -> Result<EquivalenceCertificate> {
    let sp = decomp.spaces();
    let (kk, m) = (sp.decisions(), sp.outcomes());
    if kk < 3 {
        return Err(Error::DecisionBinary);
    }
    let mut raw_decision_free = true;
    for s in 0..sp.n_strata() {
        let w = |k, d, y| decomp.weight(k, d, y, s);
        for k in 0..kk {
            let others: Vec<usize> = (0..kk).filter(|&d| d != k).collect();
            for (a, &j) in others.iter().enumerate() {
                for &jp in &others[a + 1..] {
                    for y in 0..m {
                        let raw = w(k, j, y) - w(k, jp, y);
                        if !raw.is_zero() {
                            raw_decision_free = false;
                        }
                        let second = &raw - (w(k, j, 0) - w(k, jp, 0));
                        if !second.is_zero() {
                            return Ok(EquivalenceCertificate::NoStandardLoss(Box::new(witness(
                                decomp, s, k, j, jp, y, second,
                            )?)));
                        }
                    }
                }
            }
        }
    }
    let standard = StandardLoss::from_fn(sp.clone(), |d, y, s| {
        let w = |k, dd, yy| decomp.weight(k, dd, yy, s);
        let mut v = w(d, d, y) - w(d, reference(d), y);
        for k in (0..kk).filter(|&k| k != d) {
            v += w(k, d, 0) - w(k, reference(k), 0);
        }
        v
    });
    Ok(EquivalenceCertificate::StandardLossExists {
        standard,
        raw_decision_free,
    })
}

/// Model concentrated on stratum `s` with `D* = d` and `Y(·) = y` there.
pub(crate) fn point_mass_model(
    spaces: &Spaces,
    s: usize,
    d: usize,
    y: &[usize],
) -> Result<JointModel> {
    let kk = spaces.decisions();
    let mut p = vec![Rational::zero(); spaces.n_joint()];
    p[spaces.joint_index(d, y)] = rational::one();
    let n_s = spaces.n_strata();
    JointModel::new(
        spaces.clone(),
        vec![p; n_s],
        vec![vec![rational::ratio(1, kk as i64); kk]; n_s],
        (0..n_s)
            .map(|t| {
                if t == s {
                    rational::one()
                } else {
                    rational::zero()
                }
            })
            .collect(),
    )
}

fn witness(
    decomp: &AdditiveDecomposition,
    s: usize,
    k: usize,
    j: usize,
    jp: usize,
    y: usize,
    second_difference: Rational,
) -> Result<NoStandardWitness> {
    let sp = decomp.spaces();
    let loss: LossTensor = decomp.reconstruct();
    let reference_std =
        StandardLoss::from_fn(sp.clone(), |d, yy, t| decomp.weight(d, d, yy, t).clone()).embed();
    let base = vec![0; sp.decisions()];
    let mut moved = base.clone();
    moved[k] = y;
    let mut gaps: [[Rational; 2]; 2] = Default::default();
    for (li, law) in [&base, &moved].into_iter().enumerate() {
        for (pi, d) in [j, jp].into_iter().enumerate() {
            let model = point_mass_model(sp, s, d, law)?;
            let add = true_risk(&loss, &model)?.identified_total();
            let std = true_risk(&reference_std, &model)?.identified_total();
            gaps[li][pi] = add - std;
        }
    }
    Ok(NoStandardWitness {
        stratum: sp.strata()[s].clone(),
        k,
        j,
        j_prime: jp,
        y,
        second_difference,
        laws: [base, moved],
        gaps,
    })
}
