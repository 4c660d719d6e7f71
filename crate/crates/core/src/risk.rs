//! Counterfactual risk: ground truth from the full joint law, the identified
//! part computed from observable marginals, the binary-outcome
//! accuracy/difficulty split and policy optimisation.

use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::additivity::AdditiveDecomposition;
use crate::distributions::{marginal_row, JointModel, ObservableVariant, ObservableView};
use crate::error::{Error, Result};
use crate::rational::{self, Rational};
use crate::space::{LossTensor, Spaces};

/// Per-stratum risk split into the part identified from `Pr(D*, Y(k) | x)` and
/// the intercept contribution `C(x)`.
///
/// `constant_part[s]` is `None` when the intercept is nonzero and the
/// observable view does not carry the joint law of `Y(·)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RiskReport {
    #[serde(with = "rational::serde_vec")]
    pub stratum_weights: Vec<Rational>,
    #[serde(with = "rational::serde_vec")]
    pub identified_part: Vec<Rational>,
    #[serde(with = "opt_vec")]
    pub constant_part: Vec<Option<Rational>>,
    /// True iff the intercept vanishes, so the level itself is identified.
    pub exact: bool,
}

mod opt_vec {
    use super::*;
    use serde::Serializer;

    pub fn serialize<S: Serializer>(v: &[Option<Rational>], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| x.as_ref().map(rational::format)))
    }
}

impl RiskReport {
    fn weighted(&self, v: impl Iterator<Item = Rational>) -> Rational {
        self.stratum_weights.iter().zip(v).map(|(w, x)| w * x).sum()
    }

    /// `R_x` per stratum, when known.
    pub fn conditional(&self) -> Vec<Option<Rational>> {
        self.identified_part
            .iter()
            .zip(&self.constant_part)
            .map(|(a, c)| c.as_ref().map(|c| a + c))
            .collect()
    }

    /// `R(D*; ℓ)`, when every stratum's constant is known.
    pub fn total(&self) -> Option<Rational> {
        let cond: Option<Vec<Rational>> = self.conditional().into_iter().collect();
        cond.map(|c| self.weighted(c.into_iter()))
    }

    pub fn identified_total(&self) -> Rational {
        self.weighted(self.identified_part.iter().cloned())
    }

    /// `E[C(X)]`, when known.
    pub fn constant_total(&self) -> Option<Rational> {
        let c: Option<Vec<Rational>> = self.constant_part.iter().cloned().collect();
        c.map(|c| self.weighted(c.into_iter()))
    }
}

fn check_spaces(a: &Spaces, b: &Spaces) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "K={}, M={}, {} strata vs K={}, M={}, {} strata",
            a.decisions(),
            a.outcomes(),
            a.n_strata(),
            b.decisions(),
            b.outcomes(),
            b.n_strata()
        )))
    }
}

/// Ground truth `Σ ℓ(d; y, x) Pr(D* = d, Y(·) = y | x)`; needs the full joint.
///
/// The whole value is reported as `identified_part`, with zero constant.
pub fn true_risk(loss: &LossTensor, model: &JointModel) -> Result<RiskReport> {
    check_spaces(loss.spaces(), model.spaces())?;
    let n_s = loss.spaces().n_strata();
    Ok(RiskReport {
        stratum_weights: model.stratum_weights().to_vec(),
        identified_part: (0..n_s)
            .map(|s| rational::dot(loss.stratum(s), model.joint(s)))
            .collect(),
        constant_part: vec![Some(Rational::zero()); n_s],
        exact: true,
    })
}

/// What to do with a nonzero intercept when the view has no outcome joint law.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstantHandling {
    /// Fail with [`Error::NeedExtendedView`].
    Require,
    /// Report the constant as unknown.
    AllowUnknown,
}

fn identified_stratum(decomp: &AdditiveDecomposition, view: &ObservableView, s: usize) -> Rational {
    let sp = decomp.spaces();
    let (kk, m) = (sp.decisions(), sp.outcomes());
    let w = decomp.stratum_weights(s);
    let q = view.q(s);
    let mut acc = Rational::zero();
    for d in 0..kk {
        for k in 0..kk {
            for y in 0..m {
                let wv = &w[sp.weight_index(k, d, y)];
                if !wv.is_zero() {
                    acc += wv * &q[marginal_row(sp, d, k, y)];
                }
            }
        }
    }
    acc
}

fn constant_stratum(
    decomp: &AdditiveDecomposition,
    outcome_law: Option<&[Rational]>,
    s: usize,
) -> Option<Rational> {
    let v = decomp.stratum_intercept(s);
    if v.iter().all(Zero::is_zero) {
        return Some(Rational::zero());
    }
    outcome_law.map(|p| rational::dot(v, p))
}

/// Identified risk from observable marginals.
///
/// The identified part is `Σ_{d,k,y} ω_k(d, y, x) Pr(D* = d, Y(k) = y | x)`;
/// the constant `Σ_y ϖ(y, x) Pr(Y(·) = y | x)` needs the extended view.
pub fn identified_risk(
    decomp: &AdditiveDecomposition,
    view: &ObservableView,
    handling: ConstantHandling,
) -> Result<RiskReport> {
    check_spaces(decomp.spaces(), view.spaces())?;
    let sp = decomp.spaces();
    let nm = sp.n_marginals();
    let mut constant_part = Vec::with_capacity(sp.n_strata());
    for s in 0..sp.n_strata() {
        let law = (view.variant() == ObservableVariant::Extended).then(|| &view.q(s)[nm..]);
        let c = constant_stratum(decomp, law, s);
        if c.is_none() && handling == ConstantHandling::Require {
            return Err(Error::NeedExtendedView);
        }
        constant_part.push(c);
    }
    Ok(RiskReport {
        stratum_weights: view.stratum_weights().to_vec(),
        identified_part: (0..sp.n_strata())
            .map(|s| identified_stratum(decomp, view, s))
            .collect(),
        constant_part,
        exact: decomp.is_exact(),
    })
}

/// Risk difference between two decision-making systems.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RiskDifference {
    #[serde(with = "rational::serde_vec")]
    pub per_stratum: Vec<Rational>,
    #[serde(with = "rational::serde_str")]
    pub total: Rational,
}

/// `R(D*₁) − R(D*₂)` from identified parts only; the intercept cancels.
///
/// The two views must describe the same population: equal stratum weights and
/// equal potential-outcome marginals `Pr(Y(k) = y | x)`, and equal outcome
/// joint laws when both views carry them.
pub fn identified_difference(
    decomp: &AdditiveDecomposition,
    first: &ObservableView,
    second: &ObservableView,
) -> Result<RiskDifference> {
    check_spaces(decomp.spaces(), first.spaces())?;
    check_spaces(first.spaces(), second.spaces())?;
    let sp = decomp.spaces();
    if first.stratum_weights() != second.stratum_weights() {
        return Err(Error::InvalidArgument(
            "the two systems have different covariate distributions".into(),
        ));
    }
    for s in 0..sp.n_strata() {
        for k in 0..sp.decisions() {
            for y in 0..sp.outcomes() {
                if first.potential_outcome_marginal(k, y, s)
                    != second.potential_outcome_marginal(k, y, s)
                {
                    return Err(Error::InvalidArgument(format!(
                        "stratum `{}`: Pr(Y({k}) = {y}) differs between the two systems",
                        sp.strata()[s]
                    )));
                }
            }
        }
        if first.variant() == ObservableVariant::Extended
            && second.variant() == ObservableVariant::Extended
            && first.q(s)[sp.n_marginals()..] != second.q(s)[sp.n_marginals()..]
        {
            return Err(Error::InvalidArgument(format!(
                "stratum `{}`: outcome joint laws differ between the two systems",
                sp.strata()[s]
            )));
        }
    }
    let per_stratum: Vec<Rational> = (0..sp.n_strata())
        .map(|s| identified_stratum(decomp, first, s) - identified_stratum(decomp, second, s))
        .collect();
    let total = first
        .stratum_weights()
        .iter()
        .zip(&per_stratum)
        .map(|(w, v)| w * v)
        .sum();
    Ok(RiskDifference { per_stratum, total })
}

/// Pr(D* = d, Y = y | D = k, x) computed from the law of observed records,
/// arranged as an observable view. Under consistency and unconfoundedness it
/// equals [`crate::distributions::marginalize`] of the model.
pub fn observed_view(model: &JointModel, variant: ObservableVariant) -> ObservableView {
    let sp = model.spaces();
    let (kk, m) = (sp.decisions(), sp.outcomes());
    let law = model.record_law();
    let mut q = Vec::with_capacity(sp.n_strata());
    for s in 0..sp.n_strata() {
        let mut v = vec![Rational::zero(); sp.n_marginals()];
        for k in 0..kk {
            let cell = |d: usize, y: usize| &law[((s * kk + d) * kk + k) * m + y];
            let pk: Rational = (0..kk)
                .flat_map(|d| (0..m).map(move |y| (d, y)))
                .map(|(d, y)| cell(d, y))
                .sum();
            if pk.is_zero() {
                continue;
            }
            for d in 0..kk {
                for y in 0..m {
                    v[marginal_row(sp, d, k, y)] = cell(d, y) / &pk;
                }
            }
        }
        if variant == ObservableVariant::Extended {
            v.extend(model.outcome_law(s));
        }
        q.push(v);
    }
    ObservableView::new(sp.clone(), variant, q, model.stratum_weights().to_vec())
        .expect("conditional laws of a valid model form a valid view")
}

/// Per-stratum terms of the binary-outcome accuracy/difficulty split.
///
/// Vectors over decisions are indexed by `d`; `zeta[s][k][d] = ζ_k(d, x)`,
/// `difficulty[s][d][k] = Pr(D* = d, Y(k) = 1 | x)` (the diagonal entry is the
/// accuracy term and is repeated in `accuracy`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryDecomposition {
    pub zeta: Vec<Vec<Vec<Rational>>>,
    pub xi: Vec<Vec<Rational>>,
    pub accuracy: Vec<Vec<Rational>>,
    pub difficulty: Vec<Vec<Vec<Rational>>>,
    pub baseline: Vec<Vec<Rational>>,
    pub constant: Vec<Option<Rational>>,
    pub strata: Vec<String>,
}

impl BinaryDecomposition {
    pub fn accuracy_term(&self, s: usize) -> Rational {
        (0..self.xi[s].len())
            .map(|d| &self.zeta[s][d][d] * &self.accuracy[s][d])
            .sum()
    }

    pub fn difficulty_term(&self, s: usize) -> Rational {
        let kk = self.xi[s].len();
        let mut acc = Rational::zero();
        for d in 0..kk {
            for k in (0..kk).filter(|&k| k != d) {
                acc += &self.zeta[s][k][d] * &self.difficulty[s][d][k];
            }
        }
        acc
    }

    pub fn baseline_term(&self, s: usize) -> Rational {
        self.xi[s]
            .iter()
            .zip(&self.baseline[s])
            .map(|(x, p)| x * p)
            .sum()
    }

    /// Accuracy + difficulty + baseline, i.e. the identified part.
    pub fn identified(&self, s: usize) -> Rational {
        self.accuracy_term(s) + self.difficulty_term(s) + self.baseline_term(s)
    }

    /// The four groups added up, when the constant is known.
    pub fn reassemble(&self, s: usize) -> Option<Rational> {
        self.constant[s].as_ref().map(|c| self.identified(s) + c)
    }

    /// Plain-text table of the four term groups per stratum.
    pub fn render_table(&self) -> String {
        let mut out = format!(
            "{:<12} {:>14} {:>14} {:>14} {:>14}\n",
            "stratum", "accuracy", "difficulty", "baseline", "constant"
        );
        for (s, label) in self.strata.iter().enumerate() {
            out.push_str(&format!(
                "{:<12} {:>14} {:>14} {:>14} {:>14}\n",
                label,
                rational::format(&self.accuracy_term(s)),
                rational::format(&self.difficulty_term(s)),
                rational::format(&self.baseline_term(s)),
                self.constant[s]
                    .as_ref()
                    .map_or_else(|| "unknown".to_string(), rational::format)
            ));
        }
        out
    }
}

/// `ζ_k(d, x) = ω_k(d, 1, x) − ω_k(d, 0, x)` and `ξ(d, x) = Σ_k ω_k(d, 0, x)`
/// with the probabilities they multiply.
pub fn binary_decomposition(
    decomp: &AdditiveDecomposition,
    view: &ObservableView,
) -> Result<BinaryDecomposition> {
    check_spaces(decomp.spaces(), view.spaces())?;
    let sp = decomp.spaces();
    if sp.outcomes() != 2 {
        return Err(Error::OutcomeNotBinary(sp.outcomes()));
    }
    let kk = sp.decisions();
    let nm = sp.n_marginals();
    let mut out = BinaryDecomposition {
        zeta: Vec::new(),
        xi: Vec::new(),
        accuracy: Vec::new(),
        difficulty: Vec::new(),
        baseline: Vec::new(),
        constant: Vec::new(),
        strata: sp.strata().to_vec(),
    };
    for s in 0..sp.n_strata() {
        let w = |k, d, y| decomp.weight(k, d, y, s);
        out.zeta.push(
            (0..kk)
                .map(|k| (0..kk).map(|d| w(k, d, 1) - w(k, d, 0)).collect())
                .collect(),
        );
        out.xi
            .push((0..kk).map(|d| (0..kk).map(|k| w(k, d, 0)).sum()).collect());
        out.difficulty.push(
            (0..kk)
                .map(|d| (0..kk).map(|k| view.marginal(d, k, 1, s).clone()).collect())
                .collect(),
        );
        out.accuracy
            .push((0..kk).map(|d| view.marginal(d, d, 1, s).clone()).collect());
        out.baseline
            .push((0..kk).map(|d| view.decision_prob(d, s)).collect());
        let law = (view.variant() == ObservableVariant::Extended).then(|| &view.q(s)[nm..]);
        out.constant.push(constant_stratum(decomp, law, s));
    }
    Ok(out)
}

/// Per-`(stratum, d)` verdicts of the binary weight ordering
/// `ω_d(d,1) ≤ ω_{d'}(d,0) ≤ 0 ≤ ω_{d'}(d,1) ≤ ω_d(d,0)` for all `d' ≠ d`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OrderingReport {
    pub holds: Vec<Vec<bool>>,
}

impl OrderingReport {
    pub fn all(&self) -> bool {
        self.holds.iter().flatten().all(|b| *b)
    }
}

pub fn check_weight_ordering(decomp: &AdditiveDecomposition) -> Result<OrderingReport> {
    let sp = decomp.spaces();
    if sp.outcomes() != 2 {
        return Err(Error::OutcomeNotBinary(sp.outcomes()));
    }
    let kk = sp.decisions();
    let zero = Rational::zero();
    let holds = (0..sp.n_strata())
        .map(|s| {
            (0..kk)
                .map(|d| {
                    let w = |k, y| decomp.weight(k, d, y, s);
                    (0..kk).filter(|&o| o != d).all(|o| {
                        w(d, 1) <= w(o, 0)
                            && *w(o, 0) <= zero
                            && zero <= *w(o, 1)
                            && w(o, 1) <= w(d, 0)
                    })
                })
                .collect()
        })
        .collect();
    Ok(OrderingReport { holds })
}

/// A decision rule on strata.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Deterministic(Vec<usize>),
    Stochastic(#[serde(serialize_with = "ser_rows")] Vec<Vec<Rational>>),
}

fn ser_rows<S: serde::Serializer>(rows: &[Vec<Rational>], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(
        rows.iter()
            .map(|r| r.iter().map(rational::format).collect::<Vec<_>>()),
    )
}

impl Policy {
    pub fn constant(decision: usize, n_strata: usize) -> Self {
        Self::Deterministic(vec![decision; n_strata])
    }

    pub fn validate(&self, spaces: &Spaces) -> Result<()> {
        let n = match self {
            Self::Deterministic(v) => v.len(),
            Self::Stochastic(v) => v.len(),
        };
        if n != spaces.n_strata() {
            return Err(Error::DimensionMismatch(format!(
                "policy covers {n} strata, expected {}",
                spaces.n_strata()
            )));
        }
        match self {
            Self::Deterministic(v) => v.iter().try_for_each(|d| spaces.check_decision(*d)),
            Self::Stochastic(rows) => {
                for (s, r) in rows.iter().enumerate() {
                    if r.len() != spaces.decisions()
                        || r.iter().any(Signed::is_negative)
                        || !rational::sum(r).is_one()
                    {
                        return Err(Error::InvalidDistribution(format!(
                            "policy row for stratum {s} is not a distribution over {} decisions",
                            spaces.decisions()
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// `Pr(D* = · | x = s)`.
    pub fn probabilities(&self, s: usize, k: usize) -> Vec<Rational> {
        match self {
            Self::Deterministic(v) => (0..k)
                .map(|d| {
                    if d == v[s] {
                        Rational::one()
                    } else {
                        Rational::zero()
                    }
                })
                .collect(),
            Self::Stochastic(rows) => rows[s].clone(),
        }
    }
}

/// `Pr(Y(k) = y | x)` per stratum (indexed `k·M + y`), with the outcome joint
/// law when it is known.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutcomeMarginals {
    spaces: Spaces,
    marginals: Vec<Vec<Rational>>,
    joint: Option<Vec<Vec<Rational>>>,
    weights: Vec<Rational>,
}

impl OutcomeMarginals {
    pub fn new(
        spaces: Spaces,
        marginals: Vec<Vec<Rational>>,
        weights: Vec<Rational>,
    ) -> Result<Self> {
        let (kk, m) = (spaces.decisions(), spaces.outcomes());
        if marginals.len() != spaces.n_strata()
            || weights.len() != spaces.n_strata()
            || marginals.iter().any(|r| r.len() != kk * m)
        {
            return Err(Error::DimensionMismatch(
                "outcome marginals need K·M entries per stratum and one weight per stratum".into(),
            ));
        }
        for (s, r) in marginals.iter().enumerate() {
            for k in 0..kk {
                let block = &r[k * m..(k + 1) * m];
                if block.iter().any(Signed::is_negative) || !rational::sum(block).is_one() {
                    return Err(Error::InvalidDistribution(format!(
                        "stratum {s}: Pr(Y({k}) = ·) is not a distribution"
                    )));
                }
            }
        }
        if weights.iter().any(Signed::is_negative) || !rational::sum(&weights).is_one() {
            return Err(Error::InvalidDistribution("stratum weights".into()));
        }
        Ok(Self {
            spaces,
            marginals,
            joint: None,
            weights,
        })
    }

    pub fn from_model(model: &JointModel) -> Self {
        let sp = model.spaces().clone();
        let (kk, m) = (sp.decisions(), sp.outcomes());
        let mut marginals = Vec::new();
        let mut joint = Vec::new();
        for s in 0..sp.n_strata() {
            let law = model.outcome_law(s);
            let mut r = vec![Rational::zero(); kk * m];
            for (i, p) in law.iter().enumerate() {
                for (k, y) in sp.outcome_vector(i).into_iter().enumerate() {
                    r[k * m + y] += p;
                }
            }
            marginals.push(r);
            joint.push(law);
        }
        Self {
            weights: model.stratum_weights().to_vec(),
            spaces: sp,
            marginals,
            joint: Some(joint),
        }
    }

    pub fn from_view(view: &ObservableView) -> Self {
        let sp = view.spaces().clone();
        let (kk, m) = (sp.decisions(), sp.outcomes());
        let marginals = (0..sp.n_strata())
            .map(|s| {
                (0..kk * m)
                    .map(|i| view.potential_outcome_marginal(i / m, i % m, s))
                    .collect()
            })
            .collect();
        let joint = (view.variant() == ObservableVariant::Extended).then(|| {
            (0..sp.n_strata())
                .map(|s| view.q(s)[sp.n_marginals()..].to_vec())
                .collect()
        });
        Self {
            weights: view.stratum_weights().to_vec(),
            spaces: sp,
            marginals,
            joint,
        }
    }

    pub fn spaces(&self) -> &Spaces {
        &self.spaces
    }

    pub fn marginal(&self, k: usize, y: usize, s: usize) -> &Rational {
        &self.marginals[s][k * self.spaces.outcomes() + y]
    }

    /// Observable view of `D*` drawn from `policy` independently of `Y(·)`.
    pub fn embed(&self, policy: &Policy) -> Result<ObservableView> {
        policy.validate(&self.spaces)?;
        let sp = &self.spaces;
        let (kk, m) = (sp.decisions(), sp.outcomes());
        let mut q = Vec::new();
        for s in 0..sp.n_strata() {
            let pd = policy.probabilities(s, kk);
            let mut v = vec![Rational::zero(); sp.n_marginals()];
            for d in 0..kk {
                for k in 0..kk {
                    for y in 0..m {
                        v[marginal_row(sp, d, k, y)] = &pd[d] * self.marginal(k, y, s);
                    }
                }
            }
            if let Some(j) = &self.joint {
                v.extend(j[s].iter().cloned());
            }
            q.push(v);
        }
        let variant = if self.joint.is_some() {
            ObservableVariant::Extended
        } else {
            ObservableVariant::MarginalsOnly
        };
        ObservableView::new(sp.clone(), variant, q, self.weights.clone())
    }
}

/// Joint model with `D* ~ policy` independent of `Y(·) ~ outcome_law`.
pub fn embed_policy(
    policy: &Policy,
    outcome_law: &[Vec<Rational>],
    propensity: Vec<Vec<Rational>>,
    weights: Vec<Rational>,
    spaces: &Spaces,
) -> Result<JointModel> {
    policy.validate(spaces)?;
    let rows: Vec<Vec<Rational>> = (0..spaces.n_strata())
        .map(|s| policy.probabilities(s, spaces.decisions()))
        .collect();
    JointModel::independent(spaces.clone(), &rows, outcome_law, propensity, weights)
}

pub const MAX_POLICY_CANDIDATES: usize = 4096;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicyOptimum {
    pub policy: Vec<usize>,
    pub report: RiskReport,
}

/// Best deterministic lookup-table rule by exhaustive search.
///
/// Rules are enumerated in lexicographic order (stratum 0 most significant)
/// and the first minimiser wins, so ties go to the smallest decision index.
pub fn optimize_policy(
    decomp: &AdditiveDecomposition,
    outcomes: &OutcomeMarginals,
) -> Result<PolicyOptimum> {
    check_spaces(decomp.spaces(), outcomes.spaces())?;
    let sp = decomp.spaces();
    let (kk, m, n_s) = (sp.decisions(), sp.outcomes(), sp.n_strata());
    let candidates = (0..n_s)
        .try_fold(1usize, |acc, _| acc.checked_mul(kk))
        .filter(|c| *c <= MAX_POLICY_CANDIDATES)
        .ok_or_else(|| {
            Error::SearchSpaceTooLarge(format!(
                "{kk}^{n_s} deterministic rules exceed the limit of {MAX_POLICY_CANDIDATES}"
            ))
        })?;
    // score[s][d]: identified part of stratum s when D* = d there.
    let score: Vec<Vec<Rational>> = (0..n_s)
        .map(|s| {
            (0..kk)
                .map(|d| {
                    let mut acc = Rational::zero();
                    for k in 0..kk {
                        for y in 0..m {
                            acc += decomp.weight(k, d, y, s) * outcomes.marginal(k, y, s);
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect();
    let decode = |mut idx: usize| {
        let mut rule = vec![0; n_s];
        for slot in rule.iter_mut().rev() {
            *slot = idx % kk;
            idx /= kk;
        }
        rule
    };
    let total = |rule: &[usize]| -> Rational {
        rule.iter()
            .enumerate()
            .map(|(s, &d)| &outcomes.weights[s] * &score[s][d])
            .sum()
    };
    let (_, best) = (0..candidates)
        .into_par_iter()
        .map(|i| (total(&decode(i)), i))
        .reduce_with(|a, b| {
            if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
                b
            } else {
                a
            }
        })
        .expect("at least one rule");
    let policy = decode(best);
    let view = outcomes.embed(&Policy::Deterministic(policy.clone()))?;
    let report = identified_risk(decomp, &view, ConstantHandling::AllowUnknown)?;
    Ok(PolicyOptimum { policy, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::additivity::{decompose, Variant};
    use crate::distributions::marginalize;
    use crate::examples::builtin_example;
    use crate::rational::{int, ratio};

    fn params(pairs: &[(&str, Rational)]) -> crate::Params {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect()
    }

    fn classification() -> LossTensor {
        builtin_example(
            "classification-general",
            &params(&[
                ("l0", int(1)),
                ("l1", int(0)),
                ("lt0", int(0)),
                ("lt1", ratio(1, 2)),
                ("c0", int(0)),
                ("c1", ratio(1, 10)),
            ]),
        )
        .unwrap()
    }

    fn model(p: Vec<Rational>) -> JointModel {
        let s = Spaces::single(2, 2).unwrap();
        JointModel::new(s, vec![p], vec![vec![ratio(1, 2); 2]], vec![int(1)]).unwrap()
    }

    fn uniform_outcomes(spaces: &Spaces) -> Vec<Rational> {
        vec![ratio(1, spaces.n_outcome_vectors() as i64); spaces.n_outcome_vectors()]
    }

    #[test]
    fn point_mass_true_risk() {
        let s = Spaces::single(2, 2).unwrap();
        let mut p = vec![int(0); 8];
        p[s.joint_index(1, &[0, 1])] = int(1);
        let r = true_risk(&classification(), &model(p)).unwrap();
        assert_eq!(r.total().unwrap(), ratio(1, 10));
    }

    #[test]
    fn uniform_true_risk_is_mean() {
        let loss = classification();
        let r = true_risk(&loss, &model(vec![ratio(1, 8); 8])).unwrap();
        assert_eq!(r.total().unwrap(), rational::sum(loss.stratum(0)) / int(8));
    }

    #[test]
    fn identified_equals_truth_for_exact_loss() {
        let loss = classification();
        let d = decompose(&loss, Variant::Restricted).additive().unwrap();
        let p: Vec<Rational> = (1..=8).map(|i| ratio(i, 36)).collect();
        let m = model(p);
        let view = marginalize(&m, ObservableVariant::MarginalsOnly);
        let id = identified_risk(&d, &view, ConstantHandling::Require).unwrap();
        assert_eq!(id.total(), true_risk(&loss, &m).unwrap().total());
        assert!(id.exact);
    }

    #[test]
    fn pure_intercept_contributes_one() {
        let s = Spaces::single(2, 2).unwrap();
        let d = AdditiveDecomposition::from_fn(s.clone(), |_, _, _, _| int(0), |_, _| int(1));
        let m = model(vec![ratio(1, 8); 8]);
        let ext = identified_risk(
            &d,
            &marginalize(&m, ObservableVariant::Extended),
            ConstantHandling::Require,
        )
        .unwrap();
        assert_eq!(ext.constant_part, vec![Some(int(1))]);
        assert_eq!(ext.identified_total(), int(0));
        let view = marginalize(&m, ObservableVariant::MarginalsOnly);
        assert_eq!(
            identified_risk(&d, &view, ConstantHandling::Require).unwrap_err(),
            Error::NeedExtendedView
        );
        let unknown = identified_risk(&d, &view, ConstantHandling::AllowUnknown).unwrap();
        assert_eq!(unknown.total(), None);
    }

    #[test]
    fn difference_matches_truth_with_intercept() {
        let s = Spaces::single(2, 2).unwrap();
        let d = AdditiveDecomposition::from_fn(
            s.clone(),
            |k, dd, y, _| int((k * 3 + dd * 2 + y) as i64 - 4),
            |y, _| int(y[0] as i64 * 5 - y[1] as i64 * 2),
        );
        let loss = d.reconstruct();
        let law: Vec<Rational> = vec![ratio(1, 10), ratio(2, 10), ratio(3, 10), ratio(4, 10)];
        let prop = vec![vec![ratio(1, 2); 2]];
        let m1 = embed_policy(
            &Policy::constant(0, 1),
            std::slice::from_ref(&law),
            prop.clone(),
            vec![int(1)],
            &s,
        )
        .unwrap();
        let m2 = embed_policy(
            &Policy::Stochastic(vec![vec![ratio(1, 3), ratio(2, 3)]]),
            &[law],
            prop,
            vec![int(1)],
            &s,
        )
        .unwrap();
        let diff = identified_difference(
            &d,
            &marginalize(&m1, ObservableVariant::MarginalsOnly),
            &marginalize(&m2, ObservableVariant::MarginalsOnly),
        )
        .unwrap();
        let truth = true_risk(&loss, &m1).unwrap().total().unwrap()
            - true_risk(&loss, &m2).unwrap().total().unwrap();
        assert_eq!(diff.total, truth);
    }

    #[test]
    fn difference_rejects_different_populations() {
        let s = Spaces::single(2, 2).unwrap();
        let d = AdditiveDecomposition::from_fn(s, |_, _, _, _| int(1), |_, _| int(0));
        let a = marginalize(
            &model(vec![ratio(1, 8); 8]),
            ObservableVariant::MarginalsOnly,
        );
        let mut p = vec![int(0); 8];
        p[0] = int(1);
        let b = marginalize(&model(p), ObservableVariant::MarginalsOnly);
        assert!(matches!(
            identified_difference(&d, &a, &b),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn observed_conditionals_match_marginals() {
        let p: Vec<Rational> = (1..=8).map(|i| ratio(i, 36)).collect();
        let m = model(p)
            .with_propensity(vec![vec![ratio(1, 5), ratio(4, 5)]])
            .unwrap();
        for v in [
            ObservableVariant::MarginalsOnly,
            ObservableVariant::Extended,
        ] {
            assert_eq!(observed_view(&m, v), marginalize(&m, v));
        }
    }

    #[test]
    fn classification_binary_terms() {
        let d = decompose(&classification(), Variant::Restricted)
            .additive()
            .unwrap();
        let m = model(vec![ratio(1, 8); 8]);
        let b =
            binary_decomposition(&d, &marginalize(&m, ObservableVariant::MarginalsOnly)).unwrap();
        for dd in 0..2 {
            assert_eq!(b.zeta[0][dd][dd], int(-1));
            assert_eq!(b.zeta[0][1 - dd][dd], ratio(1, 2));
        }
        assert_eq!(b.xi[0], vec![int(1), ratio(11, 10)]);
        assert_eq!(
            b.reassemble(0),
            true_risk(&classification(), &m).unwrap().conditional()[0]
        );
    }

    #[test]
    fn outcome_free_weights_leave_only_baseline() {
        let s = Spaces::single(2, 2).unwrap();
        let d = AdditiveDecomposition::from_fn(
            s,
            |k, dd, _, _| int((k + 2 * dd) as i64),
            |_, _| int(0),
        );
        let m = model((1..=8).map(|i| ratio(i, 36)).collect());
        let b =
            binary_decomposition(&d, &marginalize(&m, ObservableVariant::MarginalsOnly)).unwrap();
        assert!(b.zeta[0].iter().flatten().all(Zero::is_zero));
        assert_eq!(b.identified(0), b.baseline_term(0));
    }

    #[test]
    fn ordering_checks() {
        let s = Spaces::single(2, 2).unwrap();
        let zero = AdditiveDecomposition::from_fn(s.clone(), |_, _, _, _| int(0), |_, _| int(0));
        assert!(check_weight_ordering(&zero).unwrap().all());
        let chain = AdditiveDecomposition::from_fn(
            s,
            |k, d, y, _| match (k == d, y) {
                (true, 1) => int(-2),
                (false, 0) => int(-1),
                (false, _) => int(1),
                (true, _) => int(2),
            },
            |_, _| int(0),
        );
        assert!(check_weight_ordering(&chain).unwrap().all());
        // ω_d(d, y) = l_y + c_d and ω_{1-d}(d, y) = lt_y; ω_1(1, 1) = 1/10 > 0 = ω_0(1, 0)
        let l = [int(1), int(0)];
        let lt = [int(0), ratio(1, 2)];
        let c = [int(0), ratio(1, 10)];
        let d = AdditiveDecomposition::from_fn(
            Spaces::single(2, 2).unwrap(),
            |k, dd, y, _| {
                if k == dd {
                    &l[y] + &c[dd]
                } else {
                    lt[y].clone()
                }
            },
            |_, _| int(0),
        );
        assert_eq!(d.reconstruct(), classification());
        assert_eq!(
            check_weight_ordering(&d).unwrap().holds,
            vec![vec![true, false]]
        );
    }

    #[test]
    fn standard_loss_policy_choice() {
        let s = Spaces::single(2, 2).unwrap();
        let d = AdditiveDecomposition::from_fn(
            s.clone(),
            |k, dd, y, _| {
                if k != dd {
                    int(0)
                } else {
                    int(1 - y as i64) + if dd == 1 { ratio(1, 4) } else { int(0) }
                }
            },
            |_, _| int(0),
        );
        let mu = OutcomeMarginals::new(
            s,
            vec![vec![ratio(1, 2), ratio(1, 2), ratio(1, 10), ratio(9, 10)]],
            vec![int(1)],
        )
        .unwrap();
        let opt = optimize_policy(&d, &mu).unwrap();
        assert_eq!(opt.policy, vec![1]);
        assert_eq!(opt.report.total(), Some(ratio(7, 20)));
    }

    #[test]
    fn overtreatment_threshold() {
        let s = Spaces::single(3, 2).unwrap();
        let mu = [ratio(1, 2), ratio(7, 10), ratio(4, 5)];
        let marg = vec![mu
            .iter()
            .flat_map(|m| [int(1) - m, m.clone()])
            .collect::<Vec<_>>()];
        let outcomes = OutcomeMarginals::new(s.clone(), marg, vec![int(1)]).unwrap();
        for (r0, want) in [(int(0), 1), (ratio(3, 10), 0), (ratio(1, 10), 1)] {
            let loss = builtin_example(
                "trichotomous",
                &params(&[
                    ("l0", int(1)),
                    ("l1", int(0)),
                    ("c0", int(0)),
                    ("c1", ratio(1, 10)),
                    ("c2", ratio(3, 10)),
                    ("r0", r0),
                    ("r1", int(0)),
                ]),
            )
            .unwrap();
            let d = decompose(&loss, Variant::Full).additive().unwrap();
            assert_eq!(optimize_policy(&d, &outcomes).unwrap().policy, vec![want]);
        }
    }

    #[test]
    fn search_guard() {
        let s = Spaces::new(2, 2, (0..13).map(|i| i.to_string()).collect()).unwrap();
        let d = AdditiveDecomposition::from_fn(s.clone(), |_, _, _, _| int(0), |_, _| int(0));
        let mu = OutcomeMarginals::new(s, vec![vec![ratio(1, 2); 4]; 13], vec![ratio(1, 13); 13])
            .unwrap();
        assert!(matches!(
            optimize_policy(&d, &mu),
            Err(Error::SearchSpaceTooLarge(_))
        ));
    }

    #[test]
    fn outcome_marginals_from_model_and_view_agree() {
        let s = Spaces::single(2, 3).unwrap();
        let m = JointModel::independent(
            s.clone(),
            &[vec![ratio(1, 3), ratio(2, 3)]],
            &[uniform_outcomes(&s)],
            vec![vec![ratio(1, 2); 2]],
            vec![int(1)],
        )
        .unwrap();
        assert_eq!(
            OutcomeMarginals::from_model(&m),
            OutcomeMarginals::from_view(&marginalize(&m, ObservableVariant::Extended))
        );
    }
}
