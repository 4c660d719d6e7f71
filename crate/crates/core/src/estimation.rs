//! Plug-in estimation of the identified risk from observed records.
//!
//! Frequencies `Pr(D* = d, Y = y | D = k, x)` and `Pr(X = x)` are counted
//! exactly and substituted into the identification formula. No smoothing is
//! applied: a stratum with no unit at some observed decision is an error.

use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;

use crate::additivity::AdditiveDecomposition;
use crate::distributions::{
    marginal_row, simulate_records, JointModel, ObservableVariant, ObservableView, Record,
};
use crate::error::{Error, Result};
use crate::rational::{self, Rational};
use crate::risk::{identified_risk, true_risk, ConstantHandling};
use crate::space::Spaces;

/// Counts of `(x, d*, k, y)` cells and the frequencies derived from them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmpiricalView {
    spaces: Spaces,
    view: ObservableView,
    n: u64,
}

fn cell(spaces: &Spaces, r: &Record) -> usize {
    let (kk, m) = (spaces.decisions(), spaces.outcomes());
    ((r.x * kk + r.d_star) * kk + r.d) * m + r.y
}

impl EmpiricalView {
    pub fn from_records(records: &[Record], spaces: &Spaces) -> Result<Self> {
        let (kk, m) = (spaces.decisions(), spaces.outcomes());
        let width = spaces.n_strata() * kk * kk * m;
        for r in records {
            if r.x >= spaces.n_strata() || r.d_star >= kk || r.d >= kk || r.y >= m {
                return Err(Error::BadIndex(format!("record {r:?} outside the spaces")));
            }
        }
        let counts = records
            .par_chunks(1 << 15)
            .map(|chunk| {
                let mut c = vec![0u64; width];
                for r in chunk {
                    c[cell(spaces, r)] += 1;
                }
                c
            })
            .reduce(
                || vec![0u64; width],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        let law: Vec<Rational> = counts
            .iter()
            .map(|&c| Rational::from_integer(c.into()))
            .collect();
        let view = conditional_view(spaces, &law)?;
        Ok(Self {
            spaces: spaces.clone(),
            view,
            n: records.len() as u64,
        })
    }

    /// The view an infinite sample would give: exact record probabilities.
    pub fn from_population(model: &JointModel) -> Result<Self> {
        let view = conditional_view(model.spaces(), &model.record_law())?;
        Ok(Self {
            spaces: model.spaces().clone(),
            view,
            n: 0,
        })
    }

    pub fn spaces(&self) -> &Spaces {
        &self.spaces
    }

    /// Number of records counted; zero for a population view.
    pub fn sample_size(&self) -> u64 {
        self.n
    }

    /// Frequencies arranged as marginals: entry `(d, k, y)` is
    /// `Pr(D* = d, Y = y | D = k, x)`.
    pub fn as_observable(&self) -> &ObservableView {
        &self.view
    }
}

/// Conditions the (unnormalised) law of `(x, d*, k, y)` on `(x, k)`.
fn conditional_view(spaces: &Spaces, law: &[Rational]) -> Result<ObservableView> {
    let (kk, m) = (spaces.decisions(), spaces.outcomes());
    let total = rational::sum(law);
    if total.is_zero() {
        return Err(Error::InvalidArgument("no records".into()));
    }
    let mut q = Vec::with_capacity(spaces.n_strata());
    let mut weights = Vec::with_capacity(spaces.n_strata());
    for s in 0..spaces.n_strata() {
        let at = |d: usize, k: usize, y: usize| &law[((s * kk + d) * kk + k) * m + y];
        let mut v = vec![Rational::zero(); spaces.n_marginals()];
        let mut stratum_total = Rational::zero();
        for k in 0..kk {
            let nk: Rational = (0..kk)
                .flat_map(|d| (0..m).map(move |y| (d, y)))
                .map(|(d, y)| at(d, k, y))
                .sum();
            if nk.is_zero() {
                return Err(Error::EmptyPropensityCell {
                    stratum: s,
                    decision: k,
                });
            }
            for d in 0..kk {
                for y in 0..m {
                    v[marginal_row(spaces, d, k, y)] = at(d, k, y) / &nk;
                }
            }
            stratum_total += nk;
        }
        q.push(v);
        weights.push(stratum_total / &total);
    }
    ObservableView::new(spaces.clone(), ObservableVariant::MarginalsOnly, q, weights)
}

/// Plug-in estimate of the identified part of the risk.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Estimate {
    #[serde(with = "rational::serde_vec")]
    pub stratum_weights: Vec<Rational>,
    #[serde(with = "rational::serde_vec")]
    pub identified_part: Vec<Rational>,
    /// True when the loss has an intercept, whose contribution is left out.
    pub constant_omitted: bool,
    pub sample_size: u64,
}

impl Estimate {
    pub fn total(&self) -> Rational {
        self.stratum_weights
            .iter()
            .zip(&self.identified_part)
            .map(|(w, v)| w * v)
            .sum()
    }

    pub fn total_f64(&self) -> f64 {
        rational::to_f64(&self.total())
    }
}

fn estimate(decomp: &AdditiveDecomposition, view: &EmpiricalView) -> Result<Estimate> {
    let report = identified_risk(decomp, view.as_observable(), ConstantHandling::AllowUnknown)?;
    Ok(Estimate {
        stratum_weights: report.stratum_weights,
        identified_part: report.identified_part,
        constant_omitted: !decomp.is_exact(),
        sample_size: view.sample_size(),
    })
}

/// Estimated risk level; the loss must have no intercept.
pub fn estimate_identified_risk(
    decomp: &AdditiveDecomposition,
    view: &EmpiricalView,
) -> Result<Estimate> {
    if !decomp.is_exact() {
        return Err(Error::NeedExactLoss);
    }
    estimate(decomp, view)
}

/// Estimated identified part without the intercept, valid for differences.
pub fn estimate_identified_part(
    decomp: &AdditiveDecomposition,
    view: &EmpiricalView,
) -> Result<Estimate> {
    estimate(decomp, view)
}

/// Estimated `R(D*₁) − R(D*₂)` from two samples of the same population.
pub fn estimate_difference(
    decomp: &AdditiveDecomposition,
    first: &EmpiricalView,
    second: &EmpiricalView,
) -> Result<Rational> {
    Ok(estimate(decomp, first)?.total() - estimate(decomp, second)?.total())
}

/// One replication: the estimate at each requested sample size, all from
/// prefixes of one simulated sample.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Replication {
    pub seed: u64,
    pub estimates: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonteCarlo {
    pub truth: f64,
    pub sizes: Vec<usize>,
    pub replications: Vec<Replication>,
}

impl MonteCarlo {
    pub fn errors(&self, size_index: usize) -> Vec<f64> {
        self.replications
            .iter()
            .map(|r| r.estimates[size_index] - self.truth)
            .collect()
    }

    pub fn rmse(&self, size_index: usize) -> f64 {
        let e = self.errors(size_index);
        (e.iter().map(|x| x * x).sum::<f64>() / e.len() as f64).sqrt()
    }

    /// Replications whose absolute error is at most `tol`.
    pub fn within(&self, size_index: usize, tol: f64) -> usize {
        self.errors(size_index)
            .iter()
            .filter(|e| e.abs() <= tol)
            .count()
    }
}

/// Simulates `seeds` replications from `model` and estimates the risk level at
/// every size in `sizes` (prefixes of one sample per seed). The truth is the
/// exact risk of the reconstructed loss.
pub fn monte_carlo(
    decomp: &AdditiveDecomposition,
    model: &JointModel,
    sizes: &[usize],
    seeds: std::ops::Range<u64>,
) -> Result<MonteCarlo> {
    if !decomp.is_exact() {
        return Err(Error::NeedExactLoss);
    }
    let n_max = *sizes
        .iter()
        .max()
        .ok_or_else(|| Error::InvalidArgument("no sample sizes".into()))?;
    let truth = true_risk(&decomp.reconstruct(), model)?
        .total()
        .expect("truth has no unknown part");
    let replications = seeds
        .into_par_iter()
        .map(|seed| {
            let records = simulate_records(model, n_max, seed)?;
            let estimates = sizes
                .iter()
                .map(|&n| {
                    let view = EmpiricalView::from_records(&records[..n], model.spaces())?;
                    Ok(estimate_identified_risk(decomp, &view)?.total_f64())
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(Replication { seed, estimates })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MonteCarlo {
        truth: rational::to_f64(&truth),
        sizes: sizes.to_vec(),
        replications,
    })
}
