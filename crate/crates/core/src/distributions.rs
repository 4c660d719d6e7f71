//! Joint laws of `(D*, Y(0), …, Y(K-1))`, the observable marginals they induce,
//! and IID simulation of records.
//!
//! The observed decision `D` is drawn from the stratum's propensity
//! independently of `(D*, Y(·))`, so unconfoundedness holds by construction.
//! Overlap is checked: every propensity must lie in `(η, 1 − η)`.

use num_traits::{One, Signed, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rref};
use crate::rational::{self, Rational};
use crate::space::Spaces;

pub fn default_eta() -> Rational {
    rational::ratio(1, 100)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObservableVariant {
    /// `Pr(D* = d, Y(k) = y | x)` only.
    #[serde(rename = "a")]
    MarginalsOnly,
    /// Also the joint law `Pr(Y(0) = y_0, …, Y(K-1) = y_{K-1} | x)`.
    #[serde(rename = "b")]
    Extended,
}

impl std::str::FromStr for ObservableVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" | "marginals" => Ok(Self::MarginalsOnly),
            "b" | "extended" => Ok(Self::Extended),
            _ => Err(Error::InvalidArgument(format!(
                "observable variant must be `a` (marginals) or `b` (extended), got `{s}`"
            ))),
        }
    }
}

/// Per-stratum joint law of `(D*, Y(·))` with propensities and stratum weights.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointModel {
    spaces: Spaces,
    p: Vec<Vec<Rational>>,
    propensity: Vec<Vec<Rational>>,
    weights: Vec<Rational>,
    eta: Rational,
}

fn check_simplex(v: &[Rational], what: &str) -> Result<()> {
    if let Some(bad) = v.iter().find(|x| x.is_negative()) {
        return Err(Error::InvalidDistribution(format!(
            "{what}: negative probability {}",
            rational::format(bad)
        )));
    }
    let total = rational::sum(v);
    if !total.is_one() {
        return Err(Error::InvalidDistribution(format!(
            "{what}: probabilities sum to {}, not 1",
            rational::format(&total)
        )));
    }
    Ok(())
}

impl JointModel {
    /// Validates with the default overlap bound `η = 1/100`.
    pub fn new(
        spaces: Spaces,
        p: Vec<Vec<Rational>>,
        propensity: Vec<Vec<Rational>>,
        weights: Vec<Rational>,
    ) -> Result<Self> {
        Self::with_eta(spaces, p, propensity, weights, default_eta())
    }

    pub fn with_eta(
        spaces: Spaces,
        p: Vec<Vec<Rational>>,
        propensity: Vec<Vec<Rational>>,
        weights: Vec<Rational>,
        eta: Rational,
    ) -> Result<Self> {
        let n_s = spaces.n_strata();
        if p.len() != n_s || propensity.len() != n_s || weights.len() != n_s {
            return Err(Error::DimensionMismatch(format!(
                "model needs joint law, propensity and weight for each of {n_s} strata"
            )));
        }
        if !(eta.is_positive() && eta < rational::ratio(1, 2)) {
            return Err(Error::InvalidArgument(format!(
                "overlap bound must lie in (0, 1/2), got {}",
                rational::format(&eta)
            )));
        }
        for (s, label) in spaces.strata().iter().enumerate() {
            if p[s].len() != spaces.n_joint() {
                return Err(Error::DimensionMismatch(format!(
                    "stratum `{label}`: joint law has {} entries, expected N = {}",
                    p[s].len(),
                    spaces.n_joint()
                )));
            }
            check_simplex(&p[s], &format!("stratum `{label}` joint law"))?;
            if propensity[s].len() != spaces.decisions() {
                return Err(Error::DimensionMismatch(format!(
                    "stratum `{label}`: {} propensities for K = {}",
                    propensity[s].len(),
                    spaces.decisions()
                )));
            }
            check_simplex(&propensity[s], &format!("stratum `{label}` propensity"))?;
            let upper = Rational::one() - &eta;
            for (k, e) in propensity[s].iter().enumerate() {
                if !(*e > eta && *e < upper) {
                    return Err(Error::OverlapViolated {
                        stratum: label.clone(),
                        decision: k,
                        value: rational::format(e),
                        eta: rational::format(&eta),
                    });
                }
            }
        }
        check_simplex(&weights, "stratum weights")?;
        Ok(Self {
            spaces,
            p,
            propensity,
            weights,
            eta,
        })
    }

    /// `D*` drawn from `policy[s]` independently of `Y(·) ~ outcome_law[s]`.
    pub fn independent(
        spaces: Spaces,
        policy: &[Vec<Rational>],
        outcome_law: &[Vec<Rational>],
        propensity: Vec<Vec<Rational>>,
        weights: Vec<Rational>,
    ) -> Result<Self> {
        if policy.len() != spaces.n_strata() || outcome_law.len() != spaces.n_strata() {
            return Err(Error::DimensionMismatch(
                "policy and outcome law need one row per stratum".into(),
            ));
        }
        let mut p = Vec::with_capacity(spaces.n_strata());
        for s in 0..spaces.n_strata() {
            if policy[s].len() != spaces.decisions()
                || outcome_law[s].len() != spaces.n_outcome_vectors()
            {
                return Err(Error::DimensionMismatch(format!(
                    "stratum {s}: policy needs K entries and outcome law M^K entries"
                )));
            }
            p.push(
                policy[s]
                    .iter()
                    .flat_map(|pd| outcome_law[s].iter().map(move |py| pd * py))
                    .collect(),
            );
        }
        Self::new(spaces, p, propensity, weights)
    }

    pub fn spaces(&self) -> &Spaces {
        &self.spaces
    }

    pub fn eta(&self) -> &Rational {
        &self.eta
    }

    /// Joint law of stratum `s` in joint-cell order.
    pub fn joint(&self, s: usize) -> &[Rational] {
        &self.p[s]
    }

    pub fn prob(&self, d: usize, y: &[usize], s: usize) -> &Rational {
        &self.p[s][self.spaces.joint_index(d, y)]
    }

    pub fn propensity(&self, s: usize) -> &[Rational] {
        &self.propensity[s]
    }

    pub fn stratum_weights(&self) -> &[Rational] {
        &self.weights
    }

    /// `Pr(Y(·) = y | x)` for every outcome vector.
    pub fn outcome_law(&self, s: usize) -> Vec<Rational> {
        let per = self.spaces.n_outcome_vectors();
        (0..per)
            .map(|i| {
                (0..self.spaces.decisions())
                    .map(|d| &self.p[s][d * per + i])
                    .sum()
            })
            .collect()
    }

    /// `Pr(D* = d | x)`.
    pub fn decision_law(&self, s: usize) -> Vec<Rational> {
        let per = self.spaces.n_outcome_vectors();
        (0..self.spaces.decisions())
            .map(|d| rational::sum(&self.p[s][d * per..(d + 1) * per]))
            .collect()
    }

    /// Replaces the propensities, keeping everything else.
    pub fn with_propensity(&self, propensity: Vec<Vec<Rational>>) -> Result<Self> {
        Self::with_eta(
            self.spaces.clone(),
            self.p.clone(),
            propensity,
            self.weights.clone(),
            self.eta.clone(),
        )
    }

    /// Exact law of one observed record: `Pr(X = s, D* = d, D = k, Y = y)`,
    /// indexed `((s·K + d)·K + k)·M + y`.
    pub fn record_law(&self) -> Vec<Rational> {
        let (kk, m) = (self.spaces.decisions(), self.spaces.outcomes());
        let mut out = vec![Rational::zero(); self.spaces.n_strata() * kk * kk * m];
        for s in 0..self.spaces.n_strata() {
            for (i, p) in self.p[s].iter().enumerate() {
                if p.is_zero() {
                    continue;
                }
                let (d, y) = self.spaces.joint_cell(i);
                for k in 0..kk {
                    out[((s * kk + d) * kk + k) * m + y[k]] +=
                        &self.weights[s] * p * &self.propensity[s][k];
                }
            }
        }
        out
    }

    pub fn to_document(&self) -> DistributionDocument {
        DistributionDocument {
            k: self.spaces.decisions(),
            m: self.spaces.outcomes(),
            strata: (0..self.spaces.n_strata())
                .map(|s| DistributionStratum {
                    label: self.spaces.strata()[s].clone(),
                    weight: rational::format(&self.weights[s]),
                    propensity: self.propensity[s].iter().map(rational::format).collect(),
                    p: self.p[s]
                        .iter()
                        .enumerate()
                        .filter(|(_, v)| !v.is_zero())
                        .map(|(i, v)| {
                            let (d, y) = self.spaces.joint_cell(i);
                            JointEntry {
                                d_star: d,
                                y,
                                prob: rational::format(v),
                            }
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("model serialises")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionDocument {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub strata: Vec<DistributionStratum>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionStratum {
    pub label: String,
    pub weight: String,
    pub propensity: Vec<String>,
    /// Joint cells with nonzero probability; absent cells are zero.
    pub p: Vec<JointEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointEntry {
    pub d_star: usize,
    pub y: Vec<usize>,
    pub prob: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NumericMode {
    /// Probabilities parsed exactly; sums must equal one exactly.
    Rational,
    /// Probabilities parsed as binary floats; sums within `1e-12` of one are
    /// accepted and renormalised exactly.
    Float,
}

impl std::str::FromStr for NumericMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rational" => Ok(Self::Rational),
            "float" => Ok(Self::Float),
            _ => Err(Error::InvalidArgument(format!(
                "mode must be `rational` or `float`, got `{s}`"
            ))),
        }
    }
}

pub const FLOAT_SUM_TOLERANCE: f64 = 1e-12;

fn parse_probs(texts: &[&str], mode: NumericMode, what: &str) -> Result<Vec<Rational>> {
    match mode {
        NumericMode::Rational => texts.iter().map(|t| rational::parse(t)).collect(),
        NumericMode::Float => {
            let vals = texts
                .iter()
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::MalformedRational(t.to_string()))
                })
                .collect::<Result<Vec<f64>>>()?;
            let total: f64 = vals.iter().sum();
            if (total - 1.0).abs() > FLOAT_SUM_TOLERANCE {
                return Err(Error::InvalidDistribution(format!(
                    "{what}: probabilities sum to {total}, more than {FLOAT_SUM_TOLERANCE} from 1"
                )));
            }
            let exact: Vec<Rational> = vals
                .iter()
                .map(|v| Rational::from_float(*v).expect("finite"))
                .collect();
            let sum = rational::sum(&exact);
            if sum.is_zero() {
                return Err(Error::InvalidDistribution(format!("{what}: all zero")));
            }
            Ok(exact.into_iter().map(|v| v / &sum).collect())
        }
    }
}

pub fn load_model(source: &str, mode: NumericMode) -> Result<JointModel> {
    let doc: DistributionDocument =
        serde_json::from_str(source).map_err(|e| Error::MalformedDocument(e.to_string()))?;
    model_from_document(doc, mode)
}

pub fn model_from_document(doc: DistributionDocument, mode: NumericMode) -> Result<JointModel> {
    let labels = doc.strata.iter().map(|s| s.label.clone()).collect();
    let spaces = Spaces::new(doc.k, doc.m, labels)?;
    let mut p = Vec::new();
    let mut propensity = Vec::new();
    for st in &doc.strata {
        let mut cells: Vec<Option<&str>> = vec![None; spaces.n_joint()];
        for e in &st.p {
            spaces.check_decision(e.d_star)?;
            spaces.check_outcome_vector(&e.y)?;
            let slot = &mut cells[spaces.joint_index(e.d_star, &e.y)];
            if slot.is_some() {
                return Err(Error::DuplicateEntry {
                    stratum: st.label.clone(),
                    d: e.d_star,
                    y: e.y.clone(),
                });
            }
            *slot = Some(e.prob.as_str());
        }
        let texts: Vec<&str> = cells.into_iter().map(|c| c.unwrap_or("0")).collect();
        p.push(parse_probs(
            &texts,
            mode,
            &format!("stratum `{}` joint law", st.label),
        )?);
        let texts: Vec<&str> = st.propensity.iter().map(String::as_str).collect();
        propensity.push(parse_probs(
            &texts,
            mode,
            &format!("stratum `{}` propensity", st.label),
        )?);
    }
    let texts: Vec<&str> = doc.strata.iter().map(|s| s.weight.as_str()).collect();
    let weights = parse_probs(&texts, mode, "stratum weights")?;
    JointModel::new(spaces, p, propensity, weights)
}

/// The zero-one map `C` from joint laws to observable marginals.
///
/// Row `(d·K + k)·M + y` is `Pr(D* = d, Y(k) = y)`; extended rows
/// `K²M + index(y)` are `Pr(Y(·) = y)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarginalMatrix {
    variant: ObservableVariant,
    matrix: Matrix,
}

pub fn marginal_row(spaces: &Spaces, d: usize, k: usize, y: usize) -> usize {
    (d * spaces.decisions() + k) * spaces.outcomes() + y
}

pub fn build_marginal_matrix(spaces: &Spaces, variant: ObservableVariant) -> MarginalMatrix {
    let rows = match variant {
        ObservableVariant::MarginalsOnly => spaces.n_marginals(),
        ObservableVariant::Extended => spaces.n_extended(),
    };
    let mut matrix = Matrix::zeros(rows, spaces.n_joint());
    for col in 0..spaces.n_joint() {
        let (d, y) = spaces.joint_cell(col);
        for (k, &yk) in y.iter().enumerate() {
            matrix.set(marginal_row(spaces, d, k, yk), col, Rational::one());
        }
        if variant == ObservableVariant::Extended {
            matrix.set(
                spaces.n_marginals() + spaces.outcome_index(&y),
                col,
                Rational::one(),
            );
        }
    }
    MarginalMatrix { variant, matrix }
}

impl MarginalMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn variant(&self) -> ObservableVariant {
        self.variant
    }

    pub fn apply(&self, p: &[Rational]) -> Vec<Rational> {
        self.matrix.mul_vec(p)
    }
}

/// Exact basis of `{v : C v = 0, 1ᵀ v = 0}`.
pub fn kernel_basis(matrix: &MarginalMatrix) -> Vec<Vec<Rational>> {
    let ones = Matrix::from_fn(1, matrix.matrix.cols(), |_, _| Rational::one());
    Rref::new(&matrix.matrix.stack(&ones)).nullspace()
}

/// Observable marginals per stratum, with the stratum weights `P(X)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservableView {
    spaces: Spaces,
    variant: ObservableVariant,
    q: Vec<Vec<Rational>>,
    weights: Vec<Rational>,
}

impl ObservableView {
    pub fn new(
        spaces: Spaces,
        variant: ObservableVariant,
        q: Vec<Vec<Rational>>,
        weights: Vec<Rational>,
    ) -> Result<Self> {
        let len = match variant {
            ObservableVariant::MarginalsOnly => spaces.n_marginals(),
            ObservableVariant::Extended => spaces.n_extended(),
        };
        if q.len() != spaces.n_strata()
            || weights.len() != spaces.n_strata()
            || q.iter().any(|v| v.len() != len)
        {
            return Err(Error::DimensionMismatch(format!(
                "observable view needs {} strata of {len} marginals and one weight each",
                spaces.n_strata()
            )));
        }
        check_simplex(&weights, "stratum weights")?;
        let (kk, m) = (spaces.decisions(), spaces.outcomes());
        for (s, v) in q.iter().enumerate() {
            let label = &spaces.strata()[s];
            if v.iter().any(Signed::is_negative) {
                return Err(Error::InvalidDistribution(format!(
                    "stratum `{label}`: negative marginal"
                )));
            }
            for k in 0..kk {
                let total: Rational = (0..kk)
                    .flat_map(|d| (0..m).map(move |y| (d, y)))
                    .map(|(d, y)| &v[marginal_row(&spaces, d, k, y)])
                    .sum();
                if !total.is_one() {
                    return Err(Error::InvalidDistribution(format!(
                        "stratum `{label}`: marginals for Y({k}) sum to {}",
                        rational::format(&total)
                    )));
                }
            }
            if variant == ObservableVariant::Extended {
                check_simplex(
                    &v[spaces.n_marginals()..],
                    &format!("stratum `{label}` outcome law"),
                )?;
            }
        }
        Ok(Self {
            spaces,
            variant,
            q,
            weights,
        })
    }

    pub fn spaces(&self) -> &Spaces {
        &self.spaces
    }

    pub fn variant(&self) -> ObservableVariant {
        self.variant
    }

    pub fn q(&self, s: usize) -> &[Rational] {
        &self.q[s]
    }

    pub fn stratum_weights(&self) -> &[Rational] {
        &self.weights
    }

    /// `Pr(D* = d, Y(k) = y | x)`.
    pub fn marginal(&self, d: usize, k: usize, y: usize, s: usize) -> &Rational {
        &self.q[s][marginal_row(&self.spaces, d, k, y)]
    }

    /// `Pr(Y(·) = y | x)`, available only in the extended view.
    pub fn outcome_prob(&self, y: &[usize], s: usize) -> Option<&Rational> {
        match self.variant {
            ObservableVariant::MarginalsOnly => None,
            ObservableVariant::Extended => {
                Some(&self.q[s][self.spaces.n_marginals() + self.spaces.outcome_index(y)])
            }
        }
    }

    /// `Pr(Y(k) = y | x)`, summing the marginals over `d`.
    pub fn potential_outcome_marginal(&self, k: usize, y: usize, s: usize) -> Rational {
        (0..self.spaces.decisions())
            .map(|d| self.marginal(d, k, y, s))
            .sum()
    }

    /// `Pr(D* = d | x)`.
    pub fn decision_prob(&self, d: usize, s: usize) -> Rational {
        (0..self.spaces.outcomes())
            .map(|y| self.marginal(d, 0, y, s))
            .sum()
    }

    /// Drops the extended block.
    pub fn marginals_only(&self) -> Self {
        let n = self.spaces.n_marginals();
        Self {
            spaces: self.spaces.clone(),
            variant: ObservableVariant::MarginalsOnly,
            q: self.q.iter().map(|v| v[..n].to_vec()).collect(),
            weights: self.weights.clone(),
        }
    }
}

/// `q = C p` per stratum.
pub fn marginalize(model: &JointModel, variant: ObservableVariant) -> ObservableView {
    let c = build_marginal_matrix(&model.spaces, variant);
    ObservableView {
        spaces: model.spaces.clone(),
        variant,
        q: model.p.iter().map(|p| c.apply(p)).collect(),
        weights: model.weights.clone(),
    }
}

/// One observed unit: stratum index, target decision, observed decision and
/// observed outcome `Y = Y(D)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Record {
    pub x: usize,
    pub d_star: usize,
    pub d: usize,
    pub y: usize,
}

/// Float copy of a model with alias tables for sampling.
struct Sampler {
    strata: WeightedAliasIndex<f64>,
    joint: Vec<WeightedAliasIndex<f64>>,
    propensity: Vec<WeightedAliasIndex<f64>>,
}

impl Sampler {
    fn new(model: &JointModel) -> Result<Self> {
        let alias = |v: &[Rational]| {
            WeightedAliasIndex::new(v.iter().map(rational::to_f64).collect())
                .map_err(|e| Error::InvalidDistribution(format!("cannot sample: {e}")))
        };
        Ok(Self {
            strata: alias(&model.weights)?,
            joint: model.p.iter().map(|p| alias(p)).collect::<Result<_>>()?,
            propensity: model
                .propensity
                .iter()
                .map(|p| alias(p))
                .collect::<Result<_>>()?,
        })
    }
}

/// Draws `n` IID records.
///
/// The stratum sequence comes from stream 0 of a ChaCha8 generator seeded with
/// `seed`; units in stratum `s` use stream `s + 1`. Draws are consumed in
/// order, so the first `n` records of a larger sample equal the sample of size
/// `n` for the same seed.
pub fn simulate_records(model: &JointModel, n: usize, seed: u64) -> Result<Vec<Record>> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "sample size must be at least 1".into(),
        ));
    }
    let sampler = Sampler::new(model)?;
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut streams: Vec<ChaCha8Rng> = (0..model.spaces.n_strata())
        .map(|s| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(s as u64 + 1);
            r
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let x = sampler.strata.sample(&mut master);
        let rng = &mut streams[x];
        let cell = sampler.joint[x].sample(rng);
        let d = sampler.propensity[x].sample(rng);
        let (d_star, y) = model.spaces.joint_cell(cell);
        out.push(Record {
            x,
            d_star,
            d,
            y: y[d],
        });
    }
    Ok(out)
}

pub fn write_records(records: &[Record]) -> String {
    let mut out = String::from("x,d_star,d,y\n");
    for r in records {
        out.push_str(&format!("{},{},{},{}\n", r.x, r.d_star, r.d, r.y));
    }
    out
}

/// Parses a records file and checks every index against `spaces`.
pub fn read_records(source: &str, spaces: &Spaces) -> Result<Vec<Record>> {
    let mut lines = source
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "x,d_star,d,y" => {}
        _ => {
            return Err(Error::MalformedDocument(
                "records file must start with header `x,d_star,d,y`".into(),
            ))
        }
    }
    let mut out = Vec::new();
    for (no, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Option<Vec<usize>> = fields.iter().map(|f| f.parse().ok()).collect();
        let Some([x, d_star, d, y]) = parsed
            .as_deref()
            .and_then(|v| <[usize; 4]>::try_from(v).ok())
        else {
            return Err(Error::MalformedDocument(format!(
                "line {}: expected four non-negative integers",
                no + 1
            )));
        };
        if x >= spaces.n_strata() {
            return Err(Error::BadIndex(format!(
                "line {}: stratum {x} out of range",
                no + 1
            )));
        }
        spaces.check_decision(d_star)?;
        spaces.check_decision(d)?;
        if y >= spaces.outcomes() {
            return Err(Error::BadIndex(format!(
                "line {}: outcome {y} out of range",
                no + 1
            )));
        }
        out.push(Record { x, d_star, d, y });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn uniform(spaces: &Spaces) -> JointModel {
        let n = spaces.n_joint() as i64;
        JointModel::new(
            spaces.clone(),
            vec![vec![ratio(1, n); spaces.n_joint()]],
            vec![vec![
                ratio(1, spaces.decisions() as i64);
                spaces.decisions()
            ]],
            vec![int(1)],
        )
        .unwrap()
    }

    #[test]
    fn uniform_marginals_are_quarters() {
        let s = Spaces::single(2, 2).unwrap();
        let q = marginalize(&uniform(&s), ObservableVariant::Extended);
        assert!(q.q(0)[..8].iter().all(|v| *v == ratio(1, 4)));
        assert!(q.q(0)[8..].iter().all(|v| *v == ratio(1, 4)));
    }

    #[test]
    fn point_mass_marginals() {
        let s = Spaces::single(2, 2).unwrap();
        let mut p = vec![int(0); 8];
        p[s.joint_index(1, &[0, 1])] = int(1);
        let m =
            JointModel::new(s.clone(), vec![p], vec![vec![ratio(1, 2); 2]], vec![int(1)]).unwrap();
        let q = marginalize(&m, ObservableVariant::MarginalsOnly);
        assert_eq!(*q.marginal(1, 0, 0, 0), int(1));
        assert_eq!(*q.marginal(1, 1, 1, 0), int(1));
        assert_eq!(rational::sum(q.q(0)), int(2));
    }

    #[test]
    fn kernel_dimensions() {
        let s = Spaces::single(2, 2).unwrap();
        for (variant, dim) in [
            (ObservableVariant::MarginalsOnly, 2),
            (ObservableVariant::Extended, 1),
        ] {
            let c = build_marginal_matrix(&s, variant);
            let basis = kernel_basis(&c);
            assert_eq!(basis.len(), dim);
            for v in &basis {
                assert!(c.apply(v).iter().all(Zero::is_zero));
                assert!(rational::sum(v).is_zero());
            }
        }
    }

    #[test]
    fn rejects_overlap_violation() {
        let s = Spaces::single(2, 2).unwrap();
        let err = JointModel::new(
            s,
            vec![vec![ratio(1, 8); 8]],
            vec![vec![ratio(1, 200), ratio(199, 200)]],
            vec![int(1)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::OverlapViolated { decision: 0, .. }));
    }

    #[test]
    fn rejects_bad_simplex() {
        let s = Spaces::single(2, 2).unwrap();
        let err = JointModel::new(
            s,
            vec![vec![ratio(1, 7); 8]],
            vec![vec![ratio(1, 2); 2]],
            vec![int(1)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidDistribution(_)));
    }

    #[test]
    fn document_round_trip_and_float_mode() {
        let s = Spaces::single(2, 2).unwrap();
        let m = uniform(&s);
        assert_eq!(load_model(&m.to_json(), NumericMode::Rational).unwrap(), m);
        let text = r#"{"K":2,"M":2,"strata":[{"label":"all","weight":"1",
            "propensity":["0.3","0.7"],
            "p":[{"d_star":0,"y":[0,0],"prob":"0.1"},{"d_star":1,"y":[1,1],"prob":"0.9"}]}]}"#;
        let f = load_model(text, NumericMode::Float).unwrap();
        assert_eq!(rational::sum(f.joint(0)), int(1));
        assert!(load_model(&text.replace("0.9", "0.8"), NumericMode::Float).is_err());
    }

    #[test]
    fn simulation_is_nested_and_consistent() {
        let s = Spaces::single(2, 2).unwrap();
        let m = uniform(&s);
        let big = simulate_records(&m, 2000, 3).unwrap();
        let small = simulate_records(&m, 1000, 3).unwrap();
        assert_eq!(&big[..1000], &small[..]);
        assert!(simulate_records(&m, 0, 3).is_err());
    }

    #[test]
    fn degenerate_model_repeats_one_record() {
        let s = Spaces::single(2, 2).unwrap();
        let mut p = vec![int(0); 8];
        p[s.joint_index(0, &[1, 0])] = int(1);
        let m = JointModel::new(s, vec![p], vec![vec![ratio(1, 2); 2]], vec![int(1)]).unwrap();
        let recs = simulate_records(&m, 50, 1).unwrap();
        for r in &recs {
            assert_eq!((r.x, r.d_star), (0, 0));
            assert_eq!(r.y, if r.d == 0 { 1 } else { 0 });
        }
    }

    #[test]
    fn records_round_trip() {
        let s = Spaces::single(2, 2).unwrap();
        let recs = simulate_records(&uniform(&s), 20, 9).unwrap();
        assert_eq!(read_records(&write_records(&recs), &s).unwrap(), recs);
        assert!(read_records("x,d_star,d,y\n0,0,2,0\n", &s).is_err());
        assert!(read_records("a,b\n", &s).is_err());
    }
}
