//! Additive structure of counterfactual losses.
//!
//! A loss is additive when `ℓ(d; y) = Σ_k ω_k(d, y_k) + ϖ(y)`. Stacking the
//! unknowns gives the zero-one system `A w = ℓ` ([`Variant::Full`]) or, without
//! intercepts, `Ã w̃ = ℓ` ([`Variant::Restricted`]). Membership of `ℓ` in the
//! image decides additivity; which image decides the identification regime.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rref};
use crate::rational::{self, Rational};
use crate::space::{LossTensor, Spaces};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Weights only.
    Restricted,
    /// Weights and intercepts.
    Full,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "restricted" => Ok(Self::Restricted),
            "full" => Ok(Self::Full),
            _ => Err(Error::InvalidArgument(format!(
                "variant must be `restricted` or `full`, got `{s}`"
            ))),
        }
    }
}

/// The zero-one matrix mapping weights (and intercepts) to loss values.
///
/// Rows follow the joint-cell order of [`Spaces`]. Column `(k·K + d)·M + y`
/// holds `ω_k(d, y)`; in the full variant column `K²M + index(y)` holds `ϖ(y)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructureMatrix {
    k: usize,
    m: usize,
    variant: Variant,
    matrix: Matrix,
}

pub fn build_structure_matrix(spaces: &Spaces, variant: Variant) -> StructureMatrix {
    let (k, m) = (spaces.decisions(), spaces.outcomes());
    let n_w = spaces.n_weights();
    let cols = match variant {
        Variant::Restricted => n_w,
        Variant::Full => n_w + spaces.n_outcome_vectors(),
    };
    let mut matrix = Matrix::zeros(spaces.n_joint(), cols);
    for row in 0..spaces.n_joint() {
        let (d, y) = spaces.joint_cell(row);
        for (kk, &yk) in y.iter().enumerate() {
            matrix.set(row, spaces.weight_index(kk, d, yk), Rational::one());
        }
        if variant == Variant::Full {
            matrix.set(row, n_w + spaces.outcome_index(&y), Rational::one());
        }
    }
    StructureMatrix {
        k,
        m,
        variant,
        matrix,
    }
}

impl StructureMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn rank(&self) -> usize {
        self.matrix.rank()
    }

    fn spaces(&self) -> Spaces {
        Spaces::single(self.k, self.m).expect("dimensions validated at construction")
    }

    pub fn row_labels(&self) -> Vec<String> {
        let s = self.spaces();
        (0..s.n_joint())
            .map(|i| {
                let (d, y) = s.joint_cell(i);
                format!("l({d};{})", join(&y))
            })
            .collect()
    }

    pub fn column_labels(&self) -> Vec<String> {
        column_labels(&self.spaces(), self.variant)
    }

    /// Row order of the printed binary layout: `d` fastest, then `y_0`, …,
    /// with `y_{K-1}` slowest. Entry `i` is the canonical row shown at position `i`.
    pub fn published_row_order(&self) -> Vec<usize> {
        let s = self.spaces();
        let mut rows: Vec<usize> = (0..s.n_joint()).collect();
        rows.sort_by_key(|&i| {
            let (d, mut y) = s.joint_cell(i);
            y.reverse();
            (y, d)
        });
        rows
    }

    /// Column order of the printed layout: own-decision weights `ω_k(k, ·)`
    /// first, then the remaining weights by `(k, d, y)`, then intercepts.
    pub fn published_column_order(&self) -> Vec<usize> {
        let s = self.spaces();
        let (k, m) = (self.k, self.m);
        let mut cols = Vec::with_capacity(self.matrix.cols());
        for kk in 0..k {
            for y in 0..m {
                cols.push(s.weight_index(kk, kk, y));
            }
        }
        for kk in 0..k {
            for d in (0..k).filter(|&d| d != kk) {
                for y in 0..m {
                    cols.push(s.weight_index(kk, d, y));
                }
            }
        }
        cols.extend(s.n_weights()..self.matrix.cols());
        cols
    }

    /// The matrix with rows and columns permuted into the printed layout.
    pub fn published_layout(&self) -> Matrix {
        let rows = self.published_row_order();
        let cols = self.published_column_order();
        Matrix::from_fn(rows.len(), cols.len(), |r, c| {
            self.matrix.get(rows[r], cols[c]).clone()
        })
    }

    /// Space-separated integer grid, one row per line.
    pub fn to_grid(&self, paper_layout: bool) -> String {
        let m = if paper_layout {
            self.published_layout()
        } else {
            self.matrix.clone()
        };
        let mut out = String::new();
        for r in 0..m.rows() {
            let line: Vec<String> = m.row(r).iter().map(rational::format).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

fn join(y: &[usize]) -> String {
    y.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

pub fn weight_label(k: usize, d: usize, y: usize) -> String {
    format!("omega_{k}({d},{y})")
}

pub fn intercept_label(y: &[usize]) -> String {
    format!("varpi({})", join(y))
}

fn column_labels(s: &Spaces, variant: Variant) -> Vec<String> {
    let mut labels: Vec<String> = (0..s.n_weights())
        .map(|i| {
            let (k, d, y) = s.weight_cell(i);
            weight_label(k, d, y)
        })
        .collect();
    if variant == Variant::Full {
        labels.extend(s.outcome_vectors().map(|y| intercept_label(&y)));
    }
    labels
}

/// A kernel direction of the structure matrix: adding any multiple to the
/// stratum's solution leaves the reconstructed loss unchanged.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FreeParam {
    pub stratum: usize,
    pub symbol: String,
    /// Label of the free column this direction sets to one.
    pub column: String,
    /// Direction over weights followed by intercepts (intercept part all zero
    /// for the restricted variant).
    pub direction: Vec<Rational>,
}

/// Weights `ω_k(d, y, x)` and intercept `ϖ(y, x)` of an additive loss.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdditiveDecomposition {
    spaces: Spaces,
    weights: Vec<Vec<Rational>>,
    intercept: Vec<Vec<Rational>>,
    free_params: Vec<FreeParam>,
}

impl AdditiveDecomposition {
    pub fn new(
        spaces: Spaces,
        weights: Vec<Vec<Rational>>,
        intercept: Vec<Vec<Rational>>,
    ) -> Result<Self> {
        let s = spaces.n_strata();
        if weights.len() != s || weights.iter().any(|w| w.len() != spaces.n_weights()) {
            return Err(Error::DimensionMismatch(format!(
                "weights need {s} strata of K^2*M = {} values",
                spaces.n_weights()
            )));
        }
        if intercept.len() != s
            || intercept
                .iter()
                .any(|w| w.len() != spaces.n_outcome_vectors())
        {
            return Err(Error::DimensionMismatch(format!(
                "intercept needs {s} strata of M^K = {} values",
                spaces.n_outcome_vectors()
            )));
        }
        Ok(Self {
            spaces,
            weights,
            intercept,
            free_params: Vec::new(),
        })
    }

    /// Builds weights from `w(k, d, y, stratum)` and intercepts from `v(y, stratum)`.
    pub fn from_fn(
        spaces: Spaces,
        mut w: impl FnMut(usize, usize, usize, usize) -> Rational,
        mut v: impl FnMut(&[usize], usize) -> Rational,
    ) -> Self {
        let weights = (0..spaces.n_strata())
            .map(|s| {
                (0..spaces.n_weights())
                    .map(|i| {
                        let (k, d, y) = spaces.weight_cell(i);
                        w(k, d, y, s)
                    })
                    .collect()
            })
            .collect();
        let intercept = (0..spaces.n_strata())
            .map(|s| spaces.outcome_vectors().map(|y| v(&y, s)).collect())
            .collect();
        Self {
            spaces,
            weights,
            intercept,
            free_params: Vec::new(),
        }
    }

    pub fn spaces(&self) -> &Spaces {
        &self.spaces
    }

    pub fn weight(&self, k: usize, d: usize, y: usize, stratum: usize) -> &Rational {
        &self.weights[stratum][self.spaces.weight_index(k, d, y)]
    }

    pub fn intercept(&self, y: &[usize], stratum: usize) -> &Rational {
        &self.intercept[stratum][self.spaces.outcome_index(y)]
    }

    pub fn stratum_weights(&self, stratum: usize) -> &[Rational] {
        &self.weights[stratum]
    }

    pub fn stratum_intercept(&self, stratum: usize) -> &[Rational] {
        &self.intercept[stratum]
    }

    pub fn free_params(&self) -> &[FreeParam] {
        &self.free_params
    }

    /// True when `ϖ ≡ 0`, so the risk level itself is identified.
    pub fn is_exact(&self) -> bool {
        self.intercept.iter().flatten().all(Zero::is_zero)
    }

    pub fn reconstruct(&self) -> LossTensor {
        LossTensor::from_fn(self.spaces.clone(), |d, y, s| {
            let mut v = self.intercept(y, s).clone();
            for (k, &yk) in y.iter().enumerate() {
                v += self.weight(k, d, yk, s);
            }
            v
        })
    }

    /// Moves along the recorded free directions: `coefficients[i]` scales
    /// `free_params()[i]`. The reconstructed loss does not change.
    pub fn shifted(&self, coefficients: &[Rational]) -> Result<Self> {
        if coefficients.len() != self.free_params.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for {} free parameters",
                coefficients.len(),
                self.free_params.len()
            )));
        }
        let mut out = self.clone();
        let n_w = self.spaces.n_weights();
        for (fp, c) in self.free_params.iter().zip(coefficients) {
            if c.is_zero() {
                continue;
            }
            for (i, v) in fp.direction.iter().enumerate() {
                if v.is_zero() {
                    continue;
                }
                let slot = if i < n_w {
                    &mut out.weights[fp.stratum][i]
                } else {
                    &mut out.intercept[fp.stratum][i - n_w]
                };
                *slot += v * c;
            }
        }
        Ok(out)
    }

    pub fn to_document(&self) -> DecompositionDocument {
        let s = &self.spaces;
        DecompositionDocument {
            k: s.decisions(),
            m: s.outcomes(),
            strata: (0..s.n_strata())
                .map(|st| DecompositionStratum {
                    label: s.strata()[st].clone(),
                    weights: (0..s.n_weights())
                        .map(|i| {
                            let (k, d, y) = s.weight_cell(i);
                            WeightEntry {
                                k,
                                d,
                                y,
                                value: rational::format(&self.weights[st][i]),
                            }
                        })
                        .collect(),
                    intercept: s
                        .outcome_vectors()
                        .enumerate()
                        .map(|(i, y)| InterceptEntry {
                            y,
                            value: rational::format(&self.intercept[st][i]),
                        })
                        .collect(),
                })
                .collect(),
            free_params: self
                .free_params
                .iter()
                .map(|fp| FreeParamEntry {
                    stratum: s.strata()[fp.stratum].clone(),
                    symbol: fp.symbol.clone(),
                    column: fp.column.clone(),
                    direction: fp.direction.iter().map(rational::format).collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("decomposition serialises")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionDocument {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub strata: Vec<DecompositionStratum>,
    #[serde(default)]
    pub free_params: Vec<FreeParamEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionStratum {
    pub label: String,
    pub weights: Vec<WeightEntry>,
    #[serde(default)]
    pub intercept: Vec<InterceptEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightEntry {
    pub k: usize,
    pub d: usize,
    pub y: usize,
    pub value: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterceptEntry {
    pub y: Vec<usize>,
    pub value: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeParamEntry {
    pub stratum: String,
    pub symbol: String,
    pub column: String,
    pub direction: Vec<String>,
}

/// Parses a decomposition document. Weights must all be present; missing
/// intercept entries are zero.
pub fn load_decomposition(source: &str) -> Result<AdditiveDecomposition> {
    let doc: DecompositionDocument =
        serde_json::from_str(source).map_err(|e| Error::MalformedDocument(e.to_string()))?;
    AdditiveDecomposition::try_from(doc)
}

impl TryFrom<DecompositionDocument> for AdditiveDecomposition {
    type Error = Error;

    fn try_from(doc: DecompositionDocument) -> Result<Self> {
        let labels: Vec<String> = doc.strata.iter().map(|s| s.label.clone()).collect();
        let spaces = Spaces::new(doc.k, doc.m, labels)?;
        let mut weights = Vec::with_capacity(spaces.n_strata());
        let mut intercept = Vec::with_capacity(spaces.n_strata());
        for st in &doc.strata {
            let mut w: Vec<Option<Rational>> = vec![None; spaces.n_weights()];
            for e in &st.weights {
                spaces.check_decision(e.k)?;
                spaces.check_decision(e.d)?;
                if e.y >= spaces.outcomes() {
                    return Err(Error::BadIndex(format!(
                        "outcome {} out of range for M = {}",
                        e.y,
                        spaces.outcomes()
                    )));
                }
                let slot = &mut w[spaces.weight_index(e.k, e.d, e.y)];
                if slot.is_some() {
                    return Err(Error::MalformedDocument(format!(
                        "stratum `{}`: duplicate weight {}",
                        st.label,
                        weight_label(e.k, e.d, e.y)
                    )));
                }
                *slot = Some(rational::parse(&e.value)?);
            }
            let w = w
                .into_iter()
                .enumerate()
                .map(|(i, v)| {
                    v.ok_or_else(|| {
                        let (k, d, y) = spaces.weight_cell(i);
                        Error::MalformedDocument(format!(
                            "stratum `{}`: missing weight {}",
                            st.label,
                            weight_label(k, d, y)
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let mut v: Vec<Option<Rational>> = vec![None; spaces.n_outcome_vectors()];
            for e in &st.intercept {
                spaces.check_outcome_vector(&e.y)?;
                let slot = &mut v[spaces.outcome_index(&e.y)];
                if slot.is_some() {
                    return Err(Error::MalformedDocument(format!(
                        "stratum `{}`: duplicate intercept {}",
                        st.label,
                        intercept_label(&e.y)
                    )));
                }
                *slot = Some(rational::parse(&e.value)?);
            }
            weights.push(w);
            intercept.push(v.into_iter().map(Option::unwrap_or_default).collect());
        }
        let mut out = AdditiveDecomposition::new(spaces.clone(), weights, intercept)?;
        let width = spaces.n_weights() + spaces.n_outcome_vectors();
        for fp in doc.free_params {
            let stratum = spaces.stratum_index(&fp.stratum).ok_or_else(|| {
                Error::MalformedDocument(format!(
                    "free parameter in unknown stratum `{}`",
                    fp.stratum
                ))
            })?;
            let direction = fp
                .direction
                .iter()
                .map(|t| rational::parse(t))
                .collect::<Result<Vec<_>>>()?;
            if direction.len() != width {
                return Err(Error::MalformedDocument(format!(
                    "free parameter `{}` has {} entries, expected {width}",
                    fp.symbol,
                    direction.len()
                )));
            }
            out.free_params.push(FreeParam {
                stratum,
                symbol: fp.symbol,
                column: fp.column,
                direction,
            });
        }
        Ok(out)
    }
}

/// Exact non-membership certificate for one stratum.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StratumResidual {
    pub stratum: usize,
    /// Projection of the loss vector onto `im(A)^⊥`; nonzero, with `Aᵀ r = 0`
    /// and `rᵀ ℓ = |r|² > 0`.
    pub residual: Vec<Rational>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NotAdditive {
    pub variant: Variant,
    pub failures: Vec<StratumResidual>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decomposition {
    Additive(AdditiveDecomposition),
    NotAdditive(NotAdditive),
}

impl Decomposition {
    pub fn additive(self) -> Option<AdditiveDecomposition> {
        match self {
            Self::Additive(d) => Some(d),
            Self::NotAdditive(_) => None,
        }
    }

    pub fn is_additive(&self) -> bool {
        matches!(self, Self::Additive(_))
    }
}

/// One elimination of a structure matrix, reused across strata and losses.
#[derive(Debug)]
pub struct Decomposer {
    k: usize,
    m: usize,
    variant: Variant,
    rref: Rref,
    kernel: Vec<Vec<Rational>>,
}

impl Decomposer {
    pub fn new(k: usize, m: usize, variant: Variant) -> Result<Self> {
        let spaces = Spaces::single(k, m)?;
        let a = build_structure_matrix(&spaces, variant);
        let rref = Rref::new(a.matrix());
        let kernel = rref.nullspace();
        Ok(Self {
            k,
            m,
            variant,
            rref,
            kernel,
        })
    }

    /// Shared instance for `(K, M, variant)`.
    pub fn cached(k: usize, m: usize, variant: Variant) -> Result<Arc<Self>> {
        type Cache = Mutex<HashMap<(usize, usize, Variant), Arc<Decomposer>>>;
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(hit) = cache.lock().expect("cache lock").get(&(k, m, variant)) {
            return Ok(hit.clone());
        }
        let built = Arc::new(Self::new(k, m, variant)?);
        cache
            .lock()
            .expect("cache lock")
            .entry((k, m, variant))
            .or_insert(built.clone());
        Ok(built)
    }

    pub fn rank(&self) -> usize {
        self.rref.rank()
    }

    /// Solves one stratum: `Ok(solution)` with free variables zero, or
    /// `Err(residual)`.
    pub fn solve(&self, loss: &[Rational]) -> Result<Vec<Rational>, Vec<Rational>> {
        match self.rref.solve(loss) {
            Some(x) => Ok(x),
            None => Err(self.rref.residual(loss)),
        }
    }

    pub fn decompose(&self, loss: &LossTensor) -> Result<Decomposition> {
        let spaces = loss.spaces();
        if spaces.decisions() != self.k || spaces.outcomes() != self.m {
            return Err(Error::DimensionMismatch(format!(
                "decomposer for K={}, M={} given a K={}, M={} loss",
                self.k,
                self.m,
                spaces.decisions(),
                spaces.outcomes()
            )));
        }
        let n_w = spaces.n_weights();
        let n_v = spaces.n_outcome_vectors();
        let labels = column_labels(spaces, self.variant);
        let free_cols = self.rref.free_columns();
        let mut weights = Vec::new();
        let mut intercept = Vec::new();
        let mut free_params = Vec::new();
        let mut failures = Vec::new();
        for s in 0..spaces.n_strata() {
            match self.solve(loss.stratum(s)) {
                Ok(mut x) => {
                    x.resize(n_w + n_v, Rational::zero());
                    intercept.push(x.split_off(n_w));
                    weights.push(x);
                    for (i, (dir, &col)) in self.kernel.iter().zip(&free_cols).enumerate() {
                        let mut direction = dir.clone();
                        direction.resize(n_w + n_v, Rational::zero());
                        free_params.push(FreeParam {
                            stratum: s,
                            symbol: format!("t{i}"),
                            column: labels[col].clone(),
                            direction,
                        });
                    }
                }
                Err(residual) => failures.push(StratumResidual {
                    stratum: s,
                    residual,
                }),
            }
        }
        if !failures.is_empty() {
            return Ok(Decomposition::NotAdditive(NotAdditive {
                variant: self.variant,
                failures,
            }));
        }
        let mut d = AdditiveDecomposition::new(spaces.clone(), weights, intercept)?;
        d.free_params = free_params;
        Ok(Decomposition::Additive(d))
    }
}

/// Decomposes every stratum independently; additive only if all strata are.
pub fn decompose(loss: &LossTensor, variant: Variant) -> Decomposition {
    let s = loss.spaces();
    Decomposer::cached(s.decisions(), s.outcomes(), variant)
        .and_then(|d| d.decompose(loss))
        .expect("decomposer matches the loss dimensions")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Regime {
    Exact,
    ConstantOnly,
    Unidentifiable,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Exact => "Exact",
            Regime::ConstantOnly => "ConstantOnly",
            Regime::Unidentifiable => "Unidentifiable",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Witness {
    Decomposition(AdditiveDecomposition),
    Residual(NotAdditive),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegimeLabel {
    pub regime: Regime,
    /// Regime of each stratum; `regime` is the weakest of these.
    pub per_stratum: Vec<Regime>,
    pub witness: Witness,
}

pub fn classify(loss: &LossTensor) -> RegimeLabel {
    let s = loss.spaces();
    let restricted =
        Decomposer::cached(s.decisions(), s.outcomes(), Variant::Restricted).expect("valid spaces");
    let full =
        Decomposer::cached(s.decisions(), s.outcomes(), Variant::Full).expect("valid spaces");
    let per_stratum: Vec<Regime> = (0..s.n_strata())
        .map(|st| {
            if restricted.solve(loss.stratum(st)).is_ok() {
                Regime::Exact
            } else if full.solve(loss.stratum(st)).is_ok() {
                Regime::ConstantOnly
            } else {
                Regime::Unidentifiable
            }
        })
        .collect();
    let regime = per_stratum.iter().copied().max().unwrap_or(Regime::Exact);
    let witness = match regime {
        Regime::Exact => restricted.decompose(loss),
        _ => full.decompose(loss),
    }
    .expect("dimensions match");
    let witness = match witness {
        Decomposition::Additive(d) => Witness::Decomposition(d),
        Decomposition::NotAdditive(r) => Witness::Residual(r),
    };
    RegimeLabel {
        regime,
        per_stratum,
        witness,
    }
}

/// An affine expression `constant + Σ coefficients[i] · param_i` in the five
/// free parameters `(a, b, c, d, e)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Affine {
    pub constant: Rational,
    pub coefficients: [Rational; 5],
}

impl Affine {
    fn new(constant: Rational, coefficients: [i64; 5]) -> Self {
        Self {
            constant,
            coefficients: coefficients.map(rational::int),
        }
    }

    pub fn eval(&self, params: &[Rational; 5]) -> Rational {
        let mut v = self.constant.clone();
        for (c, p) in self.coefficients.iter().zip(params) {
            v += c * p;
        }
        v
    }

    pub fn render(&self) -> String {
        let mut s = rational::format(&self.constant);
        for (c, name) in self.coefficients.iter().zip(BINARY_FAMILY_SYMBOLS) {
            if c.is_zero() {
                continue;
            }
            let sign = if *c > Rational::zero() { '+' } else { '-' };
            let mag = c.abs();
            if mag.is_one() {
                s.push_str(&format!(" {sign} {name}"));
            } else {
                s.push_str(&format!(" {sign} {}*{name}", rational::format(&mag)));
            }
        }
        s
    }
}

/// Free parameters of the two-decision, two-outcome family:
/// `a = ω_0(1,1)`, `b = ω_1(0,1)`, `c = ϖ(0,1)`, `d = ϖ(1,0)`, `e = ϖ(1,1)`.
pub const BINARY_FAMILY_SYMBOLS: [&str; 5] = ["a", "b", "c", "d", "e"];

/// All additive decompositions of a `K = M = 2` loss in closed form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryWeightFamily {
    spaces: Spaces,
    /// Per stratum: 8 weight expressions (canonical weight order) then 4 intercepts.
    pub expressions: Vec<Vec<Affine>>,
}

pub fn binary_weight_family(loss: &LossTensor) -> Result<BinaryWeightFamily> {
    let s = loss.spaces();
    if s.decisions() != 2 {
        return Err(Error::DecisionNotBinary(s.decisions()));
    }
    if s.outcomes() != 2 {
        return Err(Error::OutcomeNotBinary(s.outcomes()));
    }
    let mut expressions = Vec::with_capacity(s.n_strata());
    for st in 0..s.n_strata() {
        let l = |d: usize, y0: usize, y1: usize| loss.value(d, &[y0, y1], st).clone();
        let lhs = (l(1, 0, 0) - l(0, 0, 0)) + (l(1, 1, 1) - l(0, 1, 1));
        let rhs = (l(1, 1, 0) - l(0, 1, 0)) + (l(1, 0, 1) - l(0, 0, 1));
        if lhs != rhs {
            return Err(Error::RestrictionViolated(format!(
                "stratum `{}`: cross-decision sums differ by {}",
                s.strata()[st],
                rational::format(&(lhs - rhs))
            )));
        }
        let mut w: Vec<Option<Affine>> = vec![None; 12];
        let wi = |k, d, y| s.weight_index(k, d, y);
        let vi = |y0: usize, y1: usize| 8 + 2 * y0 + y1;
        w[wi(0, 0, 0)] = Some(Affine::new(l(0, 0, 1), [0, -1, -1, 0, 0]));
        w[wi(0, 0, 1)] = Some(Affine::new(l(0, 1, 1), [0, -1, 0, 0, -1]));
        w[wi(1, 1, 0)] = Some(Affine::new(l(1, 1, 0), [-1, 0, 0, -1, 0]));
        w[wi(1, 1, 1)] = Some(Affine::new(l(1, 1, 1), [-1, 0, 0, 0, -1]));
        w[wi(0, 1, 0)] = Some(Affine::new(l(1, 0, 1) - l(1, 1, 1), [1, 0, -1, 0, 1]));
        w[wi(1, 0, 0)] = Some(Affine::new(l(0, 1, 0) - l(0, 1, 1), [0, 1, 0, -1, 1]));
        w[wi(0, 1, 1)] = Some(Affine::new(Rational::zero(), [1, 0, 0, 0, 0]));
        w[wi(1, 0, 1)] = Some(Affine::new(Rational::zero(), [0, 1, 0, 0, 0]));
        w[vi(0, 0)] = Some(Affine::new(
            l(1, 0, 0) - l(1, 1, 0) - l(1, 0, 1) + l(1, 1, 1),
            [0, 0, 1, 1, -1],
        ));
        w[vi(0, 1)] = Some(Affine::new(Rational::zero(), [0, 0, 1, 0, 0]));
        w[vi(1, 0)] = Some(Affine::new(Rational::zero(), [0, 0, 0, 1, 0]));
        w[vi(1, 1)] = Some(Affine::new(Rational::zero(), [0, 0, 0, 0, 1]));
        expressions.push(w.into_iter().map(|e| e.expect("all twelve set")).collect());
    }
    Ok(BinaryWeightFamily {
        spaces: s.clone(),
        expressions,
    })
}

impl BinaryWeightFamily {
    /// Substitutes the same `(a, b, c, d, e)` in every stratum.
    pub fn evaluate(&self, params: &[Rational; 5]) -> AdditiveDecomposition {
        self.evaluate_per_stratum(&vec![params.clone(); self.expressions.len()])
    }

    pub fn evaluate_per_stratum(&self, params: &[[Rational; 5]]) -> AdditiveDecomposition {
        assert_eq!(
            params.len(),
            self.expressions.len(),
            "one parameter set per stratum"
        );
        let mut weights = Vec::new();
        let mut intercept = Vec::new();
        for (exprs, p) in self.expressions.iter().zip(params) {
            let mut vals: Vec<Rational> = exprs.iter().map(|e| e.eval(p)).collect();
            intercept.push(vals.split_off(8));
            weights.push(vals);
        }
        AdditiveDecomposition::new(self.spaces.clone(), weights, intercept)
            .expect("shapes fixed by construction")
    }

    /// Whether the family stays inside `ϖ ≡ 0` for some parameter choice,
    /// i.e. the loss is exactly identified.
    pub fn admits_zero_intercept(&self) -> bool {
        // With c = d = e = 0 the only intercept left is ϖ(0,0)'s constant.
        self.expressions.iter().all(|e| e[8].constant.is_zero())
    }

    /// `name = expression` lines, one per weight and intercept, per stratum.
    pub fn render(&self) -> String {
        let s = &self.spaces;
        let mut out = String::new();
        for (st, exprs) in self.expressions.iter().enumerate() {
            out.push_str(&format!("stratum {}\n", s.strata()[st]));
            for (i, e) in exprs.iter().enumerate() {
                let label = if i < 8 {
                    let (k, d, y) = s.weight_cell(i);
                    weight_label(k, d, y)
                } else {
                    intercept_label(&s.outcome_vector(i - 8))
                };
                out.push_str(&format!("  {label} = {}\n", e.render()));
            }
        }
        out
    }
}
