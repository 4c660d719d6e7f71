//! Finite decision, outcome and covariate spaces, and the loss tensors over them.
//!
//! Index conventions, shared by every matrix and vector in the crate:
//! - outcome vectors `y = (y_0, …, y_{K-1})` are numbered with `y_{K-1}`
//!   varying fastest: `index(y) = Σ_j y_j · M^{K-1-j}`;
//! - joint cells `(d, y)` are numbered `d · M^K + index(y)`, so `d` varies slowest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, Rational};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Spaces {
    k: usize,
    m: usize,
    strata: Vec<String>,
}

impl Spaces {
    pub fn new(k: usize, m: usize, strata: Vec<String>) -> Result<Self> {
        if k < 2 {
            return Err(Error::BadDimensions(format!("K = {k}, need K >= 2")));
        }
        if m < 2 {
            return Err(Error::BadDimensions(format!("M = {m}, need M >= 2")));
        }
        if strata.is_empty() {
            return Err(Error::BadDimensions(
                "at least one stratum is required".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = strata.iter().find(|s| !seen.insert(s.as_str())) {
            return Err(Error::BadDimensions(format!(
                "duplicate stratum label `{dup}`"
            )));
        }
        // M^K must stay addressable.
        if (m as u128)
            .checked_pow(k as u32)
            .is_none_or(|v| v > (1u128 << 40))
        {
            return Err(Error::BadDimensions(format!(
                "M^K too large for K={k}, M={m}"
            )));
        }
        Ok(Self { k, m, strata })
    }

    /// Single unnamed stratum, for covariate-free problems.
    pub fn single(k: usize, m: usize) -> Result<Self> {
        Self::new(k, m, vec!["all".to_string()])
    }

    pub fn decisions(&self) -> usize {
        self.k
    }

    pub fn outcomes(&self) -> usize {
        self.m
    }

    pub fn strata(&self) -> &[String] {
        &self.strata
    }

    pub fn n_strata(&self) -> usize {
        self.strata.len()
    }

    pub fn stratum_index(&self, label: &str) -> Option<usize> {
        self.strata.iter().position(|s| s == label)
    }

    /// `M^K`, the number of potential-outcome vectors.
    pub fn n_outcome_vectors(&self) -> usize {
        self.m.pow(self.k as u32)
    }

    /// `N = K · M^K`, the number of joint cells `(d, y)`.
    pub fn n_joint(&self) -> usize {
        self.k * self.n_outcome_vectors()
    }

    /// `K² · M`, one weight per `(k, d, y)`.
    pub fn n_weights(&self) -> usize {
        self.k * self.k * self.m
    }

    /// Length of the marginals-only observable vector.
    pub fn n_marginals(&self) -> usize {
        self.n_weights()
    }

    /// Length of the extended observable vector, `K²·M + M^K`.
    pub fn n_extended(&self) -> usize {
        self.n_weights() + self.n_outcome_vectors()
    }

    pub fn outcome_index(&self, y: &[usize]) -> usize {
        debug_assert_eq!(y.len(), self.k);
        y.iter().fold(0, |acc, &v| acc * self.m + v)
    }

    pub fn outcome_vector(&self, mut index: usize) -> Vec<usize> {
        let mut y = vec![0; self.k];
        for slot in y.iter_mut().rev() {
            *slot = index % self.m;
            index /= self.m;
        }
        y
    }

    /// Outcome vectors in index order.
    pub fn outcome_vectors(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.n_outcome_vectors()).map(|i| self.outcome_vector(i))
    }

    pub fn joint_index(&self, d: usize, y: &[usize]) -> usize {
        d * self.n_outcome_vectors() + self.outcome_index(y)
    }

    pub fn joint_cell(&self, index: usize) -> (usize, Vec<usize>) {
        let per = self.n_outcome_vectors();
        (index / per, self.outcome_vector(index % per))
    }

    /// Column of `ω_k(d, y)` in every weight-indexed vector.
    pub fn weight_index(&self, k: usize, d: usize, y: usize) -> usize {
        (k * self.k + d) * self.m + y
    }

    pub fn weight_cell(&self, index: usize) -> (usize, usize, usize) {
        let y = index % self.m;
        let kd = index / self.m;
        (kd / self.k, kd % self.k, y)
    }

    pub fn same_shape(&self, other: &Spaces) -> bool {
        self.k == other.k && self.m == other.m && self.strata.len() == other.strata.len()
    }

    pub(crate) fn check_outcome_vector(&self, y: &[usize]) -> Result<()> {
        if y.len() != self.k {
            return Err(Error::BadIndex(format!(
                "outcome vector {y:?} has length {}, expected K = {}",
                y.len(),
                self.k
            )));
        }
        if let Some(v) = y.iter().find(|&&v| v >= self.m) {
            return Err(Error::BadIndex(format!(
                "outcome {v} out of range for M = {}",
                self.m
            )));
        }
        Ok(())
    }

    pub(crate) fn check_decision(&self, d: usize) -> Result<()> {
        if d >= self.k {
            return Err(Error::BadIndex(format!(
                "decision {d} out of range for K = {}",
                self.k
            )));
        }
        Ok(())
    }
}

/// Counterfactual loss `ℓ(d; y_0, …, y_{K-1}, x)`, one vector of length `N` per stratum.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LossTensor {
    spaces: Spaces,
    values: Vec<Vec<Rational>>,
}

impl LossTensor {
    pub fn new(spaces: Spaces, values: Vec<Vec<Rational>>) -> Result<Self> {
        if values.len() != spaces.n_strata() {
            return Err(Error::DimensionMismatch(format!(
                "{} stratum vectors for {} strata",
                values.len(),
                spaces.n_strata()
            )));
        }
        if let Some(v) = values.iter().find(|v| v.len() != spaces.n_joint()) {
            return Err(Error::DimensionMismatch(format!(
                "stratum vector of length {}, expected N = {}",
                v.len(),
                spaces.n_joint()
            )));
        }
        Ok(Self { spaces, values })
    }

    /// Evaluates `f(d, y, stratum)` on every cell.
    pub fn from_fn(spaces: Spaces, mut f: impl FnMut(usize, &[usize], usize) -> Rational) -> Self {
        let values = (0..spaces.n_strata())
            .map(|s| {
                (0..spaces.n_joint())
                    .map(|i| {
                        let (d, y) = spaces.joint_cell(i);
                        f(d, &y, s)
                    })
                    .collect()
            })
            .collect();
        Self { spaces, values }
    }

    pub fn zeros(spaces: Spaces) -> Self {
        Self::from_fn(spaces, |_, _, _| rational::zero())
    }

    pub fn spaces(&self) -> &Spaces {
        &self.spaces
    }

    pub fn value(&self, d: usize, y: &[usize], stratum: usize) -> &Rational {
        &self.values[stratum][self.spaces.joint_index(d, y)]
    }

    /// The stratum's loss vector in joint-cell order.
    pub fn stratum(&self, stratum: usize) -> &[Rational] {
        &self.values[stratum]
    }

    pub fn strata_values(&self) -> &[Vec<Rational>] {
        &self.values
    }

    pub fn to_document(&self) -> LossDocument {
        LossDocument {
            k: self.spaces.k,
            m: self.spaces.m,
            strata: self
                .spaces
                .strata
                .iter()
                .zip(&self.values)
                .map(|(label, vals)| StratumEntries {
                    label: label.clone(),
                    entries: vals
                        .iter()
                        .enumerate()
                        .map(|(i, v)| {
                            let (d, y) = self.spaces.joint_cell(i);
                            LossEntry {
                                d,
                                y,
                                loss: rational::format(v),
                            }
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("loss document serialises")
    }
}

/// Standard loss `ℓ(d, y_d, x)`: values indexed `d · M + y` per stratum.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StandardLoss {
    spaces: Spaces,
    values: Vec<Vec<Rational>>,
}

impl StandardLoss {
    pub fn new(spaces: Spaces, values: Vec<Vec<Rational>>) -> Result<Self> {
        let per = spaces.k * spaces.m;
        if values.len() != spaces.n_strata() || values.iter().any(|v| v.len() != per) {
            return Err(Error::DimensionMismatch(format!(
                "standard loss needs {} strata of K*M = {per} values",
                spaces.n_strata()
            )));
        }
        Ok(Self { spaces, values })
    }

    pub fn from_fn(spaces: Spaces, mut f: impl FnMut(usize, usize, usize) -> Rational) -> Self {
        let values = (0..spaces.n_strata())
            .map(|s| {
                (0..spaces.k)
                    .flat_map(|d| (0..spaces.m).map(move |y| (d, y)))
                    .map(|(d, y)| f(d, y, s))
                    .collect()
            })
            .collect();
        Self { spaces, values }
    }

    pub fn spaces(&self) -> &Spaces {
        &self.spaces
    }

    pub fn value(&self, d: usize, y: usize, stratum: usize) -> &Rational {
        &self.values[stratum][d * self.spaces.m + y]
    }

    /// The same loss viewed as a counterfactual loss that reads only `y_d`.
    pub fn embed(&self) -> LossTensor {
        LossTensor::from_fn(self.spaces.clone(), |d, y, s| {
            self.value(d, y[d], s).clone()
        })
    }

    pub fn to_document(&self) -> StandardLossDocument {
        StandardLossDocument {
            k: self.spaces.k,
            m: self.spaces.m,
            strata: self
                .spaces
                .strata
                .iter()
                .enumerate()
                .map(|(s, label)| StandardStratumEntries {
                    label: label.clone(),
                    entries: (0..self.spaces.k)
                        .flat_map(|d| (0..self.spaces.m).map(move |y| (d, y)))
                        .map(|(d, y)| StandardEntry {
                            d,
                            y,
                            loss: rational::format(self.value(d, y, s)),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("standard loss serialises")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossDocument {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub strata: Vec<StratumEntries>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StratumEntries {
    pub label: String,
    pub entries: Vec<LossEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossEntry {
    pub d: usize,
    pub y: Vec<usize>,
    pub loss: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StandardLossDocument {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub strata: Vec<StandardStratumEntries>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StandardStratumEntries {
    pub label: String,
    pub entries: Vec<StandardEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StandardEntry {
    pub d: usize,
    pub y: usize,
    pub loss: String,
}

/// Parses and validates a loss file.
pub fn load_loss(source: &str) -> Result<LossTensor> {
    let doc: LossDocument =
        serde_json::from_str(source).map_err(|e| Error::MalformedDocument(e.to_string()))?;
    LossTensor::try_from(doc)
}

pub fn load_standard_loss(source: &str) -> Result<StandardLoss> {
    let doc: StandardLossDocument =
        serde_json::from_str(source).map_err(|e| Error::MalformedDocument(e.to_string()))?;
    StandardLoss::try_from(doc)
}

impl TryFrom<LossDocument> for LossTensor {
    type Error = Error;

    fn try_from(doc: LossDocument) -> Result<Self> {
        let spaces = Spaces::new(
            doc.k,
            doc.m,
            doc.strata.iter().map(|s| s.label.clone()).collect(),
        )?;
        let mut values = Vec::with_capacity(doc.strata.len());
        for stratum in &doc.strata {
            let mut slots: Vec<Option<Rational>> = vec![None; spaces.n_joint()];
            for e in &stratum.entries {
                spaces.check_decision(e.d)?;
                spaces.check_outcome_vector(&e.y)?;
                let slot = &mut slots[spaces.joint_index(e.d, &e.y)];
                if slot.is_some() {
                    return Err(Error::DuplicateEntry {
                        stratum: stratum.label.clone(),
                        d: e.d,
                        y: e.y.clone(),
                    });
                }
                *slot = Some(rational::parse(&e.loss)?);
            }
            let vals = slots
                .into_iter()
                .enumerate()
                .map(|(i, v)| {
                    v.ok_or_else(|| {
                        let (d, y) = spaces.joint_cell(i);
                        Error::MissingEntry {
                            stratum: stratum.label.clone(),
                            d,
                            y,
                        }
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            values.push(vals);
        }
        LossTensor::new(spaces, values)
    }
}

impl TryFrom<StandardLossDocument> for StandardLoss {
    type Error = Error;

    fn try_from(doc: StandardLossDocument) -> Result<Self> {
        let spaces = Spaces::new(
            doc.k,
            doc.m,
            doc.strata.iter().map(|s| s.label.clone()).collect(),
        )?;
        let mut values = Vec::with_capacity(doc.strata.len());
        for stratum in &doc.strata {
            let mut slots: Vec<Option<Rational>> = vec![None; spaces.k * spaces.m];
            for e in &stratum.entries {
                spaces.check_decision(e.d)?;
                if e.y >= spaces.m {
                    return Err(Error::BadIndex(format!(
                        "outcome {} out of range for M = {}",
                        e.y, spaces.m
                    )));
                }
                let slot = &mut slots[e.d * spaces.m + e.y];
                if slot.is_some() {
                    return Err(Error::DuplicateEntry {
                        stratum: stratum.label.clone(),
                        d: e.d,
                        y: vec![e.y],
                    });
                }
                *slot = Some(rational::parse(&e.loss)?);
            }
            let vals = slots
                .into_iter()
                .enumerate()
                .map(|(i, v)| {
                    v.ok_or_else(|| Error::MissingEntry {
                        stratum: stratum.label.clone(),
                        d: i / spaces.m,
                        y: vec![i % spaces.m],
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            values.push(vals);
        }
        StandardLoss::new(spaces, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn zero_doc(k: usize, m: usize, skip: Option<usize>) -> String {
        let spaces = Spaces::single(k, m).unwrap();
        let entries: Vec<String> = (0..spaces.n_joint())
            .filter(|&i| Some(i) != skip)
            .map(|i| {
                let (d, y) = spaces.joint_cell(i);
                format!(r#"{{"d": {d}, "y": {y:?}, "loss": "0"}}"#)
            })
            .collect();
        format!(
            r#"{{"K": {k}, "M": {m}, "strata": [{{"label": "all", "entries": [{}]}}]}}"#,
            entries.join(",")
        )
    }

    #[test]
    fn index_order_has_last_outcome_fastest() {
        let s = Spaces::single(2, 2).unwrap();
        let order: Vec<_> = (0..8).map(|i| s.joint_cell(i)).collect();
        assert_eq!(order[0], (0, vec![0, 0]));
        assert_eq!(order[1], (0, vec![0, 1]));
        assert_eq!(order[2], (0, vec![1, 0]));
        assert_eq!(order[4], (1, vec![0, 0]));
        let s3 = Spaces::single(3, 3).unwrap();
        for i in 0..s3.n_joint() {
            let (d, y) = s3.joint_cell(i);
            assert_eq!(s3.joint_index(d, &y), i);
        }
        for i in 0..s3.n_weights() {
            let (k, d, y) = s3.weight_cell(i);
            assert_eq!(s3.weight_index(k, d, y), i);
        }
    }

    #[test]
    fn sizes_follow_k_and_m() {
        let s = Spaces::single(3, 2).unwrap();
        assert_eq!(s.n_joint(), 24);
        assert_eq!(s.n_marginals(), 18);
        assert_eq!(s.n_extended(), 26);
        // eight cells of the 2x2 confusion table
        assert_eq!(Spaces::single(2, 2).unwrap().n_joint(), 8);
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(matches!(Spaces::single(1, 2), Err(Error::BadDimensions(_))));
        assert!(matches!(Spaces::single(2, 1), Err(Error::BadDimensions(_))));
        assert!(matches!(
            Spaces::new(2, 2, vec![]),
            Err(Error::BadDimensions(_))
        ));
        assert!(load_loss(&zero_doc(2, 2, None).replace(r#""K": 2"#, r#""K": 1"#)).is_err());
    }

    #[test]
    fn loads_zero_loss() {
        let t = load_loss(&zero_doc(2, 2, None)).unwrap();
        assert_eq!(t, LossTensor::zeros(Spaces::single(2, 2).unwrap()));
    }

    #[test]
    fn missing_entry_names_the_cell() {
        let err = load_loss(&zero_doc(2, 2, Some(5))).unwrap_err();
        assert_eq!(
            err,
            Error::MissingEntry {
                stratum: "all".into(),
                d: 1,
                y: vec![0, 1]
            }
        );
    }

    #[test]
    fn duplicate_and_malformed_entries_rejected() {
        let doc = zero_doc(2, 2, None).replace(
            r#"{"d": 0, "y": [0, 1], "loss": "0"}"#,
            r#"{"d": 0, "y": [0, 0], "loss": "0"}"#,
        );
        assert!(matches!(load_loss(&doc), Err(Error::DuplicateEntry { .. })));
        let doc = zero_doc(2, 2, None).replacen(r#""loss": "0""#, r#""loss": "1/x""#, 1);
        assert!(matches!(load_loss(&doc), Err(Error::MalformedRational(_))));
        let doc = zero_doc(2, 2, None).replacen(r#""label""#, r#""colour": 1, "label""#, 1);
        assert!(matches!(load_loss(&doc), Err(Error::MalformedDocument(_))));
        let doc = zero_doc(2, 2, None).replacen(r#""y": [0, 0]"#, r#""y": [0, 2]"#, 1);
        assert!(matches!(load_loss(&doc), Err(Error::BadIndex(_))));
    }

    #[test]
    fn round_trip_is_exact() {
        let s = Spaces::new(2, 3, vec!["a".into(), "b".into()]).unwrap();
        let t = LossTensor::from_fn(s, |d, y, x| {
            ratio((d * 7 + y[0] * 3 + y[1]) as i64 - 4, (x + 3) as i64)
        });
        assert_eq!(load_loss(&t.to_json()).unwrap(), t);
    }

    #[test]
    fn standard_loss_embeds_realised_outcome() {
        let s = Spaces::single(2, 2).unwrap();
        let std = StandardLoss::from_fn(s, |d, y, _| int((10 * d + y) as i64));
        let t = std.embed();
        assert_eq!(t.value(1, &[0, 1], 0), &int(11));
        assert_eq!(t.value(0, &[1, 0], 0), &int(1));
        assert_eq!(load_standard_loss(&std.to_json()).unwrap(), std);
    }
}
