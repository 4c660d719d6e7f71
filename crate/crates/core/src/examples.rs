//! Built-in loss families from the medical decision examples.
//!
//! | name                     | K | M | parameters                                   |
//! |--------------------------|---|---|----------------------------------------------|
//! | `classification`         | 2 | 2 | `l0 lt1 c0 c1`                               |
//! | `classification-general` | 2 | 2 | `l0 l1 lt0 lt1 c0 c1`                        |
//! | `asymmetric`             | 2 | 2 | `lR0 lR1 lH0 lH1 l0 l1 c0 c1`                |
//! | `trichotomous`           | 3 | 2 | `l0 l1 c0 c1 c2 r0 r1`                       |
//!
//! `l*` are outcome losses, `lt*` counterfactual-outcome losses, `c*` decision
//! costs, `lR*`/`lH*` responder and harmed losses, `r*` overtreatment regrets.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::rational::{self, Rational};
use crate::space::{LossTensor, Spaces};

pub type Params = BTreeMap<String, Rational>;

pub const EXAMPLE_NAMES: [&str; 4] = [
    "classification",
    "classification-general",
    "asymmetric",
    "trichotomous",
];

/// Parameter names accepted by an example, in documentation order.
pub fn example_params(name: &str) -> Result<&'static [&'static str]> {
    Ok(match name {
        "classification" => &["l0", "lt1", "c0", "c1"],
        "classification-general" => &["l0", "l1", "lt0", "lt1", "c0", "c1"],
        "asymmetric" => &["lR0", "lR1", "lH0", "lH1", "l0", "l1", "c0", "c1"],
        "trichotomous" => &["l0", "l1", "c0", "c1", "c2", "r0", "r1"],
        other => return Err(Error::UnknownExample(other.to_string())),
    })
}

/// Materialises an example on a single stratum.
pub fn builtin_example(name: &str, params: &Params) -> Result<LossTensor> {
    builtin_example_in(name, params, vec!["all".to_string()])
}

/// Materialises an example, constant across the given strata.
pub fn builtin_example_in(name: &str, params: &Params, strata: Vec<String>) -> Result<LossTensor> {
    let names = example_params(name)?;
    if let Some(extra) = params.keys().find(|k| !names.contains(&k.as_str())) {
        return Err(Error::UnknownParam(extra.clone()));
    }
    let get = |p: &str| -> Result<Rational> {
        params
            .get(p)
            .cloned()
            .ok_or_else(|| Error::MissingParam(p.to_string()))
    };
    match name {
        "classification" => {
            let (l0, lt1) = (get("l0")?, get("lt1")?);
            let c = [get("c0")?, get("c1")?];
            let spaces = Spaces::new(2, 2, strata)?;
            Ok(LossTensor::from_fn(spaces, |d, y, _| {
                let mut v = c[d].clone();
                if d == 0 && y[0] == 0 {
                    v += &l0;
                }
                if d == 1 && y[0] == 1 {
                    v += &lt1;
                }
                v
            }))
        }
        "classification-general" => {
            let l = [get("l0")?, get("l1")?];
            let lt = [get("lt0")?, get("lt1")?];
            let c = [get("c0")?, get("c1")?];
            let spaces = Spaces::new(2, 2, strata)?;
            Ok(LossTensor::from_fn(spaces, |d, y, _| {
                &l[y[d]] + &lt[y[1 - d]] + &c[d]
            }))
        }
        "asymmetric" => {
            let lr = [get("lR0")?, get("lR1")?];
            let lh = [get("lH0")?, get("lH1")?];
            let l = [get("l0")?, get("l1")?];
            let c = [get("c0")?, get("c1")?];
            let zero = rational::zero();
            if !(lr[0] > lr[1] && lr[1] >= zero) {
                return Err(Error::ConstraintViolated("need lR0 > lR1 >= 0".into()));
            }
            if !(lh[0] > lh[1] && lh[1] >= zero) {
                return Err(Error::ConstraintViolated("need lH0 > lH1 >= 0".into()));
            }
            let spaces = Spaces::new(2, 2, strata)?;
            Ok(LossTensor::from_fn(spaces, |d, y, _| {
                let stratum = match (y[0], y[1]) {
                    (0, 0) => l[0].clone(),
                    (0, _) => lr[d].clone(),
                    (_, 0) => lh[1 - d].clone(),
                    _ => l[1].clone(),
                };
                stratum + &c[d]
            }))
        }
        "trichotomous" => {
            let l = [get("l0")?, get("l1")?];
            let c = [get("c0")?, get("c1")?, get("c2")?];
            let r = [get("r0")?, get("r1")?];
            let spaces = Spaces::new(3, 2, strata)?;
            Ok(LossTensor::from_fn(spaces, |d, y, _| {
                let mut v = &l[y[d]] + &c[d];
                for k in 0..d {
                    if y[k] == 1 {
                        v += &r[k];
                    }
                }
                v
            }))
        }
        other => Err(Error::UnknownExample(other.to_string())),
    }
}

/// Parses `name=value` pairs, values in any form accepted by [`rational::parse`].
pub fn parse_params<'a>(pairs: impl IntoIterator<Item = &'a str>) -> Result<Params> {
    let mut out = Params::new();
    for pair in pairs {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("expected name=value, got `{pair}`")))?;
        out.insert(k.trim().to_string(), rational::parse(v)?);
    }
    Ok(out)
}
