//! Seeded generators of exact random instances.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::additivity::AdditiveDecomposition;
use crate::distributions::JointModel;
use crate::rational::{self, Rational};
use crate::space::{LossTensor, Spaces};

pub use rand::SeedableRng;
pub type InstanceRng = ChaCha8Rng;

pub fn rng(seed: u64) -> InstanceRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Strictly positive law: integers in `1..=100` over their sum.
pub fn interior_law(rng: &mut impl Rng, n: usize) -> Vec<Rational> {
    let raw: Vec<i64> = (0..n).map(|_| rng.random_range(1..=100)).collect();
    let total: i64 = raw.iter().sum();
    raw.into_iter().map(|v| rational::ratio(v, total)).collect()
}

/// Law with some zero cells (each cell zero with probability 1/3, at least
/// one cell positive).
pub fn sparse_law(rng: &mut impl Rng, n: usize) -> Vec<Rational> {
    let mut raw: Vec<i64> = (0..n)
        .map(|_| {
            if rng.random_range(0..3) == 0 {
                0
            } else {
                rng.random_range(1..=100)
            }
        })
        .collect();
    if raw.iter().all(|v| *v == 0) {
        raw[rng.random_range(0..n)] = 1;
    }
    let total: i64 = raw.iter().sum();
    raw.into_iter().map(|v| rational::ratio(v, total)).collect()
}

/// Rational in `[-bound, bound]` with denominator in `1..=denominator`.
pub fn small_rational(rng: &mut impl Rng, bound: i64, denominator: i64) -> Rational {
    let d = rng.random_range(1..=denominator);
    rational::ratio(rng.random_range(-bound * d..=bound * d), d)
}

/// Unstructured loss with integer entries in `[-bound, bound]`.
pub fn integer_loss(rng: &mut impl Rng, spaces: &Spaces, bound: i64) -> LossTensor {
    LossTensor::from_fn(spaces.clone(), |_, _, _| {
        rational::int(rng.random_range(-bound..=bound))
    })
}

/// Random weights and, if asked, a random intercept.
pub fn additive_decomposition(
    rng: &mut impl Rng,
    spaces: &Spaces,
    with_intercept: bool,
) -> AdditiveDecomposition {
    let weights: Vec<Vec<Rational>> = (0..spaces.n_strata())
        .map(|_| {
            (0..spaces.n_weights())
                .map(|_| small_rational(rng, 5, 4))
                .collect()
        })
        .collect();
    let intercept: Vec<Vec<Rational>> = (0..spaces.n_strata())
        .map(|_| {
            (0..spaces.n_outcome_vectors())
                .map(|_| {
                    if with_intercept {
                        small_rational(rng, 5, 4)
                    } else {
                        rational::zero()
                    }
                })
                .collect()
        })
        .collect();
    AdditiveDecomposition::from_fn(
        spaces.clone(),
        |k, d, y, s| weights[s][spaces.weight_index(k, d, y)].clone(),
        |y, s| intercept[s][spaces.outcome_index(y)].clone(),
    )
}

/// Propensity with every entry in `[1/(2K), …]`, well inside the overlap bound.
pub fn propensity(rng: &mut impl Rng, k: usize) -> Vec<Rational> {
    let raw: Vec<i64> = (0..k).map(|_| rng.random_range(10..=30)).collect();
    let total: i64 = raw.iter().sum();
    raw.into_iter().map(|v| rational::ratio(v, total)).collect()
}

/// Joint model with interior joint laws and random stratum weights.
pub fn interior_model(rng: &mut impl Rng, spaces: &Spaces) -> JointModel {
    let p = (0..spaces.n_strata())
        .map(|_| interior_law(rng, spaces.n_joint()))
        .collect();
    let prop = (0..spaces.n_strata())
        .map(|_| propensity(rng, spaces.decisions()))
        .collect();
    let w = interior_law(rng, spaces.n_strata());
    JointModel::new(spaces.clone(), p, prop, w).expect("generated model is valid")
}

/// Loss with `ℓ(d; y)` depending on `y_d` only.
pub fn standard_shaped_loss(rng: &mut impl Rng, spaces: &Spaces, bound: i64) -> LossTensor {
    let table: Vec<Vec<Rational>> = (0..spaces.n_strata())
        .map(|_| {
            (0..spaces.decisions() * spaces.outcomes())
                .map(|_| rational::int(rng.random_range(-bound..=bound)))
                .collect()
        })
        .collect();
    let m = spaces.outcomes();
    LossTensor::from_fn(spaces.clone(), |d, y, s| table[s][d * m + y[d]].clone())
}

/// Binary-binary loss with `ℓ(d; 0,0) + ℓ(d; 1,1) = ℓ(d; 0,1) + ℓ(d; 1,0)` for
/// both decisions.
pub fn within_decision_balanced(rng: &mut impl Rng, bound: i64) -> [Rational; 8] {
    let mut v: [Rational; 8] = Default::default();
    for d in 0..2 {
        let b = 4 * d;
        for i in 0..3 {
            v[b + i] = rational::int(rng.random_range(-bound..=bound));
        }
        v[b + 3] = &v[b + 1] + &v[b + 2] - &v[b];
    }
    v
}

/// Binary-binary loss whose cross-decision balance holds while the
/// within-decision balance fails for at least one decision.
pub fn cross_decision_balanced(rng: &mut impl Rng, bound: i64) -> [Rational; 8] {
    loop {
        let mut v: [Rational; 8] = Default::default();
        for x in v.iter_mut().take(7) {
            *x = rational::int(rng.random_range(-bound..=bound));
        }
        v[7] = &v[6] - &v[2] + &v[5] - &v[1] - &v[4] + &v[0] + &v[3];
        let within = |b: usize| &v[b] + &v[b + 3] == &v[b + 1] + &v[b + 2];
        if !(within(0) && within(4)) {
            return v;
        }
    }
}

/// Binary-binary loss in canonical order from eight values.
pub fn binary_loss(values: &[Rational; 8]) -> LossTensor {
    LossTensor::new(Spaces::single(2, 2).expect("2x2"), vec![values.to_vec()])
        .expect("eight values")
}
