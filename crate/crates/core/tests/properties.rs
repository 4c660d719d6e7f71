#![allow(clippy::needless_range_loop)]

use cfrisk::additivity::{decompose, Decomposer, Variant};
use cfrisk::distributions::{
    build_marginal_matrix, kernel_basis, marginalize, simulate_records, JointModel,
    ObservableVariant,
};
use cfrisk::equivalence::to_standard_loss;
use cfrisk::linalg::in_column_space;
use cfrisk::oracle::linear_extrema;
use cfrisk::random;
use cfrisk::rational::{self, int, Rational};
use cfrisk::risk::{
    binary_decomposition, identified_difference, identified_risk, optimize_policy, true_risk,
    ConstantHandling, OutcomeMarginals, Policy,
};
use cfrisk::{build_structure_matrix, classify, LossTensor, Regime, Spaces};
use num_traits::{Signed, Zero};
use proptest::prelude::*;

fn shape() -> impl Strategy<Value = (usize, usize)> {
    (2usize..=3, 2usize..=3)
}

fn strata(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("x{i}")).collect()
}

fn policy(rng: &mut random::InstanceRng, spaces: &Spaces) -> Policy {
    Policy::Stochastic(
        (0..spaces.n_strata())
            .map(|_| random::sparse_law(rng, spaces.decisions()))
            .collect(),
    )
}

/// Model with `D* ~ policy` independent of a shared per-stratum outcome law.
fn embedded(
    rng: &mut random::InstanceRng,
    spaces: &Spaces,
    pol: &Policy,
    outcome_law: &[Vec<Rational>],
    weights: &[Rational],
) -> JointModel {
    cfrisk::risk::embed_policy(
        pol,
        outcome_law,
        (0..spaces.n_strata())
            .map(|_| random::propensity(rng, spaces.decisions()))
            .collect(),
        weights.to_vec(),
        spaces,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn additive_losses_round_trip((k, m) in shape(), seed in any::<u64>(), intercept in any::<bool>()) {
        let mut rng = random::rng(seed);
        let sp = Spaces::single(k, m).unwrap();
        let d = random::additive_decomposition(&mut rng, &sp, intercept);
        let loss = d.reconstruct();
        let full = decompose(&loss, Variant::Full).additive().expect("full decomposition exists");
        prop_assert_eq!(full.reconstruct(), loss.clone());
        let restricted = decompose(&loss, Variant::Restricted);
        if !intercept {
            let r = restricted.additive().expect("restricted decomposition exists");
            prop_assert_eq!(r.reconstruct(), loss);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn decomposition_agrees_with_column_space((k, m) in shape(), seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let sp = Spaces::single(k, m).unwrap();
        let loss = if seed % 2 == 0 {
            random::integer_loss(&mut rng, &sp, 6)
        } else {
            random::additive_decomposition(&mut rng, &sp, seed % 4 == 1).reconstruct()
        };
        for variant in [Variant::Restricted, Variant::Full] {
            let a = build_structure_matrix(&sp, variant);
            prop_assert_eq!(
                decompose(&loss, variant).is_additive(),
                in_column_space(a.matrix(), loss.stratum(0))
            );
        }
    }

    #[test]
    fn free_parameters_keep_the_loss((k, m) in shape(), seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let sp = Spaces::single(k, m).unwrap();
        let loss = random::additive_decomposition(&mut rng, &sp, true).reconstruct();
        let d = decompose(&loss, Variant::Full).additive().unwrap();
        let coeffs: Vec<Rational> = d.free_params().iter().map(|_| random::small_rational(&mut rng, 3, 2)).collect();
        prop_assert_eq!(d.shifted(&coeffs).unwrap().reconstruct(), loss);
    }

    #[test]
    fn identified_level_matches_truth((k, m) in shape(), seed in any::<u64>(), n_strata in 1usize..=3) {
        let mut rng = random::rng(seed);
        let sp = Spaces::new(k, m, strata(n_strata)).unwrap();
        let d = random::additive_decomposition(&mut rng, &sp, seed % 2 == 0);
        let model = random::interior_model(&mut rng, &sp);
        let truth = true_risk(&d.reconstruct(), &model).unwrap().total().unwrap();
        let ext = identified_risk(&d, &marginalize(&model, ObservableVariant::Extended), ConstantHandling::Require).unwrap();
        prop_assert_eq!(ext.total().unwrap(), truth.clone());
        let marg = identified_risk(&d, &marginalize(&model, ObservableVariant::MarginalsOnly), ConstantHandling::AllowUnknown).unwrap();
        if d.is_exact() {
            prop_assert_eq!(marg.total().unwrap(), truth);
        } else {
            prop_assert!(marg.total().is_none());
        }
    }

    #[test]
    fn identified_difference_matches_truth((k, m) in shape(), seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let sp = Spaces::new(k, m, strata(2)).unwrap();
        let d = random::additive_decomposition(&mut rng, &sp, true);
        let loss = d.reconstruct();
        let law: Vec<Vec<Rational>> = (0..2).map(|_| random::sparse_law(&mut rng, sp.n_outcome_vectors())).collect();
        let w = random::interior_law(&mut rng, 2);
        let (p1, p2) = (policy(&mut rng, &sp), policy(&mut rng, &sp));
        let m1 = embedded(&mut rng, &sp, &p1, &law, &w);
        let m2 = embedded(&mut rng, &sp, &p2, &law, &w);
        let diff = identified_difference(
            &d,
            &marginalize(&m1, ObservableVariant::MarginalsOnly),
            &marginalize(&m2, ObservableVariant::MarginalsOnly),
        ).unwrap();
        let truth = true_risk(&loss, &m1).unwrap().total().unwrap() - true_risk(&loss, &m2).unwrap().total().unwrap();
        prop_assert_eq!(diff.total, truth);
    }

    #[test]
    fn binary_terms_reassemble(k in 2usize..=3, seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let sp = Spaces::new(k, 2, strata(2)).unwrap();
        let d = random::additive_decomposition(&mut rng, &sp, seed % 2 == 0);
        let model = random::interior_model(&mut rng, &sp);
        let b = binary_decomposition(&d, &marginalize(&model, ObservableVariant::Extended)).unwrap();
        let truth = true_risk(&d.reconstruct(), &model).unwrap().conditional();
        for s in 0..2 {
            prop_assert_eq!(b.reassemble(s), truth[s].clone());
        }
    }

    #[test]
    fn policy_choice_ignores_intercept_and_scale((k, m) in shape(), seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let sp = Spaces::new(k, m, strata(3)).unwrap();
        let d = random::additive_decomposition(&mut rng, &sp, false);
        let model = random::interior_model(&mut rng, &sp);
        let mu = OutcomeMarginals::from_model(&model);
        let base = optimize_policy(&d, &mu).unwrap().policy;
        let extra = random::additive_decomposition(&mut rng, &sp, true);
        let shifted = cfrisk::AdditiveDecomposition::from_fn(
            sp.clone(),
            |kk, dd, y, s| d.weight(kk, dd, y, s).clone(),
            |y, s| extra.intercept(y, s).clone(),
        );
        prop_assert_eq!(optimize_policy(&shifted, &mu).unwrap().policy, base.clone());
        let c = rational::ratio(7, 3);
        let scaled = cfrisk::AdditiveDecomposition::from_fn(
            sp.clone(),
            |kk, dd, y, s| d.weight(kk, dd, y, s) * &c,
            |_, _| int(0),
        );
        prop_assert_eq!(optimize_policy(&scaled, &mu).unwrap().policy, base.clone());
        // Per-stratum argmin, smallest index on ties.
        for s in 0..3 {
            let score = |dd: usize| -> Rational {
                (0..k).flat_map(|kk| (0..m).map(move |y| (kk, y)))
                    .map(|(kk, y)| d.weight(kk, dd, y, s) * mu.marginal(kk, y, s))
                    .sum()
            };
            let best = (0..k).min_by(|a, b| score(*a).cmp(&score(*b)).then(a.cmp(b))).unwrap();
            prop_assert_eq!(base[s], best);
        }
    }

    #[test]
    fn standard_loss_gap_is_policy_free(seed in any::<u64>(), m in 2usize..=3) {
        let mut rng = random::rng(seed);
        let sp = Spaces::single(2, m).unwrap();
        let d = random::additive_decomposition(&mut rng, &sp, true);
        let add = d.reconstruct();
        let std = to_standard_loss(&d).unwrap().embed();
        let law = vec![random::sparse_law(&mut rng, sp.n_outcome_vectors())];
        let w = vec![int(1)];
        let mut gap = None;
        for _ in 0..10 {
            let p = policy(&mut rng, &sp);
            let model = embedded(&mut rng, &sp, &p, &law, &w);
            let g = true_risk(&add, &model).unwrap().total().unwrap() - true_risk(&std, &model).unwrap().total().unwrap();
            match &gap {
                None => gap = Some(g),
                Some(prev) => prop_assert_eq!(prev, &g),
            }
        }
    }

    #[test]
    fn kernel_moves_preserve_marginals((k, m) in prop_oneof![Just((2usize, 2usize)), Just((3, 2)), Just((2, 3))], seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let sp = Spaces::single(k, m).unwrap();
        let loss = random::integer_loss(&mut rng, &sp, 9);
        let p = random::interior_law(&mut rng, sp.n_joint());
        for variant in [ObservableVariant::MarginalsOnly, ObservableVariant::Extended] {
            let c = build_marginal_matrix(&sp, variant);
            let q = c.apply(&p);
            let min_p = p.iter().min().unwrap().clone();
            for v in kernel_basis(&c) {
                let alpha = &min_p / rational::max_abs(&v);
                let moved: Vec<Rational> = p.iter().zip(&v).map(|(a, b)| a + &alpha * b).collect();
                prop_assert!(moved.iter().all(|x| !x.is_negative()));
                prop_assert_eq!(c.apply(&moved), q.clone());
                prop_assert_eq!(
                    rational::dot(loss.stratum(0), &moved) - rational::dot(loss.stratum(0), &p),
                    &alpha * rational::dot(loss.stratum(0), &v)
                );
                // Sum-to-zero follows from the marginal rows.
                prop_assert!(rational::sum(&v).is_zero());
            }
        }
    }

    #[test]
    fn marginals_are_attainable(seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let sp = Spaces::single(2, 2).unwrap();
        let p = random::sparse_law(&mut rng, sp.n_joint());
        let c = build_marginal_matrix(&sp, ObservableVariant::Extended);
        let mut b = c.apply(&p);
        b.push(int(1));
        let a = c.matrix().stack(&cfrisk::linalg::Matrix::from_fn(1, 8, |_, _| int(1)));
        let zero = vec![Rational::zero(); 8];
        let r = linear_extrema(&a, &b, &zero).unwrap();
        prop_assert_eq!(c.apply(&r.argmin), c.apply(&p));
        prop_assert!(r.argmin.iter().all(|x| !x.is_negative()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn simulation_prefixes(seed in any::<u64>(), n in 1usize..500) {
        let mut rng = random::rng(seed);
        let sp = Spaces::new(3, 2, strata(2)).unwrap();
        let model = random::interior_model(&mut rng, &sp);
        let long = simulate_records(&model, 2 * n, seed).unwrap();
        prop_assert_eq!(&long[..n], &simulate_records(&model, n, seed).unwrap()[..]);
    }
}

#[test]
fn kernel_dimensions_and_redundant_sum_row() {
    // dim ker C for (K, M) = (2,2), (3,2), (2,3)
    let expect = [((2, 2), 2, 1), ((3, 2), 12, 8), ((2, 3), 8, 4)];
    for ((k, m), marg, ext) in expect {
        let sp = Spaces::single(k, m).unwrap();
        for (variant, dim) in [
            (ObservableVariant::MarginalsOnly, marg),
            (ObservableVariant::Extended, ext),
        ] {
            let c = build_marginal_matrix(&sp, variant);
            assert_eq!(kernel_basis(&c).len(), dim);
            assert_eq!(
                sp.n_joint() - c.matrix().rank(),
                dim,
                "ker C already has 1ᵀv = 0"
            );
        }
    }
}

#[test]
fn structure_ranks() {
    for ((k, m), full, restricted) in [
        ((2, 2), 7, 6),
        ((3, 2), 16, 12),
        ((2, 3), 14, 10),
        ((3, 3), 41, 21),
    ] {
        let sp = Spaces::single(k, m).unwrap();
        assert_eq!(build_structure_matrix(&sp, Variant::Full).rank(), full);
        assert_eq!(
            build_structure_matrix(&sp, Variant::Restricted).rank(),
            restricted
        );
        assert_eq!(Decomposer::new(k, m, Variant::Full).unwrap().rank(), full);
    }
}

#[test]
fn random_integer_losses_are_unidentifiable() {
    let mut rng = random::rng(11);
    for (k, m) in [(2, 2), (3, 2), (2, 3), (3, 3)] {
        let sp = Spaces::single(k, m).unwrap();
        for _ in 0..20 {
            let loss: LossTensor = random::integer_loss(&mut rng, &sp, 1_000_000);
            assert_eq!(classify(&loss).regime, Regime::Unidentifiable);
        }
    }
}

#[test]
fn float_model_simulation_consistency() {
    let sp = Spaces::single(2, 2).unwrap();
    let model = random::interior_model(&mut random::rng(3), &sp);
    let n = 200_000;
    let recs = simulate_records(&model, n, 21).unwrap();
    let q = marginalize(&model, ObservableVariant::MarginalsOnly);
    for d in 0..2 {
        for y in 0..2 {
            let p = rational::to_f64(q.marginal(d, 0, y, 0));
            // D is independent of (D*, Y(·)), so condition on D = 0.
            let sub: Vec<_> = recs.iter().filter(|r| r.d == 0).collect();
            let f =
                sub.iter().filter(|r| r.d_star == d && r.y == y).count() as f64 / sub.len() as f64;
            assert!((f - p).abs() <= 4.0 * (p * (1.0 - p) / sub.len() as f64).sqrt());
        }
    }
    let treated = recs.iter().filter(|r| r.d == 1).count() as f64 / n as f64;
    let e1 = rational::to_f64(&model.propensity(0)[1]);
    assert!((treated - e1).abs() <= 4.0 * (e1 * (1.0 - e1) / n as f64).sqrt());
}
