use cfrisk::distributions::ObservableVariant;
use cfrisk::oracle::{certify_identifiability, risk_bounds, FiberProblem, Verdict};
use cfrisk::random;
use cfrisk::{classify, Error, Regime, Spaces};

#[test]
fn verdicts_match_regimes_on_binary_losses() {
    let mut rng = random::rng(2024);
    let sp = Spaces::single(2, 2).unwrap();
    let mut seen = [0usize; 3];
    for i in 0..30u64 {
        let loss = match i % 3 {
            0 => random::standard_shaped_loss(&mut rng, &sp, 9),
            1 => random::binary_loss(&random::cross_decision_balanced(&mut rng, 9)),
            _ => random::integer_loss(&mut rng, &sp, 9),
        };
        let regime = classify(&loss).regime;
        seen[regime as usize] += 1;
        for variant in [
            ObservableVariant::MarginalsOnly,
            ObservableVariant::Extended,
        ] {
            let rep = certify_identifiability(&loss, variant, 8, i).unwrap();
            assert!(rep.agrees, "loss {i} ({regime}) under {variant:?}: {rep:?}");
            if regime == Regime::Unidentifiable {
                assert_eq!(rep.level, Verdict::NonIdentifiable);
                assert!(rep.counterexample.is_some());
            }
        }
    }
    assert!(
        seen.iter().all(|c| *c > 0),
        "every regime exercised: {seen:?}"
    );
}

#[test]
fn three_decision_level_fiber_splits_into_blocks() {
    // N = 24: one fiber separates into decision blocks and stays enumerable,
    // while the coupled pair problem for differences exceeds the guard.
    let sp = Spaces::single(3, 2).unwrap();
    let mut rng = random::rng(5);
    let loss = random::additive_decomposition(&mut rng, &sp, false).reconstruct();
    let model = random::interior_model(&mut rng, &sp);
    let fp = FiberProblem::from_model(&loss, &model, ObservableVariant::MarginalsOnly, 0).unwrap();
    assert!(risk_bounds(&fp).unwrap().identifiable());
    let generic = random::integer_loss(&mut rng, &sp, 9);
    let fp =
        FiberProblem::from_model(&generic, &model, ObservableVariant::MarginalsOnly, 0).unwrap();
    assert!(!risk_bounds(&fp).unwrap().identifiable());
    assert!(matches!(
        certify_identifiability(&loss, ObservableVariant::MarginalsOnly, 1, 0),
        Err(Error::TooLarge(_))
    ));
}
