//! Parse/serialize round trips over the hand-written documents and a batch
//! of randomly drawn catalog-valid representations.

mod common;

use std::time::Instant;

use common::random_rep::random_rep;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use target_core::dsl::{parse_scenario_text, serialize_scenario, validate_scenario, ElementCatalog, ScenarioRep};

fn assert_round_trip(name: &str, rep: &ScenarioRep) {
    let text = serialize_scenario(rep);
    let back = parse_scenario_text(&text).unwrap_or_else(|e| panic!("{name}: {e}\n{text}"));
    assert_eq!(&back, rep, "{name}");
    assert_eq!(serialize_scenario(&back), text, "{name}: serialization not idempotent");
}

#[test]
fn fixture_documents_round_trip() {
    let docs = common::fixture_docs();
    let reps = docs.iter().filter(|(n, _)| n.starts_with("rep")).count();
    assert!(reps >= 20, "only {reps} hand-authored reps");
    for (name, rep) in &docs {
        assert_round_trip(name, rep);
    }
}

#[test]
fn random_catalog_reps_round_trip() {
    let t0 = Instant::now();
    let cat = ElementCatalog::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for i in 0..500 {
        let rep = random_rep(&mut rng, &cat);
        assert!(validate_scenario(&rep, &cat).novel().count() == 0, "draw {i} left the catalog");
        assert_round_trip(&format!("draw {i}"), &rep);
    }
    assert!(t0.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn comments_and_blank_lines_do_not_change_the_rep() {
    let cat = ElementCatalog::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let rep = random_rep(&mut rng, &cat);
        let noisy: String = serialize_scenario(&rep).lines().map(|l| format!("{l}   # note\n\n")).collect();
        assert_eq!(parse_scenario_text(&format!("# header\n{noisy}")).unwrap(), rep);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn seeded_draws_round_trip(seed in any::<u64>()) {
        let cat = ElementCatalog::builtin();
        let rep = random_rep(&mut ChaCha8Rng::seed_from_u64(seed), &cat);
        let text = serialize_scenario(&rep);
        prop_assert_eq!(parse_scenario_text(&text).unwrap(), rep);
    }
}
