//! The parsing pipeline driven by recorded and scripted completions.

mod common;

use std::collections::BTreeSet;

use target_core::dsl::{serialize_scenario, validate_scenario, ElementCatalog, TokenStatus};
use target_core::metrics::rule_parsing_accuracy;
use target_core::rule_parser::{
    align_token_locally, default_example, parse_rule, parse_rule_session, BackendError, ParseError, ParseOptions, ReplayBackend,
    ScriptedBackend, Stage, REASK,
};

fn rules() -> Vec<(String, String)> {
    let mut v: Vec<(String, String)> = std::fs::read_dir(common::root().join("fixtures/rules"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_stem().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn replay() -> ReplayBackend {
    ReplayBackend::new(common::root().join("fixtures/replay"))
}

#[test]
fn replay_is_deterministic_and_matches_gold() {
    let catalog = ElementCatalog::builtin();
    let example = default_example();
    let all = rules();
    assert!(all.len() >= 10);
    assert!(all.iter().any(|(n, _)| n == "t2_through_street"));
    for (name, text) in &all {
        let docs: Vec<String> = (0..3)
            .map(|_| {
                let s = parse_rule(text, &replay(), &catalog, &example, &ParseOptions::default())
                    .unwrap_or_else(|e| panic!("{name}: {e}"));
                serialize_scenario(s.aligned_rep.as_ref().unwrap())
            })
            .collect();
        assert!(docs.iter().all(|d| *d == docs[0]), "{name} differs between runs");
        let gold = common::doc(&format!("fixtures/gold/{name}.dsl"));
        let pred = common::parse(&docs[0]);
        assert_eq!(rule_parsing_accuracy(&pred, &gold), 1.0, "{name}");
    }
}

#[test]
fn completions_stay_within_the_bound() {
    let catalog = ElementCatalog::builtin();
    let example = default_example();
    for (name, text) in rules() {
        let s = parse_rule(&text, &replay(), &catalog, &example, &ParseOptions::default()).unwrap();
        let novel = validate_scenario(s.validated_rep.as_ref().unwrap(), &catalog).novel().count();
        let reasks = s.transcript.iter().filter(|t| t.message.content == REASK).count();
        assert_eq!(s.alignments.len(), novel, "{name}");
        assert!(s.completions <= 2 + novel + reasks, "{name}: {} completions", s.completions);
        let replies = s.transcript.iter().filter(|t| t.message.role == target_core::rule_parser::Role::Assistant).count();
        assert_eq!(replies, s.completions);
        if name == "rainy_night_roundabout" {
            assert_eq!(reasks, 1);
        }
    }
}

#[test]
fn stages_only_move_towards_the_catalog() {
    let catalog = ElementCatalog::builtin();
    let example = default_example();
    for (name, text) in rules() {
        let s = parse_rule(&text, &replay(), &catalog, &example, &ParseOptions::default()).unwrap();
        let validated = s.validated_rep.unwrap();
        let aligned = s.aligned_rep.unwrap();
        let touched: BTreeSet<_> = s.alignments.iter().map(|a| a.path).collect();
        let before = validate_scenario(&validated, &catalog);
        let after = validate_scenario(&aligned, &catalog);
        for (path, token) in validated.tokens() {
            if !touched.contains(&path) {
                assert_eq!(aligned.token(path), Some(token), "{name}: untouched slot changed");
            }
            if before.status_of(path) == Some(TokenStatus::Catalog) {
                assert_eq!(after.status_of(path), Some(TokenStatus::Catalog), "{name}");
            }
        }
        assert!(after.novel().count() <= before.novel().count(), "{name}");
    }
}

#[test]
fn specific_alignments() {
    let catalog = ElementCatalog::builtin();
    let example = default_example();
    let text = |n: &str| std::fs::read_to_string(common::root().join(format!("fixtures/rules/{n}.txt"))).unwrap();
    let s = parse_rule(&text("stop_sign_intersection"), &replay(), &catalog, &example, &ParseOptions::default()).unwrap();
    assert!(s.alignments.iter().any(|a| a.original == "go straight" && a.aligned == "go forward" && !a.novel));
    let s = parse_rule(&text("flashing_red_beacon"), &replay(), &catalog, &example, &ParseOptions::default()).unwrap();
    assert!(!s.alignments.is_empty());
    assert!(s.alignments.iter().all(|a| a.original == "flashing beacon" && a.aligned == "flashing beacon" && a.novel));
    let s = parse_rule(&text("railway_crossing_train"), &replay(), &catalog, &example, &ParseOptions::default()).unwrap();
    assert!(s.alignments.iter().any(|a| a.original == "locomotive" && a.aligned == "train"));
}

#[test]
fn unrecorded_prompt_is_a_missing_fixture() {
    let err = parse_rule(
        "Vehicles must not idle on the hard shoulder.",
        &replay(),
        &ElementCatalog::builtin(),
        &default_example(),
        &ParseOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, ParseError::Backend(BackendError::FixtureMissing(_))), "{err}");
}

#[test]
fn unparseable_replies_exhaust_the_reasks() {
    let backend = ScriptedBackend::new("script", vec!["no idea".into(); 3]);
    let (session, res) = parse_rule_session(
        "Stop at red lights.",
        &backend,
        &ElementCatalog::builtin(),
        &default_example(),
        &ParseOptions::default(),
    );
    match res.unwrap_err() {
        ParseError::ExtractionUnparseable { stage, attempts, .. } => {
            assert_eq!(stage, Stage::Extraction);
            assert_eq!(attempts, 3);
        }
        other => panic!("{other}"),
    }
    assert_eq!(session.completions, 3);
    assert!(session.draft_rep.is_none());
}

#[test]
fn local_alignment_needs_no_extra_completions() {
    let catalog = ElementCatalog::builtin();
    let path = common::root().join("fixtures/scripts/stop_sign_intersection.toml");
    let backend = ScriptedBackend::load(&path).unwrap();
    let text = std::fs::read_to_string(common::root().join("fixtures/rules/stop_sign_intersection.txt")).unwrap();
    let opts = ParseOptions { local_alignment: Some(0.6), ..Default::default() };
    let s = parse_rule(&text, &backend, &catalog, &default_example(), &opts).unwrap();
    assert_eq!(s.completions, 2);
    assert!(!s.alignments.is_empty());
    for a in &s.alignments {
        let sub: target_core::dsl::Subcomponent = a.subcomponent.parse().unwrap();
        assert_eq!(a.aligned, align_token_locally(&a.original, &catalog.candidates(sub), 0.6));
    }
}
