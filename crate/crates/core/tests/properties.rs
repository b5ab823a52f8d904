mod support;

use maod_core::component::{topological_order, ComponentId, Profile};
use maod_core::composer::{self, Draft, ManipulationEvent};
use maod_core::{decompose, recompose, DecomposeError};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn profile_strategy() -> impl Strategy<Value = Profile> {
    prop_oneof![Just(Profile::Document), Just(Profile::Email)]
}

fn markdown_strategy() -> impl Strategy<Value = String> {
    any::<u64>().prop_map(|seed| support::random_markdown(&mut ChaCha8Rng::seed_from_u64(seed)))
}

fn lineish_strategy() -> impl Strategy<Value = String> {
    proptest::collection::vec(
        prop_oneof![
            Just("\n".to_owned()),
            Just("\r\n".to_owned()),
            Just("```".to_owned()),
            Just("# ".to_owned()),
            Just("- ".to_owned()),
            Just("> ".to_owned()),
            Just("Subject: ".to_owned()),
            Just("Hi all,".to_owned()),
            Just("Regards,".to_owned()),
            Just("   ".to_owned()),
            Just("\t".to_owned()),
            "[a-z ]{0,12}",
            "\\PC{0,6}",
        ],
        0..30,
    )
    .prop_map(|parts| parts.concat())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn arbitrary_text_is_lossless(raw in "\\PC*|[\\s\\S]{0,80}", profile in profile_strategy()) {
        match decompose(&raw, profile) {
            Ok(r) => {
                prop_assert_eq!(recompose(&r, 0).text, raw.clone());
                prop_assert!(r.validate().ok);
            }
            Err(DecomposeError::EmptyResponse) => prop_assert!(raw.trim().is_empty()),
            Err(e) => prop_assert!(false, "unexpected {e}"),
        }
    }

    #[test]
    fn line_structured_text_is_lossless(raw in lineish_strategy(), profile in profile_strategy()) {
        if let Ok(r) = decompose(&raw, profile) {
            prop_assert_eq!(recompose(&r, 0).text, raw.clone());
            prop_assert!(r.validate().ok, "{}", r.validate());
        } else {
            prop_assert!(raw.trim().is_empty());
        }
    }

    #[test]
    fn markdown_is_lossless_with_sequential_ids(raw in markdown_strategy(), profile in profile_strategy()) {
        let r = decompose(&raw, profile).unwrap();
        prop_assert_eq!(recompose(&r, 0).text, raw.clone());
        for (i, c) in r.components.iter().enumerate() {
            prop_assert_eq!(c.id.as_str(), format!("c{}", i + 1));
        }
    }

    #[test]
    fn decomposition_is_deterministic(raw in markdown_strategy(), profile in profile_strategy()) {
        let a = decompose(&raw, profile).unwrap();
        let b = decompose(&raw, profile).unwrap();
        prop_assert_eq!(a.to_canonical_json(), b.to_canonical_json());
    }

    #[test]
    fn fences_stay_whole(head in "[a-z ]{1,20}", body in proptest::collection::vec("[a-z#>\\- ]{0,12}", 0..6), tail in "[a-z ]{1,20}") {
        let fence = format!("```\n{}\n```", body.join("\n\n"));
        let raw = format!("{head}\n\n{fence}\n\n{tail}\n");
        let r = decompose(&raw, Profile::Document).unwrap();
        prop_assert!(r.components.iter().any(|c| c.content == fence && c.kind.as_str() == "Code"));
    }

    #[test]
    fn canonical_json_round_trips(raw in markdown_strategy()) {
        let r = decompose(&raw, Profile::Document).unwrap();
        let back: maod_core::DecomposedResponse = serde_json::from_str(&r.to_canonical_json()).unwrap();
        prop_assert_eq!(back, r);
    }
}

#[test]
fn validate_matches_dfs_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let g = support::random_graph(&mut rng, 12);
        let report = g.response.validate();
        let cyclic = report.has_rule("CyclicLinks") || report.has_rule("SelfLink");
        assert_eq!(cyclic, support::dfs_has_cycle(g.contents.len(), &g.edges), "{:?}", g.edges);
        assert_eq!(report.has_rule("EmptyComponent"), support::oracle_has_empty(&g.contents));
    }
}

#[test]
fn topological_order_matches_permutation_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..400 {
        let g = support::random_graph(&mut rng, 5);
        let expected = support::permutation_topo_order(g.contents.len(), &g.edges);
        match (topological_order(&g.response), expected) {
            (Ok(order), Some(oracle)) => {
                let oracle: Vec<ComponentId> = oracle.iter().map(|&i| ComponentId::from_ordinal(i + 1)).collect();
                assert_eq!(order, oracle, "{:?}", g.edges);
            }
            (Err(_), None) => {}
            (got, oracle) => panic!("{:?}: got {got:?}, oracle {oracle:?}", g.edges),
        }
    }
}

#[test]
fn single_events_are_local() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut held = 0;
    for _ in 0..500 {
        let raw = support::random_markdown(&mut rng);
        let r = decompose(&raw, Profile::Document).unwrap();
        match support::locality_trial(&mut rng, &r) {
            support::Trial::Held => held += 1,
            support::Trial::Rejected => {}
            support::Trial::Violated(why) => panic!("{why}"),
        }
    }
    assert!(held > 400);
}

#[test]
fn replay_reproduces_live_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let raw = support::random_markdown(&mut rng);
        let base = decompose(&raw, Profile::Document).unwrap();
        let mut live = Draft::new(base.clone());
        let mut log = Vec::new();
        for _ in 0..rng.random_range(0..30) {
            let k = rng.random_range(0..base.components.len());
            let id = base.components[k].id.clone();
            let event = if rng.random_bool(0.5) {
                ManipulationEvent::manual_edit(live.next_event_id(), id, support::random_edit(&mut rng))
            } else {
                ManipulationEvent::toggle(live.next_event_id(), id, rng.random_bool(0.5))
            };
            if live.apply(&event).is_ok() {
                log.push(event);
            }
        }
        let replayed = Draft::replay(base, &log).unwrap();
        assert_eq!(replayed.recompose().text, live.recompose().text);
        assert_eq!(replayed.last_event_id(), live.last_event_id());
    }
}

#[test]
fn stale_and_unknown_events_are_rejected() {
    let r = decompose("a\n\nb\n", Profile::Document).unwrap();
    let mut d = Draft::new(r);
    d.apply(&ManipulationEvent::toggle(1, ComponentId::from_ordinal(1), false)).unwrap();
    let stale = d.apply(&ManipulationEvent::toggle(1, ComponentId::from_ordinal(2), false));
    assert!(matches!(stale, Err(composer::ComposeError::StaleEvent { .. })));
    let unknown = d.apply(&ManipulationEvent::toggle(2, ComponentId::from_ordinal(9), false));
    assert!(matches!(unknown, Err(composer::ComposeError::UnknownComponent(_))));
    assert_eq!(d.recompose().text, "\n\nb\n");
}
