use maod_core::corpus;
use maod_core::{decompose, recompose, Profile};

fn fixture(name: &str) -> String {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read_to_string(path).unwrap()
}

fn corpus_text(name: &str) -> String {
    std::fs::read_to_string(corpus::corpus_dir().join(name)).unwrap()
}

#[test]
fn email_example_matches_fixture_byte_for_byte() {
    let raw = corpus_text("email_project_update.email.txt");
    let response = decompose(&raw, Profile::Email).unwrap();
    assert_eq!(response.to_canonical_json(), fixture("email_project_update.json"));
}

#[test]
fn email_example_structure() {
    let raw = "Subject: Project update\n\nHi team,\n\nWe shipped v1.2 today...\n";
    let r = decompose(raw, Profile::Email).unwrap();
    let kinds: Vec<_> = r.components.iter().map(|c| c.kind.as_str()).collect();
    assert_eq!(kinds, ["Subject", "Greeting", "Paragraph"]);
    assert_eq!(r.components[0].content, "Project update");
    assert_eq!(r.components[1].content, "Hi team,");
    assert_eq!(r.components[2].content, "We shipped v1.2 today...");
    assert_eq!(r.components[2].links.len(), 1);
    assert_eq!(r.components[2].links[0].target.as_str(), "c1");
    assert_eq!(recompose(&r, 0).text, raw);
}

#[test]
fn mixed_document_matches_fixture() {
    let raw = corpus_text("golden_mixed.md");
    let response = decompose(&raw, Profile::Document).unwrap();
    assert_eq!(response.to_canonical_json(), fixture("golden_mixed.json"));
}

#[test]
fn fixtures_deserialize_and_validate() {
    for name in ["email_project_update.json", "golden_mixed.json"] {
        let r: maod_core::DecomposedResponse = serde_json::from_str(&fixture(name)).unwrap();
        assert!(r.validate().ok, "{name}");
        assert_eq!(recompose(&r, 0).text, r.source_text);
    }
}

#[test]
fn whole_corpus_round_trips() {
    let docs = corpus::load_default().unwrap();
    assert!(docs.len() >= 25);
    for doc in docs {
        let r = decompose(&doc.text, doc.profile).unwrap_or_else(|e| panic!("{}: {e}", doc.name));
        assert!(r.validate().ok, "{}", doc.name);
        assert_eq!(recompose(&r, 0).text, doc.text, "{}", doc.name);
        for (i, c) in r.components.iter().enumerate() {
            assert_eq!(c.id.as_str(), format!("c{}", i + 1));
        }
    }
}
