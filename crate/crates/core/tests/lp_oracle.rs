use qaspect_core::lp::{match_item, Catalog, Characteristic, LanguagePattern, Regex};
use qaspect_core::corpus::{Item, ItemSource};
use qaspect_core::PhaseId;
use serde::Deserialize;

const REPLACEABILITY: &str = "(?i)(?<!should |could |would |th)(is |are |has |have )(a |an |)(far |much |)(more |)(improv|upgrade|faster|quicker)";

// Spans recorded from a reference backtracking engine with variable-length
// lookbehind support, in character offsets.
const SUITE: &[(&str, &[(usize, usize, &str)])] = &[
    ("this version is much faster", &[(13, 27, "is much faster")]),
    ("you would have improved it", &[]),
    ("The new update is a huge upgrade", &[]),
    ("This IS AN UPGRADE over the old one", &[(5, 18, "IS AN UPGRADE")]),
    ("It has far more improvements now", &[(3, 22, "has far more improv")]),
    ("They should have improved the login", &[]),
    ("this has improved a lot", &[(5, 15, "has improv")]),
    ("this is faster", &[(5, 14, "is faster")]),
    ("Could have upgraded sooner", &[]),
    (
        "There are much quicker ways, and it has an upgrade path",
        &[(6, 22, "are much quicker"), (36, 50, "has an upgrade")],
    ),
];

#[test]
fn replaceability_suite_matches_reference_engine() {
    let catalog = Catalog::compile(&[LanguagePattern::new(
        "replaceability",
        Characteristic::Portability,
        REPLACEABILITY,
    )])
    .unwrap();
    for (i, (text, expected)) in SUITE.iter().enumerate() {
        let item = Item {
            id: format!("s{i}"),
            phase: PhaseId::P3Prime,
            text: text.to_string(),
            source: ItemSource::Sentence { review_id: "r".into(), index: i },
        };
        let got: Vec<(usize, usize, String)> = match_item(&catalog, &item)
            .into_iter()
            .map(|m| (m.start, m.end, m.matched_text))
            .collect();
        let want: Vec<(usize, usize, String)> =
            expected.iter().map(|(s, e, t)| (*s, *e, t.to_string())).collect();
        assert_eq!(got, want, "{text}");
    }
}

#[derive(Deserialize)]
struct OracleCase {
    pattern: String,
    texts: Vec<String>,
    matches: Vec<Vec<(usize, usize)>>,
}

#[test]
fn random_patterns_agree_with_reference_engine() {
    let cases: Vec<OracleCase> =
        serde_json::from_str(include_str!("fixtures/regex_oracle.json")).unwrap();
    assert_eq!(cases.len(), 400);
    for case in cases {
        let re = Regex::new(&case.pattern)
            .unwrap_or_else(|e| panic!("{}: {e}", case.pattern));
        for (text, want) in case.texts.iter().zip(&case.matches) {
            let got: Vec<(usize, usize)> =
                re.find_iter(text).into_iter().map(|s| (s.start, s.end)).collect();
            assert_eq!(&got, want, "pattern {:?} on {:?}", case.pattern, text);
        }
    }
}
