//! Browser entry points. Every function takes and returns JSON text so the
//! same code runs under native tests.

use serde::Serialize;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use qaspect_core::corpus::{split_sentences_text, Item, ItemSource};
use qaspect_core::eval::{binary_metrics, render_metric, roc_auc, roc_points, BinaryMetrics, ConditionCounts};
use qaspect_core::lp::{classify_matches, default_mapping, match_item, Catalog, LanguagePattern};
use qaspect_core::PhaseId;

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

fn error(msg: impl std::fmt::Display) -> String {
    json!({ "error": msg.to_string() }).to_string()
}

/// `["first sentence.", ...]`
#[wasm_bindgen]
pub fn split(text: &str) -> String {
    to_json(&split_sentences_text(text))
}

fn parse_catalog(catalog: &str) -> Result<Vec<LanguagePattern>, String> {
    let trimmed = catalog.trim_start();
    if trimmed.starts_with('[') {
        return serde_json::from_str(trimmed).map_err(|e| e.to_string());
    }
    catalog
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

/// Matches every sentence of `text` against a catalog given as a JSON array
/// or JSON lines. Returns `{sentences: [{text, matches, labels}]}`.
#[wasm_bindgen]
pub fn match_patterns(catalog: &str, text: &str) -> String {
    let lps = match parse_catalog(catalog) {
        Ok(lps) => lps,
        Err(e) => return error(e),
    };
    let catalog = match Catalog::compile(&lps) {
        Ok(c) => c,
        Err(e) => return error(e),
    };
    let mapping = default_mapping();
    let mut out = Vec::new();
    for (index, sentence) in split_sentences_text(text).into_iter().enumerate() {
        let item = Item {
            id: format!("s{index}"),
            phase: PhaseId::P3Prime,
            text: sentence,
            source: ItemSource::Sentence { review_id: "input".into(), index },
        };
        let hits = match_item(&catalog, &item);
        let labels = match classify_matches(&catalog, &item.id, &hits, &mapping) {
            Ok(p) => p.labels,
            Err(e) => return error(e),
        };
        out.push(json!({ "text": item.text, "matches": hits, "labels": labels }));
    }
    json!({ "sentences": out }).to_string()
}

fn rendered(m: &BinaryMetrics) -> Value {
    json!({
        "precision": render_metric(m.precision),
        "recall": render_metric(m.recall),
        "specificity": render_metric(m.specificity),
        "accuracy": render_metric(m.accuracy),
    })
}

/// Takes `[{condition, tp, tn, fp, fn}]` and returns per-condition metrics,
/// ROC points and the area under the curve.
#[wasm_bindgen]
pub fn evaluate(counts: &str) -> String {
    let rows: Vec<ConditionCounts> = match serde_json::from_str(counts) {
        Ok(r) => r,
        Err(e) => return error(e),
    };
    let metrics: Vec<Value> = rows
        .iter()
        .map(|c| {
            let mut v = rendered(&binary_metrics(c.tp, c.tn, c.fp, c.fn_));
            v["condition"] = c.condition.clone().into();
            v
        })
        .collect();
    let points = roc_points(&rows);
    let auc = roc_auc(&points).ok();
    json!({ "metrics": metrics, "roc": points, "auc": auc }).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn split_returns_sentences() {
        let v = parse(&split("It crashes. Please fix it!"));
        assert_eq!(v, json!(["It crashes.", "Please fix it!"]));
    }

    #[test]
    fn match_patterns_labels_each_sentence() {
        let catalog = r#"{"id":"rel","characteristic":"Reliability","pattern":"crash\\w*"}
{"id":"perf","characteristic":"PerformanceEfficiency","pattern":"\\bslow\\b"}"#;
        let v = parse(&match_patterns(catalog, "It crashes a lot. So slow. Nice colors."));
        let s = v["sentences"].as_array().unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s[0]["labels"], json!(["Stability"]));
        assert_eq!(s[0]["matches"][0]["matched_text"], "crashes");
        assert_eq!(s[1]["labels"], json!(["Performance"]));
        assert_eq!(s[2]["labels"], json!(["None"]));
    }

    #[test]
    fn bad_inputs_come_back_as_errors() {
        assert!(parse(&match_patterns("{", "x"))["error"].is_string());
        let bad = r#"[{"id":"x","characteristic":"Reliability","pattern":"(unclosed"}]"#;
        assert!(parse(&match_patterns(bad, "x"))["error"].is_string());
        assert!(parse(&evaluate("nope"))["error"].is_string());
    }

    #[test]
    fn evaluate_renders_metrics_and_auc() {
        let v = parse(&evaluate(r#"[{"condition":"A","tp":152,"tn":472,"fp":12,"fn":364},{"condition":"B","tp":0,"tn":0,"fp":0,"fn":0}]"#));
        assert_eq!(v["metrics"][0]["precision"], "0.93");
        assert_eq!(v["metrics"][0]["recall"], "0.29");
        assert_eq!(v["metrics"][1]["precision"], "—");
        assert_eq!(v["roc"].as_array().unwrap().len(), 1);
        assert!(v["auc"].as_f64().unwrap() > 0.5);
    }
}
