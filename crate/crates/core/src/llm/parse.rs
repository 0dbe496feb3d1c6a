//! Tolerant parsing of numbered classification responses.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::prompt::{item_key, Batch};
use crate::judgments::JudgmentRecord;
use crate::labels::{ClassLabel, PhaseId};
use crate::phases::schema_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Confidence {
    High,
    Medium,
    Low,
}

impl FromStr for Confidence {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let word: String = s
            .split_whitespace()
            .next()
            .unwrap_or("")
            .chars()
            .filter(|c| c.is_alphabetic())
            .flat_map(char::to_lowercase)
            .collect();
        match word.as_str() {
            "high" => Ok(Confidence::High),
            "medium" | "med" => Ok(Confidence::Medium),
            "low" => Ok(Confidence::Low),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedJudgment {
    pub ordinal: usize,
    pub item_id: String,
    pub item_key: String,
    pub key_matches: bool,
    pub label: ClassLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tie_with: Option<ClassLabel>,
    pub confidence: Confidence,
    pub line_no: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "kebab-case")]
pub enum LineErrorKind {
    MissingLabel,
    UnknownLabel(String),
    IllegalLabel(ClassLabel),
    TooManyLabels(String),
    MissingConfidence,
    BadConfidence(String),
}

impl fmt::Display for LineErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LineErrorKind::MissingLabel => f.write_str("no judgment field"),
            LineErrorKind::UnknownLabel(s) => write!(f, "unknown label `{s}`"),
            LineErrorKind::IllegalLabel(l) => write!(f, "label {l} not allowed in this phase"),
            LineErrorKind::TooManyLabels(s) => write!(f, "too many labels in `{s}`"),
            LineErrorKind::MissingConfidence => f.write_str("no confidence field"),
            LineErrorKind::BadConfidence(s) => write!(f, "unreadable confidence `{s}`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    pub line_no: usize,
    pub ordinal: usize,
    pub text: String,
    pub error: LineErrorKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub expected: usize,
    /// Ordinals with no usable line.
    pub missing: Vec<usize>,
    /// Ordinals outside the batch or seen twice.
    pub extra: Vec<usize>,
    /// Ordinals whose key differs from the item's first three words.
    pub key_mismatches: Vec<usize>,
}

impl AlignmentReport {
    pub fn is_clean(&self) -> bool {
        self.missing.is_empty() && self.extra.is_empty() && self.key_mismatches.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub judgments: Vec<ParsedJudgment>,
    pub errors: Vec<LineError>,
    pub alignment: AlignmentReport,
}

struct Fields {
    key: String,
    label: Option<String>,
    confidence: Option<String>,
}

const SEPARATORS: &[char] = &['|', ',', ';', '-', '–', '—', ':', ' ', '\t'];

fn clean(line: &str) -> String {
    let mut s = line.replace("**", "").replace("__", "").replace('`', "");
    let trimmed = s.trim_start();
    for bullet in ["- ", "* ", "• "] {
        if let Some(rest) = trimmed.strip_prefix(bullet) {
            s = rest.to_string();
            break;
        }
    }
    s.trim().to_string()
}

/// Leading `12.`, `12)` or `12:`.
fn split_ordinal(s: &str) -> Option<(usize, &str)> {
    let digits = s.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits == 0 {
        return None;
    }
    let rest = &s[digits..];
    let mut chars = rest.chars();
    match chars.next() {
        Some('.') | Some(')') | Some(':') => {}
        _ => return None,
    }
    let after = chars.as_str();
    if !(after.is_empty() || after.starts_with(char::is_whitespace)) {
        return None;
    }
    Some((s[..digits].parse().ok()?, after.trim()))
}

const KEY_NAMES: &[&str] = &["review", "sentence", "key", "item", "text"];
const LABEL_NAMES: &[&str] = &[
    "judgment",
    "judgement",
    "classification",
    "label",
    "class",
    "category",
];
const CONF_NAMES: &[&str] = &["confidence"];

#[derive(Clone, Copy, PartialEq)]
enum Field {
    Key,
    Label,
    Conf,
}

/// Positions of `name:` field markers at word starts.
fn field_markers(s: &str) -> Vec<(usize, usize, Field)> {
    let lower = s.to_lowercase();
    if lower.len() != s.len() {
        // offsets would not line up; fall back to positional parsing
        return Vec::new();
    }
    let mut out = Vec::new();
    for (names, field) in [(KEY_NAMES, Field::Key), (LABEL_NAMES, Field::Label), (CONF_NAMES, Field::Conf)] {
        for name in names {
            let mut from = 0;
            while let Some(pos) = lower[from..].find(name) {
                let start = from + pos;
                from = start + name.len();
                let at_word_start = lower[..start]
                    .chars()
                    .next_back()
                    .is_none_or(|c| !c.is_alphanumeric());
                let rest = &lower[start + name.len()..];
                let gap = rest.len() - rest.trim_start().len();
                if at_word_start && rest.trim_start().starts_with(':') {
                    out.push((start, start + name.len() + gap + 1, field));
                }
            }
        }
    }
    out.sort_by_key(|m| m.0);
    // the earliest marker of each kind wins
    let mut seen = Vec::new();
    out.retain(|m| {
        if seen.contains(&m.2) {
            false
        } else {
            seen.push(m.2);
            true
        }
    });
    out
}

fn trim_seps(s: &str) -> String {
    s.trim_matches(|c| SEPARATORS.contains(&c)).trim().to_string()
}

fn labeled_fields(s: &str, markers: &[(usize, usize, Field)]) -> Fields {
    let mut f = Fields {
        key: trim_seps(&s[..markers[0].0]),
        label: None,
        confidence: None,
    };
    for (i, (_, value_start, field)) in markers.iter().enumerate() {
        let end = markers.get(i + 1).map_or(s.len(), |m| m.0);
        let value = trim_seps(&s[*value_start..end]);
        match field {
            Field::Key => f.key = value,
            Field::Label => f.label = Some(value),
            Field::Conf => f.confidence = Some(value),
        }
    }
    f
}

fn positional_fields(s: &str, phase: PhaseId) -> Fields {
    let dashed = s.replace(" – ", " - ").replace(" — ", " - ");
    let (parts, joiner): (Vec<&str>, &str) = if s.contains('|') {
        (s.split('|').collect(), " | ")
    } else if dashed.contains(" - ") {
        (dashed.split(" - ").collect(), " - ")
    } else {
        (s.split(',').collect(), ", ")
    };
    let parts: Vec<String> = parts.iter().map(|p| trim_seps(p)).filter(|p| !p.is_empty()).collect();
    let n = parts.len();
    match n {
        0 => Fields {
            key: String::new(),
            label: None,
            confidence: None,
        },
        1 => Fields {
            key: parts[0].clone(),
            label: None,
            confidence: None,
        },
        2 => Fields {
            key: parts[0].clone(),
            label: Some(parts[1].clone()),
            confidence: None,
        },
        _ => {
            let mut label_start = n - 2;
            // `key, A, B, High`: a comma-separated dual label
            if joiner == ", "
                && n >= 4
                && !phase.is_binary()
                && parts[n - 3].parse::<ClassLabel>().is_ok()
                && parts[n - 2].parse::<ClassLabel>().is_ok()
            {
                label_start = n - 3;
            }
            Fields {
                key: parts[..label_start].join(joiner),
                label: Some(parts[label_start..n - 1].join(", ")),
                confidence: Some(parts[n - 1].clone()),
            }
        }
    }
}

fn parse_labels(raw: &str, phase: PhaseId) -> Result<(ClassLabel, Option<ClassLabel>), LineErrorKind> {
    let cleaned = raw
        .trim_matches(|c: char| c == '"' || c == '\'' || c == '[' || c == ']' || c == '.' || c.is_whitespace())
        .to_string();
    if cleaned.is_empty() {
        return Err(LineErrorKind::MissingLabel);
    }
    let parts: Vec<&str> = cleaned
        .split(['/', ','])
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .collect();
    if parts.len() > 2 || (parts.len() == 2 && phase.is_binary()) {
        return Err(LineErrorKind::TooManyLabels(cleaned));
    }
    let schema = schema_for(phase);
    let mut labels = Vec::new();
    for p in &parts {
        let l: ClassLabel = p
            .parse()
            .map_err(|_| LineErrorKind::UnknownLabel(p.to_string()))?;
        if !schema.allows(l) {
            return Err(LineErrorKind::IllegalLabel(l));
        }
        labels.push(l);
    }
    match labels.as_slice() {
        [a] => Ok((*a, None)),
        [a, b] if a == b => Ok((*a, None)),
        [a, b] => Ok((*a, Some(*b))),
        _ => Err(LineErrorKind::MissingLabel),
    }
}

/// Parses every numbered line; lines without a leading ordinal are ignored.
/// Lines are aligned to batch items by ordinal and checked against the
/// item's first three words.
pub fn parse_response(raw: &str, batch: &Batch) -> ParseOutcome {
    let mut out = ParseOutcome {
        alignment: AlignmentReport {
            expected: batch.items.len(),
            ..Default::default()
        },
        ..Default::default()
    };
    let mut seen = BTreeSet::new();
    for (idx, line) in raw.lines().enumerate() {
        let line_no = idx + 1;
        let cleaned = clean(line);
        let Some((ordinal, rest)) = split_ordinal(&cleaned) else {
            continue;
        };
        let markers = field_markers(rest);
        let fields = if markers.iter().any(|m| m.2 == Field::Label) {
            labeled_fields(rest, &markers)
        } else {
            positional_fields(rest, batch.phase)
        };
        let error = |kind| LineError {
            line_no,
            ordinal,
            text: line.to_string(),
            error: kind,
        };
        let labels = match fields.label.as_deref() {
            None => Err(LineErrorKind::MissingLabel),
            Some(l) => parse_labels(l, batch.phase),
        };
        let (label, tie_with) = match labels {
            Ok(l) => l,
            Err(kind) => {
                out.errors.push(error(kind));
                continue;
            }
        };
        let confidence = match fields.confidence.as_deref() {
            None => {
                out.errors.push(error(LineErrorKind::MissingConfidence));
                continue;
            }
            Some(c) => match c.parse::<Confidence>() {
                Ok(c) => c,
                Err(()) => {
                    out.errors.push(error(LineErrorKind::BadConfidence(c.to_string())));
                    continue;
                }
            },
        };
        if ordinal == 0 || ordinal > batch.items.len() || !seen.insert(ordinal) {
            out.alignment.extra.push(ordinal);
            continue;
        }
        let item = &batch.items[ordinal - 1];
        let key = item_key(&fields.key);
        let key_matches = key == item_key(&item.text);
        if !key_matches {
            out.alignment.key_mismatches.push(ordinal);
        }
        out.judgments.push(ParsedJudgment {
            ordinal,
            item_id: item.id.clone(),
            item_key: fields.key.clone(),
            key_matches,
            label,
            tie_with,
            confidence,
            line_no,
        });
    }
    out.judgments.sort_by_key(|j| j.ordinal);
    out.alignment.missing = (1..=batch.items.len()).filter(|o| !seen.contains(o)).collect();
    out
}

/// Judgment records with the condition name as judge id.
pub fn to_judgment_records(
    parsed: &[ParsedJudgment],
    condition: &str,
    phase: PhaseId,
    submitted_at: u64,
) -> Vec<JudgmentRecord> {
    parsed
        .iter()
        .map(|p| JudgmentRecord {
            worker_id: condition.to_string(),
            item_id: p.item_id.clone(),
            phase,
            label: p.label,
            tie_with: p.tie_with,
            is_test: false,
            correct: None,
            trusted: true,
            submitted_at,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Item, ItemSource};
    use crate::llm::prompt::{Condition, Learning, PromptType};

    fn batch(phase: PhaseId, texts: &[&str]) -> Batch {
        Batch {
            condition: Condition::new(PromptType::Engineered, Learning::FewShot, "gpt-4"),
            phase,
            ordinal: 1,
            items: texts
                .iter()
                .enumerate()
                .map(|(i, t)| Item {
                    id: format!("i{}", i + 1),
                    phase,
                    text: t.to_string(),
                    source: ItemSource::Review(format!("i{}", i + 1)),
                })
                .collect(),
        }
    }

    #[test]
    fn labeled_pipe_line() {
        let b = batch(PhaseId::P1, &["Can't access settings after the update"]);
        let o = parse_response(
            "1. Review: Can't access settings | Judgment: Helpful | Confidence: High",
            &b,
        );
        assert_eq!(o.judgments.len(), 1);
        let j = &o.judgments[0];
        assert_eq!((j.label, j.confidence), (ClassLabel::Helpful, Confidence::High));
        assert!(j.key_matches);
        assert!(o.alignment.is_clean());
    }

    #[test]
    fn separator_and_layout_variants() {
        let b = batch(PhaseId::P1, &["one two three", "four five six", "seven eight nine", "ten eleven twelve"]);
        let raw = "Here are the results:\n\
                   1) **Review**: \"One two three\", **Judgment**: Useless, **Confidence**: Medium\n\
                   2. four five six - Helpful - low\n\
                   3. seven eight nine, helpful, HIGH\n\
                   - 4. Ten eleven twelve | useless | High\n";
        let o = parse_response(raw, &b);
        let got: Vec<(usize, ClassLabel, Confidence)> =
            o.judgments.iter().map(|j| (j.ordinal, j.label, j.confidence)).collect();
        assert_eq!(
            got,
            vec![
                (1, ClassLabel::Useless, Confidence::Medium),
                (2, ClassLabel::Helpful, Confidence::Low),
                (3, ClassLabel::Helpful, Confidence::High),
                (4, ClassLabel::Useless, Confidence::High),
            ]
        );
        assert!(o.alignment.is_clean(), "{:?}", o.alignment);
    }

    #[test]
    fn missing_and_extra_ordinals() {
        let texts: Vec<String> = (0..100).map(|i| format!("item {i} text")).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let b = batch(PhaseId::P1, &refs);
        let raw: String = (1..=100)
            .filter(|i| *i != 57)
            .map(|i| format!("{i}. item {} text | Helpful | High\n", i - 1))
            .collect();
        let o = parse_response(&format!("{raw}101. extra | Useless | Low\n3. again | Useless | Low\n"), &b);
        assert_eq!(o.judgments.len(), 99);
        assert_eq!(o.alignment.missing, vec![57]);
        assert_eq!(o.alignment.extra, vec![101, 3]);
    }

    #[test]
    fn bad_label_is_a_line_error() {
        let b = batch(PhaseId::P1, &["a b c", "d e f"]);
        let o = parse_response("1. a b c | Hepful | High\n2. d e f | Useless | Low", &b);
        assert_eq!(o.judgments.len(), 1);
        assert_eq!(o.errors.len(), 1);
        assert_eq!(o.errors[0].error, LineErrorKind::UnknownLabel("Hepful".into()));
        assert_eq!(o.alignment.missing, vec![1]);
        let o = parse_response("1. a b c | Stability | High\n2. d e f | Useless", &b);
        assert_eq!(o.errors[0].error, LineErrorKind::IllegalLabel(ClassLabel::Stability));
        assert_eq!(o.errors[1].error, LineErrorKind::MissingConfidence);
    }

    #[test]
    fn dual_labels_in_multiclass_phase() {
        let b = batch(PhaseId::P3Prime, &["slow and crashes", "a b c", "x y z"]);
        let raw = "1. slow and crashes | Performance / Stability | Medium\n\
                   2. Review: a b c | Judgment: Feature, None | Confidence: Low\n\
                   3. x y z, Security, Compatibility, High";
        let o = parse_response(raw, &b);
        let got: Vec<(ClassLabel, Option<ClassLabel>)> =
            o.judgments.iter().map(|j| (j.label, j.tie_with)).collect();
        assert_eq!(
            got,
            vec![
                (ClassLabel::Performance, Some(ClassLabel::Stability)),
                (ClassLabel::Feature, Some(ClassLabel::None)),
                (ClassLabel::Security, Some(ClassLabel::Compatibility)),
            ]
        );
        let o = parse_response("1. slow and crashes | Security / Feature / None | Low", &b);
        assert!(matches!(o.errors[0].error, LineErrorKind::TooManyLabels(_)));
    }

    #[test]
    fn key_mismatch_is_reported_but_kept() {
        let b = batch(PhaseId::P1, &["one two three"]);
        let o = parse_response("1. something else entirely | Helpful | High", &b);
        assert_eq!(o.judgments.len(), 1);
        assert_eq!(o.alignment.key_mismatches, vec![1]);
    }

    #[test]
    fn parser_is_total_on_garbage() {
        let b = batch(PhaseId::P1, &["a"]);
        for raw in ["", "\n\n", "1.", "1. |||", "99999999999999999999999. x | Helpful | High", "1. Judgment:", "ü. ß | x"] {
            let o = parse_response(raw, &b);
            assert!(o.judgments.is_empty());
        }
    }
}
