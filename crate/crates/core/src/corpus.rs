//! Reviews, sentences, classifier items and gold standards.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::io::{read_jsonl, write_jsonl, RecordError};
use crate::labels::{ClassLabel, LabelSet, PhaseId};
use crate::phases::schema_for;
use crate::sampling::{stratified_indices, SampleError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Store {
    AppleAppStore,
    GooglePlay,
    Amazon,
}

impl Store {
    pub fn token(self) -> &'static str {
        match self {
            Store::AppleAppStore => "AppleAppStore",
            Store::GooglePlay => "GooglePlay",
            Store::Amazon => "Amazon",
        }
    }
}

impl fmt::Display for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Store {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        match folded.as_str() {
            "appleappstore" | "apple" | "appstore" | "ios" => Ok(Store::AppleAppStore),
            "googleplay" | "googleplaystore" | "google" | "android" => Ok(Store::GooglePlay),
            "amazon" | "amazonappstore" => Ok(Store::Amazon),
            _ => Err(format!("unknown app store `{s}`")),
        }
    }
}

impl Serialize for Store {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.token())
    }
}

impl<'de> Deserialize<'de> for Store {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub id: String,
    pub app: String,
    pub store: Store,
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub body: String,
}

impl Review {
    pub fn stratum(&self) -> (String, Store) {
        (self.app.clone(), self.store)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    pub review_id: String,
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemSource {
    Review(String),
    Sentence { review_id: String, index: usize },
}

impl ItemSource {
    pub fn review_id(&self) -> &str {
        match self {
            ItemSource::Review(id) => id,
            ItemSource::Sentence { review_id, .. } => review_id,
        }
    }
}

/// The unit every classifier consumes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub phase: PhaseId,
    pub text: String,
    pub source: ItemSource,
}

impl Item {
    pub fn from_review(review: &Review) -> Self {
        Item {
            id: review.id.clone(),
            phase: PhaseId::P1,
            text: review.body.clone(),
            source: ItemSource::Review(review.id.clone()),
        }
    }

    pub fn from_sentence(sentence: &Sentence, phase: PhaseId) -> Self {
        Item {
            id: sentence.id.clone(),
            phase,
            text: sentence.text.clone(),
            source: ItemSource::Sentence {
                review_id: sentence.review_id.clone(),
                index: sentence.index,
            },
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: duplicate id `{id}`")]
    DuplicateId {
        path: String,
        line: usize,
        id: String,
    },
    #[error("{path}:{line}: review body is empty")]
    EmptyBody { path: String, line: usize },
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error("gold entry for item `{item_id}`: {message}")]
    Gold { item_id: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    /// Comma-separated with header row `id,app,store,category,title,body`.
    Delimited,
    /// One JSON object per line.
    RecordPerLine,
}

#[derive(Deserialize)]
struct RawReview {
    #[serde(default)]
    id: Option<String>,
    app: String,
    store: String,
    category: String,
    #[serde(default)]
    title: Option<String>,
    body: String,
}

/// Reads reviews in input order. Missing ids are assigned as `r{n}` where
/// `n` is the 1-based record ordinal.
pub fn ingest_reviews(path: &Path, format: InputFormat) -> Result<Vec<Review>, CorpusError> {
    let origin = path.display().to_string();
    let raw: Vec<(usize, RawReview)> = match format {
        InputFormat::RecordPerLine => read_jsonl(path)?,
        InputFormat::Delimited => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(true)
                .flexible(false)
                .from_path(path)
                .map_err(|e| CorpusError::Malformed {
                    path: origin.clone(),
                    line: 1,
                    message: e.to_string(),
                })?;
            let malformed = |line: usize, e: csv::Error| CorpusError::Malformed {
                path: origin.clone(),
                line,
                message: e.to_string(),
            };
            let headers = reader.headers().map_err(|e| malformed(1, e))?.clone();
            let mut out = Vec::new();
            for row in reader.records() {
                let row = row.map_err(|e| {
                    let line = e.position().map_or(0, |p| p.line() as usize);
                    malformed(line, e)
                })?;
                let line = row.position().map_or(0, |p| p.line() as usize);
                let r: RawReview = row
                    .deserialize(Some(&headers))
                    .map_err(|e| malformed(line, e))?;
                out.push((line, r));
            }
            out
        }
    };

    let mut seen = HashSet::new();
    let mut reviews = Vec::with_capacity(raw.len());
    for (ordinal, (line, r)) in raw.into_iter().enumerate() {
        let id = match r.id.filter(|s| !s.trim().is_empty()) {
            Some(id) => id,
            None => format!("r{}", ordinal + 1),
        };
        if !seen.insert(id.clone()) {
            return Err(CorpusError::DuplicateId {
                path: origin,
                line,
                id,
            });
        }
        if r.body.trim().is_empty() {
            return Err(CorpusError::EmptyBody { path: origin, line });
        }
        let store = r.store.parse().map_err(|message| CorpusError::Malformed {
            path: origin.clone(),
            line,
            message,
        })?;
        reviews.push(Review {
            id,
            app: r.app,
            store,
            category: r.category,
            title: r.title.filter(|t| !t.is_empty()),
            body: r.body,
        });
    }
    Ok(reviews)
}

pub fn write_reviews(path: &Path, reviews: &[Review]) -> Result<(), CorpusError> {
    Ok(write_jsonl(path, reviews)?)
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Byte spans of the sentences in `text`. A split happens after a run of
/// `.`, `!` or `?` that is followed by whitespace or the end of the text;
/// abbreviations are not special-cased and a run such as `...` or `?!`
/// counts as one terminator.
pub fn sentence_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if start.is_none() {
            if c.is_whitespace() {
                continue;
            }
            start = Some(i);
        }
        if is_terminal(c) {
            let mut end = i + c.len_utf8();
            while let Some(&(j, d)) = chars.peek() {
                if !is_terminal(d) {
                    break;
                }
                end = j + d.len_utf8();
                chars.next();
            }
            let at_boundary = chars.peek().is_none_or(|&(_, d)| d.is_whitespace());
            if at_boundary {
                spans.push((start.take().unwrap(), end));
            }
        }
    }
    if let Some(s) = start {
        let end = text.trim_end().len();
        spans.push((s, end));
    }
    spans
}

pub fn split_sentences_text(text: &str) -> Vec<String> {
    sentence_spans(text)
        .into_iter()
        .map(|(s, e)| text[s..e].to_string())
        .collect()
}

/// Splits a review body into sentences with ids `{review_id}-s{index}`.
pub fn split_sentences(review: &Review) -> Vec<Sentence> {
    split_sentences_text(&review.body)
        .into_iter()
        .enumerate()
        .map(|(index, text)| Sentence {
            id: format!("{}-s{}", review.id, index),
            review_id: review.id.clone(),
            index,
            text,
        })
        .collect()
}

/// Proportional stratified sample; deterministic for a given seed.
pub fn sample_stratified<K, F>(
    reviews: &[Review],
    n: usize,
    strata: F,
    seed: u64,
) -> Result<Vec<Review>, CorpusError>
where
    K: Ord,
    F: Fn(&Review) -> K,
{
    let picked = stratified_indices(reviews, n, strata, seed)?;
    Ok(picked.into_iter().map(|i| reviews[i].clone()).collect())
}

/// Acceptable labels per item; matching any one of them counts as correct.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldStandard {
    pub phase: PhaseId,
    pub entries: BTreeMap<String, LabelSet>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GoldRecord {
    item_id: String,
    phase: PhaseId,
    labels: Vec<ClassLabel>,
}

impl GoldStandard {
    pub fn new(phase: PhaseId) -> Self {
        GoldStandard {
            phase,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(
        &mut self,
        item_id: impl Into<String>,
        labels: impl IntoIterator<Item = ClassLabel>,
    ) -> Result<(), CorpusError> {
        let item_id = item_id.into();
        let labels: LabelSet = labels.into_iter().collect();
        if labels.is_empty() {
            return Err(CorpusError::Gold {
                item_id,
                message: "empty label set".into(),
            });
        }
        let schema = schema_for(self.phase);
        if let Some(bad) = labels.iter().find(|l| !schema.allows(**l)) {
            return Err(CorpusError::Gold {
                item_id,
                message: format!("label {bad} is not legal in phase {}", self.phase),
            });
        }
        if self.entries.insert(item_id.clone(), labels).is_some() {
            return Err(CorpusError::Gold {
                item_id,
                message: "duplicate entry".into(),
            });
        }
        Ok(())
    }

    pub fn get(&self, item_id: &str) -> Option<&LabelSet> {
        self.entries.get(item_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Maps an all-aspects gold standard onto the P3 label space, folding
    /// Compatibility, User-friendliness and Security into Quality.
    pub fn to_p3(&self) -> Result<GoldStandard, CorpusError> {
        self.project(PhaseId::P3, |l| match l {
            ClassLabel::Compatibility | ClassLabel::UserFriendliness | ClassLabel::Security => {
                ClassLabel::Quality
            }
            other => other,
        })
    }

    /// Maps an all-aspects gold standard onto the P4 label space for the
    /// given items; non-quality classes become Other.
    pub fn to_p4<'a>(
        &self,
        items: impl IntoIterator<Item = &'a str>,
    ) -> Result<GoldStandard, CorpusError> {
        let keep: HashSet<&str> = items.into_iter().collect();
        let mut out = self.project(PhaseId::P4, |l| match l {
            ClassLabel::Compatibility | ClassLabel::UserFriendliness | ClassLabel::Security => l,
            _ => ClassLabel::Other,
        })?;
        out.entries.retain(|k, _| keep.contains(k.as_str()));
        Ok(out)
    }

    fn project(
        &self,
        phase: PhaseId,
        map: impl Fn(ClassLabel) -> ClassLabel,
    ) -> Result<GoldStandard, CorpusError> {
        let mut out = GoldStandard::new(phase);
        for (id, labels) in &self.entries {
            out.insert(id.clone(), labels.iter().copied().map(&map))?;
        }
        Ok(out)
    }
}

/// Loads a gold file (`{item_id, phase, labels[]}` per line) for `phase`.
pub fn load_gold(path: &Path, phase: PhaseId) -> Result<GoldStandard, CorpusError> {
    let records: Vec<(usize, GoldRecord)> = read_jsonl(path)?;
    let mut gold = GoldStandard::new(phase);
    for (line, rec) in records {
        if rec.phase != phase {
            return Err(CorpusError::Malformed {
                path: path.display().to_string(),
                line,
                message: format!("record is for phase {}, expected {phase}", rec.phase),
            });
        }
        gold.insert(rec.item_id, rec.labels)?;
    }
    Ok(gold)
}

pub fn write_gold(path: &Path, gold: &GoldStandard) -> Result<(), CorpusError> {
    let records: Vec<GoldRecord> = gold
        .entries
        .iter()
        .map(|(id, labels)| GoldRecord {
            item_id: id.clone(),
            phase: gold.phase,
            labels: labels.iter().copied().collect(),
        })
        .collect();
    Ok(write_jsonl(path, &records)?)
}

pub fn read_items(path: &Path) -> Result<Vec<Item>, CorpusError> {
    Ok(read_jsonl(path)?.into_iter().map(|(_, i)| i).collect())
}

pub fn write_items(path: &Path, items: &[Item]) -> Result<(), CorpusError> {
    Ok(write_jsonl(path, items)?)
}

pub fn read_sentences(path: &Path) -> Result<Vec<Sentence>, CorpusError> {
    Ok(read_jsonl(path)?.into_iter().map(|(_, s)| s).collect())
}

pub fn write_sentences(path: &Path, sentences: &[Sentence]) -> Result<(), CorpusError> {
    Ok(write_jsonl(path, sentences)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const CRASH_REVIEW: &str = "Crashes when I open it & terrible lag I've used this app for over 2 yrs & have loved it until now. Every time I try to reply to someone the app closes. Also, the lag is terrible. This has been the best app until lately.";

    #[test]
    fn splits_the_crash_review_four_ways() {
        assert_eq!(
            split_sentences_text(CRASH_REVIEW),
            vec![
                "Crashes when I open it & terrible lag I've used this app for over 2 yrs & have loved it until now.",
                "Every time I try to reply to someone the app closes.",
                "Also, the lag is terrible.",
                "This has been the best app until lately.",
            ]
        );
    }

    #[test]
    fn split_edge_cases() {
        assert_eq!(split_sentences_text("Great!"), vec!["Great!"]);
        assert_eq!(split_sentences_text("a. b? c!"), vec!["a.", "b?", "c!"]);
        assert_eq!(split_sentences_text("no terminator here"), vec!["no terminator here"]);
        assert_eq!(
            split_sentences_text("Wait... what?! ok"),
            vec!["Wait...", "what?!", "ok"]
        );
        // version numbers and decimals do not split
        assert_eq!(split_sentences_text("v2.1 is out. yes"), vec!["v2.1 is out.", "yes"]);
        assert_eq!(split_sentences_text("  padded.  "), vec!["padded."]);
    }

    #[test]
    fn sentences_carry_provenance() {
        let review = Review {
            id: "r9".into(),
            app: "a".into(),
            store: Store::GooglePlay,
            category: "c".into(),
            title: None,
            body: "One. Two.".into(),
        };
        let s = split_sentences(&review);
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].id, "r9-s1");
        assert_eq!(s[1].review_id, "r9");
        assert_eq!(s[1].index, 1);
    }

    fn temp_file(contents: &str, suffix: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn ingest_assigns_ids() {
        let f = temp_file(
            concat!(
                "{\"app\":\"a\",\"store\":\"GooglePlay\",\"category\":\"c\",\"body\":\"x\"}\n",
                "{\"app\":\"a\",\"store\":\"Amazon\",\"category\":\"c\",\"body\":\"y\"}\n",
                "{\"app\":\"b\",\"store\":\"Apple App Store\",\"category\":\"c\",\"body\":\"z\"}\n",
            ),
            ".jsonl",
        );
        let reviews = ingest_reviews(f.path(), InputFormat::RecordPerLine).unwrap();
        let ids: Vec<_> = reviews.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["r1", "r2", "r3"]);
        assert_eq!(reviews[2].store, Store::AppleAppStore);
    }

    #[test]
    fn ingest_duplicate_id_cites_line() {
        let f = temp_file(
            concat!(
                "{\"id\":\"a\",\"app\":\"a\",\"store\":\"GooglePlay\",\"category\":\"c\",\"body\":\"x\"}\n",
                "{\"id\":\"a\",\"app\":\"a\",\"store\":\"GooglePlay\",\"category\":\"c\",\"body\":\"y\"}\n",
            ),
            ".jsonl",
        );
        let err = ingest_reviews(f.path(), InputFormat::RecordPerLine).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId { line: 2, .. }), "{err}");
    }

    #[test]
    fn ingest_malformed_cites_line() {
        let f = temp_file(
            "{\"app\":\"a\",\"store\":\"GooglePlay\",\"category\":\"c\",\"body\":\"x\"}\n{oops\n",
            ".jsonl",
        );
        let err = ingest_reviews(f.path(), InputFormat::RecordPerLine).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }

    #[test]
    fn ingest_delimited() {
        let f = temp_file(
            "id,app,store,category,title,body\nx1,Evernote,GooglePlay,productivity,,\"Sync fails. Fix it!\"\n,Evernote,Amazon,productivity,Nice,Works\n",
            ".csv",
        );
        let reviews = ingest_reviews(f.path(), InputFormat::Delimited).unwrap();
        assert_eq!(reviews.len(), 2);
        assert_eq!(reviews[0].id, "x1");
        assert_eq!(reviews[0].title, None);
        assert_eq!(reviews[1].id, "r2");
        assert_eq!(reviews[1].title.as_deref(), Some("Nice"));

        let dup = temp_file(
            "id,app,store,category,title,body\nx1,a,Amazon,c,,b\nx1,a,Amazon,c,,b\n",
            ".csv",
        );
        let err = ingest_reviews(dup.path(), InputFormat::Delimited).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId { line: 3, .. }), "{err}");

        let short = temp_file("id,app,store,category,title,body\nx1,a,Amazon\n", ".csv");
        assert!(matches!(
            ingest_reviews(short.path(), InputFormat::Delimited),
            Err(CorpusError::Malformed { line: 2, .. })
        ));
    }

    fn reviews_with_strata(sizes: &[(&str, usize)]) -> Vec<Review> {
        let mut out = Vec::new();
        for (app, n) in sizes {
            for i in 0..*n {
                out.push(Review {
                    id: format!("{app}-{i}"),
                    app: app.to_string(),
                    store: Store::GooglePlay,
                    category: "c".into(),
                    title: None,
                    body: "b".into(),
                });
            }
        }
        out
    }

    #[test]
    fn stratified_examples() {
        let names: Vec<String> = (0..20).map(|i| format!("app{i:02}")).collect();
        let sizes: Vec<(&str, usize)> = names.iter().map(|n| (n.as_str(), 50)).collect();
        let reviews = reviews_with_strata(&sizes);
        let s = sample_stratified(&reviews, 1000, Review::stratum, 7).unwrap();
        assert_eq!(s.len(), 1000);

        let reviews = reviews_with_strata(&[("a", 30), ("b", 70)]);
        let s = sample_stratified(&reviews, 10, Review::stratum, 7).unwrap();
        assert_eq!(s.iter().filter(|r| r.app == "a").count(), 3);
        assert_eq!(s.iter().filter(|r| r.app == "b").count(), 7);
        let again = sample_stratified(&reviews, 10, Review::stratum, 7).unwrap();
        assert_eq!(s, again);

        assert!(sample_stratified(&reviews, 101, Review::stratum, 7).is_err());
    }

    #[test]
    fn gold_entries() {
        let mut gold = GoldStandard::new(PhaseId::P3Prime);
        gold.insert("s1", [ClassLabel::Stability]).unwrap();
        gold.insert("s2", [ClassLabel::Feature, ClassLabel::UserFriendliness])
            .unwrap();
        assert_eq!(gold.get("s1").unwrap().len(), 1);
        assert_eq!(gold.get("s2").unwrap().len(), 2);

        let mut p1 = GoldStandard::new(PhaseId::P1);
        let err = p1.insert("s3", [ClassLabel::Quality]).unwrap_err();
        assert!(err.to_string().contains("s3"));
        assert!(p1.insert("s4", []).is_err());
    }

    #[test]
    fn gold_file_round_trip_and_projection() {
        let f = temp_file(
            concat!(
                "{\"item_id\":\"s1\",\"phase\":\"P3prime\",\"labels\":[\"Stability\"]}\n",
                "{\"item_id\":\"s2\",\"phase\":\"P3prime\",\"labels\":[\"Feature Request\",\"User-friendliness\"]}\n",
                "{\"item_id\":\"s3\",\"phase\":\"P3prime\",\"labels\":[\"None\"]}\n",
            ),
            ".jsonl",
        );
        let gold = load_gold(f.path(), PhaseId::P3Prime).unwrap();
        assert_eq!(gold.len(), 3);
        let p3 = gold.to_p3().unwrap();
        assert_eq!(
            p3.get("s2").unwrap(),
            &[ClassLabel::Feature, ClassLabel::Quality].into()
        );
        let p4 = gold.to_p4(["s2", "s3"]).unwrap();
        assert_eq!(p4.len(), 2);
        assert_eq!(
            p4.get("s2").unwrap(),
            &[ClassLabel::UserFriendliness, ClassLabel::Other].into()
        );

        let out = tempfile::NamedTempFile::new().unwrap();
        write_gold(out.path(), &gold).unwrap();
        assert_eq!(load_gold(out.path(), PhaseId::P3Prime).unwrap(), gold);

        assert!(load_gold(f.path(), PhaseId::P1).is_err());
    }
}
