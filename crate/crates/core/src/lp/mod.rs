//! Language patterns: catalog, matching, item classification and vetting.

pub mod pattern;
pub mod vetting;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Item;
use crate::io::{self, RecordError};
use crate::labels::{ClassLabel, LabelSet, PhaseId};
use crate::phases::{Prediction, Provenance};
pub use pattern::{PatternError, Regex, Span};
pub use vetting::{
    micro_precision, prune_catalog, record_vetting, sample_matches, Verdict, VettingError,
    VettingLedger, VettingRecord,
};

/// Precision below this value discards a pattern.
pub const PRUNE_THRESHOLD: f64 = 0.50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Characteristic {
    Compatibility,
    Portability,
    Usability,
    Security,
    PerformanceEfficiency,
    Reliability,
}

impl Characteristic {
    pub const ALL: [Characteristic; 6] = [
        Characteristic::Compatibility,
        Characteristic::Portability,
        Characteristic::Usability,
        Characteristic::Security,
        Characteristic::PerformanceEfficiency,
        Characteristic::Reliability,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Characteristic::Compatibility => "Compatibility",
            Characteristic::Portability => "Portability",
            Characteristic::Usability => "Usability",
            Characteristic::Security => "Security",
            Characteristic::PerformanceEfficiency => "PerformanceEfficiency",
            Characteristic::Reliability => "Reliability",
        }
    }
}

impl fmt::Display for Characteristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown quality characteristic `{0}`")]
pub struct UnknownCharacteristic(pub String);

impl FromStr for Characteristic {
    type Err = UnknownCharacteristic;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        Ok(match key.as_str() {
            "compatibility" => Characteristic::Compatibility,
            "portability" => Characteristic::Portability,
            "usability" => Characteristic::Usability,
            "security" => Characteristic::Security,
            "performanceefficiency" | "performance" => Characteristic::PerformanceEfficiency,
            "reliability" => Characteristic::Reliability,
            _ => return Err(UnknownCharacteristic(s.to_string())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeywordKind {
    Keyword,
    Synonym,
    Variation,
    NegatedAntonym,
}

/// A keyword or phrase elicited for one characteristic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordEntry {
    pub characteristic: Characteristic,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcharacteristic: Option<String>,
    pub phrase: String,
    pub kind: KeywordKind,
}

impl KeywordEntry {
    pub fn validate(&self) -> Result<(), CatalogError> {
        if self.phrase.trim().is_empty() {
            return Err(CatalogError::EmptyPhrase);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    #[default]
    Active,
    Discarded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguagePattern {
    pub id: String,
    pub characteristic: Characteristic,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcharacteristic: Option<String>,
    pub pattern: String,
    #[serde(default)]
    pub forbidden_words: Vec<String>,
    #[serde(default)]
    pub round_precision: BTreeMap<u32, f64>,
    #[serde(default)]
    pub status: LpStatus,
}

impl LanguagePattern {
    pub fn new(id: impl Into<String>, characteristic: Characteristic, pattern: impl Into<String>) -> Self {
        LanguagePattern {
            id: id.into(),
            characteristic,
            subcharacteristic: None,
            pattern: pattern.into(),
            forbidden_words: Vec::new(),
            round_precision: BTreeMap::new(),
            status: LpStatus::Active,
        }
    }

    pub fn latest_precision(&self) -> Option<(u32, f64)> {
        self.round_precision.iter().next_back().map(|(r, p)| (*r, *p))
    }

    /// Status implied by the precision history up to and including `round`.
    pub fn status_as_of(&self, round: u32) -> LpStatus {
        match self.round_precision.range(..=round).next_back() {
            Some((_, p)) if *p < PRUNE_THRESHOLD => LpStatus::Discarded,
            _ => LpStatus::Active,
        }
    }

    fn check_status(&self) -> Result<(), CatalogError> {
        let expected = match self.latest_precision() {
            Some((_, p)) if p < PRUNE_THRESHOLD => LpStatus::Discarded,
            Some(_) => LpStatus::Active,
            None => return Ok(()),
        };
        if expected != self.status {
            return Err(CatalogError::StatusMismatch(self.id.clone()));
        }
        if let Some((round, p)) = self
            .round_precision
            .iter()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(CatalogError::PrecisionRange {
                id: self.id.clone(),
                round: *round,
                value: *p,
            });
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("pattern `{id}`: {source}")]
    Compile {
        id: String,
        #[source]
        source: PatternError,
    },
    #[error("keyword phrase is empty")]
    EmptyPhrase,
    #[error("duplicate pattern id `{0}`")]
    DuplicateId(String),
    #[error("pattern `{0}`: status disagrees with its latest round precision")]
    StatusMismatch(String),
    #[error("pattern `{id}`: round {round} precision {value} outside [0, 1]")]
    PrecisionRange { id: String, round: u32, value: f64 },
    #[error("characteristic {0} has no class label mapping")]
    Unmapped(Characteristic),
    #[error(transparent)]
    Record(#[from] RecordError),
}

/// A pattern ready to run against items.
#[derive(Debug, Clone)]
pub struct CompiledPattern {
    pub lp: LanguagePattern,
    regex: Regex,
    forbidden: Vec<Vec<char>>,
}

pub fn compile_pattern(lp: &LanguagePattern) -> Result<CompiledPattern, CatalogError> {
    let regex = Regex::new(&lp.pattern).map_err(|source| CatalogError::Compile {
        id: lp.id.clone(),
        source,
    })?;
    let forbidden = lp
        .forbidden_words
        .iter()
        .filter(|w| !w.trim().is_empty())
        .map(|w| w.trim().chars().flat_map(char::to_lowercase).collect())
        .collect();
    Ok(CompiledPattern {
        lp: lp.clone(),
        regex,
        forbidden,
    })
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Whole-word, case-insensitive containment over lower-cased text.
fn contains_word(lower: &[char], word: &[char]) -> bool {
    if word.is_empty() || word.len() > lower.len() {
        return false;
    }
    (0..=lower.len() - word.len()).any(|i| {
        lower[i..i + word.len()] == *word
            && (i == 0 || !is_word(lower[i - 1]) || !is_word(word[0]))
            && (i + word.len() == lower.len()
                || !is_word(lower[i + word.len()])
                || !is_word(word[word.len() - 1]))
    })
}

impl CompiledPattern {
    pub fn is_forbidden(&self, text: &str) -> bool {
        if self.forbidden.is_empty() {
            return false;
        }
        let lower: Vec<char> = text.chars().flat_map(char::to_lowercase).collect();
        self.forbidden.iter().any(|w| contains_word(&lower, w))
    }

    pub fn find(&self, item_id: &str, text: &str) -> Vec<MatchResult> {
        if self.is_forbidden(text) {
            return Vec::new();
        }
        let chars: Vec<char> = text.chars().collect();
        self.regex
            .find_iter_chars(&chars)
            .into_iter()
            .map(|s| MatchResult {
                item_id: item_id.to_string(),
                lp_id: self.lp.id.clone(),
                start: s.start,
                end: s.end,
                matched_text: chars[s.start..s.end].iter().collect(),
            })
            .collect()
    }
}

/// One pattern hit, in character offsets of the item text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub item_id: String,
    pub lp_id: String,
    pub start: usize,
    pub end: usize,
    pub matched_text: String,
}

/// Which patterns take part in matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Selection {
    /// Current `status` field.
    #[default]
    Latest,
    /// Status implied by the precision history up to the given round.
    AsOfRound(u32),
}

/// An immutable, compiled set of patterns.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    patterns: Vec<CompiledPattern>,
    selection: Selection,
}

impl Catalog {
    pub fn compile(lps: &[LanguagePattern]) -> Result<Catalog, CatalogError> {
        let mut seen = BTreeSet::new();
        let mut patterns = Vec::with_capacity(lps.len());
        for lp in lps {
            if !seen.insert(lp.id.as_str()) {
                return Err(CatalogError::DuplicateId(lp.id.clone()));
            }
            lp.check_status()?;
            patterns.push(compile_pattern(lp)?);
        }
        Ok(Catalog {
            patterns,
            selection: Selection::Latest,
        })
    }

    pub fn with_selection(mut self, selection: Selection) -> Self {
        self.selection = selection;
        self
    }

    pub fn load(path: &Path) -> Result<Catalog, CatalogError> {
        Catalog::compile(&read_catalog(path)?)
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn patterns(&self) -> &[CompiledPattern] {
        &self.patterns
    }

    pub fn is_selected(&self, lp: &LanguagePattern) -> bool {
        let status = match self.selection {
            Selection::Latest => lp.status,
            Selection::AsOfRound(r) => lp.status_as_of(r),
        };
        status == LpStatus::Active
    }

    pub fn active(&self) -> impl Iterator<Item = &CompiledPattern> {
        self.patterns.iter().filter(|p| self.is_selected(&p.lp))
    }

    pub fn get(&self, id: &str) -> Option<&CompiledPattern> {
        self.patterns.iter().find(|p| p.lp.id == id)
    }
}

/// Every hit of every active pattern on the item, in catalog order.
pub fn match_item(catalog: &Catalog, item: &Item) -> Vec<MatchResult> {
    catalog
        .active()
        .flat_map(|p| p.find(&item.id, &item.text))
        .collect()
}

pub type CharacteristicMapping = BTreeMap<Characteristic, ClassLabel>;

/// Characteristic to task-facing class.
pub fn default_mapping() -> CharacteristicMapping {
    use Characteristic::*;
    BTreeMap::from([
        (Compatibility, ClassLabel::Compatibility),
        (Portability, ClassLabel::Compatibility),
        (Usability, ClassLabel::UserFriendliness),
        (Security, ClassLabel::Security),
        (PerformanceEfficiency, ClassLabel::Performance),
        (Reliability, ClassLabel::Stability),
    ])
}

pub fn classify_item(
    catalog: &Catalog,
    item: &Item,
    mapping: &CharacteristicMapping,
) -> Result<Prediction, CatalogError> {
    let hits = match_item(catalog, item);
    classify_matches(catalog, &item.id, &hits, mapping)
}

/// Label set for an item from its match results.
pub fn classify_matches(
    catalog: &Catalog,
    item_id: &str,
    hits: &[MatchResult],
    mapping: &CharacteristicMapping,
) -> Result<Prediction, CatalogError> {
    let mut labels = LabelSet::new();
    for hit in hits {
        let Some(p) = catalog.get(&hit.lp_id) else {
            continue;
        };
        let c = p.lp.characteristic;
        labels.insert(*mapping.get(&c).ok_or(CatalogError::Unmapped(c))?);
    }
    if labels.is_empty() {
        labels.insert(ClassLabel::None);
    }
    Ok(Prediction::new(item_id, PhaseId::P3Prime, labels, Provenance::Lp))
}

pub fn read_catalog(path: &Path) -> Result<Vec<LanguagePattern>, CatalogError> {
    Ok(io::read_jsonl(path)?.into_iter().map(|(_, lp)| lp).collect())
}

pub fn write_catalog(path: &Path, lps: &[LanguagePattern]) -> Result<(), CatalogError> {
    Ok(io::write_jsonl(path, lps)?)
}

pub fn read_keywords(path: &Path) -> Result<Vec<KeywordEntry>, CatalogError> {
    let entries: Vec<KeywordEntry> = io::read_jsonl(path)?.into_iter().map(|(_, k)| k).collect();
    entries.iter().try_for_each(KeywordEntry::validate)?;
    Ok(entries)
}

pub fn write_match_report(path: &Path, results: &[MatchResult]) -> Result<(), CatalogError> {
    Ok(io::write_jsonl(path, results)?)
}

pub fn read_match_report(path: &Path) -> Result<Vec<MatchResult>, CatalogError> {
    Ok(io::read_jsonl(path)?.into_iter().map(|(_, m)| m).collect())
}
