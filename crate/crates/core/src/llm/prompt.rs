//! Conditions, batches and prompt templates.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Item;
use crate::labels::PhaseId;

pub const BATCH_SIZE: usize = 100;
pub const ITEMS_PLACEHOLDER: &str = "{{items}}";
pub const EXAMPLES_OPEN: &str = "{{#examples}}";
pub const EXAMPLES_CLOSE: &str = "{{/examples}}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PromptType {
    Engineered,
    Kyoryoku,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Learning {
    FewShot,
    ZeroShot,
}

impl PromptType {
    pub fn short(self) -> &'static str {
        match self {
            PromptType::Engineered => "Eng",
            PromptType::Kyoryoku => "Kyo",
        }
    }
}

impl Learning {
    pub fn short(self) -> &'static str {
        match self {
            Learning::FewShot => "Few",
            Learning::ZeroShot => "Zer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Condition {
    pub prompt_type: PromptType,
    pub learning: Learning,
    pub model: String,
}

impl Condition {
    pub fn new(prompt_type: PromptType, learning: Learning, model: impl Into<String>) -> Self {
        Condition {
            prompt_type,
            learning,
            model: model.into(),
        }
    }

    /// The eight conditions: prompt type, then model, then learning strategy.
    pub fn factorial(models: [&str; 2]) -> Vec<Condition> {
        let mut out = Vec::with_capacity(8);
        for pt in [PromptType::Engineered, PromptType::Kyoryoku] {
            for model in models {
                for l in [Learning::FewShot, Learning::ZeroShot] {
                    out.push(Condition::new(pt, l, model));
                }
            }
        }
        out
    }

    pub fn model_short(&self) -> &str {
        self.model.strip_prefix("gpt-").unwrap_or(&self.model)
    }

    /// E.g. `Kyo,Few,4o`; used as the judge id.
    pub fn name(&self) -> String {
        format!(
            "{},{},{}",
            self.prompt_type.short(),
            self.learning.short(),
            self.model_short()
        )
    }

    /// File-system friendly form of the name.
    pub fn slug(&self) -> String {
        self.name().replace(',', "-")
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse condition `{0}` (expected e.g. Eng,Few,gpt-4o)")]
pub struct BadCondition(pub String);

impl FromStr for Condition {
    type Err = BadCondition;

    /// Accepts `Eng,Few,4o`, `Kyo-Zer-gpt-4` and full words. A bare model
    /// short name such as `4o` gains the `gpt-` prefix.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BadCondition(s.to_string());
        let sep = if s.contains(',') { ',' } else { '-' };
        let mut parts = s.splitn(3, sep).map(str::trim);
        let pt = match parts.next().ok_or_else(bad)?.to_lowercase().as_str() {
            "eng" | "engineered" => PromptType::Engineered,
            "kyo" | "kyō" | "kyoryoku" | "kyōryoku" => PromptType::Kyoryoku,
            _ => return Err(bad()),
        };
        let l = match parts.next().ok_or_else(bad)?.to_lowercase().as_str() {
            "few" | "fewshot" | "few-shot" => Learning::FewShot,
            "zer" | "zero" | "zeroshot" | "zero-shot" => Learning::ZeroShot,
            _ => return Err(bad()),
        };
        let model = parts.next().filter(|m| !m.is_empty()).ok_or_else(bad)?;
        let model = if model.chars().next().is_some_and(|c| c.is_ascii_digit()) {
            format!("gpt-{model}")
        } else {
            model.to_string()
        };
        Ok(Condition::new(pt, l, model))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub condition: Condition,
    pub phase: PhaseId,
    /// 1-based.
    pub ordinal: usize,
    pub items: Vec<Item>,
}

pub fn make_batches(items: &[Item], phase: PhaseId, condition: &Condition) -> Vec<Batch> {
    make_batches_sized(items, phase, condition, BATCH_SIZE)
}

pub fn make_batches_sized(
    items: &[Item],
    phase: PhaseId,
    condition: &Condition,
    size: usize,
) -> Vec<Batch> {
    items
        .chunks(size.max(1))
        .enumerate()
        .map(|(i, chunk)| Batch {
            condition: condition.clone(),
            phase,
            ordinal: i + 1,
            items: chunk.to_vec(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("template has no `{ITEMS_PLACEHOLDER}` placeholder")]
    MissingPlaceholder,
    #[error("template has more than one `{ITEMS_PLACEHOLDER}` placeholder")]
    DuplicatePlaceholder,
    #[error("unbalanced examples block")]
    UnbalancedExamples,
    #[error("few-shot template for {0} has no examples block")]
    NoExamples(PhaseId),
    #[error("template is for phase {template}, batch is for {batch}")]
    PhaseMismatch { template: PhaseId, batch: PhaseId },
    #[error("template is for {template:?}, batch condition uses {batch:?}")]
    PromptTypeMismatch { template: PromptType, batch: PromptType },
    #[error("refusing to build a prompt for an empty batch")]
    EmptyBatch,
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// A prompt source shared by the few-shot and zero-shot variants. The body
/// holds one data-block placeholder; the examples block sits between the
/// open and close markers and is dropped for zero-shot prompts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub phase: PhaseId,
    pub prompt_type: PromptType,
    pub learning: Learning,
    pub body: String,
    pub examples_block: Option<String>,
}

impl PromptTemplate {
    pub fn parse(
        source: &str,
        phase: PhaseId,
        prompt_type: PromptType,
        learning: Learning,
    ) -> Result<Self, TemplateError> {
        match source.matches(ITEMS_PLACEHOLDER).count() {
            0 => return Err(TemplateError::MissingPlaceholder),
            1 => {}
            _ => return Err(TemplateError::DuplicatePlaceholder),
        }
        let (body, examples_block) = match (source.find(EXAMPLES_OPEN), source.find(EXAMPLES_CLOSE)) {
            (None, None) => (source.to_string(), None),
            (Some(a), Some(b)) if a < b => {
                let inner = &source[a + EXAMPLES_OPEN.len()..b];
                if source[b + EXAMPLES_CLOSE.len()..].contains(EXAMPLES_OPEN) {
                    return Err(TemplateError::UnbalancedExamples);
                }
                let body = format!(
                    "{}{EXAMPLES_OPEN}{EXAMPLES_CLOSE}{}",
                    &source[..a],
                    &source[b + EXAMPLES_CLOSE.len()..]
                );
                (body, Some(inner.to_string()))
            }
            _ => return Err(TemplateError::UnbalancedExamples),
        };
        if learning == Learning::FewShot && examples_block.is_none() {
            return Err(TemplateError::NoExamples(phase));
        }
        Ok(PromptTemplate {
            phase,
            prompt_type,
            learning,
            body,
            examples_block,
        })
    }

    pub fn load(
        path: &Path,
        phase: PhaseId,
        prompt_type: PromptType,
        learning: Learning,
    ) -> Result<Self, TemplateError> {
        let source = std::fs::read_to_string(path).map_err(|e| TemplateError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&source, phase, prompt_type, learning)
    }

    /// Same source with the other learning strategy.
    pub fn with_learning(&self, learning: Learning) -> Result<Self, TemplateError> {
        if learning == Learning::FewShot && self.examples_block.is_none() {
            return Err(TemplateError::NoExamples(self.phase));
        }
        Ok(PromptTemplate {
            learning,
            ..self.clone()
        })
    }

    fn resolved_body(&self) -> String {
        let marker = format!("{EXAMPLES_OPEN}{EXAMPLES_CLOSE}");
        let examples = match self.learning {
            Learning::FewShot => self.examples_block.as_deref().unwrap_or(""),
            Learning::ZeroShot => "",
        };
        self.body.replacen(&marker, examples, 1)
    }
}

/// Collapses whitespace so each item fits on its numbered line.
fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn render_items(items: &[Item]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(i, item)| format!("{}. {}\n", i + 1, one_line(&item.text)))
        .collect()
}

pub fn build_prompt(template: &PromptTemplate, batch: &Batch) -> Result<String, TemplateError> {
    if template.phase != batch.phase {
        return Err(TemplateError::PhaseMismatch {
            template: template.phase,
            batch: batch.phase,
        });
    }
    if template.prompt_type != batch.condition.prompt_type {
        return Err(TemplateError::PromptTypeMismatch {
            template: template.prompt_type,
            batch: batch.condition.prompt_type,
        });
    }
    if batch.items.is_empty() {
        return Err(TemplateError::EmptyBatch);
    }
    let template = template.with_learning(batch.condition.learning)?;
    Ok(template
        .resolved_body()
        .replacen(ITEMS_PLACEHOLDER, &render_items(&batch.items), 1))
}

/// First three whitespace-separated words, case and punctuation folded.
pub fn item_key(text: &str) -> String {
    fold_key(text).split(' ').take(3).collect::<Vec<_>>().join(" ")
}

pub fn fold_key(text: &str) -> String {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ItemSource;

    fn items(n: usize) -> Vec<Item> {
        (0..n)
            .map(|i| Item {
                id: format!("i{i}"),
                phase: PhaseId::P1,
                text: format!("review number {i}"),
                source: ItemSource::Review(format!("i{i}")),
            })
            .collect()
    }

    fn cond() -> Condition {
        Condition::new(PromptType::Engineered, Learning::FewShot, "gpt-4")
    }

    #[test]
    fn batch_counts() {
        let c = cond();
        assert_eq!(make_batches(&items(1000), PhaseId::P1, &c).len(), 10);
        let b = make_batches(&items(1347), PhaseId::P2, &c);
        assert_eq!(b.len(), 14);
        assert_eq!(b[13].items.len(), 47);
        assert_eq!(b[13].ordinal, 14);
        assert_eq!(make_batches(&items(625), PhaseId::P3Prime, &c).len(), 7);
        assert!(make_batches(&[], PhaseId::P1, &c).is_empty());
    }

    #[test]
    fn condition_names() {
        let all = Condition::factorial(["gpt-4", "gpt-4o"]);
        let names: Vec<String> = all.iter().map(Condition::name).collect();
        assert_eq!(
            names,
            [
                "Eng,Few,4", "Eng,Zer,4", "Eng,Few,4o", "Eng,Zer,4o", "Kyo,Few,4", "Kyo,Zer,4",
                "Kyo,Few,4o", "Kyo,Zer,4o"
            ]
        );
        for c in &all {
            assert_eq!(&c.name().parse::<Condition>().unwrap(), c);
            assert_eq!(&c.slug().parse::<Condition>().unwrap(), c);
        }
        assert!("Foo,Few,4".parse::<Condition>().is_err());
    }

    const SRC: &str = "# Task\nSort reviews.\n{{#examples}}\n## Examples\n- \"Crashes on start\"\n{{/examples}}\n## Data\n{{items}}";

    #[test]
    fn few_and_zero_differ_by_examples_only() {
        let t = PromptTemplate::parse(SRC, PhaseId::P1, PromptType::Engineered, Learning::FewShot)
            .unwrap();
        let b = make_batches(&items(2), PhaseId::P1, &cond());
        let few = build_prompt(&t, &b[0]).unwrap();
        let mut zc = cond();
        zc.learning = Learning::ZeroShot;
        let zb = make_batches(&items(2), PhaseId::P1, &zc);
        let zero = build_prompt(&t, &zb[0]).unwrap();
        let block = t.examples_block.as_deref().unwrap();
        assert_eq!(few.replacen(block, "", 1), zero);
        assert!(few.ends_with("1. review number 0\n2. review number 1\n"));
        assert!(!zero.contains("Examples"));
    }

    #[test]
    fn template_errors() {
        assert_eq!(
            PromptTemplate::parse("no data", PhaseId::P1, PromptType::Engineered, Learning::ZeroShot),
            Err(TemplateError::MissingPlaceholder)
        );
        assert_eq!(
            PromptTemplate::parse("{{items}}", PhaseId::P1, PromptType::Engineered, Learning::FewShot),
            Err(TemplateError::NoExamples(PhaseId::P1))
        );
        let t = PromptTemplate::parse(SRC, PhaseId::P1, PromptType::Engineered, Learning::FewShot)
            .unwrap();
        let mut b = make_batches(&items(1), PhaseId::P1, &cond()).remove(0);
        b.items.clear();
        assert_eq!(build_prompt(&t, &b), Err(TemplateError::EmptyBatch));
        b.phase = PhaseId::P2;
        assert!(matches!(build_prompt(&t, &b), Err(TemplateError::PhaseMismatch { .. })));
    }

    #[test]
    fn keys_fold_case_and_punctuation() {
        assert_eq!(item_key("Can't access settings anymore!"), "cant access settings");
        assert_eq!(item_key("  HELLO,   world"), "hello world");
    }
}
