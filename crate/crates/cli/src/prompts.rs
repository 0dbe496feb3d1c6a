//! Prompt templates shipped with the binary, overridable from a directory.

use std::path::Path;

use anyhow::{bail, Context, Result};

use qaspect_core::llm::{Learning, PromptTemplate, PromptType};
use qaspect_core::PhaseId;

fn builtin(phase: PhaseId, pt: PromptType) -> Option<&'static str> {
    use PhaseId::*;
    use PromptType::*;
    Some(match (phase, pt) {
        (P1, Engineered) => include_str!("../templates/P1-Engineered.txt"),
        (P1, Kyoryoku) => include_str!("../templates/P1-Kyoryoku.txt"),
        (P2, Engineered) => include_str!("../templates/P2-Engineered.txt"),
        (P2, Kyoryoku) => include_str!("../templates/P2-Kyoryoku.txt"),
        (P3Prime, Engineered) => include_str!("../templates/P3prime-Engineered.txt"),
        (P3Prime, Kyoryoku) => include_str!("../templates/P3prime-Kyoryoku.txt"),
        _ => return None,
    })
}

pub fn file_name(phase: PhaseId, pt: PromptType) -> String {
    format!("{}-{pt:?}.txt", phase.token())
}

/// `<dir>/<phase>-<type>.txt` when present, else the built-in text.
pub fn load(dir: Option<&Path>, phase: PhaseId, pt: PromptType, learning: Learning) -> Result<PromptTemplate> {
    if let Some(dir) = dir {
        let path = dir.join(file_name(phase, pt));
        if path.exists() {
            return PromptTemplate::load(&path, phase, pt, learning)
                .with_context(|| format!("template {}", path.display()));
        }
    }
    let Some(src) = builtin(phase, pt) else {
        bail!("no prompt template for phase {phase} ({pt:?})");
    };
    Ok(PromptTemplate::parse(src, phase, pt, learning)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse_for_both_learning_modes() {
        for phase in [PhaseId::P1, PhaseId::P2, PhaseId::P3Prime] {
            for pt in [PromptType::Engineered, PromptType::Kyoryoku] {
                for l in [Learning::FewShot, Learning::ZeroShot] {
                    load(None, phase, pt, l).unwrap();
                }
            }
        }
        assert!(load(None, PhaseId::P4, PromptType::Kyoryoku, Learning::ZeroShot).is_err());
        assert_eq!(file_name(PhaseId::P3Prime, PromptType::Kyoryoku), "P3prime-Kyoryoku.txt");
    }
}
