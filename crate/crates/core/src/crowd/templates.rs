//! Job descriptions shown to crowd workers, one text file per phase.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CrowdError;
use crate::labels::{ClassLabel, PhaseId};
use crate::phases::schema_for;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobDescription {
    pub phase: PhaseId,
    pub title: String,
    pub instructions: String,
    pub labels: Vec<ClassLabel>,
}

impl JobDescription {
    /// First non-blank line is the title, the rest are the instructions.
    pub fn parse(phase: PhaseId, text: &str) -> JobDescription {
        let mut lines = text.lines().skip_while(|l| l.trim().is_empty());
        let title = lines.next().unwrap_or("").trim().to_string();
        let instructions = lines.collect::<Vec<_>>().join("\n").trim().to_string();
        JobDescription {
            phase,
            title,
            instructions,
            labels: schema_for(phase).labels,
        }
    }

    /// Reads `<dir>/<phase token>.txt`, falling back to the built-in text.
    pub fn load(dir: &Path, phase: PhaseId) -> Result<JobDescription, CrowdError> {
        let path = dir.join(format!("{}.txt", phase.token()));
        match std::fs::read_to_string(&path) {
            Ok(text) => Ok(JobDescription::parse(phase, &text)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(default_job(phase)),
            Err(e) => Err(CrowdError::Store(format!("{}: {e}", path.display()))),
        }
    }
}

pub fn default_job(phase: PhaseId) -> JobDescription {
    let text = match phase {
        PhaseId::P1 => {
            "Sort app reviews: useful or not?\n\
             Read each review and decide whether it tells the developers something they could act on.\n\
             Helpful: the review reports a problem, asks for a change or describes how the app behaves.\n\
             Useless: the review only expresses a feeling, rates the app or talks about something unrelated.\n\
             Pick exactly one answer per review."
        }
        PhaseId::P2 => {
            "Sort review sentences: useful or not?\n\
             Each entry is a single sentence taken from an app review.\n\
             Helpful: the sentence on its own carries information the developers could act on.\n\
             Useless: the sentence is praise, filler, or needs the rest of the review to make sense.\n\
             Pick exactly one answer per sentence."
        }
        PhaseId::P3 => {
            "What is this sentence about?\n\
             Performance: slowness, lag, battery drain or heavy resource use.\n\
             Stability: crashes, freezes, lost data or functions that stop working.\n\
             Quality: some other aspect of how well the app works, such as ease of use, security or device support.\n\
             Feature: something the app does, lacks or should do.\n\
             None: none of the above applies.\n\
             Pick exactly one answer per sentence."
        }
        PhaseId::P4 => {
            "Which quality does this sentence talk about?\n\
             Compatibility: devices, OS versions, other apps or hardware.\n\
             User-friendliness: layout, navigation, how easy the app is to learn and use.\n\
             Security: accounts, passwords, privacy or permissions.\n\
             Other: a different quality concern.\n\
             Pick exactly one answer per sentence."
        }
        PhaseId::P3Prime => {
            "Which aspect of the app does this sentence talk about?\n\
             Compatibility: devices, OS versions, other apps or hardware.\n\
             User-friendliness: layout, navigation, how easy it is to learn and use.\n\
             Security: accounts, passwords, privacy or permissions.\n\
             Performance: speed, lag, battery or memory use.\n\
             Stability: crashes, freezes, lost data or broken functions.\n\
             Feature: a function that exists, is missing or is wanted.\n\
             None: none of these.\n\
             Pick exactly one answer per sentence."
        }
    };
    JobDescription::parse(phase, text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_cover_every_phase() {
        for phase in PhaseId::ALL {
            let job = default_job(phase);
            assert!(!job.title.is_empty());
            assert!(job.instructions.contains("exactly one"));
            assert_eq!(job.labels, schema_for(phase).labels);
        }
    }

    #[test]
    fn loads_operator_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("P1.txt"), "\n  My title\nline one\nline two\n").unwrap();
        let job = JobDescription::load(dir.path(), PhaseId::P1).unwrap();
        assert_eq!(job.title, "My title");
        assert_eq!(job.instructions, "line one\nline two");
        assert_eq!(JobDescription::load(dir.path(), PhaseId::P2).unwrap(), default_job(PhaseId::P2));
    }
}
