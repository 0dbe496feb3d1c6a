//! Class labels and phase identifiers shared by every classifier.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A task-facing class. Declaration order is the display order used in
/// reports (quality aspects first, then feature/none, then phase-specific
/// classes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassLabel {
    Compatibility,
    UserFriendliness,
    Security,
    Performance,
    Stability,
    Feature,
    None,
    Quality,
    Other,
    Helpful,
    Useless,
}

pub type LabelSet = BTreeSet<ClassLabel>;

impl ClassLabel {
    pub const ALL: [ClassLabel; 11] = [
        ClassLabel::Compatibility,
        ClassLabel::UserFriendliness,
        ClassLabel::Security,
        ClassLabel::Performance,
        ClassLabel::Stability,
        ClassLabel::Feature,
        ClassLabel::None,
        ClassLabel::Quality,
        ClassLabel::Other,
        ClassLabel::Helpful,
        ClassLabel::Useless,
    ];

    /// Canonical token used in every file format.
    pub fn token(self) -> &'static str {
        match self {
            ClassLabel::Compatibility => "Compatibility",
            ClassLabel::UserFriendliness => "User-friendliness",
            ClassLabel::Security => "Security",
            ClassLabel::Performance => "Performance",
            ClassLabel::Stability => "Stability",
            ClassLabel::Feature => "Feature",
            ClassLabel::None => "None",
            ClassLabel::Quality => "Quality",
            ClassLabel::Other => "Other",
            ClassLabel::Helpful => "Helpful",
            ClassLabel::Useless => "Useless",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown class label `{0}`")]
pub struct UnknownLabel(pub String);

fn fold(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

impl FromStr for ClassLabel {
    type Err = UnknownLabel;

    /// Lenient: case, spaces, hyphens and a few long-form aliases
    /// ("Feature Request", "None of the above", "System Support") are accepted.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let label = match fold(s).as_str() {
            "compatibility" | "systemsupport" | "systemsupportfeedback" => {
                ClassLabel::Compatibility
            }
            "userfriendliness" | "userfriendlinessfeedback" | "userfriendl" => {
                ClassLabel::UserFriendliness
            }
            "security" | "securityfeedback" => ClassLabel::Security,
            "performance" | "performancefeedback" => ClassLabel::Performance,
            "stability" | "stabilityfeedback" => ClassLabel::Stability,
            "feature" | "featurerequest" => ClassLabel::Feature,
            "none" | "noneoftheabove" | "nonemissed" => ClassLabel::None,
            "quality" | "qualityfeedback" => ClassLabel::Quality,
            "other" => ClassLabel::Other,
            "helpful" => ClassLabel::Helpful,
            "useless" => ClassLabel::Useless,
            _ => return Err(UnknownLabel(s.trim().to_string())),
        };
        Ok(label)
    }
}

impl Serialize for ClassLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.token())
    }
}

impl<'de> Deserialize<'de> for ClassLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Classification phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PhaseId {
    P1,
    P2,
    P3,
    P4,
    P3Prime,
}

impl PhaseId {
    pub const ALL: [PhaseId; 5] = [
        PhaseId::P1,
        PhaseId::P2,
        PhaseId::P3,
        PhaseId::P4,
        PhaseId::P3Prime,
    ];

    pub fn token(self) -> &'static str {
        match self {
            PhaseId::P1 => "P1",
            PhaseId::P2 => "P2",
            PhaseId::P3 => "P3",
            PhaseId::P4 => "P4",
            PhaseId::P3Prime => "P3prime",
        }
    }

    pub fn is_binary(self) -> bool {
        matches!(self, PhaseId::P1 | PhaseId::P2)
    }
}

impl fmt::Display for PhaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown phase `{0}` (expected one of P1, P2, P3, P4, P3prime)")]
pub struct UnknownPhase(pub String);

impl FromStr for PhaseId {
    type Err = UnknownPhase;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "P1" | "p1" => Ok(PhaseId::P1),
            "P2" | "p2" => Ok(PhaseId::P2),
            "P3" | "p3" => Ok(PhaseId::P3),
            "P4" | "p4" => Ok(PhaseId::P4),
            "P3prime" | "p3prime" | "P3'" | "p3'" | "P3′" | "P3Prime" => Ok(PhaseId::P3Prime),
            other => Err(UnknownPhase(other.to_string())),
        }
    }
}

impl Serialize for PhaseId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.token())
    }
}

impl<'de> Deserialize<'de> for PhaseId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Renders a label set as `A, B` in label order.
pub fn format_labels(labels: &LabelSet) -> String {
    labels
        .iter()
        .map(|l| l.token())
        .collect::<Vec<_>>()
        .join(", ")
}
