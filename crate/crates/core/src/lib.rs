//! Classification of app-store feedback into software quality aspects, plus
//! the scoring machinery used to compare the classifiers.

pub mod aggregate;
pub mod corpus;
pub mod crowd;
pub mod eval;
pub mod io;
pub mod judgments;
pub mod labels;
pub mod llm;
pub mod lp;
pub mod phases;
pub mod sampling;

pub use labels::{ClassLabel, LabelSet, PhaseId};
