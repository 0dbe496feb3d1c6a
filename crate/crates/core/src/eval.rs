//! Scoring against gold standards: per-item outcomes, confusion matrices with
//! Multiple rows and columns, binary metrics, ROC points and distributions.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::corpus::GoldStandard;
use crate::labels::{ClassLabel, LabelSet, PhaseId};
use crate::phases::{schema_for, Prediction};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("prediction for `{0}` is empty")]
    EmptyPrediction(String),
    #[error("gold labels for `{0}` are empty")]
    EmptyGold(String),
    #[error("label {label} is not part of phase {phase} (item `{item_id}`)")]
    IllegalLabel {
        item_id: String,
        label: ClassLabel,
        phase: PhaseId,
    },
    #[error("no prediction for gold item `{0}`")]
    MissingPrediction(String),
    #[error("no ROC points")]
    NoPoints,
    #[error("confusion matrix needs {expected}x{expected} cells")]
    Shape { expected: usize },
}

/// An exact non-negative fraction with a positive denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    /// `None` when the denominator is zero.
    pub fn new(num: u64, den: u64) -> Option<Ratio> {
        (den > 0).then_some(Ratio { num, den })
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Hundredths, rounded half up.
    pub fn hundredths(self) -> u64 {
        let (n, d) = (self.num as u128, self.den as u128);
        ((n * 200 + d) / (2 * d)) as u64
    }

    pub fn render(self) -> String {
        let h = self.hundredths();
        format!("{}.{:02}", h / 100, h % 100)
    }
}

impl PartialOrd for Ratio {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ratio {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

pub const UNDEFINED: &str = "—";

pub fn render_metric(m: Option<Ratio>) -> String {
    m.map(Ratio::render).unwrap_or_else(|| UNDEFINED.to_string())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl LabelCounts {
    pub fn metrics(&self) -> BinaryMetrics {
        binary_metrics(self.tp, self.tn, self.fp, self.fn_)
    }
}

impl std::ops::AddAssign for LabelCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub precision: Option<Ratio>,
    pub recall: Option<Ratio>,
    pub specificity: Option<Ratio>,
    pub accuracy: Option<Ratio>,
}

pub fn binary_metrics(tp: u64, tn: u64, fp: u64, fn_: u64) -> BinaryMetrics {
    BinaryMetrics {
        precision: Ratio::new(tp, tp + fp),
        recall: Ratio::new(tp, tp + fn_),
        specificity: Ratio::new(tn, tn + fp),
        accuracy: Ratio::new(tp + tn, tp + tn + fp + fn_),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreOutcome {
    pub item_id: String,
    pub correct: bool,
    pub counts: BTreeMap<ClassLabel, LabelCounts>,
}

fn check_labels(item_id: &str, phase: PhaseId, labels: &LabelSet) -> Result<(), EvalError> {
    let schema = schema_for(phase);
    match labels.iter().find(|l| !schema.allows(**l)) {
        Some(bad) => Err(EvalError::IllegalLabel {
            item_id: item_id.to_string(),
            label: *bad,
            phase,
        }),
        None => Ok(()),
    }
}

/// Scores one item. A prediction is correct when it shares a label with
/// gold; each shared label is a TP. An incorrect prediction is an FP for
/// every asserted label and an FN for every gold label. Labels of the phase
/// that appear in neither set are TNs.
pub fn score_item(prediction: &Prediction, gold: &LabelSet) -> Result<ScoreOutcome, EvalError> {
    let id = &prediction.item_id;
    if prediction.labels.is_empty() {
        return Err(EvalError::EmptyPrediction(id.clone()));
    }
    if gold.is_empty() {
        return Err(EvalError::EmptyGold(id.clone()));
    }
    check_labels(id, prediction.phase, &prediction.labels)?;
    check_labels(id, prediction.phase, gold)?;
    let universe = schema_for(prediction.phase).labels;
    Ok(score_sets(id, &universe, &prediction.labels, gold))
}

fn score_sets(item_id: &str, universe: &[ClassLabel], pred: &LabelSet, gold: &LabelSet) -> ScoreOutcome {
    let correct = pred.intersection(gold).next().is_some();
    let mut counts = BTreeMap::new();
    for &label in universe {
        let (p, g) = (pred.contains(&label), gold.contains(&label));
        let mut c = LabelCounts::default();
        match (correct, p, g) {
            (true, true, true) => c.tp = 1,
            (false, true, _) => c.fp = 1,
            (false, false, true) => c.fn_ = 1,
            (_, false, false) => c.tn = 1,
            _ => {}
        }
        counts.insert(label, c);
    }
    ScoreOutcome {
        item_id: item_id.to_string(),
        correct,
        counts,
    }
}

/// Pairs every gold item with its prediction, in gold order.
pub fn align<'a>(
    predictions: &'a [Prediction],
    gold: &'a GoldStandard,
) -> Result<Vec<(&'a Prediction, &'a LabelSet)>, EvalError> {
    let by_id: BTreeMap<&str, &Prediction> =
        predictions.iter().map(|p| (p.item_id.as_str(), p)).collect();
    gold.entries
        .iter()
        .map(|(id, labels)| {
            by_id
                .get(id.as_str())
                .map(|p| (*p, labels))
                .ok_or_else(|| EvalError::MissingPrediction(id.clone()))
        })
        .collect()
}

pub fn score_all(
    predictions: &[Prediction],
    gold: &GoldStandard,
) -> Result<Vec<ScoreOutcome>, EvalError> {
    align(predictions, gold)?
        .into_iter()
        .map(|(p, g)| score_item(p, g))
        .collect()
}

/// Summed per-label counts and accuracy over outcomes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub items: u64,
    pub correct: u64,
    pub per_label: BTreeMap<ClassLabel, LabelCounts>,
}

impl Summary {
    pub fn from_outcomes(outcomes: &[ScoreOutcome]) -> Summary {
        let mut per_label: BTreeMap<ClassLabel, LabelCounts> = BTreeMap::new();
        for o in outcomes {
            for (l, c) in &o.counts {
                *per_label.entry(*l).or_default() += *c;
            }
        }
        Summary {
            items: outcomes.len() as u64,
            correct: outcomes.iter().filter(|o| o.correct).count() as u64,
            per_label,
        }
    }

    pub fn accuracy(&self) -> Option<Ratio> {
        Ratio::new(self.correct, self.items)
    }
}

/// Row or column of a confusion matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    Label(ClassLabel),
    MultipleCorrect,
    MultipleFalse,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axis::Label(l) => write!(f, "{l}"),
            Axis::MultipleCorrect => f.write_str("Multiple (Correct)"),
            Axis::MultipleFalse => f.write_str("Multiple (False)"),
        }
    }
}

/// Rows are predictions, columns gold. The last two indices on both axes are
/// Multiple (Correct) and Multiple (False).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub phase: PhaseId,
    pub labels: Vec<ClassLabel>,
    pub cells: Vec<Vec<u64>>,
}

/// Per-label figures derived from a confusion matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label: ClassLabel,
    pub precision: Option<Ratio>,
    pub recall: Option<Ratio>,
}

impl ConfusionMatrix {
    pub fn empty(phase: PhaseId, labels: Vec<ClassLabel>) -> Self {
        let n = labels.len() + 2;
        ConfusionMatrix {
            phase,
            labels,
            cells: vec![vec![0; n]; n],
        }
    }

    pub fn from_cells(
        phase: PhaseId,
        labels: Vec<ClassLabel>,
        cells: Vec<Vec<u64>>,
    ) -> Result<Self, EvalError> {
        let n = labels.len() + 2;
        if cells.len() != n || cells.iter().any(|r| r.len() != n) {
            return Err(EvalError::Shape { expected: n });
        }
        Ok(ConfusionMatrix { phase, labels, cells })
    }

    pub fn mc(&self) -> usize {
        self.labels.len()
    }

    pub fn mf(&self) -> usize {
        self.labels.len() + 1
    }

    pub fn axes(&self) -> Vec<Axis> {
        let mut v: Vec<Axis> = self.labels.iter().map(|l| Axis::Label(*l)).collect();
        v.push(Axis::MultipleCorrect);
        v.push(Axis::MultipleFalse);
        v
    }

    fn index(&self, labels: &LabelSet, correct: bool) -> usize {
        if labels.len() == 1 {
            let l = labels.iter().next().unwrap();
            if let Some(i) = self.labels.iter().position(|x| x == l) {
                return i;
            }
        }
        if correct {
            self.mc()
        } else {
            self.mf()
        }
    }

    pub fn add(&mut self, pred: &LabelSet, gold: &LabelSet) {
        let correct = pred.intersection(gold).next().is_some();
        let r = self.index(pred, correct);
        let c = self.index(gold, correct);
        self.cells[r][c] += 1;
    }

    pub fn get(&self, row: Axis, col: Axis) -> u64 {
        let idx = |a: Axis| match a {
            Axis::Label(l) => self.labels.iter().position(|x| *x == l),
            Axis::MultipleCorrect => Some(self.mc()),
            Axis::MultipleFalse => Some(self.mf()),
        };
        match (idx(row), idx(col)) {
            (Some(r), Some(c)) => self.cells[r][c],
            _ => 0,
        }
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }

    /// Items counted as correct: the diagonal, single predictions against a
    /// Multiple (Correct) gold column, and the Multiple (Correct) row.
    pub fn correct(&self) -> u64 {
        let n = self.labels.len();
        let mc = self.mc();
        let diag: u64 = (0..n).map(|i| self.cells[i][i]).sum();
        let single_vs_multi: u64 = (0..n).map(|i| self.cells[i][mc]).sum();
        let multi_row: u64 = self.cells[mc][..=mc].iter().sum();
        diag + single_vs_multi + multi_row
    }

    pub fn accuracy(&self) -> Option<Ratio> {
        Ratio::new(self.correct(), self.total())
    }

    /// Precision for label `l` counts its row, with the Multiple (Correct)
    /// column as hits. Recall counts its column, with the Multiple (Correct)
    /// row as hits.
    pub fn label_scores(&self) -> Vec<LabelScore> {
        let mc = self.mc();
        (0..self.labels.len())
            .map(|i| {
                let row: u64 = self.cells[i].iter().sum();
                let col: u64 = self.cells.iter().map(|r| r[i]).sum();
                LabelScore {
                    label: self.labels[i],
                    precision: Ratio::new(self.cells[i][i] + self.cells[i][mc], row),
                    recall: Ratio::new(self.cells[i][i] + self.cells[mc][i], col),
                }
            })
            .collect()
    }

    pub fn render(&self) -> String {
        let axes = self.axes();
        let names: Vec<String> = axes.iter().map(|a| a.to_string()).collect();
        let width = names.iter().map(|n| n.chars().count()).max().unwrap_or(0).max(9);
        let mut out = String::new();
        let _ = write!(out, "{:width$}", "pred \\ gold");
        for n in &names {
            let _ = write!(out, " | {n:>width$}");
        }
        out.push('\n');
        for (r, name) in names.iter().enumerate() {
            let _ = write!(out, "{name:width$}");
            for c in 0..axes.len() {
                let _ = write!(out, " | {:>width$}", self.cells[r][c]);
            }
            out.push('\n');
        }
        for s in self.label_scores() {
            let _ = writeln!(
                out,
                "{:width$} | P {} | R {}",
                s.label.to_string(),
                render_metric(s.precision),
                render_metric(s.recall)
            );
        }
        let _ = writeln!(out, "{:width$} | {}", "Accuracy", render_metric(self.accuracy()));
        out
    }
}

pub fn confusion_matrix(
    predictions: &[Prediction],
    gold: &GoldStandard,
    phase: PhaseId,
) -> Result<ConfusionMatrix, EvalError> {
    let mut m = ConfusionMatrix::empty(phase, schema_for(phase).labels);
    for (p, g) in align(predictions, gold)? {
        if p.labels.is_empty() {
            return Err(EvalError::EmptyPrediction(p.item_id.clone()));
        }
        m.add(&p.labels, g);
    }
    Ok(m)
}

/// One-vs-rest counts per label. Excluded labels are removed from both sides;
/// items whose gold consists only of excluded labels are skipped.
pub fn per_class_binary(
    predictions: &[Prediction],
    gold: &GoldStandard,
    phase: PhaseId,
    exclude: &LabelSet,
) -> Result<BTreeMap<ClassLabel, LabelCounts>, EvalError> {
    let labels: Vec<ClassLabel> = schema_for(phase)
        .labels
        .into_iter()
        .filter(|l| !exclude.contains(l))
        .collect();
    let mut out: BTreeMap<ClassLabel, LabelCounts> =
        labels.iter().map(|l| (*l, LabelCounts::default())).collect();
    for (p, g) in align(predictions, gold)? {
        check_labels(&p.item_id, phase, &p.labels)?;
        if g.iter().all(|l| exclude.contains(l)) {
            continue;
        }
        for l in &labels {
            let c = out.get_mut(l).unwrap();
            match (p.labels.contains(l), g.contains(l)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    Ok(out)
}

/// Unweighted mean over the labels present in gold; undefined values are
/// left out.
pub fn macro_average(
    per_label: &BTreeMap<ClassLabel, Option<Ratio>>,
    gold_labels: &LabelSet,
) -> Option<f64> {
    let vals: Vec<f64> = per_label
        .iter()
        .filter(|(l, _)| gold_labels.contains(l))
        .filter_map(|(_, v)| v.map(Ratio::value))
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionCounts {
    pub condition: String,
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub condition: String,
    pub fp_rate: f64,
    pub tp_rate: f64,
}

/// Conditions whose rates are undefined (no positives or no negatives) are
/// skipped.
pub fn roc_points(conditions: &[ConditionCounts]) -> Vec<RocPoint> {
    conditions
        .iter()
        .filter_map(|c| {
            let m = binary_metrics(c.tp, c.tn, c.fp, c.fn_);
            Some(RocPoint {
                condition: c.condition.clone(),
                fp_rate: 1.0 - m.specificity?.value(),
                tp_rate: m.recall?.value(),
            })
        })
        .collect()
}

/// Trapezoid area over the points sorted by false-positive rate, anchored at
/// (0, 0) and (1, 1).
pub fn roc_auc(points: &[RocPoint]) -> Result<f64, EvalError> {
    if points.is_empty() {
        return Err(EvalError::NoPoints);
    }
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p.fp_rate, p.tp_rate)).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    pts.insert(0, (0.0, 0.0));
    pts.push((1.0, 1.0));
    Ok(pts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum())
}

/// Per-label counts; each label of a multi-label set counts once.
pub fn distribution_report<'a>(
    label_sets: impl IntoIterator<Item = &'a LabelSet>,
) -> BTreeMap<ClassLabel, u64> {
    let mut out = BTreeMap::new();
    for set in label_sets {
        for l in set {
            *out.entry(*l).or_insert(0) += 1;
        }
    }
    out
}

pub fn render_distribution(dist: &BTreeMap<ClassLabel, u64>) -> String {
    let mut out = String::new();
    for (l, n) in dist {
        let _ = writeln!(out, "{:<20} {n:>6}", l.to_string());
    }
    let _ = writeln!(out, "{:<20} {:>6}", "Total", dist.values().sum::<u64>());
    out
}

/// Plain-text metrics table, one row per entry.
pub fn render_metrics_table(rows: &[(String, BinaryMetrics)]) -> String {
    let width = rows.iter().map(|(n, _)| n.chars().count()).max().unwrap_or(0).max(9);
    let mut out = format!(
        "{:width$} | {:>9} | {:>6} | {:>11} | {:>8}\n",
        "", "Precision", "Recall", "Specificity", "Accuracy"
    );
    for (name, m) in rows {
        let _ = writeln!(
            out,
            "{name:width$} | {:>9} | {:>6} | {:>11} | {:>8}",
            render_metric(m.precision),
            render_metric(m.recall),
            render_metric(m.specificity),
            render_metric(m.accuracy)
        );
    }
    out
}

/// Plot data for external tools: one `fp_rate tp_rate condition` line per point.
pub fn render_roc_plot_data(points: &[RocPoint]) -> String {
    points
        .iter()
        .map(|p| format!("{:.6}\t{:.6}\t{}\n", p.fp_rate, p.tp_rate, p.condition))
        .collect()
}
