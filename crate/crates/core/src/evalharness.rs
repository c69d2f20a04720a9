//! Classifier evaluation: confusion matrices, accuracy / precision / recall /
//! F1, label-space alignment across datasets, and cross-dataset ranking.

use std::collections::BTreeMap;
use std::io::Read;

use serde::Serialize;
use serde_json::value::RawValue;

use crate::error::{Error, ErrorCode, Result};
use crate::taxonomy::BasicEmotion;

/// Reserved bucket for labels outside an aligned label space. It never counts
/// as a correct prediction.
pub const OTHER_LABEL: &str = "other";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPredictions {
    /// `(truth, predicted)` pairs.
    pub items: Vec<(String, String)>,
    pub label_space: Vec<String>,
    /// Whether `items` may use [`OTHER_LABEL`].
    pub other_bucket: bool,
}

impl LabeledPredictions {
    pub fn new(items: Vec<(String, String)>, label_space: Vec<String>) -> Self {
        LabeledPredictions {
            items,
            label_space,
            other_bucket: false,
        }
    }
}

/// Rows are truth, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    /// When set, the last row/column is the `other` bucket, which is not a
    /// class of its own.
    pub other_bucket: bool,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Number of real classes (excluding the `other` bucket).
    pub fn classes(&self) -> usize {
        self.labels.len() - usize::from(self.other_bucket)
    }
}

pub fn confusion_matrix(preds: &LabeledPredictions) -> Result<ConfusionMatrix> {
    if preds.items.is_empty() {
        return Err(Error::new(ErrorCode::Empty, "no predictions to tally"));
    }
    let mut labels = preds.label_space.clone();
    if preds.other_bucket {
        labels.push(OTHER_LABEL.to_string());
    }
    let index: BTreeMap<&str, usize> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let lookup = |l: &str| {
        index
            .get(l)
            .copied()
            .ok_or_else(|| Error::new(ErrorCode::Label, format!("label '{l}' outside the label space")))
    };
    let n = labels.len();
    let mut counts = vec![vec![0u64; n]; n];
    for (truth, predicted) in &preds.items {
        counts[lookup(truth)?][lookup(predicted)?] += 1;
    }
    Ok(ConfusionMatrix {
        labels,
        counts,
        other_bucket: preds.other_bucket,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    #[default]
    Macro,
    /// Classes weighted by their truth support.
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy plus averaged per-class precision, recall and F1. Classes whose
/// denominator is zero contribute 0.
pub fn metrics(cm: &ConfusionMatrix, averaging: Averaging) -> Result<EvalReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::new(ErrorCode::Empty, "confusion matrix is empty"));
    }
    let k = cm.classes();
    let n = cm.labels.len();
    let correct: u64 = (0..k).map(|i| cm.counts[i][i]).sum();
    let support: Vec<u64> = (0..k).map(|i| cm.counts[i].iter().sum()).collect();
    let support_total: u64 = support.iter().sum();

    let (mut p_acc, mut r_acc, mut f_acc) = (0.0, 0.0, 0.0);
    for (i, &sup) in support.iter().enumerate() {
        let tp = cm.counts[i][i];
        let col: u64 = (0..n).map(|r| cm.counts[r][i]).sum();
        let p = ratio(tp, col);
        let r = ratio(tp, sup);
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        let w = match averaging {
            Averaging::Macro => 1.0 / k as f64,
            Averaging::Weighted => ratio(sup, support_total),
        };
        p_acc += w * p;
        r_acc += w * r;
        f_acc += w * f;
    }
    Ok(EvalReport {
        accuracy: ratio(correct, total),
        precision: p_acc,
        recall: r_acc,
        f1: f_acc,
    })
}

fn canonical_label(l: &str) -> String {
    match BasicEmotion::from_alias(l) {
        Some(b) => b.as_str().to_string(),
        None => l.trim().to_ascii_lowercase(),
    }
}

/// Ordering of a label list: basic emotions in canonical order first, then
/// everything else in first-appearance order.
fn canonical_order(labels: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut basic = Vec::new();
    let mut rest: Vec<String> = Vec::new();
    for l in labels {
        match l.parse::<BasicEmotion>() {
            Ok(b) => basic.push(b),
            Err(_) if !rest.contains(&l) => rest.push(l),
            Err(_) => {}
        }
    }
    basic.sort();
    basic.dedup();
    basic.into_iter().map(|b| b.as_str().to_string()).chain(rest).collect()
}

/// Shared label space of a model and a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelAlignment {
    pub space: Vec<String>,
}

impl LabelAlignment {
    /// Canonical form of `label` if it lies in the shared space, else `other`.
    pub fn remap(&self, label: &str) -> String {
        let c = canonical_label(label);
        if self.space.contains(&c) {
            c
        } else {
            OTHER_LABEL.to_string()
        }
    }

    pub fn is_identity_for(&self, labels: &[String]) -> bool {
        labels.iter().all(|l| self.remap(l) != OTHER_LABEL)
    }

    pub fn apply(&self, items: &[(String, String)]) -> LabeledPredictions {
        let items: Vec<(String, String)> = items
            .iter()
            .map(|(t, p)| (self.remap(t), self.remap(p)))
            .collect();
        let other_bucket = items.iter().any(|(t, p)| t == OTHER_LABEL || p == OTHER_LABEL);
        LabeledPredictions {
            items,
            label_space: self.space.clone(),
            other_bucket,
        }
    }
}

/// Intersects the label sets a model emits and a dataset annotates.
/// Spelling variants of basic emotions (`sadness`, `anger`) are unified.
pub fn align_label_space(model_labels: &[String], dataset_labels: &[String]) -> Result<LabelAlignment> {
    if model_labels.is_empty() || dataset_labels.is_empty() {
        return Err(Error::new(ErrorCode::Empty, "label list is empty"));
    }
    let dataset: Vec<String> = dataset_labels.iter().map(|l| canonical_label(l)).collect();
    let shared = model_labels
        .iter()
        .map(|l| canonical_label(l))
        .filter(|l| dataset.contains(l));
    let space = canonical_order(shared);
    if space.is_empty() {
        return Err(Error::new(
            ErrorCode::Label,
            "model and dataset label sets do not intersect",
        ));
    }
    Ok(LabelAlignment { space })
}

/// Per-model, per-dataset evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelScoreMatrix {
    pub models: Vec<String>,
    pub datasets: Vec<String>,
    /// `scores[m][d]`
    pub scores: Vec<Vec<EvalReport>>,
}

impl ModelScoreMatrix {
    pub fn new(models: Vec<String>, datasets: Vec<String>, scores: Vec<Vec<EvalReport>>) -> Result<Self> {
        if scores.len() != models.len() || scores.iter().any(|row| row.len() != datasets.len()) {
            return Err(Error::new(ErrorCode::Grid, "score grid does not match models x datasets"));
        }
        Ok(ModelScoreMatrix {
            models,
            datasets,
            scores,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedModel {
    pub rank: usize,
    pub model: String,
    pub mean_accuracy: f64,
    pub mean_f1: f64,
}

/// Ranks models by unweighted mean accuracy across datasets, ties by mean F1,
/// then input order.
pub fn rank_models(matrix: &ModelScoreMatrix) -> Vec<RankedModel> {
    let d = matrix.datasets.len().max(1) as f64;
    let mut ranked: Vec<RankedModel> = matrix
        .models
        .iter()
        .zip(&matrix.scores)
        .map(|(model, row)| RankedModel {
            rank: 0,
            model: model.clone(),
            mean_accuracy: row.iter().map(|r| r.accuracy).sum::<f64>() / d,
            mean_f1: row.iter().map(|r| r.f1).sum::<f64>() / d,
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.mean_accuracy
            .total_cmp(&a.mean_accuracy)
            .then(b.mean_f1.total_cmp(&a.mean_f1))
    });
    for (i, r) in ranked.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    ranked
}

fn csv_reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source)
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::at_line(ErrorCode::Schema, 1, format!("missing column '{name}'")))
}

/// Parses a `truth,predicted` file. The label space is the union of observed
/// labels, basic emotions in canonical order first.
pub fn parse_predictions<R: Read>(source: R) -> Result<LabeledPredictions> {
    let mut rdr = csv_reader(source);
    let headers = rdr.headers().map_err(Error::csv)?.clone();
    let c_truth = header_index(&headers, "truth")?;
    let c_pred = header_index(&headers, "predicted")?;
    let mut items = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(Error::csv)?;
        let line = record.position().map_or(0, |p| p.line());
        let truth = record[c_truth].to_ascii_lowercase();
        let pred = record[c_pred].to_ascii_lowercase();
        if truth.is_empty() || pred.is_empty() {
            return Err(Error::at_line(ErrorCode::Label, line, "empty label"));
        }
        items.push((truth, pred));
    }
    let space = canonical_order(items.iter().flat_map(|(t, p)| [t.clone(), p.clone()]));
    Ok(LabeledPredictions::new(items, space))
}

/// Parses a `model,dataset,accuracy,precision,recall,f1` grid. Models and
/// datasets keep first-appearance order; every cell must be present once.
pub fn parse_grid<R: Read>(source: R) -> Result<ModelScoreMatrix> {
    let mut rdr = csv_reader(source);
    let headers = rdr.headers().map_err(Error::csv)?.clone();
    let cols: Vec<usize> = ["model", "dataset", "accuracy", "precision", "recall", "f1"]
        .iter()
        .map(|n| header_index(&headers, n))
        .collect::<Result<_>>()?;
    let mut models: Vec<String> = Vec::new();
    let mut datasets: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(usize, usize), EvalReport> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(Error::csv)?;
        let line = record.position().map_or(0, |p| p.line());
        let position = |list: &mut Vec<String>, v: &str| match list.iter().position(|x| x == v) {
            Some(i) => i,
            None => {
                list.push(v.to_string());
                list.len() - 1
            }
        };
        let m = position(&mut models, &record[cols[0]]);
        let d = position(&mut datasets, &record[cols[1]]);
        let mut vals = [0.0; 4];
        for (slot, (c, name)) in vals
            .iter_mut()
            .zip(cols[2..].iter().zip(["accuracy", "precision", "recall", "f1"]))
        {
            let v: f64 = record[*c].parse().map_err(|_| {
                Error::at_line(ErrorCode::Parse, line, format!("{name} '{}' is not a number", &record[*c]))
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::at_line(ErrorCode::Range, line, format!("{name} {v} outside [0, 1]")));
            }
            *slot = v;
        }
        let report = EvalReport {
            accuracy: vals[0],
            precision: vals[1],
            recall: vals[2],
            f1: vals[3],
        };
        if cells.insert((m, d), report).is_some() {
            return Err(Error::at_line(
                ErrorCode::Duplicate,
                line,
                format!("duplicate cell ({}, {})", models[m], datasets[d]),
            ));
        }
    }
    let mut scores = Vec::with_capacity(models.len());
    for (m, model) in models.iter().enumerate() {
        let mut row = Vec::with_capacity(datasets.len());
        for (d, dataset) in datasets.iter().enumerate() {
            let cell = cells
                .get(&(m, d))
                .ok_or_else(|| Error::new(ErrorCode::Grid, format!("missing cell ({model}, {dataset})")))?;
            row.push(*cell);
        }
        scores.push(row);
    }
    ModelScoreMatrix::new(models, datasets, scores)
}

fn fixed4(x: f64) -> Box<RawValue> {
    RawValue::from_string(format!("{x:.4}")).expect("fixed-point number is valid JSON")
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    schema_version: u32,
    averaging: Averaging,
    labels: &'a [String],
    items: u64,
    accuracy: Box<RawValue>,
    precision: Box<RawValue>,
    recall: Box<RawValue>,
    f1: Box<RawValue>,
}

/// Renders a report as a JSON document with four-decimal metrics.
pub fn render_report(report: &EvalReport, cm: &ConfusionMatrix, averaging: Averaging) -> String {
    let doc = ReportDoc {
        schema_version: 1,
        averaging,
        labels: &cm.labels[..cm.classes()],
        items: cm.total(),
        accuracy: fixed4(report.accuracy),
        precision: fixed4(report.precision),
        recall: fixed4(report.recall),
        f1: fixed4(report.f1),
    };
    serde_json::to_string_pretty(&doc).expect("report serializes")
}

#[derive(Serialize)]
struct RankRow<'a> {
    rank: usize,
    model: &'a str,
    mean_accuracy: Box<RawValue>,
    mean_f1: Box<RawValue>,
}

#[derive(Serialize)]
struct RankDoc<'a> {
    schema_version: u32,
    criterion: &'static str,
    datasets: &'a [String],
    ranking: Vec<RankRow<'a>>,
}

pub fn render_ranking(matrix: &ModelScoreMatrix, ranking: &[RankedModel]) -> String {
    let doc = RankDoc {
        schema_version: 1,
        criterion: "mean accuracy across datasets, ties by mean f1",
        datasets: &matrix.datasets,
        ranking: ranking
            .iter()
            .map(|r| RankRow {
                rank: r.rank,
                model: &r.model,
                mean_accuracy: fixed4(r.mean_accuracy),
                mean_f1: fixed4(r.mean_f1),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("ranking serializes")
}
