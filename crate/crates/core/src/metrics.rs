//! Classification metrics and feature-vector similarity measures.
//!
//! Ranking conventions: AUC counts tied positive/negative pairs as one half;
//! average precision walks samples by descending score, breaking ties by the
//! lower sample index first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::shape(format!("length {a}"), format!("length {b}")));
    }
    Ok(())
}

fn check_finite(scores: &[f64]) -> Result<()> {
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::invalid(format!("non-finite score {s}")));
    }
    Ok(())
}

/// Area under the ROC curve as the Mann-Whitney statistic.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_len(scores.len(), labels.len())?;
    check_finite(scores)?;
    let positives = labels.iter().filter(|&&l| l).count() as u64;
    let negatives = labels.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedMetric(
            "AUC-ROC needs at least one positive and one negative".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // pairs (positive, negative) with the positive strictly above, and ties
    let mut above = 0u64;
    let mut tied = 0u64;
    let mut negatives_below = 0u64;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut p, mut n) = (0u64, 0u64);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                p += 1;
            } else {
                n += 1;
            }
            i += 1;
        }
        above += p * negatives_below;
        tied += p * n;
        negatives_below += n;
    }
    Ok((above as f64 + 0.5 * tied as f64) / (positives as f64 * negatives as f64))
}

/// Confusion counts for one class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Counts {
    pub fn from_binary(predictions: &[bool], labels: &[bool]) -> Result<Self> {
        check_len(predictions.len(), labels.len())?;
        let mut c = Counts::default();
        for (&p, &l) in predictions.iter().zip(labels) {
            match (p, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => {}
            }
        }
        Ok(c)
    }

    pub fn merge(self, other: Counts) -> Counts {
        Counts {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
        }
    }

    /// `tp / (tp + fp)`, 0 when nothing is predicted positive.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `tp / (tp + fn)`, 0 when there are no positives.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        harmonic(self.precision(), self.recall())
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn f1(predictions: &[bool], labels: &[bool]) -> Result<f64> {
    Ok(Counts::from_binary(predictions, labels)?.f1())
}

/// Macro-averaged F1 over `num_classes` single-label classes, with the
/// per-class values.
pub fn macro_f1(
    predicted: &[usize],
    truth: &[usize],
    num_classes: usize,
) -> Result<(f64, Vec<f64>)> {
    check_len(predicted.len(), truth.len())?;
    if num_classes == 0 {
        return Err(Error::invalid("macro F1 needs at least one class"));
    }
    if let Some(c) = predicted.iter().chain(truth).find(|&&c| c >= num_classes) {
        return Err(Error::invalid(format!("class index {c} out of range")));
    }
    let per_class: Vec<f64> = (0..num_classes)
        .map(|k| {
            let p: Vec<bool> = predicted.iter().map(|&c| c == k).collect();
            let t: Vec<bool> = truth.iter().map(|&c| c == k).collect();
            Counts::from_binary(&p, &t).map(|c| c.f1())
        })
        .collect::<Result<_>>()?;
    let mean = per_class.iter().sum::<f64>() / num_classes as f64;
    Ok((mean, per_class))
}

/// Un-interpolated average precision: the mean of precision@k over the ranks
/// k holding a positive. `None` when there are no positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<Option<f64>> {
    check_len(scores.len(), labels.len())?;
    check_finite(scores)?;
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(Some(sum / positives as f64))
}

/// Per-sample, per-class scores with binary ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSet {
    scores: Vec<Vec<f64>>,
    labels: Vec<Vec<bool>>,
    threshold: f64,
}

impl PredictionSet {
    pub fn new(scores: Vec<Vec<f64>>, labels: Vec<Vec<bool>>, threshold: f64) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::invalid("prediction set is empty"));
        }
        check_len(scores.len(), labels.len())?;
        let k = scores[0].len();
        if k == 0 {
            return Err(Error::invalid("prediction set has no classes"));
        }
        for (row, (s, l)) in scores.iter().zip(&labels).enumerate() {
            if s.len() != k || l.len() != k {
                return Err(Error::shape(
                    format!("{k} classes in row {row}"),
                    format!("{} scores / {} labels", s.len(), l.len()),
                ));
            }
            check_finite(s)?;
        }
        if !threshold.is_finite() {
            return Err(Error::invalid("threshold must be finite"));
        }
        Ok(Self {
            scores,
            labels,
            threshold,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.scores.len()
    }

    pub fn num_classes(&self) -> usize {
        self.scores[0].len()
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn class_scores(&self, k: usize) -> Vec<f64> {
        self.scores.iter().map(|r| r[k]).collect()
    }

    pub fn class_labels(&self, k: usize) -> Vec<bool> {
        self.labels.iter().map(|r| r[k]).collect()
    }

    /// Thresholded predictions for class `k`: `score >= threshold`.
    pub fn class_predictions(&self, k: usize) -> Vec<bool> {
        self.scores.iter().map(|r| r[k] >= self.threshold).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub average_precision: Option<f64>,
    pub auc_roc: Option<f64>,
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultilabelReport {
    pub map: f64,
    /// F1 of class-averaged precision and recall.
    pub cf1: f64,
    /// F1 of precision and recall pooled over all classes.
    pub of1: f64,
    pub cp: f64,
    pub cr: f64,
    pub op: f64,
    pub or: f64,
    pub threshold: f64,
    /// Classes without any positive, left out of the mAP mean.
    pub excluded_from_map: Vec<usize>,
    pub per_class: Vec<ClassMetrics>,
}

/// mAP, CF1 and OF1 with per-class detail.
pub fn multilabel_suite(preds: &PredictionSet, exec: Execution) -> Result<MultilabelReport> {
    let k = preds.num_classes();
    if k < 2 {
        return Err(Error::invalid(format!(
            "multi-label suite needs at least 2 classes, found {k}"
        )));
    }
    let classes: Vec<usize> = (0..k).collect();
    let per_class = par::try_map(&classes, exec, |_, &c| {
        let scores = preds.class_scores(c);
        let labels = preds.class_labels(c);
        let counts = Counts::from_binary(&preds.class_predictions(c), &labels)?;
        let auc = match auc_roc(&scores, &labels) {
            Ok(a) => Some(a),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(ClassMetrics {
            average_precision: average_precision(&scores, &labels)?,
            auc_roc: auc,
            counts,
            precision: counts.precision(),
            recall: counts.recall(),
            f1: counts.f1(),
        })
    })?;

    let aps: Vec<f64> = per_class
        .iter()
        .filter_map(|m| m.average_precision)
        .collect();
    if aps.is_empty() {
        return Err(Error::UndefinedMetric(
            "no class has a positive sample".into(),
        ));
    }
    let excluded_from_map = per_class
        .iter()
        .enumerate()
        .filter(|(_, m)| m.average_precision.is_none())
        .map(|(c, _)| c)
        .collect();
    let map = aps.iter().sum::<f64>() / aps.len() as f64;

    let cp = per_class.iter().map(|m| m.precision).sum::<f64>() / k as f64;
    let cr = per_class.iter().map(|m| m.recall).sum::<f64>() / k as f64;
    let pooled = per_class
        .iter()
        .fold(Counts::default(), |acc, m| acc.merge(m.counts));

    Ok(MultilabelReport {
        map,
        cf1: harmonic(cp, cr),
        of1: pooled.f1(),
        cp,
        cr,
        op: pooled.precision(),
        or: pooled.recall(),
        threshold: preds.threshold(),
        excluded_from_map,
        per_class,
    })
}

/// Finite real vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values)?;
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0
    }
}

pub fn euclidean_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    check_len(u.len(), v.len())?;
    Ok(u.iter()
        .zip(v)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// `1 - cos(u, v)`, in `[0, 2]`.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    check_len(u.len(), v.len())?;
    let uu: f64 = u.iter().map(|a| a * a).sum();
    let vv: f64 = v.iter().map(|a| a * a).sum();
    if uu == 0.0 || vv == 0.0 {
        return Err(Error::UndefinedMetric(
            "cosine distance of a zero-norm vector".into(),
        ));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    // sqrt(uu * vv) is exactly uu when u == v
    let cos = (dot / (uu * vv).sqrt()).clamp(-1.0, 1.0);
    Ok(1.0 - cos)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub pairs: usize,
    pub euclidean: MeanStd,
    pub cosine: MeanStd,
}

/// Distances between matched original/augmented feature vectors.
pub fn pairwise_feature_report(
    originals: &[FeatureVector],
    augmented: &[FeatureVector],
) -> Result<SimilarityReport> {
    check_len(originals.len(), augmented.len())?;
    if originals.is_empty() {
        return Err(Error::invalid("no feature pairs"));
    }
    let mut euc = Vec::with_capacity(originals.len());
    let mut cos = Vec::with_capacity(originals.len());
    for (o, a) in originals.iter().zip(augmented) {
        euc.push(euclidean_distance(o.values(), a.values())?);
        cos.push(cosine_distance(o.values(), a.values())?);
    }
    Ok(SimilarityReport {
        pairs: originals.len(),
        euclidean: MeanStd::of(&euc).expect("non-empty"),
        cosine: MeanStd::of(&cos).expect("non-empty"),
    })
}

/// `id,<col>,<col>,...` table of numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn parse_csv(text: &str, source_name: &str) -> Result<Self> {
        let perr = |location: String, message: String| Error::Parse {
            source_name: source_name.into(),
            location,
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| perr("line 1".into(), e.to_string()))?
            .clone();
        if header.len() < 2 {
            return Err(perr(
                "line 1".into(),
                "expected a sample-id column followed by at least one value column".into(),
            ));
        }
        let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                perr(format!("line {line}"), e.to_string())
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if record.len() != header.len() {
                return Err(perr(
                    format!("line {line}"),
                    format!("expected {} fields, found {}", header.len(), record.len()),
                ));
            }
            let values = record
                .iter()
                .skip(1)
                .map(|f| {
                    f.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| perr(format!("line {line}"), format!("not a number: {f:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            ids.push(record[0].to_string());
            rows.push(values);
        }
        Ok(Self { columns, ids, rows })
    }

    /// Rows of `self` reordered to follow the ids of `other`.
    pub fn aligned_to(&self, other: &Table) -> Result<Vec<Vec<f64>>> {
        let index: std::collections::HashMap<&str, usize> = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        if index.len() != self.ids.len() {
            return Err(Error::invalid("duplicate sample ids"));
        }
        check_len(self.ids.len(), other.ids.len())?;
        other
            .ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .map(|&i| self.rows[i].clone())
                    .ok_or_else(|| Error::Reference(format!("sample {id:?} missing")))
            })
            .collect()
    }
}
