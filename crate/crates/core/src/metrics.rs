//! Point-level and object-level evaluation of a [`FilterResult`].
//!
//! Ground-truth foreground is every point whose `class_id` is present and not
//! excluded; everything else, unlabeled points included, is background.
//! Predicted foreground is `foreground_indices` only. Ratios whose
//! denominator is zero are reported as 0.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::filter::FilterResult;
use crate::pointcloud::PointCloud;
use crate::{classes, Error, Result};

pub const DEFAULT_TPR_THRESHOLD: f64 = 0.5;

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Which side of the split counts as "positive" in the confusion matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositiveClass {
    #[default]
    Foreground,
    Background,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn add(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
}

impl PointMetrics {
    pub fn from_counts(c: ConfusionCounts) -> Self {
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        PointMetrics {
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            tn: c.tn,
            precision,
            recall,
            f1,
            iou: ratio(c.tp, c.tp + c.fp + c.fn_),
        }
    }

    pub fn counts(&self) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
            tn: self.tn,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectMetrics {
    pub n_objects: usize,
    /// Detected fraction of each object, in ascending instance order.
    pub per_object_fraction: Vec<f64>,
    /// Share of objects whose fraction strictly exceeds `tpr_threshold`.
    pub tpr: f64,
    /// Mean detected fraction.
    pub completeness: f64,
    pub tpr_threshold: f64,
}

impl ObjectMetrics {
    pub fn from_fractions(per_object_fraction: Vec<f64>, tpr_threshold: f64) -> Result<Self> {
        if per_object_fraction.is_empty() {
            return Err(Error::data("no ground-truth objects to evaluate"));
        }
        Ok(Self::summarize(per_object_fraction, tpr_threshold))
    }

    /// Like `from_fractions`, but zero objects yields zero rates.
    fn summarize(per_object_fraction: Vec<f64>, tpr_threshold: f64) -> Self {
        let n = per_object_fraction.len();
        let hits = per_object_fraction.iter().filter(|&&f| f > tpr_threshold).count();
        let completeness = if n == 0 {
            0.0
        } else {
            per_object_fraction.iter().sum::<f64>() / n as f64
        };
        ObjectMetrics {
            n_objects: n,
            tpr: ratio(hits as u64, n as u64),
            completeness,
            per_object_fraction,
            tpr_threshold,
        }
    }
}

fn check_lengths(result: &FilterResult, truth: &PointCloud) -> Result<()> {
    if result.len() != truth.len() {
        return Err(Error::data(format!(
            "result covers {} points but ground truth has {}",
            result.len(),
            truth.len()
        )));
    }
    Ok(())
}

fn is_true_foreground(class_id: Option<i32>, excluded: &BTreeSet<i32>) -> bool {
    class_id.is_some_and(|c| !excluded.contains(&c))
}

pub fn point_metrics(result: &FilterResult, truth: &PointCloud, excluded_classes: &BTreeSet<i32>) -> Result<PointMetrics> {
    point_metrics_with(result, truth, excluded_classes, PositiveClass::Foreground)
}

/// Point metrics with a selectable positive class, for diagnostics.
pub fn point_metrics_with(
    result: &FilterResult,
    truth: &PointCloud,
    excluded_classes: &BTreeSet<i32>,
    positive: PositiveClass,
) -> Result<PointMetrics> {
    Ok(PointMetrics::from_counts(confusion(result, truth, excluded_classes, positive)?))
}

pub fn confusion(
    result: &FilterResult,
    truth: &PointCloud,
    excluded_classes: &BTreeSet<i32>,
    positive: PositiveClass,
) -> Result<ConfusionCounts> {
    check_lengths(result, truth)?;
    let predicted = result.foreground_mask();
    let flip = positive == PositiveClass::Background;
    let mut c = ConfusionCounts::default();
    for (p, &pred_fg) in truth.iter().zip(&predicted) {
        let actual = is_true_foreground(p.class_id, excluded_classes) != flip;
        let pred = pred_fg != flip;
        match (actual, pred) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, Default)]
struct ObjectTally {
    class_id: i32,
    points: u64,
    detected: u64,
}

/// Per-instance point and detection counts, keyed by instance id.
fn tally_objects(
    result: &FilterResult,
    truth: &PointCloud,
    excluded_classes: &BTreeSet<i32>,
) -> Result<BTreeMap<i32, ObjectTally>> {
    check_lengths(result, truth)?;
    let predicted = result.foreground_mask();
    let mut objects: BTreeMap<i32, ObjectTally> = BTreeMap::new();
    for (p, &fg) in truth.iter().zip(&predicted) {
        let (Some(class_id), Some(inst)) = (p.class_id, p.instance_id) else {
            continue;
        };
        if excluded_classes.contains(&class_id) {
            continue;
        }
        let t = objects.entry(inst).or_insert(ObjectTally {
            class_id,
            ..Default::default()
        });
        if t.class_id != class_id {
            return Err(Error::data(format!(
                "instance {inst} carries classes {} and {class_id}",
                t.class_id
            )));
        }
        t.points += 1;
        t.detected += fg as u64;
    }
    Ok(objects)
}

fn fraction(t: &ObjectTally) -> f64 {
    t.detected as f64 / t.points as f64
}

pub fn object_metrics(
    result: &FilterResult,
    truth: &PointCloud,
    tpr_threshold: f64,
    excluded_classes: &BTreeSet<i32>,
) -> Result<ObjectMetrics> {
    let objects = tally_objects(result, truth, excluded_classes)?;
    ObjectMetrics::from_fractions(objects.values().map(fraction).collect(), tpr_threshold)
}

/// Recall, TPR and completeness restricted to one class. Precision-type
/// metrics do not exist per class: the filter does not assign classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub recall: f64,
    pub tpr: f64,
    pub completeness: f64,
    pub n_points: u64,
    pub n_objects: usize,
    /// Detected points of this class.
    pub tp: u64,
}

#[derive(Debug, Clone, Default)]
struct ClassTally {
    points: u64,
    detected: u64,
    fractions: Vec<f64>,
}

impl ClassTally {
    fn finish(&self, tpr_threshold: f64) -> ClassMetrics {
        let o = ObjectMetrics::summarize(self.fractions.clone(), tpr_threshold);
        ClassMetrics {
            recall: ratio(self.detected, self.points),
            tpr: o.tpr,
            completeness: o.completeness,
            n_points: self.points,
            n_objects: o.n_objects,
            tp: self.detected,
        }
    }
}

fn tally_classes(result: &FilterResult, truth: &PointCloud) -> Result<BTreeMap<i32, ClassTally>> {
    let objects = tally_objects(result, truth, &BTreeSet::new())?;
    let predicted = result.foreground_mask();
    let mut classes: BTreeMap<i32, ClassTally> = BTreeMap::new();
    for (p, &fg) in truth.iter().zip(&predicted) {
        if let Some(c) = p.class_id {
            let t = classes.entry(c).or_default();
            t.points += 1;
            t.detected += fg as u64;
        }
    }
    for t in objects.values() {
        classes.get_mut(&t.class_id).unwrap().fractions.push(fraction(t));
    }
    Ok(classes)
}

/// Metrics per ground-truth class present in `truth`.
pub fn per_class_metrics(
    result: &FilterResult,
    truth: &PointCloud,
    tpr_threshold: f64,
) -> Result<BTreeMap<i32, ClassMetrics>> {
    let classes = tally_classes(result, truth)?;
    if classes.values().all(|t| t.fractions.is_empty()) {
        return Err(Error::data("no ground-truth objects to evaluate"));
    }
    Ok(classes
        .into_iter()
        .map(|(c, t)| (c, t.finish(tpr_threshold)))
        .collect())
}

/// Pools scans into one dataset-level report: confusion counts are summed
/// and all objects enter one list (micro-averaging).
#[derive(Debug, Clone)]
pub struct DatasetEvaluator {
    excluded_classes: BTreeSet<i32>,
    tpr_threshold: f64,
    positive: PositiveClass,
    counts: ConfusionCounts,
    fractions: Vec<f64>,
    classes: BTreeMap<i32, ClassTally>,
    scans: usize,
}

impl DatasetEvaluator {
    pub fn new(excluded_classes: BTreeSet<i32>, tpr_threshold: f64) -> Self {
        DatasetEvaluator {
            excluded_classes,
            tpr_threshold,
            positive: PositiveClass::Foreground,
            counts: ConfusionCounts::default(),
            fractions: Vec::new(),
            classes: BTreeMap::new(),
            scans: 0,
        }
    }

    pub fn with_positive_class(mut self, positive: PositiveClass) -> Self {
        self.positive = positive;
        self
    }

    pub fn add_scan(&mut self, result: &FilterResult, truth: &PointCloud) -> Result<()> {
        let c = confusion(result, truth, &self.excluded_classes, self.positive)?;
        self.counts.add(&c);
        let objects = tally_objects(result, truth, &self.excluded_classes)?;
        self.fractions.extend(objects.values().map(fraction));
        for (class_id, t) in tally_classes(result, truth)? {
            if self.excluded_classes.contains(&class_id) {
                continue;
            }
            let acc = self.classes.entry(class_id).or_default();
            acc.points += t.points;
            acc.detected += t.detected;
            acc.fractions.extend(t.fractions);
        }
        self.scans += 1;
        Ok(())
    }

    /// Fold in another evaluator built with the same settings.
    pub fn merge(&mut self, other: DatasetEvaluator) {
        self.counts.add(&other.counts);
        self.fractions.extend(other.fractions);
        for (c, t) in other.classes {
            let acc = self.classes.entry(c).or_default();
            acc.points += t.points;
            acc.detected += t.detected;
            acc.fractions.extend(t.fractions);
        }
        self.scans += other.scans;
    }

    pub fn report(&self) -> EvalReport {
        let pm = PointMetrics::from_counts(self.counts);
        let om = ObjectMetrics::summarize(self.fractions.clone(), self.tpr_threshold);
        EvalReport {
            precision: pm.precision,
            recall: pm.recall,
            f1: pm.f1,
            iou: pm.iou,
            tpr: om.tpr,
            completeness: om.completeness,
            n_points: self.counts.total(),
            n_objects: om.n_objects,
            n_scans: self.scans,
            confusion: self.counts,
            positive_class: self.positive,
            tpr_threshold: self.tpr_threshold,
            per_class: self
                .classes
                .iter()
                .map(|(&c, t)| {
                    let m = t.finish(self.tpr_threshold);
                    (
                        c.to_string(),
                        ClassReport {
                            name: classes::name(c).map(str::to_string),
                            recall: m.recall,
                            tpr: m.tpr,
                            completeness: m.completeness,
                            n_points: m.n_points,
                            n_objects: m.n_objects,
                        },
                    )
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub recall: f64,
    pub tpr: f64,
    pub completeness: f64,
    pub n_points: u64,
    pub n_objects: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    pub tpr: f64,
    pub completeness: f64,
    pub n_points: u64,
    pub n_objects: usize,
    pub n_scans: usize,
    pub confusion: ConfusionCounts,
    pub positive_class: PositiveClass,
    pub tpr_threshold: f64,
    pub per_class: BTreeMap<String, ClassReport>,
}
