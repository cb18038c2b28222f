//! COCO-protocol detection metrics.
//!
//! For every (image, category) cell of the test split, detections are
//! ranked by score (ties by input order), capped at `max_dets`, and greedily
//! matched against ground truth at each IoU threshold. Per category and
//! threshold the matches of all images are swept into a precision-recall
//! curve whose right-to-left precision envelope is sampled at 101 recall
//! levels; AP is the mean of those samples. mAP averages AP over the
//! thresholds (0.50:0.05:0.95 by default), AP50 is AP at 0.50, and mAR
//! averages the final recall over the same thresholds. Aggregates are
//! unweighted means over categories that have ground truth in the split.
//!
//! Matching runs in parallel per cell; accumulation sorts on a total key, so
//! results do not depend on the number of worker threads.

mod curve;
mod matching;
mod rec;

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::datamodel::{CategoryId, Detection, DetectionDataset, GroundTruthInstance, ImageId};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::splits::SplitResult;

pub use curve::{average_precision, pr_curve, recall_level, PrCurve, ScoredOutcome, RECALL_LEVELS};
pub use matching::{match_detections, DetectionMatch, Outcome};
pub use rec::{evaluate_rec, AttributePredicate, PromptFilter};

/// The ten COCO thresholds 0.50, 0.55, ..., 0.95, each computed as
/// `(50 + 5 i) / 100`.
pub fn coco_iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
    /// Highest-scoring detections kept per image and category.
    pub max_dets: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: coco_iou_thresholds(),
            max_dets: 100,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iou_thresholds.is_empty() {
            return Err(Error::validation("at least one IoU threshold is required"));
        }
        if let Some(t) = self
            .iou_thresholds
            .iter()
            .find(|t| !(**t > 0.0 && **t <= 1.0))
        {
            return Err(Error::validation(format!(
                "IoU threshold {t} outside (0, 1]"
            )));
        }
        if self.max_dets == 0 {
            return Err(Error::validation("max_dets must be positive"));
        }
        Ok(())
    }

    fn ap50_index(&self) -> Option<usize> {
        self.iou_thresholds
            .iter()
            .position(|t| (t - 0.5).abs() < 1e-12)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryMetrics {
    #[serde(skip)]
    pub category_id: CategoryId,
    #[serde(skip)]
    pub name: String,
    #[serde(rename = "mAP")]
    pub map: Option<f64>,
    #[serde(rename = "AP50")]
    pub ap50: Option<f64>,
    #[serde(rename = "mAR")]
    pub mar: Option<f64>,
    #[serde(rename = "per_threshold_AP")]
    pub per_threshold_ap: Vec<Option<f64>>,
    #[serde(rename = "per_threshold_AR")]
    pub per_threshold_recall: Vec<Option<f64>>,
    pub ground_truth: usize,
    pub detections: usize,
    pub pr_curves: Vec<Option<PrCurve>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateMetrics {
    #[serde(rename = "mAP")]
    pub map: Option<f64>,
    #[serde(rename = "AP50")]
    pub ap50: Option<f64>,
    #[serde(rename = "mAR")]
    pub mar: Option<f64>,
    /// Number of categories contributing to the means.
    pub categories: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EvalCounts {
    pub test_images: usize,
    pub ground_truth: usize,
    pub crowd_ground_truth: usize,
    pub detections_scored: usize,
    /// Detections on images outside the test split (or outside the
    /// evaluated categories), skipped.
    pub detections_ignored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    #[serde(serialize_with = "per_category_as_map")]
    pub per_category: Vec<CategoryMetrics>,
    pub aggregate: AggregateMetrics,
    pub counts: EvalCounts,
    pub iou_thresholds: Vec<f64>,
    pub max_dets: usize,
    pub split_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
}

fn per_category_as_map<S: Serializer>(cats: &[CategoryMetrics], s: S) -> Result<S::Ok, S::Error> {
    let mut map = s.serialize_map(Some(cats.len()))?;
    for c in cats {
        map.serialize_entry(&c.name, c)?;
    }
    map.end()
}

impl EvaluationReport {
    pub fn category(&self, name: &str) -> Option<&CategoryMetrics> {
        self.per_category.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn mean(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v?;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Matched outcomes of one (image, category) cell, per threshold.
struct CellResult {
    category: CategoryId,
    per_threshold: Vec<Vec<ScoredOutcome>>,
    non_crowd_gt: usize,
    detections: usize,
}

fn evaluate_cell(
    dets: &[(usize, &Detection)],
    gts: &[&GroundTruthInstance],
    category: CategoryId,
    config: &EvalConfig,
) -> CellResult {
    let scores: Vec<f64> = dets.iter().map(|(_, d)| d.score).collect();
    let mut order = matching::score_order(&scores);
    order.truncate(config.max_dets);
    let det_boxes: Vec<&BoundingBox> = order.iter().map(|&i| &dets[i].1.bbox).collect();
    let gt_boxes: Vec<&BoundingBox> = gts.iter().map(|g| &g.bbox).collect();
    let crowd: Vec<bool> = gts.iter().map(|g| g.iscrowd).collect();
    let ious = matching::iou_table(&det_boxes, &gt_boxes);

    let per_threshold = config
        .iou_thresholds
        .iter()
        .map(|&t| {
            matching::greedy_match(&order, &scores, &ious, &crowd, t)
                .into_iter()
                .map(|m| ScoredOutcome {
                    score: m.score,
                    order: dets[m.detection].0,
                    outcome: m.outcome,
                })
                .collect()
        })
        .collect();
    CellResult {
        category,
        per_threshold,
        non_crowd_gt: crowd.iter().filter(|c| !**c).count(),
        detections: order.len(),
    }
}

pub(crate) fn evaluate_subset(
    ds: &DetectionDataset,
    split: &SplitResult,
    dets: &[Detection],
    config: &EvalConfig,
    categories: Option<&HashSet<CategoryId>>,
    prompt: Option<String>,
) -> Result<EvaluationReport> {
    config.validate()?;
    if split.test_image_ids.is_empty() {
        return Err(Error::validation("the split has no test images"));
    }
    let test: HashSet<ImageId> = split.test_image_ids.iter().copied().collect();
    if let Some(id) = split
        .test_image_ids
        .iter()
        .find(|id| ds.image(**id).is_none())
    {
        return Err(Error::integrity(format!(
            "split references image {id} which is not in the dataset"
        )));
    }
    let wanted = |c: CategoryId| categories.is_none_or(|set| set.contains(&c));

    type Cell<'a> = (Vec<(usize, &'a Detection)>, Vec<&'a GroundTruthInstance>);
    let mut cells: BTreeMap<(ImageId, CategoryId), Cell> = BTreeMap::new();
    let mut counts = EvalCounts {
        test_images: test.len(),
        ground_truth: 0,
        crowd_ground_truth: 0,
        detections_scored: 0,
        detections_ignored: 0,
    };
    for inst in ds.instances() {
        if test.contains(&inst.image_id) && wanted(inst.category_id) {
            cells
                .entry((inst.image_id, inst.category_id))
                .or_default()
                .1
                .push(inst);
            if inst.iscrowd {
                counts.crowd_ground_truth += 1;
            } else {
                counts.ground_truth += 1;
            }
        }
    }
    for (i, d) in dets.iter().enumerate() {
        if ds.image(d.image_id).is_none() || ds.category(d.category_id).is_none() {
            return Err(Error::integrity(format!(
                "detection {i} references image {} / category {} not in the dataset",
                d.image_id, d.category_id
            )));
        }
        if test.contains(&d.image_id) && wanted(d.category_id) {
            cells
                .entry((d.image_id, d.category_id))
                .or_default()
                .0
                .push((i, d));
        } else {
            counts.detections_ignored += 1;
        }
    }
    if counts.detections_ignored > 0 {
        log::info!(
            "{} detections outside the evaluated split were skipped",
            counts.detections_ignored
        );
    }

    let results: Vec<CellResult> = cells
        .par_iter()
        .map(|(&(_, cat), (cell_dets, cell_gts))| evaluate_cell(cell_dets, cell_gts, cat, config))
        .collect();

    let n_thr = config.iou_thresholds.len();
    let mut per_cat: BTreeMap<CategoryId, (Vec<Vec<ScoredOutcome>>, usize, usize)> =
        BTreeMap::new();
    for cell in results {
        let entry = per_cat
            .entry(cell.category)
            .or_insert_with(|| (vec![Vec::new(); n_thr], 0, 0));
        for (acc, outcomes) in entry.0.iter_mut().zip(cell.per_threshold) {
            acc.extend(outcomes);
        }
        entry.1 += cell.non_crowd_gt;
        entry.2 += cell.detections;
    }

    let ap50_idx = config.ap50_index();
    let mut per_category = Vec::new();
    for cat in ds.categories().iter().filter(|c| wanted(c.id)) {
        let empty = (vec![Vec::new(); n_thr], 0, 0);
        let (outcomes, total_gt, n_dets) = per_cat.get(&cat.id).unwrap_or(&empty);
        counts.detections_scored += n_dets;
        let curves: Vec<Option<PrCurve>> =
            outcomes.iter().map(|o| pr_curve(o, *total_gt)).collect();
        let per_threshold_ap: Vec<Option<f64>> = curves
            .iter()
            .map(|c| {
                c.as_ref().map(|c| {
                    if *total_gt == 0 {
                        0.0
                    } else {
                        c.average_precision()
                    }
                })
            })
            .collect();
        let per_threshold_recall: Vec<Option<f64>> = curves
            .iter()
            .map(|c| match (c, *total_gt) {
                (_, 0) => None,
                (Some(c), _) => Some(c.final_recall()),
                (None, _) => Some(0.0),
            })
            .collect();
        per_category.push(CategoryMetrics {
            category_id: cat.id,
            name: cat.name.clone(),
            map: mean(per_threshold_ap.iter().copied()),
            ap50: ap50_idx.and_then(|i| per_threshold_ap[i]),
            mar: mean(per_threshold_recall.iter().copied()),
            per_threshold_ap,
            per_threshold_recall,
            ground_truth: *total_gt,
            detections: *n_dets,
            pr_curves: curves,
        });
    }

    let scored: Vec<&CategoryMetrics> =
        per_category.iter().filter(|c| c.ground_truth > 0).collect();
    let aggregate = AggregateMetrics {
        map: mean(scored.iter().map(|c| c.map)),
        ap50: mean(scored.iter().map(|c| c.ap50)),
        mar: mean(scored.iter().map(|c| c.mar)),
        categories: scored.len(),
    };

    Ok(EvaluationReport {
        per_category,
        aggregate,
        counts,
        iou_thresholds: config.iou_thresholds.clone(),
        max_dets: config.max_dets,
        split_digest: split.manifest_digest.clone(),
        prompt,
    })
}

/// Scores `dets` against the ground truth of the split's test images.
pub fn evaluate(
    ds: &DetectionDataset,
    split: &SplitResult,
    dets: &[Detection],
    config: &EvalConfig,
) -> Result<EvaluationReport> {
    evaluate_subset(ds, split, dets, config, None, None)
}
