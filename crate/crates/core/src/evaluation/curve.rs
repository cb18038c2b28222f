//! Precision-recall sweep and 101-point interpolated average precision.

use serde::Serialize;

use super::matching::Outcome;

/// Number of fixed recall levels `0.00, 0.01, ..., 1.00`.
pub const RECALL_LEVELS: usize = 101;

/// Recall level `i`, computed as `i / 100` so every level is the double
/// nearest its decimal value.
pub fn recall_level(i: usize) -> f64 {
    i as f64 / 100.0
}

/// One scored detection after matching, with its position in the original
/// detection list (used to break score ties).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredOutcome {
    pub score: f64,
    pub order: usize,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrCurve {
    /// Operating points of the sweep, one per non-ignored detection.
    pub recall: Vec<f64>,
    pub precision: Vec<f64>,
    /// Envelope precision at each of the 101 recall levels.
    pub interpolated: Vec<f64>,
}

impl PrCurve {
    pub fn average_precision(&self) -> f64 {
        self.interpolated.iter().sum::<f64>() / RECALL_LEVELS as f64
    }

    /// Recall at the end of the sweep.
    pub fn final_recall(&self) -> f64 {
        self.recall.last().copied().unwrap_or(0.0)
    }
}

/// Sorts by descending score, then ascending input order.
pub(crate) fn sort_outcomes(entries: &mut [ScoredOutcome]) {
    entries.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.order.cmp(&b.order)));
}

/// Sweeps detections of one category at one threshold over all images.
/// Returns `None` when there is no ground truth and no scored detection.
pub fn pr_curve(entries: &[ScoredOutcome], total_gt: usize) -> Option<PrCurve> {
    let mut sorted: Vec<ScoredOutcome> = entries
        .iter()
        .copied()
        .filter(|e| e.outcome != Outcome::Ignored)
        .collect();
    if total_gt == 0 && sorted.is_empty() {
        return None;
    }
    sort_outcomes(&mut sorted);

    let mut recall = Vec::with_capacity(sorted.len());
    let mut precision = Vec::with_capacity(sorted.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for e in &sorted {
        match e.outcome {
            Outcome::TruePositive => tp += 1,
            Outcome::FalsePositive => fp += 1,
            Outcome::Ignored => unreachable!(),
        }
        recall.push(if total_gt == 0 {
            0.0
        } else {
            tp as f64 / total_gt as f64
        });
        precision.push(tp as f64 / (tp + fp) as f64);
    }

    // Running maximum from the right.
    let mut envelope = precision.clone();
    for i in (1..envelope.len()).rev() {
        if envelope[i] > envelope[i - 1] {
            envelope[i - 1] = envelope[i];
        }
    }

    let mut interpolated = vec![0.0; RECALL_LEVELS];
    let mut idx = 0;
    for (level, slot) in interpolated.iter_mut().enumerate() {
        let r = recall_level(level);
        while idx < recall.len() && recall[idx] < r {
            idx += 1;
        }
        if idx == recall.len() {
            break;
        }
        *slot = envelope[idx];
    }

    Some(PrCurve {
        recall,
        precision,
        interpolated,
    })
}

/// Interpolated AP; `None` when there is neither ground truth nor any
/// scored detection, `0` when there is no ground truth but detections exist.
pub fn average_precision(entries: &[ScoredOutcome], total_gt: usize) -> Option<f64> {
    if total_gt == 0 {
        return pr_curve(entries, 0).map(|_| 0.0);
    }
    pr_curve(entries, total_gt).map(|c| c.average_precision())
}
