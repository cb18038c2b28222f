//! Set-prediction matching and loss.
//!
//! Predictions and targets are matched one-to-one by [`hungarian`] over a
//! combined cost (normalized L1 box distance, `1 - GIoU`, and a token
//! alignment term), and the matched pairs are scored with the same three
//! terms:
//!
//! ```text
//! L = w_l1 * L1 + w_giou * L_GIoU + w_cons * L_cons
//! ```
//!
//! `L_cons` is the mean per-token sigmoid binary cross-entropy between a
//! prediction's token logits and the target's positive-token mask. All sums
//! are divided by the number of targets (at least 1).

mod hungarian;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, BoundingBox};

pub use hungarian::{hungarian, Assignment, CostMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub l1: f64,
    pub giou: f64,
    pub contrastive: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            l1: 1.0,
            giou: 1.0,
            contrastive: 1.0,
        }
    }
}

impl LossWeights {
    fn validate(&self) -> Result<()> {
        if [self.l1, self.giou, self.contrastive]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0)
        {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "loss weights must be finite and non-negative: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub weights: LossWeights,
    /// Charge unmatched predictions the alignment loss against an
    /// all-negative mask.
    pub penalize_unmatched: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            penalize_unmatched: true,
        }
    }
}

/// A predicted box with its alignment logits over the prompt tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedObject {
    pub bbox: BoundingBox,
    pub logits: Vec<f64>,
}

/// A ground-truth box with the prompt tokens that describe it.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetObject {
    pub bbox: BoundingBox,
    pub positive_tokens: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub l1: f64,
    pub giou_loss: f64,
    pub contrastive: f64,
    pub total: f64,
    pub weights: LossWeights,
    pub matched: usize,
    /// Set when nothing could be matched (no predictions or no targets).
    pub no_matches: bool,
}

/// Binary cross-entropy of `sigmoid(logit)` against `target`, evaluated in
/// the overflow-free form `max(x, 0) - x*y + ln(1 + e^-|x|)`.
fn bce_with_logit(logit: f64, target: bool) -> f64 {
    let y = if target { 1.0 } else { 0.0 };
    logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p()
}

/// Mean per-token BCE between logits and a positive-token mask.
pub fn alignment_cost(logits: &[f64], mask: &[bool]) -> Result<f64> {
    if logits.len() != mask.len() {
        return Err(Error::validation(format!(
            "token dimension mismatch: {} logits vs {} mask entries",
            logits.len(),
            mask.len()
        )));
    }
    if logits.is_empty() {
        return Ok(0.0);
    }
    if let Some(x) = logits.iter().find(|x| !x.is_finite()) {
        return Err(Error::validation(format!("non-finite logit {x}")));
    }
    let sum: f64 = logits
        .iter()
        .zip(mask)
        .map(|(&x, &y)| bce_with_logit(x, y))
        .sum();
    Ok(sum / logits.len() as f64)
}

fn check_token_dims(preds: &[PredictedObject], targets: &[TargetObject]) -> Result<()> {
    let mut dims = preds
        .iter()
        .map(|p| p.logits.len())
        .chain(targets.iter().map(|t| t.positive_tokens.len()));
    if let Some(first) = dims.next() {
        if let Some(other) = dims.find(|&d| d != first) {
            return Err(Error::validation(format!(
                "token dimension mismatch: {first} vs {other}"
            )));
        }
    }
    Ok(())
}

/// Per-pair terms, unweighted.
struct PairTerms {
    l1: f64,
    giou_loss: f64,
    alignment: f64,
}

fn pair_terms(p: &PredictedObject, t: &TargetObject, img_w: f64, img_h: f64) -> Result<PairTerms> {
    Ok(PairTerms {
        l1: geometry::l1_box_distance(&p.bbox, &t.bbox, img_w, img_h)?,
        giou_loss: 1.0 - geometry::giou(&p.bbox, &t.bbox)?,
        alignment: alignment_cost(&p.logits, &t.positive_tokens)?,
    })
}

/// `cost(i, j) = w_l1 * L1 + w_giou * (1 - GIoU) + w_cons * alignment`.
pub fn build_match_cost(
    preds: &[PredictedObject],
    targets: &[TargetObject],
    img_w: f64,
    img_h: f64,
    weights: &LossWeights,
) -> Result<CostMatrix> {
    weights.validate()?;
    check_token_dims(preds, targets)?;
    let mut data = Vec::with_capacity(preds.len() * targets.len());
    for p in preds {
        for t in targets {
            let terms = pair_terms(p, t, img_w, img_h)?;
            data.push(
                weights.l1 * terms.l1
                    + weights.giou * terms.giou_loss
                    + weights.contrastive * terms.alignment,
            );
        }
    }
    CostMatrix::new(preds.len(), targets.len(), data)
}

/// Loss of an already-fixed assignment.
pub fn loss_for_assignment(
    preds: &[PredictedObject],
    targets: &[TargetObject],
    assignment: &Assignment,
    img_w: f64,
    img_h: f64,
    config: &LossConfig,
) -> Result<LossBreakdown> {
    let (mut l1, mut giou_loss, mut contrastive) = (0.0, 0.0, 0.0);
    for &(i, j) in &assignment.pairs {
        let terms = pair_terms(&preds[i], &targets[j], img_w, img_h)?;
        l1 += terms.l1;
        giou_loss += terms.giou_loss;
        contrastive += terms.alignment;
    }
    if config.penalize_unmatched {
        for &i in &assignment.unmatched_predictions {
            let negatives = vec![false; preds[i].logits.len()];
            contrastive += alignment_cost(&preds[i].logits, &negatives)?;
        }
    }
    let norm = targets.len().max(1) as f64;
    let (l1, giou_loss, contrastive) = (l1 / norm, giou_loss / norm, contrastive / norm);
    let w = config.weights;
    Ok(LossBreakdown {
        l1,
        giou_loss,
        contrastive,
        total: w.l1 * l1 + w.giou * giou_loss + w.contrastive * contrastive,
        weights: w,
        matched: assignment.pairs.len(),
        no_matches: assignment.pairs.is_empty(),
    })
}

/// Matches predictions to targets and evaluates the composite loss.
pub fn set_loss(
    preds: &[PredictedObject],
    targets: &[TargetObject],
    img_w: f64,
    img_h: f64,
    config: &LossConfig,
) -> Result<LossBreakdown> {
    let costs = build_match_cost(preds, targets, img_w, img_h, &config.weights)?;
    let assignment = hungarian(&costs);
    loss_for_assignment(preds, targets, &assignment, img_w, img_h, config)
}

// Loss report file format.

#[derive(Debug, Clone, Deserialize)]
pub struct LossInput {
    pub images: Vec<LossInputImage>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct LossInputImage {
    pub image_id: u64,
    pub width: f64,
    pub height: f64,
    pub predictions: Vec<LossInputPrediction>,
    pub targets: Vec<LossInputTarget>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct LossInputPrediction {
    /// `[x, y, w, h]` in pixels.
    pub bbox: [f64; 4],
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct LossInputTarget {
    /// `[x, y, w, h]` in pixels.
    pub bbox: [f64; 4],
    pub positive_tokens: Vec<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ImageLoss {
    pub image_id: u64,
    #[serde(flatten)]
    pub breakdown: LossBreakdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossMeans {
    pub l1: f64,
    pub giou_loss: f64,
    pub contrastive: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LossReport {
    pub images: Vec<ImageLoss>,
    pub mean: LossMeans,
}

fn xywh(b: [f64; 4]) -> Result<BoundingBox> {
    BoundingBox::from_xywh(b[0], b[1], b[2], b[3])
}

/// Evaluates every image of a loss input (in parallel; the report keeps the
/// input order).
pub fn loss_report(input: &LossInput, config: &LossConfig) -> Result<LossReport> {
    let images = input
        .images
        .par_iter()
        .map(|img| {
            let preds = img
                .predictions
                .iter()
                .map(|p| {
                    Ok(PredictedObject {
                        bbox: xywh(p.bbox)?,
                        logits: p.logits.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let targets = img
                .targets
                .iter()
                .map(|t| {
                    Ok(TargetObject {
                        bbox: xywh(t.bbox)?,
                        positive_tokens: t.positive_tokens.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let breakdown = set_loss(&preds, &targets, img.width, img.height, config)
                .map_err(|e| Error::validation(format!("image {}: {e}", img.image_id)))?;
            Ok(ImageLoss {
                image_id: img.image_id,
                breakdown,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n = images.len().max(1) as f64;
    let sum =
        |f: fn(&LossBreakdown) -> f64| images.iter().map(|i| f(&i.breakdown)).sum::<f64>() / n;
    let mean = LossMeans {
        l1: sum(|b| b.l1),
        giou_loss: sum(|b| b.giou_loss),
        contrastive: sum(|b| b.contrastive),
        total: sum(|b| b.total),
    };
    Ok(LossReport { images, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn bx(c: [f64; 4]) -> BoundingBox {
        BoundingBox::new(c[0], c[1], c[2], c[3]).unwrap()
    }

    fn saturated(mask: &[bool]) -> Vec<f64> {
        mask.iter().map(|&m| if m { 50.0 } else { -50.0 }).collect()
    }

    #[test]
    fn bce_reference_points() {
        assert!((bce_with_logit(0.0, true) - LN_2).abs() < 1e-15);
        assert!((bce_with_logit(0.0, false) - LN_2).abs() < 1e-15);
        // sigmoid(2) = 0.8807970779778823
        let p: f64 = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((bce_with_logit(2.0, true) + p.ln()).abs() < 1e-12);
        assert!((bce_with_logit(2.0, false) + (1.0 - p).ln()).abs() < 1e-12);
        assert!(bce_with_logit(-800.0, true).is_finite());
    }

    #[test]
    fn perfect_prediction_costs_nothing() {
        let mask = vec![true, false, false, true];
        let p = PredictedObject {
            bbox: bx([10.0, 10.0, 40.0, 30.0]),
            logits: saturated(&mask),
        };
        let t = TargetObject {
            bbox: bx([10.0, 10.0, 40.0, 30.0]),
            positive_tokens: mask,
        };
        let c = build_match_cost(&[p], &[t], 100.0, 100.0, &LossWeights::default()).unwrap();
        assert!(c.get(0, 0) < 1e-12);
    }

    #[test]
    fn uninformative_logits_cost_ln2() {
        let mask = vec![true, false, true];
        let p = PredictedObject {
            bbox: bx([0.0, 0.0, 5.0, 5.0]),
            logits: vec![0.0; 3],
        };
        let t = TargetObject {
            bbox: bx([0.0, 0.0, 5.0, 5.0]),
            positive_tokens: mask,
        };
        let w = LossWeights {
            contrastive: 2.5,
            ..LossWeights::default()
        };
        let c = build_match_cost(&[p], &[t], 10.0, 10.0, &w).unwrap();
        assert!((c.get(0, 0) - 2.5 * LN_2).abs() < 1e-12);
    }

    #[test]
    fn disjoint_boxes_giou_term() {
        let w = LossWeights {
            l1: 0.0,
            giou: 3.0,
            contrastive: 0.0,
        };
        let p = PredictedObject {
            bbox: bx([0.0, 0.0, 1.0, 1.0]),
            logits: vec![],
        };
        let t = TargetObject {
            bbox: bx([2.0, 0.0, 3.0, 1.0]),
            positive_tokens: vec![],
        };
        let c = build_match_cost(&[p], &[t], 10.0, 10.0, &w).unwrap();
        assert!((c.get(0, 0) - 4.0 / 3.0 * 3.0).abs() < 1e-12);
    }

    #[test]
    fn token_dimension_mismatch() {
        let p = PredictedObject {
            bbox: bx([0.0, 0.0, 1.0, 1.0]),
            logits: vec![0.0; 3],
        };
        let t = TargetObject {
            bbox: bx([0.0, 0.0, 1.0, 1.0]),
            positive_tokens: vec![true; 4],
        };
        assert!(build_match_cost(&[p], &[t], 10.0, 10.0, &LossWeights::default()).is_err());
    }

    #[test]
    fn no_predictions_sets_flag() {
        let t = TargetObject {
            bbox: bx([0.0, 0.0, 1.0, 1.0]),
            positive_tokens: vec![true],
        };
        let b = set_loss(&[], &[t], 10.0, 10.0, &LossConfig::default()).unwrap();
        assert_eq!(
            (b.l1, b.giou_loss, b.contrastive, b.total),
            (0.0, 0.0, 0.0, 0.0)
        );
        assert!(b.no_matches);
    }

    #[test]
    fn one_pair_from_the_l1_example() {
        let mask = vec![true, false];
        let p = PredictedObject {
            bbox: bx([0.0, 0.0, 20.0, 10.0]),
            logits: saturated(&mask),
        };
        let t = TargetObject {
            bbox: bx([0.0, 0.0, 10.0, 10.0]),
            positive_tokens: mask,
        };
        let b = set_loss(&[p], &[t], 100.0, 100.0, &LossConfig::default()).unwrap();
        assert!((b.l1 - 0.15).abs() < 1e-12);
        // Nested boxes: GIoU equals IoU = 100 / 200.
        assert!((b.giou_loss - 0.5).abs() < 1e-12);
        assert!(b.contrastive < 1e-20);
        assert_eq!(b.total, b.l1 + b.giou_loss + b.contrastive);
    }

    #[test]
    fn unmatched_predictions_pay_alignment_only_when_enabled() {
        let mask = vec![true, false];
        let good = PredictedObject {
            bbox: bx([0.0, 0.0, 10.0, 10.0]),
            logits: saturated(&mask),
        };
        let extra = PredictedObject {
            bbox: bx([50.0, 50.0, 60.0, 60.0]),
            logits: vec![0.0, 0.0],
        };
        let t = TargetObject {
            bbox: bx([0.0, 0.0, 10.0, 10.0]),
            positive_tokens: mask,
        };
        let on = set_loss(
            &[good.clone(), extra.clone()],
            std::slice::from_ref(&t),
            100.0,
            100.0,
            &LossConfig::default(),
        )
        .unwrap();
        assert!((on.contrastive - LN_2).abs() < 1e-12);
        let off_cfg = LossConfig {
            penalize_unmatched: false,
            ..LossConfig::default()
        };
        let off = set_loss(&[good, extra], &[t], 100.0, 100.0, &off_cfg).unwrap();
        assert!(off.contrastive < 1e-20);
    }

    #[test]
    fn negative_weights_rejected() {
        let w = LossWeights {
            l1: -1.0,
            ..LossWeights::default()
        };
        assert!(build_match_cost(&[], &[], 1.0, 1.0, &w).is_err());
    }
}
