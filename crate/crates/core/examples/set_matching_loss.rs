//! Optimal one-to-one matching and the set-prediction loss.
use fruitbench::assignment::{
    build_match_cost, hungarian, set_loss, CostMatrix, LossConfig, PredictedObject, TargetObject,
};
use fruitbench::geometry::BoundingBox;

fn main() -> fruitbench::Result<()> {
    let costs = CostMatrix::from_rows(&[
        vec![4.0, 1.0, 3.0],
        vec![2.0, 0.0, 5.0],
        vec![3.0, 2.0, 2.0],
    ])?;
    let a = hungarian(&costs);
    println!("pairs {:?} total {}", a.pairs, a.total_cost);

    let preds = vec![
        PredictedObject {
            bbox: BoundingBox::from_xywh(12.0, 10.0, 30.0, 30.0)?,
            logits: vec![3.0, -2.0],
        },
        PredictedObject {
            bbox: BoundingBox::from_xywh(80.0, 60.0, 20.0, 25.0)?,
            logits: vec![-1.0, 2.5],
        },
        PredictedObject {
            bbox: BoundingBox::from_xywh(0.0, 0.0, 5.0, 5.0)?,
            logits: vec![-4.0, -4.0],
        },
    ];
    let targets = vec![
        TargetObject {
            bbox: BoundingBox::from_xywh(78.0, 62.0, 22.0, 22.0)?,
            positive_tokens: vec![false, true],
        },
        TargetObject {
            bbox: BoundingBox::from_xywh(10.0, 10.0, 32.0, 30.0)?,
            positive_tokens: vec![true, false],
        },
    ];
    let config = LossConfig::default();
    let matching = hungarian(&build_match_cost(
        &preds,
        &targets,
        128.0,
        96.0,
        &config.weights,
    )?);
    println!(
        "matched {:?}, unmatched predictions {:?}",
        matching.pairs, matching.unmatched_predictions
    );

    let loss = set_loss(&preds, &targets, 128.0, 96.0, &config)?;
    println!(
        "l1 {:.4}  giou {:.4}  contrastive {:.4}  total {:.4}",
        loss.l1, loss.giou_loss, loss.contrastive, loss.total
    );
    let lenient = LossConfig {
        penalize_unmatched: false,
        ..config
    };
    println!(
        "without unmatched penalty: {:.4}",
        set_loss(&preds, &targets, 128.0, 96.0, &lenient)?.total
    );
    Ok(())
}
