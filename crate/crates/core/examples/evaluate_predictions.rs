//! COCO-style mAP / AP50 / mAR on the test portion of a split.
use std::path::Path;

use fruitbench::datamodel::{load_coco, load_predictions};
use fruitbench::evaluation::{evaluate, EvalConfig};
use fruitbench::splits::{materialize, SplitSpec};

fn main() -> fruitbench::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic");
    let ds = load_coco(data.join("annotations.json"))?.dataset;
    let split = materialize(&ds, &SplitSpec::train_test(0.6, 0))?;

    for name in ["perfect", "noisy", "empty"] {
        let dets = load_predictions(data.join(format!("predictions_{name}.json")), &ds)?;
        let report = evaluate(&ds, &split, &dets, &EvalConfig::default())?;
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.3}", v));
        println!(
            "{name:<8} mAP {}  AP50 {}  mAR {}",
            fmt(report.aggregate.map),
            fmt(report.aggregate.ap50),
            fmt(report.aggregate.mar)
        );
        if name == "noisy" {
            for c in &report.per_category {
                println!(
                    "  {:<11} AP50 {}  ({} gt, {} dets)",
                    c.name,
                    fmt(c.ap50),
                    c.ground_truth,
                    c.detections
                );
            }
        }
    }
    Ok(())
}
