//! Per-prompt evaluation of referring-expression detections.
use std::collections::BTreeMap;
use std::path::Path;

use fruitbench::datamodel::{load_coco, load_predictions};
use fruitbench::evaluation::{evaluate_rec, EvalConfig, PromptFilter};
use fruitbench::splits::{materialize, SplitSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic");
    let ds = load_coco(data.join("annotations.json"))?.dataset;
    let split = materialize(&ds, &SplitSpec::train_test(0.6, 0))?;
    let dets = load_predictions(data.join("predictions_rec.json"), &ds)?;
    let prompts: BTreeMap<String, PromptFilter> =
        serde_json::from_str(&std::fs::read_to_string(data.join("prompts.json"))?)?;

    for report in evaluate_rec(&ds, &split, &dets, &prompts, &EvalConfig::default())? {
        let apple = report.category("apple").expect("apple metrics");
        println!(
            "{:?}: {} gt, mAP {:.3}",
            report.prompt.as_deref().unwrap_or(""),
            apple.ground_truth,
            apple.map.unwrap_or(0.0)
        );
    }
    Ok(())
}
