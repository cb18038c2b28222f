//! Throughput table from a JSON-lines latency log.
use std::path::Path;

use fruitbench::reporting::{load_timing_log, summarize_timing, OutputFormat};

fn main() -> fruitbench::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic/timing.jsonl");
    let records = load_timing_log(path)?;
    print!("{}", summarize_timing(&records, OutputFormat::Markdown));
    for r in &records {
        println!("{}: {}", r.model, r.summary());
    }
    Ok(())
}
