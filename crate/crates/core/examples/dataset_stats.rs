//! Per-category statistics table for a COCO file.
use std::path::{Path, PathBuf};

use fruitbench::datamodel::{compute_stats, load_coco};
use fruitbench::reporting::{render_stats_table, OutputFormat};

fn main() -> fruitbench::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/subset/annotations.json")
        });
    let ds = load_coco(&path)?.dataset;
    let stats = compute_stats(&ds);
    print!("{}", render_stats_table(&stats, OutputFormat::Markdown));
    println!();
    print!("{}", render_stats_table(&stats, OutputFormat::Csv));
    Ok(())
}
