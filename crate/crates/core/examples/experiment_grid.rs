//! Renders a settings x categories metric grid from a TOML description.
use std::path::Path;

use fruitbench::reporting::{run_grid, ExperimentGrid};

fn main() -> fruitbench::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic/grid.toml");
    let grid = ExperimentGrid::load(path)?;
    let rendered = run_grid(&grid)?;
    if rendered.warnings > 0 {
        eprintln!("{} cell(s) have no value", rendered.warnings);
    }
    print!("{}", rendered.text);
    Ok(())
}
