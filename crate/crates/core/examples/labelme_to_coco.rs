//! Converts a directory of Labelme polygon files into one COCO file.
use std::collections::HashMap;
use std::path::Path;

use fruitbench::datamodel::{load_labelme, write_coco, Category};

fn main() -> fruitbench::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let map: HashMap<String, Category> = ["apple", "orange", "lemon", "grapefruit", "tangerine"]
        .iter()
        .enumerate()
        .map(|(i, n)| (n.to_string(), Category::new(i as u64 + 1, *n)))
        .collect();

    let import = load_labelme(root.join("labelme"), &map)?;
    let ds = &import.dataset;
    println!(
        "{} images, {} instances",
        ds.images().len(),
        ds.instances().len()
    );
    for (label, n) in &import.unmapped {
        println!("dropped {n} shape(s) labelled {label:?}");
    }
    println!("{} box(es) clamped to their image", import.clamped);

    let out = std::env::temp_dir().join("labelme_to_coco.json");
    write_coco(ds, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
