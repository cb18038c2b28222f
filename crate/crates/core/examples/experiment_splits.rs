//! The four split protocols and their reproducible manifests.
use std::path::Path;

use fruitbench::datamodel::load_coco;
use fruitbench::splits::{load_manifest, materialize, write_manifest, SplitSpec};

fn main() -> fruitbench::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic/annotations.json");
    let ds = load_coco(path)?.dataset;
    let lemon = ds.category_by_name("lemon").expect("lemon category").id;

    let specs = [
        SplitSpec::train_test(0.6, 0),
        SplitSpec::k_shot(0.6, 1, 0),
        SplitSpec::zero_shot(0.6, 0),
        SplitSpec::cross_class(0.6, lemon, 0),
    ];
    for spec in &specs {
        let sr = materialize(&ds, spec)?;
        println!(
            "{:<12} train {:>2}  test {:>2}  digest {}",
            format!("{:?}", spec.kind),
            sr.train_image_ids.len(),
            sr.test_image_ids.len(),
            &sr.manifest_digest[..16],
        );
    }

    let sr = materialize(&ds, &specs[0])?;
    let out = std::env::temp_dir().join("experiment_splits_manifest.json");
    write_manifest(&sr, &out)?;
    assert_eq!(load_manifest(&out)?, sr);
    assert_eq!(materialize(&ds, &specs[0])?, sr);
    println!("manifest round trip ok: {}", out.display());
    Ok(())
}
