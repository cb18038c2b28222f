//! Import of Labelme per-image annotation files.
//!
//! Every `*.json` file in the directory (sorted by file name) becomes one
//! image; image and instance ids are assigned sequentially from 1 in that
//! order. Rectangles and polygons are both reduced to their axis-aligned
//! bounding box. Labels are matched against the category map after trimming
//! whitespace and case-folding; anything that still does not match is
//! collected in [`LabelmeImport::unmapped`].

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{fold_name, Category, DetectionDataset, GroundTruthInstance, ImageRecord};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

#[derive(Debug, Clone)]
pub struct LabelmeImport {
    pub dataset: DetectionDataset,
    /// Raw label text -> number of shapes dropped because it was not mapped.
    pub unmapped: BTreeMap<String, usize>,
    pub clamped: usize,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct LabelmeFile {
    shapes: Vec<LabelmeShape>,
    image_width: i64,
    image_height: i64,
    #[serde(default)]
    image_path: Option<String>,
}

#[derive(Deserialize)]
struct LabelmeShape {
    label: String,
    points: Vec<[f64; 2]>,
    #[serde(default)]
    shape_type: Option<String>,
    #[serde(default)]
    flags: BTreeMap<String, bool>,
    #[serde(default)]
    attributes: BTreeMap<String, String>,
}

fn shape_box(shape: &LabelmeShape, file: &Path) -> Result<BoundingBox> {
    let kind = shape.shape_type.as_deref().unwrap_or("polygon");
    if kind != "rectangle" && kind != "polygon" {
        return Err(Error::validation(format!(
            "{}: unsupported shape type {kind:?}",
            file.display()
        )));
    }
    if shape.points.len() < 2 {
        return Err(Error::validation(format!(
            "{}: shape {:?} has {} point(s), need at least 2",
            file.display(),
            shape.label,
            shape.points.len()
        )));
    }
    let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
    let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &[x, y] in &shape.points {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    BoundingBox::new(x0, y0, x1, y1)
}

pub fn load_labelme(
    dir: impl AsRef<Path>,
    category_map: &HashMap<String, Category>,
) -> Result<LabelmeImport> {
    let dir = dir.as_ref();
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<_>>()?;
    files.retain(|p| p.extension().is_some_and(|e| e == "json"));
    files.sort();

    let lookup: HashMap<String, &Category> = category_map
        .iter()
        .map(|(k, c)| (fold_name(k), c))
        .collect();
    let mut categories: Vec<Category> = Vec::new();
    for c in category_map.values() {
        if !categories.contains(c) {
            categories.push(c.clone());
        }
    }

    let mut images = Vec::with_capacity(files.len());
    let mut instances = Vec::new();
    let mut unmapped = BTreeMap::new();

    for (idx, file) in files.iter().enumerate() {
        let text = fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
        let parsed: LabelmeFile =
            serde_json::from_str(&text).map_err(|e| Error::json(file, &text, e))?;
        let image_id = idx as u64 + 1;
        let file_name = parsed.image_path.clone().unwrap_or_else(|| {
            file.file_stem()
                .map(|s| s.to_string_lossy().into_owned() + ".jpg")
                .unwrap_or_default()
        });
        if parsed.image_width <= 0 || parsed.image_height <= 0 {
            return Err(Error::validation(format!(
                "{}: invalid image size {}x{}",
                file.display(),
                parsed.image_width,
                parsed.image_height
            )));
        }
        images.push(ImageRecord {
            id: image_id,
            file_name,
            width: parsed.image_width as u32,
            height: parsed.image_height as u32,
            region: None,
        });

        for shape in &parsed.shapes {
            let bbox = shape_box(shape, file)?;
            let Some(cat) = lookup.get(&fold_name(&shape.label)) else {
                *unmapped.entry(shape.label.clone()).or_insert(0) += 1;
                continue;
            };
            let mut attributes = shape.attributes.clone();
            for (k, v) in &shape.flags {
                attributes.entry(k.clone()).or_insert_with(|| v.to_string());
            }
            instances.push(GroundTruthInstance {
                id: instances.len() as u64 + 1,
                image_id,
                category_id: cat.id,
                bbox,
                attributes,
                iscrowd: false,
            });
        }
    }

    for (label, n) in &unmapped {
        log::warn!("label {label:?} not in category map ({n} shapes skipped)");
    }
    let (dataset, clamped) = DetectionDataset::new_clamped(categories, images, instances)?;
    Ok(LabelmeImport {
        dataset,
        unmapped,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) {
        let mut f = fs::File::create(dir.join(name)).unwrap();
        f.write_all(body.as_bytes()).unwrap();
    }

    fn apple_map() -> HashMap<String, Category> {
        HashMap::from([("apple".to_string(), Category::new(1, "apple"))])
    }

    #[test]
    fn rectangle_becomes_one_instance() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "a.json",
            r#"{"shapes": [{"label": "apple", "points": [[30, 40], [10, 20]], "shape_type": "rectangle"}],
                "imageWidth": 100, "imageHeight": 100, "imagePath": "a.jpg"}"#,
        );
        let out = load_labelme(dir.path(), &apple_map()).unwrap();
        assert_eq!(out.dataset.instances().len(), 1);
        let inst = &out.dataset.instances()[0];
        assert_eq!(inst.category_id, 1);
        assert_eq!(inst.bbox.corners(), [10.0, 20.0, 30.0, 40.0]);
        assert_eq!(out.dataset.images()[0].file_name, "a.jpg");
    }

    #[test]
    fn polygon_reduces_to_bounding_box() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "p.json",
            r#"{"shapes": [{"label": "apple", "points": [[1,1],[4,1],[4,3],[1,3]], "shape_type": "polygon"}],
                "imageWidth": 10, "imageHeight": 10}"#,
        );
        let out = load_labelme(dir.path(), &apple_map()).unwrap();
        assert_eq!(
            out.dataset.instances()[0].bbox.corners(),
            [1.0, 1.0, 4.0, 3.0]
        );
    }

    #[test]
    fn labels_match_after_trim_and_case_fold() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "a.json",
            r#"{"shapes": [
                  {"label": "Apple ", "points": [[0,0],[2,2]], "shape_type": "rectangle"},
                  {"label": "apples", "points": [[0,0],[2,2]], "shape_type": "rectangle"},
                  {"label": "pear", "points": [[0,0],[2,2]], "shape_type": "rectangle"},
                  {"label": "pear", "points": [[0,0],[3,3]], "shape_type": "rectangle"}],
                "imageWidth": 10, "imageHeight": 10}"#,
        );
        let out = load_labelme(dir.path(), &apple_map()).unwrap();
        assert_eq!(out.dataset.instances().len(), 1);
        assert_eq!(out.unmapped.get("apples"), Some(&1));
        assert_eq!(out.unmapped.get("pear"), Some(&2));
    }

    #[test]
    fn flags_and_attributes_become_attributes() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "a.json",
            r#"{"shapes": [{"label": "apple", "points": [[0,0],[2,2]], "shape_type": "rectangle",
                             "flags": {"occluded": true}, "attributes": {"occlusion": "branch"}}],
                "imageWidth": 10, "imageHeight": 10}"#,
        );
        let out = load_labelme(dir.path(), &apple_map()).unwrap();
        let attrs = &out.dataset.instances()[0].attributes;
        assert_eq!(attrs["occlusion"], "branch");
        assert_eq!(attrs["occluded"], "true");
    }

    #[test]
    fn short_shapes_and_bad_files_fail() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "a.json",
            r#"{"shapes": [{"label": "apple", "points": [[0,0]], "shape_type": "polygon"}],
                "imageWidth": 10, "imageHeight": 10}"#,
        );
        let err = load_labelme(dir.path(), &apple_map()).unwrap_err();
        assert!(err.to_string().contains("at least 2"), "{err}");

        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "b.json", "{not json");
        assert!(matches!(
            load_labelme(dir.path(), &apple_map()).unwrap_err(),
            Error::Parse { .. }
        ));

        assert!(matches!(
            load_labelme("/nonexistent/dir", &apple_map()).unwrap_err(),
            Error::Io { .. }
        ));
    }
}
