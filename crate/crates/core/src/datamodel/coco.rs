//! COCO-style annotation files (`images` / `annotations` / `categories`).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Category, DetectionDataset, GroundTruthInstance, ImageRecord};
use crate::error::{Error, Result};
use crate::geometry::{self, BoundingBox};

/// A loaded dataset plus the number of ground-truth boxes that had to be
/// clamped into their image.
#[derive(Debug, Clone)]
pub struct CocoLoad {
    pub dataset: DetectionDataset,
    pub clamped: usize,
}

#[derive(Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

#[derive(Serialize, Deserialize)]
struct CocoImage {
    id: u64,
    file_name: String,
    width: i64,
    height: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    region: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CrowdFlag {
    Int(i64),
    Bool(bool),
}

impl Default for CrowdFlag {
    fn default() -> Self {
        CrowdFlag::Int(0)
    }
}

#[derive(Deserialize)]
struct CocoAnnotation {
    id: u64,
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
    #[serde(default)]
    iscrowd: CrowdFlag,
    #[serde(default)]
    attributes: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct CocoAnnotationOut<'a> {
    id: u64,
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
    area: f64,
    iscrowd: u8,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    attributes: &'a BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct CocoCategory {
    id: u64,
    name: String,
}

#[derive(Serialize)]
struct CocoFileOut<'a> {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotationOut<'a>>,
    categories: Vec<CocoCategory>,
}

pub fn load_coco(path: impl AsRef<Path>) -> Result<CocoLoad> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_coco(path, &text)
}

pub(crate) fn parse_coco(path: &Path, text: &str) -> Result<CocoLoad> {
    let file: CocoFile = serde_json::from_str(text).map_err(|e| Error::json(path, text, e))?;

    let categories = file
        .categories
        .into_iter()
        .map(|c| Category::new(c.id, c.name))
        .collect();

    let images = file
        .images
        .into_iter()
        .map(|img| {
            if img.width <= 0
                || img.height <= 0
                || img.width > u32::MAX as i64
                || img.height > u32::MAX as i64
            {
                return Err(Error::validation(format!(
                    "image {} has invalid dimensions {}x{}",
                    img.id, img.width, img.height
                )));
            }
            Ok(ImageRecord {
                id: img.id,
                file_name: img.file_name,
                width: img.width as u32,
                height: img.height as u32,
                region: img.region,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let instances = file
        .annotations
        .into_iter()
        .map(|a| {
            let [x, y, w, h] = a.bbox;
            let bbox = BoundingBox::from_xywh(x, y, w, h)
                .map_err(|e| Error::validation(format!("annotation {}: {e}", a.id)))?;
            let iscrowd = match a.iscrowd {
                CrowdFlag::Int(0) | CrowdFlag::Bool(false) => false,
                CrowdFlag::Int(1) | CrowdFlag::Bool(true) => true,
                CrowdFlag::Int(v) => {
                    return Err(Error::validation(format!(
                        "annotation {}: iscrowd must be 0 or 1, got {v}",
                        a.id
                    )))
                }
            };
            Ok(GroundTruthInstance {
                id: a.id,
                image_id: a.image_id,
                category_id: a.category_id,
                bbox,
                attributes: a.attributes,
                iscrowd,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let (dataset, clamped) = DetectionDataset::new_clamped(categories, images, instances)?;
    if clamped > 0 {
        log::warn!("{}: clamped {clamped} out-of-image boxes", path.display());
    }
    Ok(CocoLoad { dataset, clamped })
}

pub(crate) fn coco_json(ds: &DetectionDataset) -> String {
    let out = CocoFileOut {
        images: ds
            .images()
            .iter()
            .map(|i| CocoImage {
                id: i.id,
                file_name: i.file_name.clone(),
                width: i.width as i64,
                height: i.height as i64,
                region: i.region.clone(),
            })
            .collect(),
        annotations: ds
            .instances()
            .iter()
            .map(|a| CocoAnnotationOut {
                id: a.id,
                image_id: a.image_id,
                category_id: a.category_id,
                bbox: a.bbox.to_xywh(),
                area: geometry::area(&a.bbox),
                iscrowd: a.iscrowd as u8,
                attributes: &a.attributes,
            })
            .collect(),
        categories: ds
            .categories()
            .iter()
            .map(|c| CocoCategory {
                id: c.id,
                name: c.name.clone(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string(&out).expect("dataset serializes");
    s.push('\n');
    s
}

pub fn write_coco(ds: &DetectionDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, coco_json(ds)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::testutil::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<CocoLoad> {
        parse_coco(Path::new("mem.json"), text)
    }

    const MINIMAL: &str = r#"{
        "images": [{"id": 1, "file_name": "a.jpg", "width": 640, "height": 480}],
        "annotations": [{"id": 1, "image_id": 1, "category_id": 1, "bbox": [10, 20, 30, 40], "iscrowd": 0}],
        "categories": [{"id": 1, "name": "apple"}]
    }"#;

    #[test]
    fn minimal_file() {
        let ds = parse(MINIMAL).unwrap().dataset;
        assert_eq!(
            (
                ds.images().len(),
                ds.instances().len(),
                ds.categories().len()
            ),
            (1, 1, 1)
        );
        assert_eq!(ds.instances()[0].bbox.corners(), [10.0, 20.0, 40.0, 60.0]);
    }

    #[test]
    fn dangling_image_reference() {
        let text = MINIMAL.replace("\"image_id\": 1", "\"image_id\": 99");
        let err = parse(&text).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
        assert!(err.to_string().contains("image 99"));
    }

    #[test]
    fn negative_dimensions_and_sizes() {
        let text = MINIMAL.replace("\"width\": 640", "\"width\": -640");
        assert!(matches!(parse(&text).unwrap_err(), Error::Validation(_)));
        let text = MINIMAL.replace("[10, 20, 30, 40]", "[10, 20, -30, 40]");
        assert!(matches!(parse(&text).unwrap_err(), Error::Validation(_)));
    }

    #[test]
    fn malformed_json_reports_offset() {
        let err = parse("{\"images\": [").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        assert!(err.to_string().contains("byte"));
    }

    #[test]
    fn out_of_image_boxes_are_clamped() {
        let text = MINIMAL.replace("[10, 20, 30, 40]", "[620, 20, 30, 40]");
        let load = parse(&text).unwrap();
        assert_eq!(load.clamped, 1);
        assert_eq!(load.dataset.instances()[0].bbox.x_max(), 640.0);
    }

    #[test]
    fn empty_dataset_writes_three_empty_arrays() {
        let text = coco_json(&DetectionDataset::empty());
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["images"], serde_json::json!([]));
        assert_eq!(v["annotations"], serde_json::json!([]));
        assert_eq!(v["categories"], serde_json::json!([]));
    }

    #[test]
    fn attributes_and_crowd_survive_a_round_trip() {
        let mut inst = instance(1, 1, 1, [1.5, 2.25, 30.125, 40.0]);
        inst.attributes.insert("occlusion".into(), "branch".into());
        inst.iscrowd = true;
        let ds = DetectionDataset::new(
            vec![Category::new(1, "apple")],
            vec![ImageRecord {
                region: Some("Michigan".into()),
                ..image(1, 100, 100)
            }],
            vec![inst],
        )
        .unwrap();
        let text = coco_json(&ds);
        assert!(text.contains("\"attributes\":{\"occlusion\":\"branch\"}"));
        assert_eq!(parse(&text).unwrap().dataset, ds);
    }

    #[test]
    fn loading_ignores_annotation_order() {
        let text = r#"{
            "images": [{"id": 2, "file_name": "b.jpg", "width": 50, "height": 50},
                       {"id": 1, "file_name": "a.jpg", "width": 50, "height": 50}],
            "annotations": [{"id": 3, "image_id": 2, "category_id": 1, "bbox": [1, 1, 2, 2]},
                            {"id": 1, "image_id": 1, "category_id": 1, "bbox": [0, 0, 5, 5]}],
            "categories": [{"id": 1, "name": "lemon"}]
        }"#;
        let swapped = r#"{
            "images": [{"id": 1, "file_name": "a.jpg", "width": 50, "height": 50},
                       {"id": 2, "file_name": "b.jpg", "width": 50, "height": 50}],
            "annotations": [{"id": 1, "image_id": 1, "category_id": 1, "bbox": [0, 0, 5, 5]},
                            {"id": 3, "image_id": 2, "category_id": 1, "bbox": [1, 1, 2, 2]}],
            "categories": [{"id": 1, "name": "lemon"}]
        }"#;
        assert_eq!(
            parse(text).unwrap().dataset,
            parse(swapped).unwrap().dataset
        );
    }

    fn arb_dataset() -> impl Strategy<Value = DetectionDataset> {
        let boxes = prop::collection::vec(
            (
                1u64..=3,
                1u64..=4,
                0.0..90.0f64,
                0.0..90.0f64,
                0.0..10.0f64,
                0.0..10.0f64,
                any::<bool>(),
            ),
            0..20,
        );
        boxes.prop_map(|rows| {
            let cats = vec![
                Category::new(1, "apple"),
                Category::new(2, "orange"),
                Category::new(3, "lemon"),
            ];
            let imgs = (1..=4).map(|i| image(i, 100, 100)).collect();
            let insts = rows
                .into_iter()
                .enumerate()
                .map(|(k, (c, i, x, y, w, h, occluded))| {
                    let mut inst = instance(k as u64 + 1, i, c, [x, y, x + w, y + h]);
                    if occluded {
                        inst.attributes.insert("occlusion".into(), "leaf".into());
                    }
                    inst
                })
                .collect();
            DetectionDataset::new(cats, imgs, insts).unwrap()
        })
    }

    proptest! {
        #[test]
        fn write_then_load_is_identity(ds in arb_dataset()) {
            let back = parse(&coco_json(&ds)).unwrap();
            prop_assert_eq!(back.clamped, 0);
            prop_assert_eq!(back.dataset, ds);
        }
    }
}
