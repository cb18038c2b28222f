//! Per-category dataset statistics: image and box counts, box density and
//! mean instance size.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{CategoryId, DetectionDataset, ImageId};
use crate::geometry;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryStats {
    pub category_id: Option<CategoryId>,
    pub name: String,
    pub image_count: usize,
    pub bbox_count: usize,
    /// `bbox_count / image_count`; absent when there are no images.
    pub avg_bboxes_per_image: Option<f64>,
    /// Mean box area in square pixels; absent when there are no boxes.
    pub avg_size_per_instance: Option<f64>,
    /// Distinct collection regions, in order of first appearance.
    pub regions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub categories: Vec<CategoryStats>,
    pub total: CategoryStats,
}

#[derive(Default)]
struct Accumulator {
    images: BTreeSet<ImageId>,
    boxes: usize,
    area_sum: f64,
}

fn regions_of(ds: &DetectionDataset, images: &BTreeSet<ImageId>) -> Vec<String> {
    let mut regions: Vec<String> = Vec::new();
    for img in ds.images() {
        if !images.contains(&img.id) {
            continue;
        }
        if let Some(r) = &img.region {
            if !regions.contains(r) {
                regions.push(r.clone());
            }
        }
    }
    regions
}

fn ratio(num: f64, den: usize) -> Option<f64> {
    (den > 0).then(|| num / den as f64)
}

/// The total row counts every image in the dataset (annotated or not) and
/// averages box area over every instance.
pub fn compute_stats(ds: &DetectionDataset) -> DatasetStats {
    let mut per_cat: BTreeMap<CategoryId, Accumulator> = ds
        .categories()
        .iter()
        .map(|c| (c.id, Accumulator::default()))
        .collect();
    let mut total_area = 0.0;
    for inst in ds.instances() {
        let acc = per_cat
            .get_mut(&inst.category_id)
            .expect("validated reference");
        let a = geometry::area(&inst.bbox);
        acc.images.insert(inst.image_id);
        acc.boxes += 1;
        acc.area_sum += a;
        total_area += a;
    }

    let categories = ds
        .categories()
        .iter()
        .map(|c| {
            let acc = &per_cat[&c.id];
            CategoryStats {
                category_id: Some(c.id),
                name: c.name.clone(),
                image_count: acc.images.len(),
                bbox_count: acc.boxes,
                avg_bboxes_per_image: ratio(acc.boxes as f64, acc.images.len()),
                avg_size_per_instance: ratio(acc.area_sum, acc.boxes),
                regions: regions_of(ds, &acc.images),
            }
        })
        .collect();

    let all_images: BTreeSet<ImageId> = ds.images().iter().map(|i| i.id).collect();
    let n_boxes = ds.instances().len();
    let total = CategoryStats {
        category_id: None,
        name: "Total".to_string(),
        image_count: all_images.len(),
        bbox_count: n_boxes,
        avg_bboxes_per_image: ratio(n_boxes as f64, all_images.len()),
        avg_size_per_instance: ratio(total_area, n_boxes),
        regions: regions_of(ds, &all_images),
    };
    DatasetStats { categories, total }
}
