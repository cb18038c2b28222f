//! Canonical in-memory detection corpus and its file formats.
//!
//! A [`DetectionDataset`] is immutable once built. Construction validates
//! referential integrity and normalizes every list into ascending id order,
//! so two datasets loaded from files that differ only in array order compare
//! equal.

mod coco;
mod labelme;
mod predictions;
mod stats;

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

pub(crate) use coco::coco_json;
pub use coco::{load_coco, write_coco, CocoLoad};
pub use labelme::{load_labelme, LabelmeImport};
pub use predictions::{load_predictions, write_predictions};
pub use stats::{compute_stats, CategoryStats, DatasetStats};

pub type CategoryId = u64;
pub type ImageId = u64;
pub type InstanceId = u64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Category {
    pub id: CategoryId,
    pub name: String,
}

impl Category {
    pub fn new(id: CategoryId, name: impl Into<String>) -> Self {
        Self {
            id,
            name: name.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub id: ImageId,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    /// Where the image was collected, e.g. "Michigan".
    pub region: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthInstance {
    pub id: InstanceId,
    pub image_id: ImageId,
    pub category_id: CategoryId,
    pub bbox: BoundingBox,
    /// Free-form tags such as `occlusion = "branch"`.
    pub attributes: BTreeMap<String, String>,
    pub iscrowd: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: ImageId,
    pub category_id: CategoryId,
    pub bbox: BoundingBox,
    pub score: f64,
    /// Referring expression the detection answers, if any.
    pub prompt: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionDataset {
    categories: Vec<Category>,
    images: Vec<ImageRecord>,
    instances: Vec<GroundTruthInstance>,
    image_index: HashMap<ImageId, usize>,
    category_index: HashMap<CategoryId, usize>,
}

/// Case-folded, whitespace-trimmed form used for name comparisons.
pub(crate) fn fold_name(name: &str) -> String {
    name.trim().to_lowercase()
}

impl DetectionDataset {
    /// Validates and normalizes a dataset. Ground-truth boxes must lie inside
    /// their image; use [`DetectionDataset::new_clamped`] to clamp instead.
    pub fn new(
        categories: Vec<Category>,
        images: Vec<ImageRecord>,
        instances: Vec<GroundTruthInstance>,
    ) -> Result<Self> {
        Self::build(categories, images, instances, false).map(|(ds, _)| ds)
    }

    /// Like [`DetectionDataset::new`] but clamps out-of-image boxes, returning
    /// how many were changed.
    pub fn new_clamped(
        categories: Vec<Category>,
        images: Vec<ImageRecord>,
        instances: Vec<GroundTruthInstance>,
    ) -> Result<(Self, usize)> {
        Self::build(categories, images, instances, true)
    }

    fn build(
        mut categories: Vec<Category>,
        mut images: Vec<ImageRecord>,
        mut instances: Vec<GroundTruthInstance>,
        clamp: bool,
    ) -> Result<(Self, usize)> {
        categories.sort_by_key(|c| c.id);
        images.sort_by_key(|i| i.id);
        instances.sort_by_key(|i| i.id);

        let mut names = HashSet::new();
        for pair in categories.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::integrity(format!(
                    "duplicate category {}",
                    pair[0].id
                )));
            }
        }
        for c in &categories {
            if c.id == 0 {
                return Err(Error::validation("category ids must be positive"));
            }
            if !names.insert(fold_name(&c.name)) {
                return Err(Error::integrity(format!(
                    "duplicate category name {:?}",
                    c.name
                )));
            }
        }
        for pair in images.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::integrity(format!("duplicate image {}", pair[0].id)));
            }
        }
        for img in &images {
            if img.id == 0 {
                return Err(Error::validation("image ids must be positive"));
            }
            if img.width == 0 || img.height == 0 {
                return Err(Error::validation(format!(
                    "image {} has non-positive dimensions {}x{}",
                    img.id, img.width, img.height
                )));
            }
        }
        for pair in instances.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::integrity(format!(
                    "duplicate annotation {}",
                    pair[0].id
                )));
            }
        }

        let image_index: HashMap<_, _> =
            images.iter().enumerate().map(|(i, r)| (r.id, i)).collect();
        let category_index: HashMap<_, _> = categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.id, i))
            .collect();

        let mut clamped = 0;
        for inst in &mut instances {
            if inst.id == 0 {
                return Err(Error::validation("annotation ids must be positive"));
            }
            let img = image_index
                .get(&inst.image_id)
                .map(|&i| &images[i])
                .ok_or_else(|| {
                    Error::integrity(format!(
                        "annotation {} references missing image {}",
                        inst.id, inst.image_id
                    ))
                })?;
            if !category_index.contains_key(&inst.category_id) {
                return Err(Error::integrity(format!(
                    "annotation {} references missing category {}",
                    inst.id, inst.category_id
                )));
            }
            let (bbox, changed) = inst.bbox.clamp_to(img.width as f64, img.height as f64);
            if changed {
                if !clamp {
                    return Err(Error::validation(format!(
                        "annotation {} lies outside image {}",
                        inst.id, img.id
                    )));
                }
                log::warn!(
                    "annotation {} clamped to the bounds of image {}",
                    inst.id,
                    img.id
                );
                inst.bbox = bbox;
                clamped += 1;
            }
        }

        Ok((
            Self {
                categories,
                images,
                instances,
                image_index,
                category_index,
            },
            clamped,
        ))
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn instances(&self) -> &[GroundTruthInstance] {
        &self.instances
    }

    pub fn image(&self, id: ImageId) -> Option<&ImageRecord> {
        self.image_index.get(&id).map(|&i| &self.images[i])
    }

    pub fn category(&self, id: CategoryId) -> Option<&Category> {
        self.category_index.get(&id).map(|&i| &self.categories[i])
    }

    /// Case-insensitive, whitespace-trimmed lookup.
    pub fn category_by_name(&self, name: &str) -> Option<&Category> {
        let key = fold_name(name);
        self.categories.iter().find(|c| fold_name(&c.name) == key)
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Instance count per `(image, category)`.
    pub fn instance_counts(&self) -> HashMap<(ImageId, CategoryId), usize> {
        let mut counts = HashMap::new();
        for inst in &self.instances {
            *counts.entry((inst.image_id, inst.category_id)).or_insert(0) += 1;
        }
        counts
    }

    /// Majority category of every annotated image (ties go to the lowest
    /// category id). Images without instances are absent from the map.
    pub fn majority_categories(&self) -> BTreeMap<ImageId, CategoryId> {
        let mut per_image: BTreeMap<ImageId, BTreeMap<CategoryId, usize>> = BTreeMap::new();
        for inst in &self.instances {
            *per_image
                .entry(inst.image_id)
                .or_default()
                .entry(inst.category_id)
                .or_insert(0) += 1;
        }
        per_image
            .into_iter()
            .map(|(img, counts)| {
                // Equal counts rank the lower category id higher.
                let (&cat, _) = counts
                    .iter()
                    .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                    .expect("non-empty count map");
                (img, cat)
            })
            .collect()
    }
}
