//! Seeded experiment partitions and their manifests.
//!
//! # Random streams
//!
//! All randomness comes from SplitMix64 (Steele, Lea & Flood), a 64-bit
//! counter-based generator: output `i` is `mix(state0 + (i + 1) * 0x9E3779B97F4A7C15)`
//! with the standard SplitMix64 finalizer as `mix`. Each (purpose, category)
//! pair gets its own stream:
//!
//! ```text
//! state0 = mix(seed ^ mix((purpose << 48) ^ category_id))
//! ```
//!
//! where `purpose` is 1 for the train/test shuffle and 2 for k-shot draws,
//! and images without any instance use `category_id = 0`. Uniform integers
//! in `[0, n)` use rejection sampling (`r % n` after discarding
//! `r < (2^64 - n) mod n`), and shuffles are Fisher-Yates from the last
//! position down, over image ids in ascending order. Any implementation
//! following these steps reproduces the same partitions bit-for-bit.
//!
//! # Stratification
//!
//! Every annotated image belongs to the category with the most instances on
//! it (ties go to the lowest category id). Each category's images are
//! shuffled independently and the first `floor(fraction * n)` go to train.
//!
//! k-shot samples for different `k` are drawn independently; a 5-shot
//! sample is not guaranteed to contain the 1-shot sample.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datamodel::{CategoryId, DetectionDataset, ImageId};
use crate::error::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const PURPOSE_TRAIN_TEST: u64 = 1;
const PURPOSE_K_SHOT: u64 = 2;
/// Stratum used for images that carry no instances.
const BACKGROUND: CategoryId = 0;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// SplitMix64 stream.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(state: u64) -> Self {
        Self { state }
    }

    pub fn for_stream(seed: u64, purpose: u64, category: CategoryId) -> Self {
        Self::new(mix64(seed ^ mix64((purpose << 48) ^ category)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform integer in `[0, n)`; `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        let threshold = n.wrapping_neg() % n;
        loop {
            let r = self.next_u64();
            if r >= threshold {
                return r % n;
            }
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitKind {
    TrainTest,
    KShot,
    CrossClass,
    ZeroShot,
}

impl std::str::FromStr for SplitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train-test" => Ok(SplitKind::TrainTest),
            "k-shot" => Ok(SplitKind::KShot),
            "cross-class" => Ok(SplitKind::CrossClass),
            "zero-shot" => Ok(SplitKind::ZeroShot),
            other => Err(Error::validation(format!("unknown split kind {other:?}"))),
        }
    }
}

/// Declarative split definition.
///
/// Every kind carries `fraction`: for k-shot and zero-shot it defines the
/// train pool / test partition the split is drawn from, which makes any
/// spec re-materializable from the dataset alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub kind: SplitKind,
    pub fraction: Option<f64>,
    pub k: Option<u32>,
    pub held_out: Option<CategoryId>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn train_test(fraction: f64, seed: u64) -> Self {
        Self {
            kind: SplitKind::TrainTest,
            fraction: Some(fraction),
            k: None,
            held_out: None,
            seed,
        }
    }

    pub fn k_shot(fraction: f64, k: u32, seed: u64) -> Self {
        Self {
            kind: SplitKind::KShot,
            k: Some(k),
            ..Self::train_test(fraction, seed)
        }
    }

    pub fn zero_shot(fraction: f64, seed: u64) -> Self {
        Self {
            kind: SplitKind::ZeroShot,
            ..Self::train_test(fraction, seed)
        }
    }

    pub fn cross_class(fraction: f64, held_out: CategoryId, seed: u64) -> Self {
        Self {
            kind: SplitKind::CrossClass,
            held_out: Some(held_out),
            ..Self::train_test(fraction, seed)
        }
    }

    /// Checks that exactly the fields required by `kind` are present.
    pub fn validate(&self) -> Result<()> {
        let fraction = self
            .fraction
            .ok_or_else(|| Error::validation("split spec needs a fraction"))?;
        check_fraction(fraction)?;
        let needs_k = self.kind == SplitKind::KShot;
        let needs_held_out = self.kind == SplitKind::CrossClass;
        if self.k.is_some() != needs_k {
            return Err(Error::validation(format!(
                "field k is {} for split kind {:?}",
                if needs_k { "required" } else { "not allowed" },
                self.kind
            )));
        }
        if self.held_out.is_some() != needs_held_out {
            return Err(Error::validation(format!(
                "field held_out is {} for split kind {:?}",
                if needs_held_out {
                    "required"
                } else {
                    "not allowed"
                },
                self.kind
            )));
        }
        Ok(())
    }
}

fn check_fraction(fraction: f64) -> Result<()> {
    if fraction > 0.0 && fraction < 1.0 {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "train fraction must lie in (0, 1), got {fraction}"
        )))
    }
}

/// Number of train images for a stratum of `n`. The product is nudged by
/// 1e-9 so that decimal fractions such as 0.29 floor the way they read.
fn train_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64) + 1e-9).floor() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub spec: SplitSpec,
    pub train_image_ids: Vec<ImageId>,
    pub test_image_ids: Vec<ImageId>,
    pub manifest_digest: String,
}

#[derive(Serialize)]
struct DigestInput<'a> {
    spec: &'a SplitSpec,
    train_image_ids: &'a [ImageId],
    test_image_ids: &'a [ImageId],
}

/// Lowercase hex SHA-256 of the compact JSON form of the manifest without
/// its digest field.
fn digest_of(spec: &SplitSpec, train: &[ImageId], test: &[ImageId]) -> String {
    let json = serde_json::to_vec(&DigestInput {
        spec,
        train_image_ids: train,
        test_image_ids: test,
    })
    .expect("manifest serializes");
    Sha256::digest(&json)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl SplitResult {
    fn new(spec: SplitSpec, mut train: Vec<ImageId>, mut test: Vec<ImageId>) -> Self {
        train.sort_unstable();
        test.sort_unstable();
        let manifest_digest = digest_of(&spec, &train, &test);
        Self {
            spec,
            train_image_ids: train,
            test_image_ids: test,
            manifest_digest,
        }
    }
}

/// Image ids grouped by stratum (majority category, 0 for background),
/// each list ascending.
fn strata(ds: &DetectionDataset) -> BTreeMap<CategoryId, Vec<ImageId>> {
    let majority = ds.majority_categories();
    let mut out: BTreeMap<CategoryId, Vec<ImageId>> = BTreeMap::new();
    for img in ds.images() {
        let cat = majority.get(&img.id).copied().unwrap_or(BACKGROUND);
        out.entry(cat).or_default().push(img.id);
    }
    out
}

pub fn split_train_test(ds: &DetectionDataset, fraction: f64, seed: u64) -> Result<SplitResult> {
    check_fraction(fraction)?;
    if ds.is_empty() {
        return Err(Error::validation("cannot split an empty dataset"));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (cat, mut ids) in strata(ds) {
        SplitMix64::for_stream(seed, PURPOSE_TRAIN_TEST, cat).shuffle(&mut ids);
        let n_train = train_count(fraction, ids.len());
        train.extend_from_slice(&ids[..n_train]);
        test.extend_from_slice(&ids[n_train..]);
    }
    Ok(SplitResult::new(
        SplitSpec::train_test(fraction, seed),
        train,
        test,
    ))
}

/// Draws exactly `k` train images per category from `pool`'s train set.
/// The test set is `pool`'s test set. Categories that own no image anywhere
/// in the dataset are skipped.
pub fn sample_k_shot(
    ds: &DetectionDataset,
    pool: &SplitResult,
    k: u32,
    seed: u64,
) -> Result<SplitResult> {
    let fraction = pool
        .spec
        .fraction
        .ok_or_else(|| Error::validation("train pool has no fraction"))?;
    let majority = ds.majority_categories();
    let mut by_cat: BTreeMap<CategoryId, Vec<ImageId>> = BTreeMap::new();
    for &cat in majority.values() {
        by_cat.entry(cat).or_default();
    }
    for id in &pool.train_image_ids {
        if let Some(&cat) = majority.get(id) {
            by_cat.entry(cat).or_default().push(*id);
        }
    }

    let mut train = Vec::new();
    for (cat, mut ids) in by_cat {
        if (ids.len() as u64) < k as u64 {
            let name = ds.category(cat).map(|c| c.name.as_str()).unwrap_or("?");
            return Err(Error::validation(format!(
                "category {name:?} (id {cat}) has only {} pool image(s), cannot draw {k}",
                ids.len()
            )));
        }
        ids.sort_unstable();
        SplitMix64::for_stream(seed, PURPOSE_K_SHOT, cat).shuffle(&mut ids);
        train.extend_from_slice(&ids[..k as usize]);
    }
    Ok(SplitResult::new(
        SplitSpec::k_shot(fraction, k, seed),
        train,
        pool.test_image_ids.clone(),
    ))
}

/// Leave-one-class-out split. Train is the standard train portion minus
/// every image that contains any instance of the held-out category (and
/// minus images with no instances); test is the standard test portion of
/// the held-out category's images.
pub fn split_cross_class(
    ds: &DetectionDataset,
    held_out: CategoryId,
    fraction: f64,
    seed: u64,
) -> Result<SplitResult> {
    check_fraction(fraction)?;
    if ds.category(held_out).is_none() {
        return Err(Error::integrity(format!(
            "held-out category {held_out} does not exist"
        )));
    }
    if ds.categories().len() < 2 {
        return Err(Error::validation(
            "cross-class splits need at least two categories",
        ));
    }
    let base = split_train_test(ds, fraction, seed)?;
    let majority = ds.majority_categories();
    let mut touches_held_out = std::collections::HashSet::new();
    for inst in ds.instances() {
        if inst.category_id == held_out {
            touches_held_out.insert(inst.image_id);
        }
    }
    let train = base
        .train_image_ids
        .iter()
        .copied()
        .filter(|id| majority.contains_key(id) && !touches_held_out.contains(id))
        .collect();
    let test = base
        .test_image_ids
        .iter()
        .copied()
        .filter(|id| majority.get(id) == Some(&held_out))
        .collect();
    Ok(SplitResult::new(
        SplitSpec::cross_class(fraction, held_out, seed),
        train,
        test,
    ))
}

/// Standard test partition with an empty train set.
pub fn split_zero_shot(ds: &DetectionDataset, fraction: f64, seed: u64) -> Result<SplitResult> {
    let base = split_train_test(ds, fraction, seed)?;
    Ok(SplitResult::new(
        SplitSpec::zero_shot(fraction, seed),
        Vec::new(),
        base.test_image_ids,
    ))
}

/// Rebuilds the partition a spec describes.
pub fn materialize(ds: &DetectionDataset, spec: &SplitSpec) -> Result<SplitResult> {
    spec.validate()?;
    let fraction = spec.fraction.expect("validated");
    match spec.kind {
        SplitKind::TrainTest => split_train_test(ds, fraction, spec.seed),
        SplitKind::ZeroShot => split_zero_shot(ds, fraction, spec.seed),
        SplitKind::CrossClass => {
            split_cross_class(ds, spec.held_out.expect("validated"), fraction, spec.seed)
        }
        SplitKind::KShot => {
            let pool = split_train_test(ds, fraction, spec.seed)?;
            sample_k_shot(ds, &pool, spec.k.expect("validated"), spec.seed)
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    spec: SplitSpec,
    train_image_ids: Vec<ImageId>,
    test_image_ids: Vec<ImageId>,
    digest: String,
}

pub fn manifest_json(sr: &SplitResult) -> String {
    let file = ManifestFile {
        spec: sr.spec.clone(),
        train_image_ids: sr.train_image_ids.clone(),
        test_image_ids: sr.test_image_ids.clone(),
        digest: sr.manifest_digest.clone(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("manifest serializes");
    s.push('\n');
    s
}

pub fn write_manifest(sr: &SplitResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, manifest_json(sr)).map_err(|e| Error::io(path, e))
}

pub fn parse_manifest(path: &Path, text: &str) -> Result<SplitResult> {
    let file: ManifestFile = serde_json::from_str(text).map_err(|e| Error::json(path, text, e))?;
    file.spec.validate()?;
    let computed = digest_of(&file.spec, &file.train_image_ids, &file.test_image_ids);
    if computed != file.digest {
        return Err(Error::Tamper {
            stored: file.digest,
            computed,
        });
    }
    let train: std::collections::HashSet<_> = file.train_image_ids.iter().collect();
    if let Some(id) = file.test_image_ids.iter().find(|id| train.contains(id)) {
        return Err(Error::validation(format!(
            "image {id} is in both train and test"
        )));
    }
    Ok(SplitResult {
        spec: file.spec,
        train_image_ids: file.train_image_ids,
        test_image_ids: file.test_image_ids,
        manifest_digest: file.digest,
    })
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<SplitResult> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(path, &text)
}
