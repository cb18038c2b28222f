//! Referring-expression scoring: each prompt is evaluated against the
//! ground truth that satisfies its attribute predicate, using only the
//! detections produced for that prompt.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::{evaluate_subset, EvalConfig, EvaluationReport};
use crate::datamodel::{Detection, DetectionDataset, GroundTruthInstance};
use crate::error::{Error, Result};
use crate::splits::SplitResult;

/// Predicate over an instance's attribute map. A missing key never equals
/// anything, so `not_equals` / `not_in` hold for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AttributePredicate {
    #[default]
    Always,
    Equals {
        key: String,
        value: String,
    },
    NotEquals {
        key: String,
        value: String,
    },
    In {
        key: String,
        values: Vec<String>,
    },
    NotIn {
        key: String,
        values: Vec<String>,
    },
    All {
        of: Vec<AttributePredicate>,
    },
    Any {
        of: Vec<AttributePredicate>,
    },
    Not {
        of: Box<AttributePredicate>,
    },
}

impl AttributePredicate {
    pub fn matches(&self, attrs: &BTreeMap<String, String>) -> bool {
        match self {
            Self::Always => true,
            Self::Equals { key, value } => attrs.get(key) == Some(value),
            Self::NotEquals { key, value } => attrs.get(key) != Some(value),
            Self::In { key, values } => attrs.get(key).is_some_and(|v| values.contains(v)),
            Self::NotIn { key, values } => !attrs.get(key).is_some_and(|v| values.contains(v)),
            Self::All { of } => of.iter().all(|p| p.matches(attrs)),
            Self::Any { of } => of.iter().any(|p| p.matches(attrs)),
            Self::Not { of } => !of.matches(attrs),
        }
    }
}

/// Ground-truth restriction for one prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct PromptFilter {
    /// Category names the prompt refers to; empty means all categories.
    #[serde(default)]
    pub categories: Vec<String>,
    #[serde(default)]
    pub predicate: AttributePredicate,
}

fn restrict(ds: &DetectionDataset, filter: &PromptFilter) -> Result<DetectionDataset> {
    let instances: Vec<GroundTruthInstance> = ds
        .instances()
        .iter()
        .filter(|i| filter.predicate.matches(&i.attributes))
        .cloned()
        .collect();
    DetectionDataset::new(ds.categories().to_vec(), ds.images().to_vec(), instances)
}

/// One report per prompt in `filters` (in key order).
pub fn evaluate_rec(
    ds: &DetectionDataset,
    split: &SplitResult,
    dets: &[Detection],
    filters: &BTreeMap<String, PromptFilter>,
    config: &EvalConfig,
) -> Result<Vec<EvaluationReport>> {
    let prompts: BTreeSet<&str> = dets
        .iter()
        .map(|d| {
            d.prompt
                .as_deref()
                .ok_or_else(|| Error::validation("referring-expression detections need a prompt"))
        })
        .collect::<Result<_>>()?;
    if let Some(p) = prompts.iter().find(|p| !filters.contains_key(**p)) {
        return Err(Error::validation(format!("unknown prompt {p:?}")));
    }

    filters
        .iter()
        .map(|(prompt, filter)| {
            let categories = if filter.categories.is_empty() {
                None
            } else {
                Some(
                    filter
                        .categories
                        .iter()
                        .map(|name| {
                            ds.category_by_name(name).map(|c| c.id).ok_or_else(|| {
                                Error::integrity(format!(
                                    "prompt {prompt:?}: unknown category {name:?}"
                                ))
                            })
                        })
                        .collect::<Result<HashSet<_>>>()?,
                )
            };
            let restricted = restrict(ds, filter)?;
            let own: Vec<Detection> = dets
                .iter()
                .filter(|d| d.prompt.as_deref() == Some(prompt.as_str()))
                .cloned()
                .collect();
            evaluate_subset(
                &restricted,
                split,
                &own,
                config,
                categories.as_ref(),
                Some(prompt.clone()),
            )
        })
        .collect()
}
