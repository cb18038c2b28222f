//! Detection results files: a JSON array of
//! `{image_id, category_id, bbox: [x, y, w, h], score, prompt?}`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Detection, DetectionDataset};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

#[derive(Serialize, Deserialize)]
struct ResultRecord {
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
    score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prompt: Option<String>,
}

pub fn load_predictions(path: impl AsRef<Path>, ds: &DetectionDataset) -> Result<Vec<Detection>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_predictions(path, &text, ds)
}

pub(crate) fn parse_predictions(
    path: &Path,
    text: &str,
    ds: &DetectionDataset,
) -> Result<Vec<Detection>> {
    let records: Vec<ResultRecord> =
        serde_json::from_str(text).map_err(|e| Error::json(path, text, e))?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            if !(r.score.is_finite() && (0.0..=1.0).contains(&r.score)) {
                return Err(Error::validation(format!(
                    "record {i}: score {} outside [0, 1]",
                    r.score
                )));
            }
            if ds.image(r.image_id).is_none() {
                return Err(Error::integrity(format!(
                    "record {i} references missing image {}",
                    r.image_id
                )));
            }
            if ds.category(r.category_id).is_none() {
                return Err(Error::integrity(format!(
                    "record {i} references missing category {}",
                    r.category_id
                )));
            }
            let [x, y, w, h] = r.bbox;
            let bbox = BoundingBox::from_xywh(x, y, w, h)
                .map_err(|e| Error::validation(format!("record {i}: {e}")))?;
            Ok(Detection {
                image_id: r.image_id,
                category_id: r.category_id,
                bbox,
                score: r.score,
                prompt: r.prompt,
            })
        })
        .collect()
}

pub(crate) fn predictions_json(dets: &[Detection]) -> String {
    let records: Vec<_> = dets
        .iter()
        .map(|d| ResultRecord {
            image_id: d.image_id,
            category_id: d.category_id,
            bbox: d.bbox.to_xywh(),
            score: d.score,
            prompt: d.prompt.clone(),
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&records).expect("detections serialize");
    s.push('\n');
    s
}

pub fn write_predictions(dets: &[Detection], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, predictions_json(dets)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::testutil::*;
    use crate::datamodel::Category;

    fn ds() -> DetectionDataset {
        DetectionDataset::new(
            vec![Category::new(1, "apple")],
            vec![image(1, 100, 100), image(2, 100, 100)],
            vec![],
        )
        .unwrap()
    }

    fn parse(text: &str) -> Result<Vec<Detection>> {
        parse_predictions(Path::new("p.json"), text, &ds())
    }

    #[test]
    fn empty_array() {
        assert!(parse("[]").unwrap().is_empty());
    }

    #[test]
    fn score_out_of_range() {
        let err =
            parse(r#"[{"image_id":1,"category_id":1,"bbox":[0,0,1,1],"score":1.2}]"#).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("score"));
    }

    #[test]
    fn dangling_ids() {
        let err =
            parse(r#"[{"image_id":7,"category_id":1,"bbox":[0,0,1,1],"score":0.5}]"#).unwrap_err();
        assert!(err.to_string().contains("image 7"));
        let err =
            parse(r#"[{"image_id":1,"category_id":3,"bbox":[0,0,1,1],"score":0.5}]"#).unwrap_err();
        assert!(err.to_string().contains("category 3"));
    }

    #[test]
    fn records_keep_order_and_prompt() {
        let dets = parse(
            r#"[{"image_id":1,"category_id":1,"bbox":[0,0,1,1],"score":0.5},
                {"image_id":2,"category_id":1,"bbox":[0,0,1,1],"score":0.7,"prompt":"apple"},
                {"image_id":1,"category_id":1,"bbox":[5,5,1,1],"score":0.1}]"#,
        )
        .unwrap();
        assert_eq!(dets.len(), 3);
        assert_eq!(dets.iter().filter(|d| d.image_id == 1).count(), 2);
        assert_eq!(dets[1].prompt.as_deref(), Some("apple"));
        let again = parse(&predictions_json(&dets)).unwrap();
        assert_eq!(again, dets);
    }
}
