//! JSON-lines interchange records for predictions and annotations.
//!
//! One record per image:
//! `{image_id, boxes: [{x1, y1, x2, y2, category_id, score?}],
//!   gaze_point: [x, y], gaze_box_index, head_box?}`
//! with `gaze_point` in normalized coordinates. `head_box` is present on
//! dataset annotations and absent on plain prediction dumps.

use serde::{Deserialize, Serialize};

use crate::{BoundingBox, CoreError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: u64,
    pub boxes: Vec<BoundingBox>,
    pub gaze_point: [f64; 2],
    pub gaze_box_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_box: Option<BoundingBox>,
}

impl ImageRecord {
    pub fn validate(&self) -> Result<(), CoreError> {
        for b in &self.boxes {
            b.validate()?;
        }
        if let Some(h) = &self.head_box {
            h.validate()?;
        }
        if self.gaze_box_index >= self.boxes.len() {
            return Err(CoreError::InvalidInput(format!(
                "image {}: gaze_box_index {} out of range ({} boxes)",
                self.image_id,
                self.gaze_box_index,
                self.boxes.len()
            )));
        }
        if self.gaze_point.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidInput(format!(
                "image {}: non-finite gaze point",
                self.image_id
            )));
        }
        Ok(())
    }

    pub fn gaze_box(&self) -> &BoundingBox {
        &self.boxes[self.gaze_box_index]
    }
}

/// Serializes records to JSON lines.
pub fn to_jsonl(records: &[ImageRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serialization"));
        out.push('\n');
    }
    out
}

/// Parses JSON lines, reporting the 1-based line number of any bad record.
pub fn from_jsonl(text: &str) -> Result<Vec<ImageRecord>, CoreError> {
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: ImageRecord = serde_json::from_str(line).map_err(|e| {
            CoreError::InvalidInput(format!("annotations line {}: {e}", lineno + 1))
        })?;
        record.validate().map_err(|e| {
            CoreError::InvalidInput(format!("annotations line {}: {e}", lineno + 1))
        })?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> ImageRecord {
        ImageRecord {
            image_id: 7,
            boxes: vec![
                BoundingBox::new(0.0, 0.0, 10.0, 10.0, 2).unwrap(),
                BoundingBox::with_score(5.0, 5.0, 25.0, 30.0, 1, 0.75).unwrap(),
            ],
            gaze_point: [0.25, 0.5],
            gaze_box_index: 1,
            head_box: Some(BoundingBox::new(100.0, 180.0, 130.0, 210.0, 0).unwrap()),
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let records = vec![record(), {
            let mut r = record();
            r.image_id = 8;
            r.head_box = None;
            r
        }];
        let text = to_jsonl(&records);
        assert_eq!(text.lines().count(), 2);
        let back = from_jsonl(&text).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn score_field_omitted_when_absent() {
        let text = serde_json::to_string(&record()).unwrap();
        // first box is ground truth without a score
        assert!(!text.contains("\"score\":null"));
        assert!(text.contains("\"score\":0.75"));
    }

    #[test]
    fn truncated_line_names_line_number() {
        let mut text = to_jsonl(&[record()]);
        text.push_str("{\"image_id\": 9, \"boxes\": [\n");
        let err = from_jsonl(&text).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn bad_gaze_index_is_rejected() {
        let mut r = record();
        r.gaze_box_index = 5;
        let text = to_jsonl(&[r]);
        assert!(from_jsonl(&text).is_err());
    }
}
