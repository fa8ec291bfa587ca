//! Detection interchange files.
//!
//! TSV grammar: an optional run of `#` comment lines, then the header line
//! [`TSV_HEADER`], then one record per line with the seven tab-separated fields
//! `image_id class_id score cx cy w h`. Numbers use Rust's shortest round-trip
//! float formatting, so writing and reading again is lossless. Image ids must not
//! contain tabs or newlines.
//!
//! JSONL: one object per line with the same seven keys.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{BBox, Detection};
use crate::error::{Error, Result};

pub const TSV_HEADER: &str = "image_id\tclass_id\tscore\tcx\tcy\tw\th";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: String,
    pub class_id: usize,
    pub score: f64,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl DetectionRecord {
    pub fn new(image_id: impl Into<String>, det: &Detection) -> Self {
        Self {
            image_id: image_id.into(),
            class_id: det.class_id,
            score: det.score,
            cx: det.bbox.cx,
            cy: det.bbox.cy,
            w: det.bbox.w,
            h: det.bbox.h,
        }
    }

    pub fn detection(&self) -> Detection {
        Detection::new(BBox { cx: self.cx, cy: self.cy, w: self.w, h: self.h }, self.class_id, self.score)
    }

    fn validate(&self, line: usize) -> Result<()> {
        let bad = |what: &str| Err(Error::Parse(format!("detections line {line}: {what}")));
        if self.image_id.is_empty() || self.image_id.contains(['\t', '\n', '\r']) {
            return bad("image id is empty or contains a tab/newline");
        }
        if !(0.0..=1.0).contains(&self.score) {
            return bad("score outside [0, 1]");
        }
        if !(BBox { cx: self.cx, cy: self.cy, w: self.w, h: self.h }).is_valid() {
            return bad("box must be finite with positive extents");
        }
        Ok(())
    }
}

pub fn write_detections_tsv<W: Write>(records: &[DetectionRecord], mut out: W) -> Result<()> {
    writeln!(out, "{TSV_HEADER}")?;
    for (i, r) in records.iter().enumerate() {
        r.validate(i + 2)?;
        writeln!(out, "{}\t{}\t{}\t{}\t{}\t{}\t{}", r.image_id, r.class_id, r.score, r.cx, r.cy, r.w, r.h)?;
    }
    Ok(())
}

pub fn write_detections_jsonl<W: Write>(records: &[DetectionRecord], mut out: W) -> Result<()> {
    for (i, r) in records.iter().enumerate() {
        r.validate(i + 1)?;
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Parse(e.to_string()))?;
        writeln!(out)?;
    }
    Ok(())
}

/// Reads either format; a first data character of `{` selects JSONL.
pub fn read_detections<R: BufRead>(input: R) -> Result<Vec<DetectionRecord>> {
    let mut records = Vec::new();
    let mut saw_header = false;
    let mut jsonl = None;
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let is_json = *jsonl.get_or_insert(trimmed.trim_start().starts_with('{'));
        let record = if is_json {
            serde_json::from_str::<DetectionRecord>(trimmed)
                .map_err(|e| Error::Parse(format!("detections line {line_no}: {e}")))?
        } else {
            if !saw_header {
                if trimmed != TSV_HEADER {
                    return Err(Error::Parse(format!("detections line {line_no}: expected header `{TSV_HEADER}`")));
                }
                saw_header = true;
                continue;
            }
            parse_tsv_line(trimmed, line_no)?
        };
        record.validate(line_no)?;
        records.push(record);
    }
    Ok(records)
}

fn parse_tsv_line(line: &str, line_no: usize) -> Result<DetectionRecord> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 7 {
        return Err(Error::Parse(format!("detections line {line_no}: expected 7 fields, found {}", fields.len())));
    }
    let num = |i: usize| -> Result<f64> {
        fields[i].parse().map_err(|_| Error::Parse(format!("detections line {line_no}: bad number `{}`", fields[i])))
    };
    Ok(DetectionRecord {
        image_id: fields[0].to_string(),
        class_id: fields[1]
            .parse()
            .map_err(|_| Error::Parse(format!("detections line {line_no}: bad class id `{}`", fields[1])))?,
        score: num(2)?,
        cx: num(3)?,
        cy: num(4)?,
        w: num(5)?,
        h: num(6)?,
    })
}
