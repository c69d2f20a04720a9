//! Temporal alignment and temporal fusion.
//!
//! Every speech segment collects the frame dominants whose timestamps fall in
//! its closed interval `[start, end]`. The window is then collapsed to its most
//! frequent face label, scored by the mean of only the frames carrying that
//! label. A segment without any frame fuses to the `None` marker.

use std::io::{Read, Write};
use std::path::Path;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, ErrorCode, Result};
use crate::format::fmt_real;
use crate::streams::{self, FaceLabel, FrameDominant, SpeechSegment};
use crate::taxonomy::SpeechLabel;

pub const FUSED_HEADER: [&str; 7] = [
    "text",
    "start",
    "end",
    "emotion",
    "confidence",
    "avg_fer_score",
    "dominant_fer_emotion",
];

/// Serialized form of a segment that no frame aligned with.
pub const NONE_MARKER: &str = "None";

/// The facial side of a fused record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceSummary {
    pub label: FaceLabel,
    /// Mean score of the frames carrying `label`; 0 for `NoFace`.
    pub avg_score: f64,
}

/// One row of the integrated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedRecord {
    pub text: String,
    pub start_s: f64,
    pub end_s: f64,
    pub speech_emotion: SpeechLabel,
    pub speech_confidence: f64,
    /// `None` when no frame fell inside the segment.
    pub face: Option<FaceSummary>,
}

impl FusedRecord {
    pub fn from_segment(segment: &SpeechSegment, face: Option<FaceSummary>) -> Self {
        FusedRecord {
            text: segment.text.clone(),
            start_s: segment.start_s,
            end_s: segment.end_s,
            speech_emotion: segment.emotion.clone(),
            speech_confidence: segment.confidence,
            face,
        }
    }

    pub fn dominant_fer_emotion(&self) -> Option<FaceLabel> {
        self.face.map(|f| f.label)
    }

    pub fn avg_fer_score(&self) -> Option<f64> {
        self.face.map(|f| f.avg_score)
    }

    /// The dominant column as written to files: a label, `No face detected`
    /// or `None`.
    pub fn dominant_text(&self) -> &'static str {
        self.face.map_or(NONE_MARKER, |f| f.label.as_str())
    }

    fn check(&self, line: u64) -> Result<()> {
        if self.end_s < self.start_s {
            return Err(Error::at_line(
                ErrorCode::Interval,
                line,
                format!("end {} precedes start {}", self.end_s, self.start_s),
            ));
        }
        if let Some(face) = self.face {
            if !(0.0..=1.0).contains(&face.avg_score) {
                return Err(Error::at_line(
                    ErrorCode::Range,
                    line,
                    format!("avg_fer_score {} outside [0, 1]", face.avg_score),
                ));
            }
            if face.label == FaceLabel::NoFace && face.avg_score != 0.0 {
                return Err(Error::at_line(
                    ErrorCode::Invariant,
                    line,
                    format!("'{}' requires avg_fer_score 0, got {}", face.label, face.avg_score),
                ));
            }
        }
        Ok(())
    }
}

impl Serialize for FusedRecord {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("FusedRecord", 7)?;
        st.serialize_field("text", &self.text)?;
        st.serialize_field("start", &self.start_s)?;
        st.serialize_field("end", &self.end_s)?;
        st.serialize_field("emotion", &self.speech_emotion)?;
        st.serialize_field("confidence", &self.speech_confidence)?;
        st.serialize_field("avg_fer_score", &self.avg_fer_score())?;
        st.serialize_field("dominant_fer_emotion", self.dominant_text())?;
        st.end()
    }
}

/// A segment with the frames that fall inside its closed interval.
#[derive(Debug, Clone, Copy)]
pub struct AlignmentWindow<'a> {
    pub segment: &'a SpeechSegment,
    pub frames: &'a [FrameDominant],
}

/// Aligns frames to segments.
///
/// `frames` must be sorted by timestamp. One window is produced per segment,
/// in segment order; overlapping segments share frames.
pub fn align<'a>(
    frames: &'a [FrameDominant],
    segments: &'a [SpeechSegment],
) -> Vec<AlignmentWindow<'a>> {
    debug_assert!(frames
        .windows(2)
        .all(|w| w[0].timestamp_s <= w[1].timestamp_s));
    segments
        .iter()
        .map(|segment| {
            let lo = frames.partition_point(|f| f.timestamp_s < segment.start_s);
            let hi = frames.partition_point(|f| f.timestamp_s <= segment.end_s);
            AlignmentWindow {
                segment,
                frames: &frames[lo..hi.max(lo)],
            }
        })
        .collect()
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Collapses a window to its dominant face label.
///
/// Count ties go to the higher mean score, then to canonical label order with
/// `NoFace` last.
pub fn fuse_segment(window: &AlignmentWindow<'_>) -> FusedRecord {
    let mut counts = [0usize; FaceLabel::COUNT];
    let mut sums = [CompensatedSum::default(); FaceLabel::COUNT];
    for f in window.frames {
        let i = f.label.index();
        counts[i] += 1;
        sums[i].add(f.score);
    }
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..FaceLabel::COUNT {
        if counts[i] == 0 {
            continue;
        }
        let mean = sums[i].value() / counts[i] as f64;
        let better = match best {
            None => true,
            Some((_, c, m)) => counts[i] > c || (counts[i] == c && mean > m),
        };
        if better {
            best = Some((i, counts[i], mean));
        }
    }
    let face = best.map(|(i, _, mean)| {
        let label = FaceLabel::from_index(i);
        FaceSummary {
            label,
            avg_score: if label == FaceLabel::NoFace { 0.0 } else { mean },
        }
    });
    FusedRecord::from_segment(window.segment, face)
}

/// Aligns and fuses; the output has one record per segment, in segment order.
///
/// Frames need not be sorted: they are ordered internally by timestamp, then
/// label and score, so the result does not depend on input order.
pub fn fuse(frames: &[FrameDominant], segments: &[SpeechSegment]) -> Vec<FusedRecord> {
    let mut sorted = frames.to_vec();
    sorted.sort_by(|a, b| {
        a.timestamp_s
            .total_cmp(&b.timestamp_s)
            .then(a.label.index().cmp(&b.label.index()))
            .then(a.score.total_cmp(&b.score))
    });
    align(&sorted, segments).iter().map(fuse_segment).collect()
}

/// Writes fused records in the `Test1.csv` layout.
pub fn export_fused<W: Write>(records: &[FusedRecord], sink: W) -> Result<()> {
    let mut wtr = streams::writer(sink);
    wtr.write_record(FUSED_HEADER).map_err(Error::csv)?;
    for r in records {
        wtr.write_record([
            r.text.clone(),
            fmt_real(r.start_s),
            fmt_real(r.end_s),
            r.speech_emotion.to_string(),
            fmt_real(r.speech_confidence),
            r.avg_fer_score().map(fmt_real).unwrap_or_default(),
            r.dominant_text().to_string(),
        ])
        .map_err(Error::csv)?;
    }
    streams::finish(wtr)
}

/// Parses a fused file, keeping document order.
pub fn parse_fused<R: Read>(source: R, strict_labels: bool) -> Result<Vec<FusedRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header: Vec<String> = rdr
        .headers()
        .map_err(Error::csv)?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let mut cols = [0usize; 7];
    for (slot, name) in cols.iter_mut().zip(FUSED_HEADER) {
        *slot = header.iter().position(|h| h == name).ok_or_else(|| {
            Error::at_line(ErrorCode::Schema, 1, format!("missing column '{name}'"))
        })?;
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(Error::csv)?;
        let line = record.position().map_or(0, |p| p.line());
        let seg = streams::speech_fields(
            &record[cols[0]],
            &record[cols[1]],
            &record[cols[2]],
            &record[cols[3]],
            &record[cols[4]],
            line,
            strict_labels,
        )?;
        let avg_cell = &record[cols[5]];
        let dom_cell = &record[cols[6]];
        let face = if dom_cell.eq_ignore_ascii_case(NONE_MARKER) {
            if !avg_cell.is_empty() {
                return Err(Error::at_line(
                    ErrorCode::Invariant,
                    line,
                    format!("'{NONE_MARKER}' record with avg_fer_score '{avg_cell}'"),
                ));
            }
            None
        } else {
            let label: FaceLabel = dom_cell.parse().map_err(|e: Error| e.with_line(line))?;
            let avg_score = avg_cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                Error::at_line(
                    ErrorCode::Parse,
                    line,
                    format!("avg_fer_score '{avg_cell}' is not a number"),
                )
            })?;
            Some(FaceSummary { label, avg_score })
        };
        let rec = FusedRecord::from_segment(&seg, face);
        rec.check(line)?;
        out.push(rec);
    }
    Ok(out)
}

pub fn parse_fused_file(path: impl AsRef<Path>, strict_labels: bool) -> Result<Vec<FusedRecord>> {
    let path = path.as_ref();
    parse_fused(streams::open(path)?, strict_labels).map_err(|e| e.with_path(path))
}

pub fn export_fused_file(records: &[FusedRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    export_fused(records, streams::create(path)?).map_err(|e| e.with_path(path))
}
