//! Cross-modal disagreement between speech emotion and facial emotion.
//!
//! Raw mode compares the two labels literally. Mapped mode first projects the
//! speech label into the basic taxonomy through an [`EmotionMapping`].

use std::fmt;
use std::io::Write;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::format::fmt_real;
use crate::fusion::{FusedRecord, FUSED_HEADER};
use crate::streams::{self, FaceLabel};
use crate::taxonomy::{BasicEmotion, EmotionMapping, Mapped, SpeechEmotion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnomalyMode {
    Raw,
    Mapped,
}

impl AnomalyMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AnomalyMode::Raw => "raw",
            AnomalyMode::Mapped => "mapped",
        }
    }
}

impl fmt::Display for AnomalyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A fused record flagged as a cross-modal mismatch.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyRecord {
    /// Position of the record in the fused list.
    pub index: usize,
    pub record: FusedRecord,
    pub mode: AnomalyMode,
    /// Present exactly in mapped mode.
    pub mapped_fer_emotion: Option<BasicEmotion>,
}

impl Serialize for AnomalyRecord {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let r = &self.record;
        let mut st = s.serialize_struct("AnomalyRecord", 10)?;
        st.serialize_field("index", &self.index)?;
        st.serialize_field("text", &r.text)?;
        st.serialize_field("start", &r.start_s)?;
        st.serialize_field("end", &r.end_s)?;
        st.serialize_field("emotion", &r.speech_emotion)?;
        st.serialize_field("confidence", &r.speech_confidence)?;
        st.serialize_field("avg_fer_score", &r.avg_fer_score())?;
        st.serialize_field("dominant_fer_emotion", r.dominant_text())?;
        st.serialize_field("mode", self.mode.as_str())?;
        match self.mapped_fer_emotion {
            Some(m) => st.serialize_field("mapped_fer_emotion", &m)?,
            None => st.skip_field("mapped_fer_emotion")?,
        }
        st.end()
    }
}

/// Flags records whose speech label differs literally from the dominant
/// face label. `No face detected` mismatches every speech label; records
/// without aligned frames are skipped.
pub fn raw_anomalies(records: &[FusedRecord]) -> Vec<AnomalyRecord> {
    records
        .iter()
        .enumerate()
        .filter_map(|(index, r)| {
            let face = r.dominant_fer_emotion()?;
            let matches = match face {
                FaceLabel::Emotion(e) => e.as_str() == r.speech_emotion.as_str(),
                FaceLabel::NoFace => false,
            };
            (!matches).then(|| AnomalyRecord {
                index,
                record: r.clone(),
                mode: AnomalyMode::Raw,
                mapped_fer_emotion: None,
            })
        })
        .collect()
}

/// Flags records whose mapped speech label differs from the dominant face
/// label. Unmapped labels, face-less records and (unless `include_neutral`)
/// neutral speech are skipped.
pub fn mapped_anomalies(
    records: &[FusedRecord],
    mapping: &EmotionMapping,
    include_neutral: bool,
) -> Vec<AnomalyRecord> {
    records
        .iter()
        .enumerate()
        .filter_map(|(index, r)| {
            let Mapped::Basic(mapped) = mapping.lookup_label(&r.speech_emotion) else {
                return None;
            };
            let Some(FaceLabel::Emotion(face)) = r.dominant_fer_emotion() else {
                return None;
            };
            if !include_neutral && r.speech_emotion.known() == Some(SpeechEmotion::Neutral) {
                return None;
            }
            (mapped != face).then(|| AnomalyRecord {
                index,
                record: r.clone(),
                mode: AnomalyMode::Mapped,
                mapped_fer_emotion: Some(mapped),
            })
        })
        .collect()
}

/// Writes an anomaly report: the fused columns plus `mode`, and
/// `mapped_fer_emotion` when `mode` is mapped.
pub fn export_anomalies<W: Write>(
    anomalies: &[AnomalyRecord],
    mode: AnomalyMode,
    sink: W,
) -> Result<()> {
    let mut wtr = streams::writer(sink);
    let mut header: Vec<&str> = FUSED_HEADER.to_vec();
    header.push("mode");
    if mode == AnomalyMode::Mapped {
        header.push("mapped_fer_emotion");
    }
    wtr.write_record(&header).map_err(Error::csv)?;
    for a in anomalies {
        let r = &a.record;
        let mut row = vec![
            r.text.clone(),
            fmt_real(r.start_s),
            fmt_real(r.end_s),
            r.speech_emotion.to_string(),
            fmt_real(r.speech_confidence),
            r.avg_fer_score().map(fmt_real).unwrap_or_default(),
            r.dominant_text().to_string(),
            a.mode.to_string(),
        ];
        if mode == AnomalyMode::Mapped {
            row.push(a.mapped_fer_emotion.map(|m| m.to_string()).unwrap_or_default());
        }
        wtr.write_record(&row).map_err(Error::csv)?;
    }
    streams::finish(wtr)
}
