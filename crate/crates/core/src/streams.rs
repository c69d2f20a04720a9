//! Parsing and validation of the two modality streams.
//!
//! The frames stream holds one facial-emotion probability vector per video
//! frame; the speech stream holds one classified utterance per row. Frames
//! without a detected face arrive as all-zero (or empty) rows and are kept,
//! flagged with `face_detected == false`.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::{Serialize, Serializer};

use crate::error::{Error, ErrorCode, Result};
use crate::format::fmt_real;
use crate::taxonomy::{BasicEmotion, SpeechLabel};

/// Deviation of a face frame's probability sum from 1 that is tolerated silently.
pub const SUM_WARN_TOLERANCE: f64 = 1e-3;
/// Deviation beyond which a face frame is rejected.
pub const SUM_ERROR_TOLERANCE: f64 = 0.05;

pub const NO_FACE_TEXT: &str = "No face detected";
pub const DOMINANTS_HEADER: [&str; 3] = ["Timestamp", "Highest Score", "Facial Emotion"];
pub const SPEECH_HEADER: [&str; 5] = ["text", "start", "end", "emotion", "confidence"];

/// Facial outcome of a frame: a basic emotion, or no face at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaceLabel {
    Emotion(BasicEmotion),
    NoFace,
}

impl FaceLabel {
    /// Number of distinct face labels (seven emotions plus `NoFace`).
    pub const COUNT: usize = BasicEmotion::COUNT + 1;

    /// Canonical position: basic emotions in order, `NoFace` last.
    pub fn index(self) -> usize {
        match self {
            FaceLabel::Emotion(e) => e.index(),
            FaceLabel::NoFace => BasicEmotion::COUNT,
        }
    }

    pub fn from_index(i: usize) -> FaceLabel {
        if i < BasicEmotion::COUNT {
            FaceLabel::Emotion(BasicEmotion::ALL[i])
        } else {
            FaceLabel::NoFace
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FaceLabel::Emotion(e) => e.as_str(),
            FaceLabel::NoFace => NO_FACE_TEXT,
        }
    }

    pub fn emotion(self) -> Option<BasicEmotion> {
        match self {
            FaceLabel::Emotion(e) => Some(e),
            FaceLabel::NoFace => None,
        }
    }
}

impl fmt::Display for FaceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FaceLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case(NO_FACE_TEXT) {
            Ok(FaceLabel::NoFace)
        } else {
            s.parse().map(FaceLabel::Emotion)
        }
    }
}

impl Serialize for FaceLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

/// One video frame's facial-emotion probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct EmotionFrame {
    pub timestamp_s: f64,
    /// Indexed by [`BasicEmotion::index`].
    pub probabilities: [f64; BasicEmotion::COUNT],
    pub face_detected: bool,
}

impl EmotionFrame {
    /// Builds a frame; `face_detected` is derived from whether any
    /// probability is non-zero.
    pub fn new(timestamp_s: f64, probabilities: [f64; BasicEmotion::COUNT]) -> Self {
        EmotionFrame {
            timestamp_s,
            probabilities,
            face_detected: probabilities.iter().any(|p| *p != 0.0),
        }
    }

    pub fn no_face(timestamp_s: f64) -> Self {
        EmotionFrame::new(timestamp_s, [0.0; BasicEmotion::COUNT])
    }

    pub fn probability(&self, label: BasicEmotion) -> f64 {
        self.probabilities[label.index()]
    }
}

/// The dominant facial emotion of a single frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameDominant {
    pub timestamp_s: f64,
    pub label: FaceLabel,
    pub score: f64,
}

/// One classified utterance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeechSegment {
    pub text: String,
    #[serde(rename = "start")]
    pub start_s: f64,
    #[serde(rename = "end")]
    pub end_s: f64,
    pub emotion: SpeechLabel,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParseOptions {
    /// Frame rate used when the frames file carries a `frame` index column.
    pub fps: Option<f64>,
    /// Reject speech labels outside the taxonomy (otherwise they are kept
    /// and resolve to unmapped).
    pub strict_labels: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            fps: None,
            strict_labels: true,
        }
    }
}

/// A non-fatal validation finding.
#[derive(Debug, Clone, PartialEq)]
pub struct Warning {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedFrames {
    pub frames: Vec<EmotionFrame>,
    pub warnings: Vec<Warning>,
}

/// Argmax of a frame, ties going to the first label in canonical order.
pub fn dominant_of_frame(frame: &EmotionFrame) -> FrameDominant {
    if !frame.face_detected {
        return FrameDominant {
            timestamp_s: frame.timestamp_s,
            label: FaceLabel::NoFace,
            score: 0.0,
        };
    }
    let mut best = 0;
    for (i, p) in frame.probabilities.iter().enumerate().skip(1) {
        if *p > frame.probabilities[best] {
            best = i;
        }
    }
    FrameDominant {
        timestamp_s: frame.timestamp_s,
        label: FaceLabel::Emotion(BasicEmotion::ALL[best]),
        score: frame.probabilities[best],
    }
}

pub fn frame_dominants(frames: &[EmotionFrame]) -> Vec<FrameDominant> {
    frames.iter().map(dominant_of_frame).collect()
}

struct Header {
    columns: Vec<String>,
}

impl Header {
    fn read<R: Read>(rdr: &mut csv::Reader<R>) -> Result<Header> {
        let record = rdr.headers().map_err(Error::csv)?;
        Ok(Header {
            columns: record.iter().map(|c| c.trim().to_ascii_lowercase()).collect(),
        })
    }

    fn find(&self, name: &str) -> Option<usize> {
        let name = name.to_ascii_lowercase();
        self.columns.iter().position(|c| *c == name)
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.find(name).ok_or_else(|| {
            Error::at_line(
                ErrorCode::Schema,
                1,
                format!("missing column '{name}' in header '{}'", self.columns.join(",")),
            )
        })
    }
}

fn reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source)
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn parse_real(cell: &str, column: &str, line: u64) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::at_line(
            ErrorCode::Parse,
            line,
            format!("column '{column}': '{cell}' is not a finite number"),
        )),
    }
}

fn parse_unit(cell: &str, column: &str, line: u64) -> Result<f64> {
    let v = parse_real(cell, column, line)?;
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::at_line(
            ErrorCode::Range,
            line,
            format!("column '{column}': {v} outside [0, 1]"),
        ));
    }
    Ok(v)
}

fn parse_seconds(cell: &str, column: &str, line: u64) -> Result<f64> {
    let v = parse_real(cell, column, line)?;
    if v < 0.0 {
        return Err(Error::at_line(
            ErrorCode::Range,
            line,
            format!("column '{column}': negative time {v}"),
        ));
    }
    Ok(v)
}

/// Missing detections may arrive as empty or null-like cells; they count as 0.
fn is_null_cell(cell: &str) -> bool {
    cell.is_empty()
        || cell.eq_ignore_ascii_case("nan")
        || cell.eq_ignore_ascii_case("null")
        || cell.eq_ignore_ascii_case("none")
}

enum TimeColumn {
    Seconds(usize),
    FrameIndex(usize, f64),
}

/// Parses a frames stream. Rows are stably sorted by timestamp.
pub fn parse_frames<R: Read>(source: R, opts: &ParseOptions) -> Result<ParsedFrames> {
    let mut rdr = reader(source);
    let header = Header::read(&mut rdr)?;
    let time = match (header.find("timestamp"), header.find("frame")) {
        (Some(i), _) => TimeColumn::Seconds(i),
        (None, Some(i)) => {
            let fps = opts.fps.ok_or_else(|| {
                Error::at_line(ErrorCode::Schema, 1, "a 'frame' index column requires an fps value")
            })?;
            if !(fps.is_finite() && fps > 0.0) {
                return Err(Error::new(ErrorCode::Range, format!("fps must be positive, got {fps}")));
            }
            TimeColumn::FrameIndex(i, fps)
        }
        (None, None) => return Err(header.require("timestamp").unwrap_err()),
    };
    let mut prob_cols = [0usize; BasicEmotion::COUNT];
    for e in BasicEmotion::ALL {
        prob_cols[e.index()] = header.require(e.as_str())?;
    }

    let mut frames = Vec::new();
    let mut warnings = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(Error::csv)?;
        let line = line_of(&record);
        let timestamp_s = match time {
            TimeColumn::Seconds(i) => parse_seconds(&record[i], "timestamp", line)?,
            TimeColumn::FrameIndex(i, fps) => {
                let idx: u64 = record[i].parse().map_err(|_| {
                    Error::at_line(
                        ErrorCode::Parse,
                        line,
                        format!("column 'frame': '{}' is not a frame index", &record[i]),
                    )
                })?;
                idx as f64 / fps
            }
        };
        let mut probabilities = [0.0; BasicEmotion::COUNT];
        for e in BasicEmotion::ALL {
            let cell = &record[prob_cols[e.index()]];
            if !is_null_cell(cell) {
                probabilities[e.index()] = parse_unit(cell, e.as_str(), line)?;
            }
        }
        let frame = EmotionFrame::new(timestamp_s, probabilities);
        if frame.face_detected {
            let sum: f64 = probabilities.iter().sum();
            let dev = (sum - 1.0).abs();
            if dev > SUM_ERROR_TOLERANCE {
                return Err(Error::at_line(
                    ErrorCode::Range,
                    line,
                    format!("probabilities sum to {sum}, expected 1"),
                ));
            }
            if dev > SUM_WARN_TOLERANCE {
                let message = format!("probabilities sum to {sum}, deviation {dev:.4} from 1");
                warn!("line {line}: {message}");
                warnings.push(Warning { line, message });
            }
        }
        frames.push(frame);
    }
    frames.sort_by(|a, b| a.timestamp_s.total_cmp(&b.timestamp_s));
    Ok(ParsedFrames { frames, warnings })
}

/// Parses a speech stream. Rows are stably sorted by start time.
pub fn parse_speech<R: Read>(source: R, opts: &ParseOptions) -> Result<Vec<SpeechSegment>> {
    let mut rdr = reader(source);
    let header = Header::read(&mut rdr)?;
    let mut cols = [0usize; 5];
    for (slot, name) in cols.iter_mut().zip(SPEECH_HEADER) {
        *slot = header.require(name)?;
    }
    let [c_text, c_start, c_end, c_emotion, c_conf] = cols;

    let mut segments = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(Error::csv)?;
        let line = line_of(&record);
        segments.push(speech_fields(
            &record[c_text],
            &record[c_start],
            &record[c_end],
            &record[c_emotion],
            &record[c_conf],
            line,
            opts.strict_labels,
        )?);
    }
    segments.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    Ok(segments)
}

/// Validates the five speech columns shared by the speech and fused formats.
pub(crate) fn speech_fields(
    text: &str,
    start: &str,
    end: &str,
    emotion: &str,
    confidence: &str,
    line: u64,
    strict: bool,
) -> Result<SpeechSegment> {
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::at_line(ErrorCode::Invariant, line, "empty utterance text"));
    }
    let start_s = parse_seconds(start, "start", line)?;
    let end_s = parse_seconds(end, "end", line)?;
    if end_s < start_s {
        return Err(Error::at_line(
            ErrorCode::Interval,
            line,
            format!("end {end_s} precedes start {start_s}"),
        ));
    }
    let emotion = SpeechLabel::parse(emotion, strict).map_err(|e| e.with_line(line))?;
    let confidence = parse_unit(confidence, "confidence", line)?;
    Ok(SpeechSegment {
        text: text.to_string(),
        start_s,
        end_s,
        emotion,
        confidence,
    })
}

/// Parses a frame-dominant file as written by [`write_frame_dominants`].
pub fn parse_frame_dominants<R: Read>(source: R) -> Result<Vec<FrameDominant>> {
    let mut rdr = reader(source);
    let header = Header::read(&mut rdr)?;
    let c_time = header.require(DOMINANTS_HEADER[0])?;
    let c_score = header.require(DOMINANTS_HEADER[1])?;
    let c_label = header.require(DOMINANTS_HEADER[2])?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(Error::csv)?;
        let line = line_of(&record);
        let timestamp_s = parse_seconds(&record[c_time], "Timestamp", line)?;
        let score = parse_unit(&record[c_score], "Highest Score", line)?;
        let label: FaceLabel = record[c_label].parse().map_err(|e: Error| e.with_line(line))?;
        if (label == FaceLabel::NoFace) != (score == 0.0) {
            return Err(Error::at_line(
                ErrorCode::Invariant,
                line,
                format!("label '{label}' inconsistent with score {score}"),
            ));
        }
        out.push(FrameDominant {
            timestamp_s,
            label,
            score,
        });
    }
    Ok(out)
}

pub(crate) fn writer<W: Write>(sink: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(sink)
}

pub(crate) fn finish<W: Write>(mut wtr: csv::Writer<W>) -> Result<()> {
    wtr.flush()
        .map_err(|e| Error::new(ErrorCode::Io, e.to_string()))
}

/// Writes frames in the `timestamp,angry,...,neutral` layout.
pub fn write_frames<W: Write>(frames: &[EmotionFrame], sink: W) -> Result<()> {
    let mut wtr = writer(sink);
    let mut header = vec!["timestamp"];
    header.extend(BasicEmotion::ALL.iter().map(|e| e.as_str()));
    wtr.write_record(&header).map_err(Error::csv)?;
    for f in frames {
        let mut row = Vec::with_capacity(8);
        row.push(fmt_real(f.timestamp_s));
        row.extend(f.probabilities.iter().map(|p| fmt_real(*p)));
        wtr.write_record(&row).map_err(Error::csv)?;
    }
    finish(wtr)
}

/// Writes the three-column `Timestamp,Highest Score,Facial Emotion` file.
pub fn write_frame_dominants<W: Write>(dominants: &[FrameDominant], sink: W) -> Result<()> {
    let mut wtr = writer(sink);
    wtr.write_record(DOMINANTS_HEADER).map_err(Error::csv)?;
    for d in dominants {
        wtr.write_record([fmt_real(d.timestamp_s), fmt_real(d.score), d.label.to_string()])
            .map_err(Error::csv)?;
    }
    finish(wtr)
}

/// Derives and writes the dominant of every frame.
pub fn export_frame_dominants<W: Write>(frames: &[EmotionFrame], sink: W) -> Result<()> {
    write_frame_dominants(&frame_dominants(frames), sink)
}

pub fn write_speech<W: Write>(segments: &[SpeechSegment], sink: W) -> Result<()> {
    let mut wtr = writer(sink);
    wtr.write_record(SPEECH_HEADER).map_err(Error::csv)?;
    for s in segments {
        wtr.write_record([
            s.text.clone(),
            fmt_real(s.start_s),
            fmt_real(s.end_s),
            s.emotion.to_string(),
            fmt_real(s.confidence),
        ])
        .map_err(Error::csv)?;
    }
    finish(wtr)
}

pub(crate) fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

pub fn parse_frames_file(path: impl AsRef<Path>, opts: &ParseOptions) -> Result<ParsedFrames> {
    let path = path.as_ref();
    parse_frames(open(path)?, opts).map_err(|e| e.with_path(path))
}

pub fn parse_speech_file(path: impl AsRef<Path>, opts: &ParseOptions) -> Result<Vec<SpeechSegment>> {
    let path = path.as_ref();
    parse_speech(open(path)?, opts).map_err(|e| e.with_path(path))
}

pub fn write_frames_file(frames: &[EmotionFrame], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_frames(frames, create(path)?).map_err(|e| e.with_path(path))
}

pub fn write_speech_file(segments: &[SpeechSegment], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_speech(segments, create(path)?).map_err(|e| e.with_path(path))
}

pub fn write_frame_dominants_file(dominants: &[FrameDominant], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_frame_dominants(dominants, create(path)?).map_err(|e| e.with_path(path))
}
