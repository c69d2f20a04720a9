//! Deterministic insight queries over fused records, and the session timeline.

use std::collections::{BinaryHeap, BTreeSet};
use std::cmp::{Ordering, Reverse};

use regex::{Regex, RegexBuilder};
use serde::Serialize;

use crate::anomaly::{mapped_anomalies, raw_anomalies, AnomalyRecord};
use crate::error::{Error, ErrorCode, Result};
use crate::format::fmt_hms;
use crate::fusion::{FusedRecord, NONE_MARKER};
use crate::streams::{FaceLabel, FrameDominant};
use crate::taxonomy::{BasicEmotion, EmotionMapping, SpeechEmotion};

pub const SCHEMA_VERSION: u32 = 1;

/// Speech labels that mark a negative-experience moment.
pub const HOTSPOT_LABELS: [SpeechEmotion; 4] = [
    SpeechEmotion::Confusion,
    SpeechEmotion::Disappointment,
    SpeechEmotion::Annoyance,
    SpeechEmotion::Disapproval,
];

/// Default smoothing for report timelines, in seconds.
pub const DEFAULT_MIN_RUN_S: f64 = 1.0;

/// A fused record together with its position in the session.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexedRecord {
    pub index: usize,
    #[serde(flatten)]
    pub record: FusedRecord,
}

fn indexed<'a>(
    records: &'a [FusedRecord],
    keep: impl Fn(&FusedRecord) -> bool + 'a,
) -> impl Iterator<Item = IndexedRecord> + 'a {
    records
        .iter()
        .enumerate()
        .filter(move |(_, r)| keep(r))
        .map(|(index, r)| IndexedRecord {
            index,
            record: r.clone(),
        })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SummaryEntry {
    /// A basic emotion, `No face detected`, or `None`.
    pub label: &'static str,
    pub count: usize,
}

fn dominant_rank(d: Option<FaceLabel>) -> usize {
    d.map_or(FaceLabel::COUNT, FaceLabel::index)
}

/// Counts of dominant facial labels, most frequent first, ties in canonical
/// order (`No face detected`, then `None`, last).
pub fn dominant_summary(records: &[FusedRecord]) -> Vec<SummaryEntry> {
    let mut counts = [0usize; FaceLabel::COUNT + 1];
    for r in records {
        counts[dominant_rank(r.dominant_fer_emotion())] += 1;
    }
    let mut entries: Vec<(usize, usize)> = counts
        .iter()
        .enumerate()
        .filter(|(_, c)| **c > 0)
        .map(|(i, c)| (i, *c))
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    entries
        .into_iter()
        .map(|(i, count)| SummaryEntry {
            label: if i == FaceLabel::COUNT {
                NONE_MARKER
            } else {
                FaceLabel::from_index(i).as_str()
            },
            count,
        })
        .collect()
}

/// The record dominated by `label` with the highest average facial score;
/// ties go to the earliest start.
pub fn peak_record(records: &[FusedRecord], label: BasicEmotion) -> Option<IndexedRecord> {
    let mut best: Option<(usize, &FusedRecord, f64)> = None;
    for (i, r) in records.iter().enumerate() {
        let Some(face) = r.face else { continue };
        if face.label != FaceLabel::Emotion(label) {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, b, score)) => {
                face.avg_score > score || (face.avg_score == score && r.start_s < b.start_s)
            }
        };
        if better {
            best = Some((i, r, face.avg_score));
        }
    }
    best.map(|(index, r, _)| IndexedRecord {
        index,
        record: r.clone(),
    })
}

pub fn filter_by_speech_emotion(
    records: &[FusedRecord],
    labels: &BTreeSet<SpeechEmotion>,
) -> Vec<IndexedRecord> {
    indexed(records, |r| {
        r.speech_emotion
            .known()
            .is_some_and(|e| labels.contains(&e))
    })
    .collect()
}

pub fn no_face_records(records: &[FusedRecord]) -> Vec<IndexedRecord> {
    indexed(records, |r| r.dominant_fer_emotion() == Some(FaceLabel::NoFace)).collect()
}

/// A text search pattern.
///
/// Plain text matches as a case-insensitive substring. Text wrapped in
/// slashes (`/^so .*tent\.$/`) is a case-insensitive regular expression that
/// must match the whole utterance.
#[derive(Debug, Clone)]
pub enum KeywordPattern {
    Substring(String),
    Regex(Regex),
}

impl KeywordPattern {
    pub fn parse(pattern: &str) -> Result<KeywordPattern> {
        if pattern.trim().is_empty() {
            return Err(Error::new(ErrorCode::Pattern, "empty search pattern"));
        }
        if pattern.len() >= 2 && pattern.starts_with('/') && pattern.ends_with('/') {
            let inner = &pattern[1..pattern.len() - 1];
            if inner.is_empty() {
                return Err(Error::new(ErrorCode::Pattern, "empty regular expression"));
            }
            let re = RegexBuilder::new(&format!("^(?:{inner})$"))
                .case_insensitive(true)
                .build()
                .map_err(|e| Error::new(ErrorCode::Pattern, format!("bad pattern '{pattern}': {e}")))?;
            return Ok(KeywordPattern::Regex(re));
        }
        Ok(KeywordPattern::Substring(pattern.to_lowercase()))
    }

    pub fn is_match(&self, text: &str) -> bool {
        match self {
            KeywordPattern::Substring(needle) => text.to_lowercase().contains(needle.as_str()),
            KeywordPattern::Regex(re) => re.is_match(text),
        }
    }
}

pub fn keyword_search(records: &[FusedRecord], pattern: &KeywordPattern) -> Vec<IndexedRecord> {
    indexed(records, |r| pattern.is_match(&r.text)).collect()
}

/// Records whose speech emotion marks a negative-experience moment.
pub fn hotspots(records: &[FusedRecord], labels: &BTreeSet<SpeechEmotion>) -> Vec<IndexedRecord> {
    filter_by_speech_emotion(records, labels)
}

pub fn default_hotspot_labels() -> BTreeSet<SpeechEmotion> {
    HOTSPOT_LABELS.into_iter().collect()
}

/// A run of one dominant facial label over session time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimelineSegment {
    pub start_s: f64,
    pub end_s: f64,
    pub label: FaceLabel,
    /// Number of frames the segment covers.
    pub frames: usize,
}

impl TimelineSegment {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Run-length encodes frame dominants into timeline segments.
///
/// A run spans from its first frame to the first frame of the next run; the
/// last run ends at the last frame, so the segments partition
/// `[first timestamp, last timestamp]`. With `min_run_s > 0`, runs shorter than
/// that are merged into their longer neighbour (the earlier one on a tie),
/// shortest first, and equal-labelled neighbours are coalesced.
pub fn build_timeline(dominants: &[FrameDominant], min_run_s: f64) -> Vec<TimelineSegment> {
    let Some(last) = dominants.last() else {
        return Vec::new();
    };
    let mut runs: Vec<TimelineSegment> = Vec::new();
    for d in dominants {
        match runs.last_mut() {
            Some(run) if run.label == d.label => run.frames += 1,
            _ => {
                if let Some(run) = runs.last_mut() {
                    run.end_s = d.timestamp_s;
                }
                runs.push(TimelineSegment {
                    start_s: d.timestamp_s,
                    end_s: d.timestamp_s,
                    label: d.label,
                    frames: 1,
                });
            }
        }
    }
    if let Some(run) = runs.last_mut() {
        run.end_s = last.timestamp_s;
    }
    if min_run_s > 0.0 && runs.len() > 1 {
        smooth(runs, min_run_s)
    } else {
        runs
    }
}

#[derive(Debug, PartialEq)]
struct Pending {
    duration: f64,
    id: usize,
    version: u32,
}

impl Eq for Pending {}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        self.duration
            .total_cmp(&other.duration)
            .then(self.id.cmp(&other.id))
            .then(self.version.cmp(&other.version))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn smooth(runs: Vec<TimelineSegment>, min_run_s: f64) -> Vec<TimelineSegment> {
    let n = runs.len();
    let mut segs = runs;
    let mut alive = vec![true; n];
    let mut version = vec![0u32; n];
    let mut prev: Vec<Option<usize>> = (0..n).map(|i| i.checked_sub(1)).collect();
    let mut next: Vec<Option<usize>> = (0..n).map(|i| (i + 1 < n).then_some(i + 1)).collect();
    let mut remaining = n;
    let mut heap: BinaryHeap<Reverse<Pending>> = segs
        .iter()
        .enumerate()
        .map(|(id, s)| {
            Reverse(Pending {
                duration: s.duration_s(),
                id,
                version: 0,
            })
        })
        .collect();

    // Folds `from` into `into`, which must be adjacent.
    let absorb = |segs: &mut Vec<TimelineSegment>,
                  alive: &mut Vec<bool>,
                  prev: &mut Vec<Option<usize>>,
                  next: &mut Vec<Option<usize>>,
                  into: usize,
                  from: usize| {
        let f = segs[from];
        let t = &mut segs[into];
        t.start_s = t.start_s.min(f.start_s);
        t.end_s = t.end_s.max(f.end_s);
        t.frames += f.frames;
        alive[from] = false;
        let (p, nx) = (prev[from], next[from]);
        if let Some(p) = p {
            next[p] = nx;
        }
        if let Some(nx) = nx {
            prev[nx] = p;
        }
    };

    while let Some(Reverse(item)) = heap.pop() {
        let id = item.id;
        if !alive[id] || item.version != version[id] {
            continue;
        }
        if item.duration >= min_run_s || remaining == 1 {
            break;
        }
        let target = match (prev[id], next[id]) {
            (Some(p), Some(nx)) => {
                if segs[nx].duration_s() > segs[p].duration_s() {
                    nx
                } else {
                    p
                }
            }
            (Some(p), None) => p,
            (None, Some(nx)) => nx,
            (None, None) => break,
        };
        absorb(&mut segs, &mut alive, &mut prev, &mut next, target, id);
        remaining -= 1;
        for neighbour in [prev[target], next[target]].into_iter().flatten() {
            if segs[neighbour].label == segs[target].label {
                absorb(&mut segs, &mut alive, &mut prev, &mut next, target, neighbour);
                remaining -= 1;
            }
        }
        version[target] += 1;
        heap.push(Reverse(Pending {
            duration: segs[target].duration_s(),
            id: target,
            version: version[target],
        }));
    }

    let mut out = Vec::with_capacity(remaining);
    let mut cursor = (0..n).find(|i| alive[*i]);
    while let Some(i) = cursor {
        out.push(segs[i]);
        cursor = next[i];
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct TimelineEntry {
    pub start_s: f64,
    pub end_s: f64,
    pub duration_s: f64,
    pub start_hms: String,
    pub end_hms: String,
    pub label: FaceLabel,
    pub frames: usize,
}

impl From<&TimelineSegment> for TimelineEntry {
    fn from(s: &TimelineSegment) -> Self {
        TimelineEntry {
            start_s: s.start_s,
            end_s: s.end_s,
            duration_s: s.duration_s(),
            start_hms: fmt_hms(s.start_s),
            end_hms: fmt_hms(s.end_s),
            label: s.label,
            frames: s.frames,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TimelineDocument {
    pub schema_version: u32,
    pub min_run_s: f64,
    pub segments: Vec<TimelineEntry>,
}

impl TimelineDocument {
    pub fn new(segments: &[TimelineSegment], min_run_s: f64) -> Self {
        TimelineDocument {
            schema_version: SCHEMA_VERSION,
            min_run_s,
            segments: segments.iter().map(TimelineEntry::from).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PeakEntry {
    pub label: BasicEmotion,
    pub record: Option<IndexedRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnomalySection {
    pub count: usize,
    pub records: Vec<AnomalyRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MappedAnomalySection {
    pub mapping: String,
    pub include_neutral: bool,
    pub count: usize,
    pub records: Vec<AnomalyRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HotspotSection {
    pub labels: Vec<SpeechEmotion>,
    pub records: Vec<IndexedRecord>,
}

/// The full session report; field order is the serialized section order.
#[derive(Debug, Clone, Serialize)]
pub struct SessionReport {
    pub schema_version: u32,
    pub generated_at: String,
    pub notes: Vec<&'static str>,
    pub record_count: usize,
    pub summary: Vec<SummaryEntry>,
    pub peaks: Vec<PeakEntry>,
    pub hotspots: HotspotSection,
    pub raw_anomalies: AnomalySection,
    pub mapped_anomalies: MappedAnomalySection,
    pub no_face: Vec<IndexedRecord>,
    pub timeline: TimelineDocument,
}

#[derive(Debug, Clone)]
pub struct ReportOptions<'a> {
    pub mapping: &'a EmotionMapping,
    pub include_neutral: bool,
    pub min_run_s: f64,
    pub generated_at: String,
}

const REPORT_NOTES: [&str; 3] = [
    "peaks rank records by avg_fer_score (facial score), not by speech confidence",
    "hotspots are a keyword-free heuristic: records whose speech emotion is confusion, disappointment, annoyance or disapproval",
    "summary counts include 'No face detected' and 'None' (no aligned frames)",
];

impl SessionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn session_report(
    records: &[FusedRecord],
    timeline: &[TimelineSegment],
    opts: &ReportOptions<'_>,
) -> SessionReport {
    let hotspot_labels = default_hotspot_labels();
    let raw = raw_anomalies(records);
    let mapped = mapped_anomalies(records, opts.mapping, opts.include_neutral);
    SessionReport {
        schema_version: SCHEMA_VERSION,
        generated_at: opts.generated_at.clone(),
        notes: REPORT_NOTES.to_vec(),
        record_count: records.len(),
        summary: dominant_summary(records),
        peaks: BasicEmotion::ALL
            .into_iter()
            .map(|label| PeakEntry {
                label,
                record: peak_record(records, label),
            })
            .collect(),
        hotspots: HotspotSection {
            labels: hotspot_labels.iter().copied().collect(),
            records: hotspots(records, &hotspot_labels),
        },
        raw_anomalies: AnomalySection {
            count: raw.len(),
            records: raw,
        },
        mapped_anomalies: MappedAnomalySection {
            mapping: opts.mapping.name().to_string(),
            include_neutral: opts.include_neutral,
            count: mapped.len(),
            records: mapped,
        },
        no_face: no_face_records(records),
        timeline: TimelineDocument::new(timeline, opts.min_run_s),
    }
}
