//! A loaded session and the query catalog dispatched over it.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::anomaly::{mapped_anomalies, raw_anomalies};
use crate::error::{Error, ErrorCode, Result};
use crate::fusion::{fuse, FusedRecord};
use crate::insights::{
    build_timeline, default_hotspot_labels, dominant_summary, filter_by_speech_emotion, hotspots,
    keyword_search, no_face_records, peak_record, KeywordPattern, TimelineEntry, TimelineSegment,
    DEFAULT_MIN_RUN_S, SCHEMA_VERSION,
};
use crate::streams::{
    frame_dominants, parse_frames_file, parse_speech_file, FrameDominant, ParseOptions, Warning,
};
use crate::taxonomy::{default_mapping, load_mapping, BasicEmotion, EmotionMapping, SpeechEmotion};

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub parse: ParseOptions,
    pub min_run_s: f64,
    pub mapping: EmotionMapping,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            parse: ParseOptions::default(),
            min_run_s: DEFAULT_MIN_RUN_S,
            mapping: default_mapping(),
        }
    }
}

/// One session, fused and segmented once at load time.
#[derive(Debug, Clone)]
pub struct SessionDataset {
    pub id: String,
    pub fused: Vec<FusedRecord>,
    pub frame_dominants: Vec<FrameDominant>,
    pub timeline: Vec<TimelineSegment>,
    pub source_paths: Vec<String>,
    pub warnings: Vec<Warning>,
    pub config: SessionConfig,
}

/// Session metadata as served to clients.
#[derive(Debug, Clone, Serialize)]
pub struct SessionInfo<'a> {
    pub schema_version: u32,
    pub id: &'a str,
    pub record_count: usize,
    pub frame_count: usize,
    pub duration_s: f64,
    pub min_run_s: f64,
    pub mapping: &'a str,
    pub source_paths: &'a [String],
}

fn session_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "session".to_string())
}

/// Parses both streams, fuses them and builds the timeline.
pub fn load_session(
    frames_path: impl AsRef<Path>,
    speech_path: impl AsRef<Path>,
    config: SessionConfig,
) -> Result<SessionDataset> {
    let (frames_path, speech_path) = (frames_path.as_ref(), speech_path.as_ref());
    let parsed = parse_frames_file(frames_path, &config.parse)?;
    let segments = parse_speech_file(speech_path, &config.parse)?;
    let dominants = frame_dominants(&parsed.frames);
    let fused = fuse(&dominants, &segments);
    let timeline = build_timeline(&dominants, config.min_run_s);
    Ok(SessionDataset {
        id: session_id(speech_path),
        fused,
        frame_dominants: dominants,
        timeline,
        source_paths: [frames_path, speech_path]
            .iter()
            .map(|p| p.display().to_string())
            .collect(),
        warnings: parsed.warnings,
        config,
    })
}

impl SessionDataset {
    /// A session built from an already fused file; it has no frames and so
    /// an empty timeline.
    pub fn from_fused(path: impl AsRef<Path>, config: SessionConfig) -> Result<SessionDataset> {
        let path: PathBuf = path.as_ref().to_path_buf();
        let fused = crate::fusion::parse_fused_file(&path, config.parse.strict_labels)?;
        Ok(SessionDataset {
            id: session_id(&path),
            fused,
            frame_dominants: Vec::new(),
            timeline: Vec::new(),
            source_paths: vec![path.display().to_string()],
            warnings: Vec::new(),
            config,
        })
    }

    pub fn duration_s(&self) -> f64 {
        let speech = self.fused.iter().map(|r| r.end_s);
        let frames = self.frame_dominants.iter().map(|d| d.timestamp_s);
        speech.chain(frames).fold(0.0, f64::max)
    }

    pub fn info(&self) -> SessionInfo<'_> {
        SessionInfo {
            schema_version: SCHEMA_VERSION,
            id: &self.id,
            record_count: self.fused.len(),
            frame_count: self.frame_dominants.len(),
            duration_s: self.duration_s(),
            min_run_s: self.config.min_run_s,
            mapping: self.config.mapping.name(),
            source_paths: &self.source_paths,
        }
    }

    /// The timeline at `min_run_s`, reusing the cached one when it matches.
    pub fn timeline_at(&self, min_run_s: f64) -> Vec<TimelineSegment> {
        if min_run_s == self.config.min_run_s {
            self.timeline.clone()
        } else {
            build_timeline(&self.frame_dominants, min_run_s)
        }
    }
}

pub const QUERY_NAMES: [&str; 9] = [
    "dominant-summary",
    "peak",
    "filter-speech",
    "no-face",
    "raw-anomalies",
    "mapped-anomalies",
    "keyword",
    "hotspots",
    "timeline",
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryRequest {
    pub name: String,
    pub parameters: BTreeMap<String, String>,
}

impl QueryRequest {
    pub fn new(name: impl Into<String>) -> Self {
        QueryRequest {
            name: name.into(),
            parameters: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<String>) -> Self {
        self.parameters.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QueryResult {
    pub schema_version: u32,
    pub query_name: String,
    pub parameters: BTreeMap<String, String>,
    pub count: usize,
    pub rows: Vec<Value>,
    pub generated_at: Option<String>,
}

impl QueryResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("query result serializes")
    }
}

fn allowed_parameters(name: &str) -> Option<&'static [&'static str]> {
    Some(match name {
        "dominant-summary" | "no-face" | "raw-anomalies" => &[],
        "peak" => &["label"],
        "filter-speech" => &["labels"],
        "mapped-anomalies" => &["include_neutral", "mapping"],
        "keyword" => &["pattern"],
        "hotspots" => &["labels"],
        "timeline" => &["min_run"],
        _ => return None,
    })
}

fn required<'a>(req: &'a QueryRequest, key: &str) -> Result<&'a str> {
    req.parameters
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::new(ErrorCode::Param, format!("query '{}' requires parameter '{key}'", req.name)))
}

pub fn parse_flag(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" | "" => Ok(false),
        _ => Err(Error::new(ErrorCode::Param, format!("parameter '{key}' must be 0 or 1, got '{value}'"))),
    }
}

pub fn parse_min_run(value: &str) -> Result<f64> {
    match value.trim().parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(Error::new(
            ErrorCode::Param,
            format!("min_run must be a non-negative number of seconds, got '{value}'"),
        )),
    }
}

/// Parses a comma-separated list of speech emotions.
pub fn parse_speech_labels(value: &str) -> Result<BTreeSet<SpeechEmotion>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

fn rows<T: Serialize>(items: impl IntoIterator<Item = T>) -> Vec<Value> {
    items
        .into_iter()
        .map(|i| serde_json::to_value(i).expect("row serializes"))
        .collect()
}

/// Dispatches a catalog query against a loaded session.
pub fn run_query(session: &SessionDataset, req: &QueryRequest) -> Result<QueryResult> {
    let allowed = allowed_parameters(&req.name).ok_or_else(|| {
        Error::new(
            ErrorCode::Query,
            format!("unknown query '{}' (expected one of: {})", req.name, QUERY_NAMES.join(", ")),
        )
    })?;
    if let Some(extra) = req.parameters.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::new(
            ErrorCode::Param,
            format!("query '{}' does not take parameter '{extra}'", req.name),
        ));
    }
    let records = &session.fused;
    let out = match req.name.as_str() {
        "dominant-summary" => rows(dominant_summary(records)),
        "peak" => {
            let label: BasicEmotion = required(req, "label")?.parse()?;
            rows(peak_record(records, label))
        }
        "filter-speech" => {
            let labels = parse_speech_labels(required(req, "labels")?)?;
            rows(filter_by_speech_emotion(records, &labels))
        }
        "no-face" => rows(no_face_records(records)),
        "raw-anomalies" => rows(raw_anomalies(records)),
        "mapped-anomalies" => {
            let include_neutral = match req.parameters.get("include_neutral") {
                Some(v) => parse_flag("include_neutral", v)?,
                None => false,
            };
            let loaded;
            let mapping = match req.parameters.get("mapping") {
                Some(path) => {
                    loaded = load_mapping(path)?;
                    &loaded
                }
                None => &session.config.mapping,
            };
            rows(mapped_anomalies(records, mapping, include_neutral))
        }
        "keyword" => {
            let pattern = KeywordPattern::parse(required(req, "pattern")?)?;
            rows(keyword_search(records, &pattern))
        }
        "hotspots" => {
            let labels = match req.parameters.get("labels") {
                Some(v) => parse_speech_labels(v)?,
                None => default_hotspot_labels(),
            };
            rows(hotspots(records, &labels))
        }
        "timeline" => {
            let min_run = match req.parameters.get("min_run") {
                Some(v) => parse_min_run(v)?,
                None => session.config.min_run_s,
            };
            rows(session.timeline_at(min_run).iter().map(TimelineEntry::from))
        }
        _ => unreachable!("query names are checked above"),
    };
    Ok(QueryResult {
        schema_version: SCHEMA_VERSION,
        query_name: req.name.clone(),
        parameters: req.parameters.clone(),
        count: out.len(),
        rows: out,
        generated_at: None,
    })
}
