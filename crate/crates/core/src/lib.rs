//! Fusion of per-frame facial-emotion streams with timestamped speech-emotion
//! segments, plus the analyses built on top: cross-modal anomalies, insight
//! queries, session timelines and a classifier evaluation harness.

pub mod anomaly;
pub mod error;
pub mod evalharness;
pub mod format;
pub mod fusion;
pub mod insights;
pub mod session;
pub mod streams;
pub mod taxonomy;

pub use anomaly::{export_anomalies, mapped_anomalies, raw_anomalies, AnomalyMode, AnomalyRecord};
pub use error::{Error, ErrorCode, Result};
pub use fusion::{align, export_fused, fuse, parse_fused, AlignmentWindow, FaceSummary, FusedRecord};
pub use insights::{build_timeline, session_report, KeywordPattern, SessionReport, TimelineSegment};
pub use session::{load_session, run_query, QueryRequest, QueryResult, SessionConfig, SessionDataset};
pub use streams::{
    dominant_of_frame, frame_dominants, parse_frames, parse_speech, EmotionFrame, FaceLabel,
    FrameDominant, ParseOptions, SpeechSegment,
};
pub use taxonomy::{default_mapping, BasicEmotion, EmotionMapping, Mapped, SpeechEmotion, SpeechLabel};
