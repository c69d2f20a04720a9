//! Fixture loading and the frame synthesizer shared by integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use emofuse_core::fusion::{parse_fused_file, FusedRecord};
use emofuse_core::streams::{EmotionFrame, FaceLabel, SpeechSegment};
use emofuse_core::taxonomy::BasicEmotion;

pub fn data_path(name: &str) -> PathBuf {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    manifest.join("../core/tests/data").join(name)
}

/// Reads a fused fixture leniently, so the published capitalisation and any
/// out-of-taxonomy label survive.
pub fn fused_fixture(name: &str) -> Vec<FusedRecord> {
    parse_fused_file(data_path(name), false).expect("fixture parses")
}

pub fn segments_of(records: &[FusedRecord]) -> Vec<SpeechSegment> {
    records
        .iter()
        .map(|r| SpeechSegment {
            text: r.text.clone(),
            start_s: r.start_s,
            end_s: r.end_s,
            emotion: r.speech_emotion.clone(),
            confidence: r.speech_confidence,
        })
        .collect()
}

/// A frame whose dominant is `label` with exactly `score`; the remaining
/// mass is spread evenly over the other emotions.
pub fn frame_with(t: f64, label: FaceLabel, score: f64) -> EmotionFrame {
    match label {
        FaceLabel::NoFace => EmotionFrame::no_face(t),
        FaceLabel::Emotion(e) => {
            let rest = (1.0 - score) / (BasicEmotion::COUNT - 1) as f64;
            assert!(rest < score, "score {score} cannot dominate");
            let mut p = [rest; BasicEmotion::COUNT];
            p[e.index()] = score;
            EmotionFrame::new(t, p)
        }
    }
}

fn other_label(label: FaceLabel) -> FaceLabel {
    match label {
        FaceLabel::Emotion(BasicEmotion::Fear) => FaceLabel::Emotion(BasicEmotion::Disgust),
        _ => FaceLabel::Emotion(BasicEmotion::Fear),
    }
}

/// Builds a frame stream that fuses back to every record's published face
/// summary.
///
/// Each segment gets three frames of its dominant label with scores
/// `a - d, a, a + d` (so their mean is `a`) interleaved with two frames of
/// another label, all strictly inside the segment. One filler frame sits in
/// each gap between segments. Records without a face summary get no frames.
pub fn synthesize_frames(records: &[FusedRecord]) -> Vec<EmotionFrame> {
    let mut frames = Vec::new();
    let mut sorted: Vec<&FusedRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    for (i, r) in sorted.iter().enumerate() {
        if let Some(face) = r.face {
            let a = face.avg_score;
            let d = 0.01f64.min(1.0 - a).min(a);
            let scores = [a - d, a, a + d];
            let other = other_label(face.label);
            let step = (r.end_s - r.start_s) / 6.0;
            for k in 1..=5 {
                let t = r.start_s + step * k as f64;
                let frame = if k % 2 == 1 {
                    frame_with(t, face.label, if face.label == FaceLabel::NoFace { 0.0 } else { scores[k / 2] })
                } else {
                    frame_with(t, other, 0.6)
                };
                frames.push(frame);
            }
        }
        if let Some(next) = sorted.get(i + 1) {
            if next.start_s > r.end_s {
                let mid = (r.end_s + next.start_s) / 2.0;
                frames.push(frame_with(mid, FaceLabel::Emotion(BasicEmotion::Surprise), 0.7));
            }
        }
    }
    frames
}
