//! Acceptance suite: one PASS/FAIL line per criterion.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tower::ServiceExt;

use common::{data_path, frame_with, fused_fixture, segments_of, synthesize_frames};
use emofuse_core::anomaly::{mapped_anomalies, raw_anomalies};
use emofuse_core::evalharness::{
    confusion_matrix, metrics, parse_grid, rank_models, Averaging, LabeledPredictions,
};
use emofuse_core::fusion::{export_fused, fuse, parse_fused, parse_fused_file, FaceSummary, FusedRecord};
use emofuse_core::insights::{build_timeline, dominant_summary, filter_by_speech_emotion};
use emofuse_core::session::{load_session, SessionConfig};
use emofuse_core::streams::{
    frame_dominants, parse_frames, parse_speech, parse_speech_file, write_frames, write_frames_file,
    write_speech, write_speech_file, EmotionFrame, FaceLabel, FrameDominant, ParseOptions, SpeechSegment,
};
use emofuse_core::taxonomy::{default_mapping, BasicEmotion, EmotionMapping, SpeechEmotion, SpeechLabel};

type Check = fn() -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {{
        let held: bool = $cond;
        if !held {
            return Err(format!($($msg)+));
        }
    }};
}

// ---- independent oracles -------------------------------------------------

/// Brute-force fusion: linear scan per segment, naive mean, same tie rules.
fn oracle_fuse(frames: &[FrameDominant], seg: &SpeechSegment) -> Option<(FaceLabel, f64)> {
    let mut best: Option<(FaceLabel, usize, f64)> = None;
    for idx in 0..FaceLabel::COUNT {
        let label = FaceLabel::from_index(idx);
        let scores: Vec<f64> = frames
            .iter()
            .filter(|f| f.label == label && seg.start_s <= f.timestamp_s && f.timestamp_s <= seg.end_s)
            .map(|f| f.score)
            .collect();
        if scores.is_empty() {
            continue;
        }
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        let replace = match best {
            None => true,
            Some((_, n, m)) => scores.len() > n || (scores.len() == n && mean > m),
        };
        if replace {
            best = Some((label, scores.len(), mean));
        }
    }
    best.map(|(l, _, m)| (l, if l == FaceLabel::NoFace { 0.0 } else { m }))
}

struct Scores {
    accuracy: f64,
    precision: f64,
    recall: f64,
    f1: f64,
}

/// Per-class counts straight from the item list.
fn oracle_metrics(items: &[(usize, usize)], k: usize, weighted: bool) -> Scores {
    let n = items.len() as f64;
    let accuracy = items.iter().filter(|(t, p)| t == p).count() as f64 / n;
    let (mut ps, mut rs, mut fs, mut ws) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for c in 0..k {
        let tp = items.iter().filter(|(t, p)| *t == c && *p == c).count() as f64;
        let predicted = items.iter().filter(|(_, p)| *p == c).count() as f64;
        let actual = items.iter().filter(|(t, _)| *t == c).count() as f64;
        let p = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let r = if actual > 0.0 { tp / actual } else { 0.0 };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        ps.push(p);
        rs.push(r);
        fs.push(f);
        ws.push(if weighted { actual / n } else { 1.0 / k as f64 });
    }
    let avg = |v: &[f64]| v.iter().zip(&ws).map(|(x, w)| x * w).sum::<f64>();
    Scores {
        accuracy,
        precision: avg(&ps),
        recall: avg(&rs),
        f1: avg(&fs),
    }
}

/// Plain run-length encoding of a label sequence.
fn oracle_rle(labels: &[FaceLabel]) -> Vec<(FaceLabel, usize)> {
    let mut runs: Vec<(FaceLabel, usize)> = Vec::new();
    for l in labels {
        match runs.last_mut() {
            Some((last, n)) if last == l => *n += 1,
            _ => runs.push((*l, 1)),
        }
    }
    runs
}

// ---- helpers -------------------------------------------------------------

fn segment(text: &str, start: f64, end: f64, emotion: SpeechEmotion) -> SpeechSegment {
    SpeechSegment {
        text: text.into(),
        start_s: start,
        end_s: end,
        emotion: emotion.into(),
        confidence: 0.5,
    }
}

fn record(text: &str, speech: SpeechEmotion, face: FaceLabel, avg: f64) -> FusedRecord {
    FusedRecord {
        text: text.into(),
        start_s: 0.0,
        end_s: 1.0,
        speech_emotion: speech.into(),
        speech_confidence: 0.5,
        face: Some(FaceSummary { label: face, avg_score: avg }),
    }
}

fn happy() -> FaceLabel {
    FaceLabel::Emotion(BasicEmotion::Happy)
}

fn neutral() -> FaceLabel {
    FaceLabel::Emotion(BasicEmotion::Neutral)
}

fn random_score(rng: &mut ChaCha8Rng, dyadic: bool) -> f64 {
    if dyadic {
        f64::from(rng.gen_range(1u32..=16)) / 16.0
    } else {
        rng.gen_range(0.15..=1.0)
    }
}

// ---- criteria ------------------------------------------------------------

fn fusion_oracle() -> Result<String, String> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_f00d);
    let mut windows = 0usize;
    for instance in 0..1000 {
        // Half the instances use dyadic scores so that mean ties are exact.
        let dyadic = instance % 2 == 0;
        let n_frames = rng.gen_range(0..=500);
        let n_segments = rng.gen_range(0..=30);
        let horizon = 60.0;
        let n_labels = rng.gen_range(1..=FaceLabel::COUNT);
        let mut frames: Vec<FrameDominant> = (0..n_frames)
            .map(|_| {
                // Timestamps on a 1/15 s grid hit segment bounds exactly.
                let t = f64::from(rng.gen_range(0u32..=(horizon as u32 * 15))) / 15.0;
                let label = FaceLabel::from_index(rng.gen_range(0..n_labels));
                let score = if label == FaceLabel::NoFace { 0.0 } else { random_score(&mut rng, dyadic) };
                FrameDominant { timestamp_s: t, label, score }
            })
            .collect();
        let segments: Vec<SpeechSegment> = (0..n_segments)
            .map(|i| {
                let a = f64::from(rng.gen_range(0u32..=(horizon as u32 * 15))) / 15.0;
                let len = f64::from(rng.gen_range(0u32..=60)) / 15.0;
                segment(&format!("s{i}"), a, a + len, SpeechEmotion::Neutral)
            })
            .collect();
        frames.shuffle(&mut rng);
        let fused = fuse(&frames, &segments);
        ensure!(fused.len() == segments.len(), "instance {instance}: record count changed");
        for (r, s) in fused.iter().zip(&segments) {
            windows += 1;
            let want = oracle_fuse(&frames, s);
            let got = r.face.map(|f| (f.label, f.avg_score));
            match (got, want) {
                (None, None) => {}
                (Some((gl, gs)), Some((wl, ws))) => {
                    ensure!(gl == wl, "instance {instance} segment {}: label {gl} != {wl}", s.text);
                    ensure!((gs - ws).abs() <= 1e-12, "instance {instance} segment {}: score {gs} != {ws}", s.text);
                }
                _ => return Err(format!("instance {instance} segment {}: {got:?} != {want:?}", s.text)),
            }
        }
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("1000 instances, {windows} windows, {elapsed:.2?}"))
}

fn fixture_reproduction() -> Result<String, String> {
    let expected = fused_fixture("session_fused.csv");
    ensure!(expected.len() == 27, "fixture has {} rows", expected.len());
    let frames = synthesize_frames(&expected);
    let started = Instant::now();
    let mut csv = Vec::new();
    write_frames(&frames, &mut csv).map_err(|e| e.to_string())?;
    let parsed = parse_frames(csv.as_slice(), &ParseOptions::default()).map_err(|e| e.to_string())?;
    let fused = fuse(&frame_dominants(&parsed.frames), &segments_of(&expected));
    let elapsed = started.elapsed();
    let mut worst = 0.0f64;
    for (got, want) in fused.iter().zip(&expected) {
        let (g, w) = (got.face.ok_or("missing face")?, want.face.ok_or("missing face")?);
        ensure!(g.label == w.label, "'{}': {} != {}", want.text, g.label, w.label);
        worst = worst.max((g.avg_score - w.avg_score).abs());
    }
    ensure!(worst <= 1e-6, "max avg error {worst:e}");
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("27 rows, max avg error {worst:.1e}, {elapsed:.2?}"))
}

fn worked_example() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut frames = Vec::new();
    let mut happy_scores = Vec::new();
    for i in 0..30 {
        let t = 2.0 + f64::from(i) * 2.0 / 29.0;
        let (label, score) = if i % 3 == 2 {
            (neutral(), rng.gen_range(0.5..1.0))
        } else {
            let s = rng.gen_range(0.5..1.0);
            happy_scores.push(s);
            (happy(), s)
        };
        frames.push(frame_with(t, label, score));
    }
    ensure!(happy_scores.len() == 20, "built {} happy frames", happy_scores.len());
    let fused = fuse(&frame_dominants(&frames), &[segment("x", 2.0, 4.0, SpeechEmotion::Neutral)]);
    let face = fused[0].face.ok_or("no face")?;
    let mean = happy_scores.iter().sum::<f64>() / 20.0;
    ensure!(face.label == happy(), "label {}", face.label);
    ensure!((face.avg_score - mean).abs() <= 1e-15, "avg {} != {}", face.avg_score, mean);
    Ok(format!("(happy, {:.6})", face.avg_score))
}

fn raw_anomaly_rule() -> Result<String, String> {
    let records = fused_fixture("session_fused.csv");
    let anomalies = raw_anomalies(&records);
    // The published anomaly list restricted to the first 27 rows.
    let published = [2, 6, 7, 8, 11, 13, 14, 17, 18, 19, 20, 24, 26];
    let indices: Vec<usize> = anomalies.iter().map(|a| a.index).collect();
    ensure!(indices == published, "flagged rows {indices:?}");
    let flagged: Vec<String> = anomalies.into_iter().map(|a| a.record.text).collect();
    ensure!(flagged.iter().any(|t| t == "And that Own Attent."), "'And that Own Attent.' not flagged");
    ensure!(
        !flagged.iter().any(|t| t == "So I'm going to print it out."),
        "'So I'm going to print it out.' flagged"
    );
    let synthetic = record(
        "And I'm just going to kind of get us back to the homepage so we can restart.",
        SpeechEmotion::Neutral,
        FaceLabel::NoFace,
        0.0,
    );
    ensure!(raw_anomalies(&[synthetic]).len() == 1, "NoFace record not flagged");
    Ok(format!("{} of 27 fixture rows flagged, matching the published list; NoFace flagged", flagged.len()))
}

fn mapped_anomaly_rule() -> Result<String, String> {
    let records = vec![
        record("Sorry.", SpeechEmotion::Remorse, happy(), 0.995),
        record("What's this?", SpeechEmotion::Curiosity, neutral(), 0.96),
        record("So now I'm just going to double check", SpeechEmotion::Approval, happy(), 0.9),
    ];
    let got: Vec<(usize, Option<BasicEmotion>)> = mapped_anomalies(&records, &default_mapping(), false)
        .iter()
        .map(|a| (a.index, a.mapped_fer_emotion))
        .collect();
    let want = vec![(0, Some(BasicEmotion::Sad)), (1, Some(BasicEmotion::Surprise))];
    ensure!(got == want, "{got:?} != {want:?}");
    Ok("remorse→sad flagged, curiosity→surprise flagged, approval→happy kept".into())
}

fn insight_queries() -> Result<String, String> {
    let records = fused_fixture("session_fused.csv");
    let summary: Vec<(&str, usize)> = dominant_summary(&records).iter().map(|e| (e.label, e.count)).collect();
    let want = vec![("neutral", 18), ("angry", 4), ("happy", 3), ("sad", 2)];
    ensure!(summary == want, "summary {summary:?}");
    let segments = parse_speech_file(data_path("speech_only_fused.csv"), &ParseOptions::default())
        .map_err(|e| e.to_string())?;
    let speech_only: Vec<FusedRecord> = segments.iter().map(|s| FusedRecord::from_segment(s, None)).collect();
    let confusion: BTreeSet<_> = [SpeechEmotion::Confusion].into_iter().collect();
    let hits = filter_by_speech_emotion(&speech_only, &confusion);
    ensure!(hits.len() == 1 && hits[0].record.start_s == 207.0, "confusion filter gave {} rows", hits.len());
    Ok("summary {neutral:18, angry:4, happy:3, sad:2}; confusion → 207.0 s row".into())
}

fn metrics_correctness() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0e7a1);
    let mut worst = 0.0f64;
    for instance in 0..200 {
        let k = rng.gen_range(1..=10);
        let n = if instance < 5 { 10_000 } else { rng.gen_range(1..=10_000) };
        let items: Vec<(usize, usize)> = (0..n)
            .map(|_| {
                let t = rng.gen_range(0..k);
                let p = if rng.gen_bool(0.6) { t } else { rng.gen_range(0..k) };
                (t, p)
            })
            .collect();
        let names: Vec<String> = (0..k).map(|c| format!("c{c}")).collect();
        let preds = LabeledPredictions::new(
            items.iter().map(|(t, p)| (names[*t].clone(), names[*p].clone())).collect(),
            names.clone(),
        );
        let cm = confusion_matrix(&preds).map_err(|e| e.to_string())?;
        for (averaging, weighted) in [(Averaging::Macro, false), (Averaging::Weighted, true)] {
            let got = metrics(&cm, averaging).map_err(|e| e.to_string())?;
            let want = oracle_metrics(&items, k, weighted);
            for (g, w) in [
                (got.accuracy, want.accuracy),
                (got.precision, want.precision),
                (got.recall, want.recall),
                (got.f1, want.f1),
            ] {
                worst = worst.max((g - w).abs());
            }
        }
    }
    ensure!(worst <= 1e-12, "max deviation {worst:e}");

    let hand = LabeledPredictions::new(
        [("a", "a"), ("a", "b"), ("b", "b"), ("b", "b")]
            .iter()
            .map(|(t, p)| (t.to_string(), p.to_string()))
            .collect(),
        vec!["a".into(), "b".into()],
    );
    let cm = confusion_matrix(&hand).map_err(|e| e.to_string())?;
    ensure!(cm.counts == vec![vec![1, 1], vec![0, 2]], "hand matrix {:?}", cm.counts);
    let r = metrics(&cm, Averaging::Macro).map_err(|e| e.to_string())?;
    for (name, got, want) in [
        ("accuracy", r.accuracy, 0.75),
        ("precision", r.precision, 0.833333),
        ("recall", r.recall, 0.75),
        ("f1", r.f1, 0.733333),
    ] {
        ensure!((got - want).abs() <= 1e-6, "hand case {name} {got} != {want}");
    }
    Ok(format!("200 instances, max deviation {worst:.1e}; hand case 0.75/0.8333/0.75/0.7333"))
}

fn model_ranking() -> Result<String, String> {
    let file = fs::File::open(data_path("model_grid.csv")).map_err(|e| e.to_string())?;
    let grid = parse_grid(file).map_err(|e| e.to_string())?;
    let ranking = rank_models(&grid);
    let top = ranking.first().ok_or("empty ranking")?;
    ensure!(top.model == "model1", "top model {}", top.model);
    ensure!((top.mean_accuracy - 0.4480).abs() <= 1e-4, "mean accuracy {}", top.mean_accuracy);
    Ok(format!("model1 first, mean accuracy {:.4}", top.mean_accuracy))
}

fn timeline_properties() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7133);
    for case in 0..500 {
        let n = rng.gen_range(0..=300);
        let n_labels = rng.gen_range(1..=FaceLabel::COUNT);
        let mut t = rng.gen_range(0.0..10.0);
        let mut labels = Vec::with_capacity(n);
        let mut dominants = Vec::with_capacity(n);
        for _ in 0..n {
            // Sticky labels give realistic runs; zero steps give duplicate timestamps.
            let label = match labels.last() {
                Some(&l) if rng.gen_bool(0.7) => l,
                _ => FaceLabel::from_index(rng.gen_range(0..n_labels)),
            };
            labels.push(label);
            dominants.push(FrameDominant { timestamp_s: t, label, score: 0.5 });
            t += f64::from(rng.gen_range(0u32..4)) / 15.0;
        }
        let segs = build_timeline(&dominants, 0.0);
        let got: Vec<(FaceLabel, usize)> = segs.iter().map(|s| (s.label, s.frames)).collect();
        ensure!(got == oracle_rle(&labels), "case {case}: not the run-length encoding");
        if let (Some(first), Some(last)) = (segs.first(), segs.last()) {
            ensure!(first.start_s == dominants[0].timestamp_s, "case {case}: does not start at first frame");
            ensure!(last.end_s == dominants[n - 1].timestamp_s, "case {case}: does not end at last frame");
        }
        let mut pos = 0;
        for (i, s) in segs.iter().enumerate() {
            ensure!(s.start_s == dominants[pos].timestamp_s, "case {case}: segment {i} start");
            pos += s.frames;
            if let Some(next) = segs.get(i + 1) {
                ensure!(s.end_s == next.start_s, "case {case}: gap or overlap after segment {i}");
            }
        }
    }
    let seq = [neutral(), neutral(), neutral(), happy(), neutral(), neutral(), neutral()];
    let dominants: Vec<FrameDominant> = seq
        .iter()
        .enumerate()
        .map(|(i, l)| FrameDominant { timestamp_s: i as f64, label: *l, score: 0.8 })
        .collect();
    let merged = build_timeline(&dominants, 2.0);
    ensure!(merged.len() == 1, "merge example gave {} segments", merged.len());
    let s = merged[0];
    ensure!(
        s.label == neutral() && s.start_s == 0.0 && s.end_s == 6.0,
        "merge example gave {} [{}, {}]",
        s.label,
        s.start_s,
        s.end_s
    );
    Ok("500 sequences are exact RLE partitions; n,n,n,h,n,n,n → neutral [0, 6]".into())
}

fn round_trips() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x2071);
    let frames: Vec<EmotionFrame> = (0..200)
        .map(|i| {
            let t = f64::from(i) / 15.0;
            if i % 17 == 0 {
                return EmotionFrame::no_face(t);
            }
            let raw: Vec<f64> = (0..BasicEmotion::COUNT).map(|_| rng.gen_range(0.0..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let mut p = [0.0; BasicEmotion::COUNT];
            for (slot, v) in p.iter_mut().zip(&raw) {
                *slot = v / total;
            }
            EmotionFrame::new(t, p)
        })
        .collect();
    let mut buf = Vec::new();
    write_frames(&frames, &mut buf).map_err(|e| e.to_string())?;
    let back = parse_frames(buf.as_slice(), &ParseOptions::default()).map_err(|e| e.to_string())?.frames;
    ensure!(back.len() == frames.len(), "frames count");
    for (a, b) in frames.iter().zip(&back) {
        ensure!((a.timestamp_s - b.timestamp_s).abs() <= 1e-6, "frame timestamp");
        ensure!(a.face_detected == b.face_detected, "face_detected");
        for (x, y) in a.probabilities.iter().zip(&b.probabilities) {
            ensure!((x - y).abs() <= 1e-6, "probability {x} != {y}");
        }
    }

    let segments = segments_of(&fused_fixture("session_fused.csv"));
    let mut buf = Vec::new();
    write_speech(&segments, &mut buf).map_err(|e| e.to_string())?;
    let back = parse_speech(buf.as_slice(), &ParseOptions::default()).map_err(|e| e.to_string())?;
    ensure!(back.len() == segments.len(), "speech count");
    for (a, b) in segments.iter().zip(&back) {
        ensure!(a.text == b.text && a.emotion == b.emotion, "speech fields for '{}'", a.text);
        ensure!(
            (a.start_s - b.start_s).abs() <= 1e-6
                && (a.end_s - b.end_s).abs() <= 1e-6
                && (a.confidence - b.confidence).abs() <= 1e-6,
            "speech reals for '{}'",
            a.text
        );
    }

    let mut fused = fused_fixture("qa_fused.csv");
    fused.push(FusedRecord::from_segment(&segment("gap", 600.0, 601.0, SpeechEmotion::Joy), None));
    let mut buf = Vec::new();
    export_fused(&fused, &mut buf).map_err(|e| e.to_string())?;
    let back = parse_fused(buf.as_slice(), true).map_err(|e| e.to_string())?;
    ensure!(back.len() == fused.len(), "fused count");
    for (a, b) in fused.iter().zip(&back) {
        ensure!(
            a.text == b.text && a.speech_emotion == b.speech_emotion && a.dominant_fer_emotion() == b.dominant_fer_emotion(),
            "fused fields for '{}'",
            a.text
        );
        ensure!(
            (a.start_s - b.start_s).abs() <= 1e-6
                && (a.end_s - b.end_s).abs() <= 1e-6
                && (a.speech_confidence - b.speech_confidence).abs() <= 1e-6,
            "fused reals for '{}'",
            a.text
        );
        match (a.avg_fer_score(), b.avg_fer_score()) {
            (None, None) => {}
            (Some(x), Some(y)) => ensure!((x - y).abs() <= 1e-6, "avg for '{}'", a.text),
            _ => return Err(format!("None marker lost for '{}'", a.text)),
        }
    }

    let mapping = default_mapping();
    let back = EmotionMapping::parse("default", &mapping.to_csv_string()).map_err(|e| e.to_string())?;
    ensure!(back == mapping, "mapping differs after round trip");
    ensure!(
        back.lookup_label(&SpeechLabel::Known(SpeechEmotion::Remorse)).basic() == Some(BasicEmotion::Sad),
        "remorse mapping lost"
    );
    Ok("frames, speech, fused and mapping files round-trip".into())
}

fn cli_service_contract() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let expected = fused_fixture("session_fused.csv");
    let frames = dir.path().join("frames.csv");
    let speech = dir.path().join("speech.csv");
    let fused_path = dir.path().join("fused.csv");
    write_frames_file(&synthesize_frames(&expected), &frames).map_err(|e| e.to_string())?;
    write_speech_file(&segments_of(&expected), &speech).map_err(|e| e.to_string())?;

    let bin = env!("CARGO_BIN_EXE_emofuse");
    let status = Command::new(bin)
        .args(["fuse", "--frames"])
        .arg(&frames)
        .arg("--speech")
        .arg(&speech)
        .arg("-o")
        .arg(&fused_path)
        .env_remove("EMOFUSE_MAPPING")
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(status.status.success(), "fuse failed: {}", String::from_utf8_lossy(&status.stderr));
    let session = load_session(&frames, &speech, SessionConfig::default()).map_err(|e| e.to_string())?;
    let from_file = parse_fused_file(&fused_path, true).map_err(|e| e.to_string())?;
    ensure!(from_file == session.fused, "fused file parse differs from in-memory records");

    let analyze = Command::new(bin)
        .args(["analyze", "--query", "dominant-summary", "--fused"])
        .arg(&fused_path)
        .env_remove("EMOFUSE_MAPPING")
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(analyze.status.success(), "analyze failed: {}", String::from_utf8_lossy(&analyze.stderr));
    let cli_json: serde_json::Value = serde_json::from_slice(&analyze.stdout).map_err(|e| e.to_string())?;

    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let get = |uri: &str| {
        let app = emofuse_cli::server::router(session.clone());
        let req = Request::get(uri).body(Body::empty()).expect("request builds");
        runtime.block_on(async move {
            let resp = app.oneshot(req).await.expect("infallible");
            let status = resp.status();
            let body = resp.into_body().collect().await.expect("body").to_bytes();
            (status, serde_json::from_slice::<serde_json::Value>(&body).expect("json body"))
        })
    };
    let (status, api_json) = get("/api/query?name=dominant-summary");
    ensure!(status == StatusCode::OK, "dominant-summary status {status}");
    ensure!(api_json["rows"] == cli_json["rows"], "service rows {} != CLI rows {}", api_json["rows"], cli_json["rows"]);
    ensure!(api_json["rows"][0]["count"] == 18, "neutral count {}", api_json["rows"][0]["count"]);

    let (status, err) = get("/api/query?name=bogus");
    ensure!(status == StatusCode::BAD_REQUEST, "invalid query status {status}");
    let code = err["error"]["code"].as_str().unwrap_or_default();
    ensure!(code.starts_with("E_"), "error code '{code}'");
    Ok(format!("fuse file == in-memory; service == CLI counts; bad query → 400 {code}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 11] = [
        ("fusion oracle equivalence", fusion_oracle),
        ("published fixture reproduction", fixture_reproduction),
        ("20 happy + 10 neutral worked example", worked_example),
        ("raw anomaly rule", raw_anomaly_rule),
        ("mapped anomaly rule", mapped_anomaly_rule),
        ("insight queries", insight_queries),
        ("metrics correctness", metrics_correctness),
        ("model ranking", model_ranking),
        ("timeline properties", timeline_properties),
        ("round-trips", round_trips),
        ("CLI/service contract", cli_service_contract),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                Err(format!("panicked: {msg}"))
            });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
