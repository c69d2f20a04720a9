//! Command-line front end.

use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use emofuse_core::error::{Error, ErrorCode, Result};
use emofuse_core::evalharness::{
    confusion_matrix, metrics, parse_grid, parse_predictions, rank_models, render_ranking,
    render_report, Averaging,
};
use emofuse_core::fusion::{export_fused_file, fuse};
use emofuse_core::insights::{session_report, ReportOptions, DEFAULT_MIN_RUN_S};
use emofuse_core::session::{
    load_session, run_query, QueryRequest, SessionConfig, SessionDataset,
};
use emofuse_core::streams::{
    frame_dominants, parse_frames_file, parse_speech_file, write_frame_dominants_file,
    ParseOptions, Warning,
};
use emofuse_core::taxonomy::{default_mapping, load_mapping, EmotionMapping};

/// Environment variable naming a mapping file that replaces the default.
pub const MAPPING_ENV: &str = "EMOFUSE_MAPPING";

#[derive(Debug, Parser)]
#[command(name = "emofuse", version, about = "Fuse facial and speech emotion streams and query the result")]
pub struct Cli {
    /// Keep speech labels outside the 28-label taxonomy instead of rejecting them.
    #[arg(long, global = true)]
    pub lenient: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct FrameArgs {
    /// Per-frame probabilities CSV.
    #[arg(long)]
    pub frames: PathBuf,
    /// Frame rate, required when the frames file has a `frame` column.
    #[arg(long)]
    pub fps: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Align and fuse frames with speech segments into the integrated file.
    Fuse {
        #[command(flatten)]
        frames: FrameArgs,
        #[arg(long)]
        speech: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write the per-frame dominant emotion file.
    Dominants {
        #[command(flatten)]
        frames: FrameArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run one catalog query over a fused file and print JSON.
    Analyze {
        #[arg(long)]
        fused: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long)]
        label: Option<String>,
        /// Comma-separated speech emotions.
        #[arg(long)]
        labels: Option<String>,
        #[arg(long)]
        pattern: Option<String>,
        /// Mapping CSV used by mapped-anomalies.
        #[arg(long)]
        mapping: Option<PathBuf>,
        #[arg(long)]
        include_neutral: bool,
    },
    /// Write the full session report as JSON.
    Report {
        #[command(flatten)]
        frames: FrameArgs,
        #[arg(long)]
        speech: PathBuf,
        /// Shortest timeline run kept, in seconds.
        #[arg(long, default_value_t = DEFAULT_MIN_RUN_S)]
        min_run: f64,
        #[arg(long)]
        include_neutral: bool,
        /// Fixed value for the report's generated_at field.
        #[arg(long)]
        generated_at: Option<String>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Score a `truth,predicted` file.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        /// Weight per-class scores by support instead of macro averaging.
        #[arg(long)]
        weighted: bool,
    },
    /// Rank models over a `model,dataset,accuracy,precision,recall,f1` grid.
    Rank {
        #[arg(long)]
        grid: PathBuf,
    },
    /// Serve one session over a read-only HTTP API.
    Serve {
        #[command(flatten)]
        frames: FrameArgs,
        #[arg(long)]
        speech: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = DEFAULT_MIN_RUN_S)]
        min_run: f64,
    },
}

/// The default mapping, or the one named by `EMOFUSE_MAPPING`.
pub fn process_mapping() -> Result<EmotionMapping> {
    match std::env::var_os(MAPPING_ENV) {
        Some(path) if !path.is_empty() => load_mapping(PathBuf::from(path)),
        _ => Ok(default_mapping()),
    }
}

fn config(lenient: bool, fps: Option<f64>, min_run: f64) -> Result<SessionConfig> {
    if let Some(fps) = fps {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::new(ErrorCode::Param, format!("--fps must be positive, got {fps}")));
        }
    }
    if !(min_run.is_finite() && min_run >= 0.0) {
        return Err(Error::new(ErrorCode::Param, format!("--min-run must be non-negative, got {min_run}")));
    }
    Ok(SessionConfig {
        parse: ParseOptions {
            fps,
            strict_labels: !lenient,
        },
        min_run_s: min_run,
        mapping: process_mapping()?,
    })
}

fn report_warnings(path: &Path, warnings: &[Warning], err: &mut dyn Write) {
    for w in warnings {
        let _ = writeln!(err, "warning: {}:{}: {}", path.display(), w.line, w.message);
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::new(ErrorCode::Io, e.to_string()).with_path(path))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    writeln!(out, "{text}").map_err(|e| Error::new(ErrorCode::Io, e.to_string()))
}

pub fn load(cli_lenient: bool, frames: &FrameArgs, speech: &Path, min_run: f64) -> Result<SessionDataset> {
    load_session(&frames.frames, speech, config(cli_lenient, frames.fps, min_run)?)
}

/// Builds the query request carried by `analyze` flags.
pub fn analyze_request(
    query: &str,
    label: Option<&str>,
    labels: Option<&str>,
    pattern: Option<&str>,
    mapping: Option<&Path>,
    include_neutral: bool,
) -> QueryRequest {
    let mut req = QueryRequest::new(query);
    if let Some(v) = label {
        req = req.with("label", v);
    }
    if let Some(v) = labels {
        req = req.with("labels", v);
    }
    if let Some(v) = pattern {
        req = req.with("pattern", v);
    }
    if let Some(v) = mapping {
        req = req.with("mapping", v.display().to_string());
    }
    if include_neutral {
        req = req.with("include_neutral", "1");
    }
    req
}

/// Runs a parsed command. Results go to `out`, warnings to `err`; `serve`
/// blocks until the server stops.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let lenient = cli.lenient;
    match cli.command {
        Command::Fuse { frames, speech, output } => {
            let opts = config(lenient, frames.fps, 0.0)?.parse;
            let parsed = parse_frames_file(&frames.frames, &opts)?;
            report_warnings(&frames.frames, &parsed.warnings, err);
            let segments = parse_speech_file(&speech, &opts)?;
            let records = fuse(&frame_dominants(&parsed.frames), &segments);
            export_fused_file(&records, &output)?;
            emit(out, &format!("wrote {} fused records to {}", records.len(), output.display()))
        }
        Command::Dominants { frames, output } => {
            let opts = config(lenient, frames.fps, 0.0)?.parse;
            let parsed = parse_frames_file(&frames.frames, &opts)?;
            report_warnings(&frames.frames, &parsed.warnings, err);
            let dominants = frame_dominants(&parsed.frames);
            write_frame_dominants_file(&dominants, &output)?;
            emit(out, &format!("wrote {} frame dominants to {}", dominants.len(), output.display()))
        }
        Command::Analyze {
            fused,
            query,
            label,
            labels,
            pattern,
            mapping,
            include_neutral,
        } => {
            let session = SessionDataset::from_fused(&fused, config(lenient, None, DEFAULT_MIN_RUN_S)?)?;
            let req = analyze_request(
                &query,
                label.as_deref(),
                labels.as_deref(),
                pattern.as_deref(),
                mapping.as_deref(),
                include_neutral,
            );
            emit(out, &run_query(&session, &req)?.to_json())
        }
        Command::Report {
            frames,
            speech,
            min_run,
            include_neutral,
            generated_at,
            output,
        } => {
            let session = load(lenient, &frames, &speech, min_run)?;
            report_warnings(&frames.frames, &session.warnings, err);
            let opts = ReportOptions {
                mapping: &session.config.mapping,
                include_neutral,
                min_run_s: session.config.min_run_s,
                generated_at: generated_at.unwrap_or_else(|| {
                    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
                }),
            };
            let report = session_report(&session.fused, &session.timeline, &opts);
            write_text(&output, &(report.to_json() + "\n"))?;
            emit(out, &format!("wrote report for {} records to {}", session.fused.len(), output.display()))
        }
        Command::Eval { pred, weighted } => {
            let file = fs::File::open(&pred).map_err(|e| Error::new(ErrorCode::Io, e.to_string()).with_path(&pred))?;
            let preds = parse_predictions(file).map_err(|e| e.with_path(&pred))?;
            let cm = confusion_matrix(&preds)?;
            let averaging = if weighted { Averaging::Weighted } else { Averaging::Macro };
            let report = metrics(&cm, averaging)?;
            emit(out, &render_report(&report, &cm, averaging))
        }
        Command::Rank { grid } => {
            let file = fs::File::open(&grid).map_err(|e| Error::new(ErrorCode::Io, e.to_string()).with_path(&grid))?;
            let matrix = parse_grid(file).map_err(|e| e.with_path(&grid))?;
            emit(out, &render_ranking(&matrix, &rank_models(&matrix)))
        }
        Command::Serve {
            frames,
            speech,
            port,
            host,
            min_run,
        } => {
            let session = load(lenient, &frames, &speech, min_run)?;
            report_warnings(&frames.frames, &session.warnings, err);
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|_| Error::new(ErrorCode::Param, format!("bad listen address '{host}:{port}'")))?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::new(ErrorCode::Io, e.to_string()))?;
            let _ = writeln!(err, "serving session '{}' on http://{addr}", session.id);
            runtime.block_on(crate::server::serve(session, addr))
        }
    }
}

