//! Emotion label spaces and the cross-taxonomy mapping.
//!
//! Two taxonomies meet in a session: the seven basic emotions emitted by the
//! facial classifier and the 28 GoEmotions labels (27 emotions plus neutral)
//! emitted by the text classifier. [`EmotionMapping`] projects the latter onto
//! the former so that the two modalities can be compared.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::error::{Error, ErrorCode, Result};

/// One of the seven basic facial emotions, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BasicEmotion {
    Angry,
    Disgust,
    Fear,
    Happy,
    Sad,
    Surprise,
    Neutral,
}

impl BasicEmotion {
    pub const COUNT: usize = 7;

    pub const ALL: [BasicEmotion; 7] = [
        BasicEmotion::Angry,
        BasicEmotion::Disgust,
        BasicEmotion::Fear,
        BasicEmotion::Happy,
        BasicEmotion::Sad,
        BasicEmotion::Surprise,
        BasicEmotion::Neutral,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BasicEmotion::Angry => "angry",
            BasicEmotion::Disgust => "disgust",
            BasicEmotion::Fear => "fear",
            BasicEmotion::Happy => "happy",
            BasicEmotion::Sad => "sad",
            BasicEmotion::Surprise => "surprise",
            BasicEmotion::Neutral => "neutral",
        }
    }

    /// Position in canonical order.
    pub fn index(self) -> usize {
        self as usize
    }

    /// Parses a label, additionally accepting the noun/adjective spellings
    /// benchmark datasets use (`sadness`, `anger`, `happiness`, ...).
    pub fn from_alias(s: &str) -> Option<BasicEmotion> {
        if let Ok(e) = s.parse() {
            return Some(e);
        }
        let e = match s.trim().to_ascii_lowercase().as_str() {
            "anger" => BasicEmotion::Angry,
            "disgusted" => BasicEmotion::Disgust,
            "fearful" | "afraid" => BasicEmotion::Fear,
            "happiness" | "joy" => BasicEmotion::Happy,
            "sadness" => BasicEmotion::Sad,
            "surprised" => BasicEmotion::Surprise,
            "calm" => BasicEmotion::Neutral,
            _ => return None,
        };
        Some(e)
    }
}

impl fmt::Display for BasicEmotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BasicEmotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        BasicEmotion::ALL
            .into_iter()
            .find(|e| e.as_str() == lower)
            .ok_or_else(|| Error::new(ErrorCode::Label, format!("unknown basic emotion '{s}'")))
    }
}

impl Serialize for BasicEmotion {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

macro_rules! speech_emotions {
    ($($variant:ident => $name:literal),+ $(,)?) => {
        /// One of the 28 GoEmotions labels (27 emotions plus neutral).
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum SpeechEmotion {
            $($variant),+
        }

        impl SpeechEmotion {
            pub const ALL: [SpeechEmotion; 28] = [$(SpeechEmotion::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(SpeechEmotion::$variant => $name),+
                }
            }
        }
    };
}

speech_emotions! {
    Admiration => "admiration",
    Amusement => "amusement",
    Anger => "anger",
    Annoyance => "annoyance",
    Approval => "approval",
    Caring => "caring",
    Confusion => "confusion",
    Curiosity => "curiosity",
    Desire => "desire",
    Disappointment => "disappointment",
    Disapproval => "disapproval",
    Disgust => "disgust",
    Embarrassment => "embarrassment",
    Excitement => "excitement",
    Fear => "fear",
    Gratitude => "gratitude",
    Grief => "grief",
    Joy => "joy",
    Love => "love",
    Nervousness => "nervousness",
    Optimism => "optimism",
    Pride => "pride",
    Realization => "realization",
    Relief => "relief",
    Remorse => "remorse",
    Sadness => "sadness",
    Surprise => "surprise",
    Neutral => "neutral",
}

impl fmt::Display for SpeechEmotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for SpeechEmotion {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl FromStr for SpeechEmotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        SpeechEmotion::ALL
            .into_iter()
            .find(|e| e.as_str() == lower)
            .ok_or_else(|| Error::new(ErrorCode::Label, format!("unknown speech emotion '{s}'")))
    }
}

/// A speech-emotion label as carried by a segment.
///
/// Strict ingestion only ever produces [`SpeechLabel::Known`]; lenient
/// ingestion keeps labels outside the taxonomy as `Other` (lowercased) so they
/// can flow through fusion and resolve to [`Mapped::Unmapped`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SpeechLabel {
    Known(SpeechEmotion),
    Other(String),
}

impl SpeechLabel {
    pub fn parse(s: &str, strict: bool) -> Result<SpeechLabel> {
        match s.parse::<SpeechEmotion>() {
            Ok(e) => Ok(SpeechLabel::Known(e)),
            Err(e) if strict => Err(e),
            Err(_) => {
                let lower = s.trim().to_ascii_lowercase();
                if lower.is_empty() {
                    return Err(Error::new(ErrorCode::Label, "empty speech emotion label"));
                }
                Ok(SpeechLabel::Other(lower))
            }
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            SpeechLabel::Known(e) => e.as_str(),
            SpeechLabel::Other(s) => s,
        }
    }

    pub fn known(&self) -> Option<SpeechEmotion> {
        match self {
            SpeechLabel::Known(e) => Some(*e),
            SpeechLabel::Other(_) => None,
        }
    }
}

impl From<SpeechEmotion> for SpeechLabel {
    fn from(e: SpeechEmotion) -> Self {
        SpeechLabel::Known(e)
    }
}

impl fmt::Display for SpeechLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for SpeechLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

/// Result of projecting a speech label through a mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mapped {
    Basic(BasicEmotion),
    Unmapped,
}

impl Mapped {
    pub fn basic(self) -> Option<BasicEmotion> {
        match self {
            Mapped::Basic(b) => Some(b),
            Mapped::Unmapped => None,
        }
    }
}

/// A partial map from speech emotions to basic emotions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmotionMapping {
    name: String,
    entries: BTreeMap<SpeechEmotion, BasicEmotion>,
}

pub const MAPPING_HEADER: &str = "speech_label,basic_label";

impl EmotionMapping {
    pub fn new(name: impl Into<String>) -> Self {
        EmotionMapping {
            name: name.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn from_entries(
        name: impl Into<String>,
        entries: impl IntoIterator<Item = (SpeechEmotion, BasicEmotion)>,
    ) -> Self {
        EmotionMapping {
            name: name.into(),
            entries: entries.into_iter().collect(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (SpeechEmotion, BasicEmotion)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }

    pub fn lookup(&self, label: SpeechEmotion) -> Mapped {
        self.entries
            .get(&label)
            .map_or(Mapped::Unmapped, |b| Mapped::Basic(*b))
    }

    /// Looks up a segment label; labels outside the taxonomy are unmapped.
    pub fn lookup_label(&self, label: &SpeechLabel) -> Mapped {
        label.known().map_or(Mapped::Unmapped, |e| self.lookup(e))
    }

    /// Serializes to the mapping file format, header first, keys in
    /// taxonomy order.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(32 * (self.entries.len() + 1));
        out.push_str(MAPPING_HEADER);
        out.push('\n');
        for (k, v) in &self.entries {
            out.push_str(k.as_str());
            out.push(',');
            out.push_str(v.as_str());
            out.push('\n');
        }
        out
    }

    /// Parses the mapping file format.
    pub fn parse(name: impl Into<String>, text: &str) -> Result<EmotionMapping> {
        let mut mapping = EmotionMapping::new(name);
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx as u64 + 1;
            let line = raw.trim_end_matches('\r').trim();
            if line.is_empty() {
                continue;
            }
            if idx == 0 && line.eq_ignore_ascii_case(MAPPING_HEADER) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 2 {
                return Err(Error::at_line(
                    ErrorCode::Csv,
                    line_no,
                    format!("expected 'speech_label,basic_label', got '{line}'"),
                ));
            }
            let key: SpeechEmotion = fields[0].parse().map_err(|e: Error| e.with_line(line_no))?;
            let value: BasicEmotion = fields[1].parse().map_err(|e: Error| e.with_line(line_no))?;
            if mapping.entries.insert(key, value).is_some() {
                return Err(Error::at_line(
                    ErrorCode::Duplicate,
                    line_no,
                    format!("duplicate mapping key '{key}'"),
                ));
            }
        }
        Ok(mapping)
    }
}

/// The built-in total mapping over all 28 speech labels.
pub fn default_mapping() -> EmotionMapping {
    use BasicEmotion as B;
    use SpeechEmotion as S;
    let groups: [(B, &[S]); 7] = [
        (
            B::Happy,
            &[
                S::Admiration,
                S::Amusement,
                S::Approval,
                S::Caring,
                S::Desire,
                S::Excitement,
                S::Gratitude,
                S::Joy,
                S::Love,
                S::Optimism,
                S::Pride,
                S::Relief,
            ],
        ),
        (B::Angry, &[S::Anger, S::Annoyance, S::Disapproval]),
        (
            B::Sad,
            &[
                S::Sadness,
                S::Disappointment,
                S::Embarrassment,
                S::Grief,
                S::Remorse,
            ],
        ),
        (B::Fear, &[S::Fear, S::Nervousness]),
        (
            B::Surprise,
            &[S::Surprise, S::Curiosity, S::Confusion, S::Realization],
        ),
        (B::Disgust, &[S::Disgust]),
        (B::Neutral, &[S::Neutral]),
    ];
    EmotionMapping::from_entries(
        "default",
        groups
            .iter()
            .flat_map(|(basic, speech)| speech.iter().map(move |s| (*s, *basic))),
    )
}

/// Maps a textual speech label through `mapping`.
///
/// The label must be a member of the speech taxonomy; absent keys yield
/// [`Mapped::Unmapped`].
pub fn map_label(mapping: &EmotionMapping, label: &str) -> Result<Mapped> {
    let label: SpeechEmotion = label.parse()?;
    Ok(mapping.lookup(label))
}

/// Reads a mapping file. The mapping is named after the file stem.
pub fn load_mapping(path: impl AsRef<Path>) -> Result<EmotionMapping> {
    let path = path.as_ref();
    let mut text = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "mapping".to_string());
    EmotionMapping::parse(name, &text).map_err(|e| e.with_path(path))
}
