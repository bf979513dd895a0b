//! Lexicon-based polarity scoring and the check that a transformation keeps
//! each document's sentiment.
//!
//! Two engines share one lexicon:
//!
//! * [`Engine::LexiconMean`]: mean valence of lexicon hits divided by 4,
//!   with a hit directly after a negator scaled by -0.5.
//! * [`Engine::RuleBased`]: summed valences where a negator among the three
//!   preceding tokens scales the hit by -0.74 and boosters among them add
//!   their delta (scaled 1, 0.95, 0.9 by distance) in the hit's direction;
//!   the sum `s` is mapped to `s / sqrt(s^2 + 15)`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;

#[derive(Debug, Error)]
pub enum SentimentError {
    #[error("lexicon line {line}: {reason}")]
    Lexicon { line: usize, reason: String },
    #[error("`{0}` is listed both as a negator and a booster")]
    Overlap(String),
    #[error("document `{0}` has no counterpart in the other corpus")]
    IdMismatch(String),
    #[error("corpora differ in size ({0} vs {1})")]
    SizeMismatch(usize, usize),
    #[error("no sentiment engines given")]
    NoEngines,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = SentimentError> = std::result::Result<T, E>;

const BUNDLED_LEXICON: &str = include_str!("../data/sentiment_lexicon.tsv");
pub const BUNDLED_LEXICON_VERSION: &str = "bundled-v1";

const NEGATORS: &[&str] = &[
    "not", "no", "never", "none", "nobody", "nothing", "neither", "nor", "nowhere", "cannot",
    "without",
];

const BOOSTER_DELTA: f64 = 0.293;
const BOOSTERS_UP: &[&str] = &[
    "very",
    "really",
    "extremely",
    "so",
    "incredibly",
    "absolutely",
    "totally",
    "truly",
    "especially",
    "highly",
];
const BOOSTERS_DOWN: &[&str] = &[
    "slightly",
    "somewhat",
    "barely",
    "hardly",
    "kinda",
    "marginally",
];

const NEGATION_SCALAR: f64 = -0.74;
const NORMALIZATION_ALPHA: f64 = 15.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SentimentLexicon {
    pub version: String,
    valences: HashMap<String, f64>,
    negators: HashSet<String>,
    boosters: HashMap<String, f64>,
}

impl SentimentLexicon {
    pub fn bundled() -> Self {
        Self::from_tsv(BUNDLED_LEXICON.as_bytes(), BUNDLED_LEXICON_VERSION)
            .expect("bundled lexicon is well-formed")
    }

    /// Reads `term<TAB>valence` lines; blank lines and `#` comments are
    /// skipped. Negators and boosters are the built-in sets.
    pub fn from_tsv<R: BufRead>(reader: R, version: &str) -> Result<Self> {
        let mut valences = HashMap::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let bad = |reason: &str| SentimentError::Lexicon {
                line: n + 1,
                reason: reason.to_string(),
            };
            let mut parts = trimmed.split('\t');
            let term = parts
                .next()
                .filter(|t| !t.is_empty())
                .ok_or_else(|| bad("missing term"))?;
            let valence: f64 = parts
                .next()
                .ok_or_else(|| bad("missing valence"))?
                .trim()
                .parse()
                .map_err(|_| bad("valence is not a number"))?;
            if !valence.is_finite() {
                return Err(bad("valence must be finite"));
            }
            valences.insert(term.to_lowercase(), valence);
        }
        let boosters = BOOSTERS_UP
            .iter()
            .map(|b| (b.to_string(), BOOSTER_DELTA))
            .chain(
                BOOSTERS_DOWN
                    .iter()
                    .map(|b| (b.to_string(), -BOOSTER_DELTA)),
            )
            .collect();
        Self::new(
            version,
            valences,
            NEGATORS.iter().map(|s| s.to_string()).collect(),
            boosters,
        )
    }

    pub fn new(
        version: &str,
        valences: HashMap<String, f64>,
        negators: HashSet<String>,
        boosters: HashMap<String, f64>,
    ) -> Result<Self> {
        if let Some(w) = negators.iter().find(|n| boosters.contains_key(*n)) {
            return Err(SentimentError::Overlap(w.clone()));
        }
        Ok(SentimentLexicon {
            version: version.to_string(),
            valences,
            negators,
            boosters,
        })
    }

    pub fn valence(&self, term: &str) -> Option<f64> {
        self.valences.get(term).copied()
    }

    pub fn len(&self) -> usize {
        self.valences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valences.is_empty()
    }

    fn is_negator(&self, token: &str) -> bool {
        self.negators.contains(token) || token.ends_with("n't")
    }

    /// Copy with every valence negated.
    pub fn negated(&self) -> Self {
        SentimentLexicon {
            version: format!("{}-negated", self.version),
            valences: self.valences.iter().map(|(k, v)| (k.clone(), -v)).collect(),
            ..self.clone()
        }
    }
}

/// Lowercased words; apostrophes inside a word are kept so contractions
/// like "didn't" survive.
pub fn sentiment_tokens(text: &str) -> Vec<String> {
    text.replace('\u{2019}', "'")
        .split(|c: char| !(c.is_alphabetic() || c == '\''))
        .map(|t| t.trim_matches('\''))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentimentLabel {
    Negative,
    Neutral,
    Positive,
}

impl SentimentLabel {
    /// Negative below `-band`, positive above `band`, neutral otherwise.
    pub fn from_polarity(polarity: f64, band: f64) -> Self {
        if polarity < -band {
            SentimentLabel::Negative
        } else if polarity > band {
            SentimentLabel::Positive
        } else {
            SentimentLabel::Neutral
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SentimentLabel::Negative => "negative",
            SentimentLabel::Neutral => "neutral",
            SentimentLabel::Positive => "positive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    LexiconMean,
    RuleBased,
}

impl Engine {
    pub const BOTH: [Engine; 2] = [Engine::LexiconMean, Engine::RuleBased];

    pub fn name(&self) -> &'static str {
        match self {
            Engine::LexiconMean => "lexicon_mean",
            Engine::RuleBased => "rule_based",
        }
    }

    pub fn polarity(&self, text: &str, lexicon: &SentimentLexicon) -> f64 {
        let tokens = sentiment_tokens(text);
        match self {
            Engine::LexiconMean => lexicon_mean(&tokens, lexicon),
            Engine::RuleBased => rule_based(&tokens, lexicon),
        }
    }
}

fn lexicon_mean(tokens: &[String], lexicon: &SentimentLexicon) -> f64 {
    let mut sum = 0.0;
    let mut hits = 0usize;
    for (i, t) in tokens.iter().enumerate() {
        if let Some(v) = lexicon.valence(t) {
            let negated = i > 0 && lexicon.is_negator(&tokens[i - 1]);
            sum += if negated { -0.5 * v } else { v };
            hits += 1;
        }
    }
    if hits == 0 {
        0.0
    } else {
        (sum / hits as f64 / 4.0).clamp(-1.0, 1.0)
    }
}

fn rule_based(tokens: &[String], lexicon: &SentimentLexicon) -> f64 {
    const DISTANCE_SCALE: [f64; 3] = [1.0, 0.95, 0.9];
    let mut total = 0.0;
    for (i, t) in tokens.iter().enumerate() {
        if lexicon.is_negator(t) || lexicon.boosters.contains_key(t.as_str()) {
            continue;
        }
        let Some(v) = lexicon.valence(t) else {
            continue;
        };
        let mut s = v;
        let mut negated = false;
        for d in 1..=3.min(i) {
            let prev = tokens[i - d].as_str();
            if let Some(delta) = lexicon.boosters.get(prev) {
                s += v.signum() * delta * DISTANCE_SCALE[d - 1];
            }
            negated |= lexicon.is_negator(prev);
        }
        if negated {
            s *= NEGATION_SCALAR;
        }
        total += s;
    }
    if total == 0.0 {
        0.0
    } else {
        total / (total * total + NORMALIZATION_ALPHA).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentScore {
    pub polarity: f64,
    pub label: SentimentLabel,
    pub engine: String,
}

pub const DEFAULT_NEUTRAL_BAND: f64 = 0.05;

/// One engine bound to a lexicon and a neutral band.
#[derive(Debug, Clone)]
pub struct Scorer {
    pub engine: Engine,
    pub lexicon: Arc<SentimentLexicon>,
    pub neutral_band: f64,
}

impl Scorer {
    pub fn new(engine: Engine, lexicon: Arc<SentimentLexicon>) -> Self {
        Scorer {
            engine,
            lexicon,
            neutral_band: DEFAULT_NEUTRAL_BAND,
        }
    }

    /// Both bundled engines over the same lexicon.
    pub fn pair(lexicon: Arc<SentimentLexicon>, neutral_band: f64) -> Vec<Scorer> {
        Engine::BOTH
            .iter()
            .map(|&engine| Scorer {
                engine,
                lexicon: Arc::clone(&lexicon),
                neutral_band,
            })
            .collect()
    }

    pub fn id(&self) -> String {
        format!("{}@{}", self.engine.name(), self.lexicon.version)
    }

    pub fn score(&self, text: &str) -> SentimentScore {
        let polarity = self.engine.polarity(text, &self.lexicon);
        SentimentScore {
            polarity,
            label: SentimentLabel::from_polarity(polarity, self.neutral_band),
            engine: self.id(),
        }
    }
}

/// Rule-based score with the default neutral band.
pub fn score(text: &str, lexicon: &SentimentLexicon) -> SentimentScore {
    let polarity = Engine::RuleBased.polarity(text, lexicon);
    SentimentScore {
        polarity,
        label: SentimentLabel::from_polarity(polarity, DEFAULT_NEUTRAL_BAND),
        engine: format!("{}@{}", Engine::RuleBased.name(), lexicon.version),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreservationThresholds {
    pub min_agreement: f64,
    pub max_flip_rate: f64,
}

impl Default for PreservationThresholds {
    fn default() -> Self {
        PreservationThresholds {
            min_agreement: 0.85,
            max_flip_rate: 0.05,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub negative: usize,
    pub neutral: usize,
    pub positive: usize,
}

impl LabelCounts {
    fn add(&mut self, label: SentimentLabel) {
        match label {
            SentimentLabel::Negative => self.negative += 1,
            SentimentLabel::Neutral => self.neutral += 1,
            SentimentLabel::Positive => self.positive += 1,
        }
    }

    fn get(&self, label: SentimentLabel) -> usize {
        match label {
            SentimentLabel::Negative => self.negative,
            SentimentLabel::Neutral => self.neutral,
            SentimentLabel::Positive => self.positive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnginePreservation {
    pub engine: String,
    pub agreement: f64,
    /// Positive to negative plus negative to positive.
    pub flips: usize,
    pub positive_to_negative: usize,
    pub negative_to_positive: usize,
    pub mean_abs_delta: f64,
    pub original: LabelCounts,
    pub transformed: LabelCounts,
}

/// Headline numbers are the worst case over engines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreservationReport {
    pub n_docs: usize,
    pub agreement: f64,
    pub flips: usize,
    pub flip_rate: f64,
    pub mean_abs_delta: f64,
    pub per_engine: Vec<EnginePreservation>,
    pub thresholds: PreservationThresholds,
    pub passed: bool,
}

impl PreservationReport {
    /// Bar-chart data: one row per (engine, label) with original and
    /// transformed counts.
    pub fn write_chart_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["engine", "label", "original", "transformed"])?;
        for e in &self.per_engine {
            for label in [
                SentimentLabel::Negative,
                SentimentLabel::Neutral,
                SentimentLabel::Positive,
            ] {
                w.write_record([
                    e.engine.as_str(),
                    label.as_str(),
                    &e.original.get(label).to_string(),
                    &e.transformed.get(label).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Compares each document with its transformed counterpart (matched by id)
/// under every scorer.
pub fn preservation(
    originals: &Corpus,
    transformed: &Corpus,
    scorers: &[Scorer],
    thresholds: PreservationThresholds,
) -> Result<PreservationReport> {
    if scorers.is_empty() {
        return Err(SentimentError::NoEngines);
    }
    if originals.len() != transformed.len() {
        return Err(SentimentError::SizeMismatch(
            originals.len(),
            transformed.len(),
        ));
    }
    let by_id: BTreeMap<&str, &str> = transformed
        .iter()
        .map(|d| (d.id.as_str(), d.text.as_str()))
        .collect();
    let pairs: Vec<(&str, &str)> = originals
        .iter()
        .map(|d| {
            by_id
                .get(d.id.as_str())
                .map(|t| (d.text.as_str(), *t))
                .ok_or_else(|| SentimentError::IdMismatch(d.id.clone()))
        })
        .collect::<Result<_>>()?;
    let n = pairs.len();
    let per_engine: Vec<EnginePreservation> = scorers
        .iter()
        .map(|s| {
            let mut e = EnginePreservation {
                engine: s.id(),
                agreement: 1.0,
                flips: 0,
                positive_to_negative: 0,
                negative_to_positive: 0,
                mean_abs_delta: 0.0,
                original: LabelCounts::default(),
                transformed: LabelCounts::default(),
            };
            let mut agree = 0;
            let mut delta = 0.0;
            for (o, t) in &pairs {
                let so = s.score(o);
                let st = s.score(t);
                e.original.add(so.label);
                e.transformed.add(st.label);
                if so.label == st.label {
                    agree += 1;
                }
                match (so.label, st.label) {
                    (SentimentLabel::Positive, SentimentLabel::Negative) => {
                        e.positive_to_negative += 1
                    }
                    (SentimentLabel::Negative, SentimentLabel::Positive) => {
                        e.negative_to_positive += 1
                    }
                    _ => {}
                }
                delta += (so.polarity - st.polarity).abs();
            }
            e.flips = e.positive_to_negative + e.negative_to_positive;
            if n > 0 {
                e.agreement = agree as f64 / n as f64;
                e.mean_abs_delta = delta / n as f64;
            }
            e
        })
        .collect();
    let agreement = per_engine.iter().map(|e| e.agreement).fold(1.0, f64::min);
    let flips = per_engine.iter().map(|e| e.flips).max().unwrap_or(0);
    let mean_abs_delta = per_engine
        .iter()
        .map(|e| e.mean_abs_delta)
        .fold(0.0, f64::max);
    let flip_rate = if n == 0 { 0.0 } else { flips as f64 / n as f64 };
    Ok(PreservationReport {
        n_docs: n,
        agreement,
        flips,
        flip_rate,
        mean_abs_delta,
        per_engine,
        thresholds,
        passed: agreement >= thresholds.min_agreement && flip_rate <= thresholds.max_flip_rate,
    })
}
