//! Per-speaker emotion shares and their join with electoral records.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::{EmotionLabel, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct UtterancePrediction {
    pub id: String,
    pub speaker: String,
    pub label: EmotionLabel,
    pub probs: [f64; EmotionLabel::COUNT],
    /// Seconds; positive.
    pub duration: f64,
}

impl UtterancePrediction {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidUtterance(format!(
                "{}: duration {} must be positive",
                self.id, self.duration
            )));
        }
        let sum: f64 = self.probs.iter().sum();
        if self.probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidUtterance(format!(
                "{}: probabilities {:?} do not form a distribution",
                self.id, self.probs
            )));
        }
        Ok(())
    }
}

/// What each utterance contributes to its speaker's shares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    #[default]
    Duration,
    Count,
}

impl Weighting {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Duration => "duration",
            Self::Count => "count",
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "duration" => Ok(Self::Duration),
            "count" => Ok(Self::Count),
            _ => Err(Error::InvalidConfig(format!("unknown weighting {s:?}; expected duration or count"))),
        }
    }
}

/// Percent of a speaker's material per emotion, indexed by
/// [`EmotionLabel::index`]; sums to 100.
#[derive(Debug, Clone, PartialEq)]
pub struct EmotionShares {
    pub speaker: String,
    pub shares: [f64; EmotionLabel::COUNT],
}

impl EmotionShares {
    pub fn share(&self, label: EmotionLabel) -> f64 {
        self.shares[label.index()]
    }
}

pub fn emotion_shares(preds: &[UtterancePrediction], speaker: &str, weighting: Weighting) -> Result<EmotionShares> {
    let mut weight = [0.0f64; EmotionLabel::COUNT];
    for p in preds.iter().filter(|p| p.speaker == speaker) {
        p.validate()?;
        weight[p.label.index()] += match weighting {
            Weighting::Duration => p.duration,
            Weighting::Count => 1.0,
        };
    }
    let total: f64 = weight.iter().sum();
    if total <= 0.0 {
        return Err(Error::UnknownSpeaker(speaker.to_string()));
    }
    Ok(EmotionShares {
        speaker: speaker.to_string(),
        shares: weight.map(|w| w / total * 100.0),
    })
}

/// Shares for every speaker present, ordered by speaker.
pub fn all_emotion_shares(preds: &[UtterancePrediction], weighting: Weighting) -> Result<Vec<EmotionShares>> {
    let speakers: BTreeSet<&str> = preds.iter().map(|p| p.speaker.as_str()).collect();
    speakers.into_iter().map(|s| emotion_shares(preds, s, weighting)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElectoralRecord {
    pub speaker: String,
    /// Percent of votes received, 0..=100.
    pub vote_share: f64,
    /// Victory margin in percent; negative for a defeat.
    pub margin: f64,
}

impl ElectoralRecord {
    pub fn new(speaker: impl Into<String>, vote_share: f64, margin: f64) -> Result<Self> {
        let speaker = speaker.into();
        if !(0.0..=100.0).contains(&vote_share) {
            return Err(Error::InvalidRecord { speaker, reason: format!("vote share {vote_share} outside 0..=100") });
        }
        if !(-100.0..=100.0).contains(&margin) {
            return Err(Error::InvalidRecord { speaker, reason: format!("margin {margin} outside -100..=100") });
        }
        Ok(Self { speaker, vote_share, margin })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElectoralRow {
    pub speaker: String,
    pub shares: [f64; EmotionLabel::COUNT],
    pub vote_share: f64,
    pub margin: f64,
}

/// Joined rows plus everything that did not join, both sides kept.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ElectoralReport {
    pub rows: Vec<ElectoralRow>,
    pub unmatched_shares: Vec<EmotionShares>,
    pub unmatched_records: Vec<ElectoralRecord>,
}

/// Inner join on speaker, rows ordered by speaker. A speaker listed twice
/// on either side is an error.
pub fn electoral_report(shares: &[EmotionShares], records: &[ElectoralRecord]) -> Result<ElectoralReport> {
    let mut by_speaker: BTreeMap<&str, &ElectoralRecord> = BTreeMap::new();
    for r in records {
        if by_speaker.insert(r.speaker.as_str(), r).is_some() {
            return Err(Error::DuplicateSpeaker(r.speaker.clone()));
        }
    }
    let mut seen = BTreeSet::new();
    for s in shares {
        if !seen.insert(s.speaker.as_str()) {
            return Err(Error::DuplicateSpeaker(s.speaker.clone()));
        }
    }
    let mut report = ElectoralReport::default();
    let mut sorted: Vec<&EmotionShares> = shares.iter().collect();
    sorted.sort_by(|a, b| a.speaker.cmp(&b.speaker));
    for s in sorted {
        match by_speaker.remove(s.speaker.as_str()) {
            Some(r) => report.rows.push(ElectoralRow {
                speaker: s.speaker.clone(),
                shares: s.shares,
                vote_share: r.vote_share,
                margin: r.margin,
            }),
            None => report.unmatched_shares.push(s.clone()),
        }
    }
    report.unmatched_records = by_speaker.into_values().cloned().collect();
    Ok(report)
}
