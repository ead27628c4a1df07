//! Four-listener perceptual label aggregation.
//!
//! Each utterance gets one `(label, confidence 1..=5)` vote from each of
//! four evaluators. A label with strictly more votes than every other wins,
//! scored by the mean confidence of its voters. A 2-2 split goes to the pair
//! with the higher mean confidence. Four different labels discard the
//! utterance. A 2-1-1 split is a plurality; [`AggregationPolicy`] decides
//! whether that counts as a majority (the default) or discards.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::{EmotionLabel, Error, Result};

pub const EVALUATORS: usize = 4;
pub const MIN_CONFIDENCE: u8 = 1;
pub const MAX_CONFIDENCE: u8 = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vote {
    pub evaluator: String,
    pub label: EmotionLabel,
    pub confidence: u8,
}

impl Vote {
    pub fn new(evaluator: impl Into<String>, label: EmotionLabel, confidence: u8) -> Self {
        Self { evaluator: evaluator.into(), label, confidence }
    }
}

/// Exactly four votes from four distinct evaluators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteSet {
    utterance: String,
    votes: Vec<Vote>,
}

impl VoteSet {
    pub fn new(utterance: impl Into<String>, votes: Vec<Vote>) -> Result<Self> {
        let utterance = utterance.into();
        let invalid = |reason: String| Error::InvalidVotes { utterance: utterance.clone(), reason };
        if votes.len() != EVALUATORS {
            return Err(invalid(format!("expected {EVALUATORS} votes, got {}", votes.len())));
        }
        for (i, v) in votes.iter().enumerate() {
            if !(MIN_CONFIDENCE..=MAX_CONFIDENCE).contains(&v.confidence) {
                return Err(invalid(format!(
                    "evaluator {:?} gave confidence {}, outside {MIN_CONFIDENCE}..={MAX_CONFIDENCE}",
                    v.evaluator, v.confidence
                )));
            }
            if votes[..i].iter().any(|u| u.evaluator == v.evaluator) {
                return Err(invalid(format!("evaluator {:?} voted twice", v.evaluator)));
            }
        }
        Ok(Self { utterance, votes })
    }

    pub fn utterance(&self) -> &str {
        &self.utterance
    }

    pub fn votes(&self) -> &[Vote] {
        &self.votes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Accepted,
    Discarded,
}

/// Which case of the protocol decided the outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    /// 4-0 or 3-1.
    Majority,
    /// 2-1-1 under a policy that accepts pluralities.
    Plurality,
    /// 2-2 resolved by the higher mean confidence.
    ConfidenceTieBreak,
    /// 2-2 with equal mean confidence.
    UnresolvedTie,
    /// 2-1-1 under a policy that rejects pluralities.
    PluralityRejected,
    /// Four different labels.
    NoAgreement,
}

impl Resolution {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Majority => "majority",
            Self::Plurality => "plurality",
            Self::ConfidenceTieBreak => "confidence_tie_break",
            Self::UnresolvedTie => "unresolved_tie",
            Self::PluralityRejected => "plurality_rejected",
            Self::NoAgreement => "no_agreement",
        }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `label` and `confidence` are `Some` exactly when accepted.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedLabel {
    pub utterance: String,
    pub label: Option<EmotionLabel>,
    pub confidence: Option<f64>,
    pub status: Status,
    pub resolution: Resolution,
}

impl AggregatedLabel {
    pub fn is_accepted(&self) -> bool {
        self.status == Status::Accepted
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AggregationPolicy {
    /// Accept the 2-vote label of a 2-1-1 split.
    pub plurality_is_majority: bool,
}

impl Default for AggregationPolicy {
    fn default() -> Self {
        Self { plurality_is_majority: true }
    }
}

/// Aggregates with the default policy.
pub fn aggregate_votes(v: &VoteSet) -> AggregatedLabel {
    aggregate_votes_with(v, AggregationPolicy::default())
}

pub fn aggregate_votes_with(v: &VoteSet, policy: AggregationPolicy) -> AggregatedLabel {
    // Per label: (votes, confidence sum).
    let mut groups = [(0u32, 0u32); EmotionLabel::COUNT];
    for vote in v.votes() {
        let g = &mut groups[vote.label.index()];
        g.0 += 1;
        g.1 += u32::from(vote.confidence);
    }
    let mut ranked: Vec<(EmotionLabel, u32, u32)> = EmotionLabel::ALL
        .iter()
        .map(|&l| (l, groups[l.index()].0, groups[l.index()].1))
        .filter(|g| g.1 > 0)
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let accept = |(label, n, sum): (EmotionLabel, u32, u32), resolution| AggregatedLabel {
        utterance: v.utterance().into(),
        label: Some(label),
        confidence: Some(f64::from(sum) / f64::from(n)),
        status: Status::Accepted,
        resolution,
    };
    let discard = |resolution| AggregatedLabel {
        utterance: v.utterance().into(),
        label: None,
        confidence: None,
        status: Status::Discarded,
        resolution,
    };
    let shape: Vec<u32> = ranked.iter().map(|g| g.1).collect();
    match shape.as_slice() {
        [4] | [3, 1] => accept(ranked[0], Resolution::Majority),
        [2, 1, 1] if policy.plurality_is_majority => accept(ranked[0], Resolution::Plurality),
        [2, 1, 1] => discard(Resolution::PluralityRejected),
        [2, 2] => {
            let (a, b) = (ranked[0], ranked[1]);
            // Both groups have two voters, so comparing sums compares means.
            match a.2.cmp(&b.2) {
                core::cmp::Ordering::Greater => accept(a, Resolution::ConfidenceTieBreak),
                core::cmp::Ordering::Less => accept(b, Resolution::ConfidenceTieBreak),
                core::cmp::Ordering::Equal => {
                    log::warn!(
                        "utterance {:?}: 2-2 tie between {} and {} with equal mean confidence, discarded",
                        v.utterance(),
                        a.0,
                        b.0
                    );
                    discard(Resolution::UnresolvedTie)
                }
            }
        }
        _ => discard(Resolution::NoAgreement),
    }
}

/// Converts a 1..=5 confidence score to a percentage of the scale maximum.
pub fn confidence_percent(score: f64) -> Result<f64> {
    if !(f64::from(MIN_CONFIDENCE)..=f64::from(MAX_CONFIDENCE)).contains(&score) {
        return Err(Error::ConfidenceOutOfRange(score));
    }
    Ok(score / f64::from(MAX_CONFIDENCE) * 100.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassRow {
    pub label: EmotionLabel,
    pub count: usize,
    /// `None` when the class has no accepted utterances.
    pub mean_confidence: Option<f64>,
    pub confidence_percent: Option<f64>,
}

/// Per-class counts and confidences over accepted labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSummary {
    pub rows: Vec<ClassRow>,
    pub accepted: usize,
    pub discarded: usize,
}

pub fn class_summary(labels: &[AggregatedLabel]) -> Result<ClassSummary> {
    let mut count = [0usize; EmotionLabel::COUNT];
    let mut sum = [0.0f64; EmotionLabel::COUNT];
    for a in labels {
        if let (Status::Accepted, Some(l), Some(c)) = (a.status, a.label, a.confidence) {
            count[l.index()] += 1;
            sum[l.index()] += c;
        }
    }
    let accepted: usize = count.iter().sum();
    if accepted == 0 {
        return Err(Error::NoAcceptedLabels);
    }
    let rows = EmotionLabel::ALL
        .iter()
        .map(|&label| {
            let i = label.index();
            let mean = (count[i] > 0).then(|| sum[i] / count[i] as f64);
            Ok(ClassRow {
                label,
                count: count[i],
                mean_confidence: mean,
                confidence_percent: mean.map(confidence_percent).transpose()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassSummary { rows, accepted, discarded: labels.len() - accepted })
}
