//! Rule oracle for vote aggregation, written directly from the labeling
//! rules and independent of the library's implementation.

#![allow(dead_code)]

use std::collections::BTreeSet;

use sertk_core::annotate::{aggregate_votes_with, AggregationPolicy, Resolution, Status, Vote, VoteSet};
use sertk_core::EmotionLabel;

pub fn set(votes: &[(usize, u8)]) -> VoteSet {
    let v = votes
        .iter()
        .enumerate()
        .map(|(i, &(l, c))| Vote::new(format!("E{i}"), EmotionLabel::ALL[l], c))
        .collect();
    VoteSet::new("u", v).unwrap()
}

/// Returns the vote multiset shape and, when accepted, (label index,
/// confidence).
pub fn oracle(votes: &[(usize, u8)], plurality: bool) -> (Vec<usize>, Option<(usize, f64)>) {
    let mut shape: Vec<usize> = (0..4).map(|l| votes.iter().filter(|v| v.0 == l).count()).filter(|&n| n > 0).collect();
    shape.sort_unstable_by(|a, b| b.cmp(a));
    let mean = |l: usize| {
        let s: Vec<f64> = votes.iter().filter(|v| v.0 == l).map(|v| f64::from(v.1)).collect();
        s.iter().sum::<f64>() / s.len() as f64
    };
    let count = |l: usize| votes.iter().filter(|v| v.0 == l).count();
    let top = (0..4).max_by_key(|&l| count(l)).unwrap();
    let result = match shape.as_slice() {
        [4] | [3, 1] => Some((top, mean(top))),
        [2, 1, 1] => plurality.then(|| (top, mean(top))),
        [2, 2] => {
            let pair: Vec<usize> = (0..4).filter(|&l| count(l) == 2).collect();
            let (a, b) = (mean(pair[0]), mean(pair[1]));
            if a > b {
                Some((pair[0], a))
            } else if b > a {
                Some((pair[1], b))
            } else {
                None
            }
        }
        _ => None,
    };
    (shape, result)
}

pub fn expected_resolution(shape: &[usize], accepted: bool) -> Resolution {
    match (shape, accepted) {
        ([4] | [3, 1], _) => Resolution::Majority,
        ([2, 1, 1], true) => Resolution::Plurality,
        ([2, 1, 1], false) => Resolution::PluralityRejected,
        ([2, 2], true) => Resolution::ConfidenceTieBreak,
        ([2, 2], false) => Resolution::UnresolvedTie,
        _ => Resolution::NoAgreement,
    }
}

pub fn all_shapes() -> BTreeSet<Vec<usize>> {
    [vec![4], vec![3, 1], vec![2, 2], vec![2, 1, 1], vec![1, 1, 1, 1]].into_iter().collect()
}

pub struct Exhaustive {
    pub checked: usize,
    pub mismatches: Vec<String>,
    pub shapes: BTreeSet<Vec<usize>>,
}

/// Compares every (label, confidence) assignment of four votes, 4^4 * 5^4
/// in all, against the oracle under `policy`.
pub fn exhaustive(policy: AggregationPolicy) -> Exhaustive {
    let mut out = Exhaustive { checked: 0, mismatches: Vec::new(), shapes: BTreeSet::new() };
    for code in 0..(4usize.pow(4) * 5usize.pow(4)) {
        let (mut labels, mut confs) = (code % 256, code / 256);
        let votes: Vec<(usize, u8)> = (0..4)
            .map(|_| {
                let v = (labels % 4, (confs % 5 + 1) as u8);
                labels /= 4;
                confs /= 5;
                v
            })
            .collect();
        let got = aggregate_votes_with(&set(&votes), policy);
        let (shape, want) = oracle(&votes, policy.plurality_is_majority);
        let ok = match want {
            Some((l, c)) => {
                got.status == Status::Accepted && got.label == Some(EmotionLabel::ALL[l]) && got.confidence == Some(c)
            }
            None => got.status == Status::Discarded && got.label.is_none() && got.confidence.is_none(),
        } && got.resolution == expected_resolution(&shape, want.is_some());
        if !ok {
            out.mismatches.push(format!("{votes:?}: got {got:?}, want {want:?}"));
        }
        out.shapes.insert(shape);
        out.checked += 1;
    }
    out
}
