use core::fmt;
use core::str::FromStr;

use alloc::string::ToString;

use crate::Error;

/// The four emotion classes, in the fixed order used for class indices,
/// confusion-matrix rows and probability vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EmotionLabel {
    Angry,
    Happy,
    Neutral,
    Sad,
}

impl EmotionLabel {
    pub const COUNT: usize = 4;
    pub const ALL: [EmotionLabel; 4] = [Self::Angry, Self::Happy, Self::Neutral, Self::Sad];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Angry => "Angry",
            Self::Happy => "Happy",
            Self::Neutral => "Neutral",
            Self::Sad => "Sad",
        }
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmotionLabel {
    type Err = Error;

    /// Case-insensitive; also accepts the one-letter codes A/H/N/S.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        Self::ALL
            .into_iter()
            .find(|l| {
                t.eq_ignore_ascii_case(l.as_str())
                    || (t.len() == 1 && t.eq_ignore_ascii_case(&l.as_str()[..1]))
            })
            .ok_or_else(|| Error::UnknownLabel(t.to_string()))
    }
}
