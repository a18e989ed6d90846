use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Letter {
    A,
    B,
    C,
    D,
}

impl Letter {
    pub const ALL: [Letter; 4] = [Letter::A, Letter::B, Letter::C, Letter::D];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL.get(i).copied().ok_or_else(|| invalid(format!("option index {i} has no letter")))
    }

    pub fn as_char(self) -> char {
        (b'A' + self as u8) as char
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'A' => Some(Letter::A),
            'B' => Some(Letter::B),
            'C' => Some(Letter::C),
            'D' => Some(Letter::D),
            _ => None,
        }
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Minute ranges `[lo, hi)`; the last one is closed at 60.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MinutesBucket {
    #[serde(rename = "0.5-1")]
    M0_5To1,
    #[serde(rename = "1-2")]
    M1To2,
    #[serde(rename = "2-4")]
    M2To4,
    #[serde(rename = "4-10")]
    M4To10,
    #[serde(rename = "10-20")]
    M10To20,
    #[serde(rename = "20-40")]
    M20To40,
    #[serde(rename = "40-60")]
    M40To60,
}

impl MinutesBucket {
    pub const ALL: [MinutesBucket; 7] = [
        MinutesBucket::M0_5To1,
        MinutesBucket::M1To2,
        MinutesBucket::M2To4,
        MinutesBucket::M4To10,
        MinutesBucket::M10To20,
        MinutesBucket::M20To40,
        MinutesBucket::M40To60,
    ];
    /// Edges in minutes; bucket `i` spans `EDGES[i]..EDGES[i + 1]`.
    pub const EDGES: [f64; 8] = [0.5, 1.0, 2.0, 4.0, 10.0, 20.0, 40.0, 60.0];

    pub fn label(self) -> &'static str {
        ["0.5-1", "1-2", "2-4", "4-10", "10-20", "20-40", "40-60"][self as usize]
    }

    pub fn class(self) -> LengthClass {
        match self {
            MinutesBucket::M0_5To1 | MinutesBucket::M1To2 => LengthClass::Short,
            MinutesBucket::M2To4 | MinutesBucket::M4To10 | MinutesBucket::M10To20 => LengthClass::Medium,
            MinutesBucket::M20To40 | MinutesBucket::M40To60 => LengthClass::Long,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthClass {
    Short,
    Medium,
    Long,
}

impl LengthClass {
    pub const ALL: [LengthClass; 3] = [LengthClass::Short, LengthClass::Medium, LengthClass::Long];

    pub fn label(self) -> &'static str {
        match self {
            LengthClass::Short => "Short",
            LengthClass::Medium => "Medium",
            LengthClass::Long => "Long",
        }
    }
}

/// Maps a duration in seconds to its minute bucket and length class.
pub fn bucketize(duration_s: f64) -> Result<(MinutesBucket, LengthClass)> {
    if !(30.0..=3600.0).contains(&duration_s) {
        return Err(invalid(format!("duration {duration_s} s outside [30, 3600]")));
    }
    let m = duration_s / 60.0;
    let i = MinutesBucket::EDGES[1..].iter().position(|&hi| m < hi).unwrap_or(MinutesBucket::ALL.len() - 1);
    let b = MinutesBucket::ALL[i];
    Ok((b, b.class()))
}

/// A four-option multiple-choice question.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McqItem {
    pub question_id: String,
    pub video_id: String,
    pub question: String,
    pub options: [String; 4],
    pub correct: Letter,
    pub minutes_bucket: MinutesBucket,
    pub class: LengthClass,
    pub duration_s: f64,
    #[serde(default)]
    pub keyframe_indices: Vec<usize>,
}

impl McqItem {
    pub fn answer(&self) -> &str {
        &self.options[self.correct.index()]
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..4 {
            for j in i + 1..4 {
                if normalize(&self.options[i]) == normalize(&self.options[j]) {
                    return Err(invalid(format!("{}: options {i} and {j} coincide", self.question_id)));
                }
            }
        }
        let (b, c) = bucketize(self.duration_s)?;
        if b != self.minutes_bucket || c != self.class {
            return Err(invalid(format!("{}: bucket does not match duration", self.question_id)));
        }
        Ok(())
    }
}

/// Lowercase, punctuation-free, article-free, whitespace-collapsed form used for
/// collision checks.
pub fn normalize(text: &str) -> String {
    let cleaned: String =
        text.chars().map(|c| if c.is_alphanumeric() || c.is_whitespace() { c.to_ascii_lowercase() } else { ' ' }).collect();
    cleaned.split_whitespace().filter(|w| !matches!(*w, "a" | "an" | "the")).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bucket_examples() {
        assert_eq!(bucketize(90.0).unwrap(), (MinutesBucket::M1To2, LengthClass::Short));
        assert_eq!(bucketize(600.0).unwrap(), (MinutesBucket::M10To20, LengthClass::Medium));
        assert_eq!(bucketize(3600.0).unwrap(), (MinutesBucket::M40To60, LengthClass::Long));
        assert_eq!(bucketize(30.0).unwrap().0, MinutesBucket::M0_5To1);
        assert_eq!(bucketize(1200.0).unwrap(), (MinutesBucket::M20To40, LengthClass::Long));
        assert!(bucketize(29.9).is_err() && bucketize(3600.1).is_err() && bucketize(f64::NAN).is_err());
    }

    #[test]
    fn letters_and_normalization() {
        assert_eq!(Letter::from_index(2).unwrap(), Letter::C);
        assert_eq!(Letter::from_char('d'), Some(Letter::D));
        assert_eq!(serde_json::to_string(&Letter::B).unwrap(), "\"B\"");
        assert_eq!(serde_json::to_string(&MinutesBucket::M0_5To1).unwrap(), "\"0.5-1\"");
        assert_eq!(normalize("The  Knife."), normalize("a knife"));
        assert_ne!(normalize("a knife"), normalize("a pan"));
    }

    proptest! {
        #[test]
        fn bucketize_is_total_and_monotone(a in 30.0f64..=3600.0, b in 30.0f64..=3600.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (bl, cl) = bucketize(lo).unwrap();
            let (bh, ch) = bucketize(hi).unwrap();
            prop_assert!(bl <= bh);
            prop_assert!(cl <= ch);
        }
    }
}
