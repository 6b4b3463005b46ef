//! Seven-point agreement labels and their numeric codes.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown Likert label {0:?}")]
pub struct UnknownLabel(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LikertLabel {
    StronglyDisagree,
    Disagree,
    SlightlyDisagree,
    Neutral,
    SlightlyAgree,
    Agree,
    StronglyAgree,
    /// "I don't know / Not applicable".
    NotApplicable,
}

impl LikertLabel {
    pub const SCALE: [LikertLabel; 7] = [
        LikertLabel::StronglyDisagree,
        LikertLabel::Disagree,
        LikertLabel::SlightlyDisagree,
        LikertLabel::Neutral,
        LikertLabel::SlightlyAgree,
        LikertLabel::Agree,
        LikertLabel::StronglyAgree,
    ];

    /// 1 for "Strongly disagree" up to 7 for "Strongly agree"; `None` for NA.
    pub fn value(self) -> Option<u8> {
        Self::SCALE
            .iter()
            .position(|&l| l == self)
            .map(|k| k as u8 + 1)
    }

    pub fn from_value(v: u8) -> Option<Self> {
        (1..=7).contains(&v).then(|| Self::SCALE[usize::from(v) - 1])
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LikertLabel::StronglyDisagree => "Strongly disagree",
            LikertLabel::Disagree => "Disagree",
            LikertLabel::SlightlyDisagree => "Slightly disagree",
            LikertLabel::Neutral => "Neutral",
            LikertLabel::SlightlyAgree => "Slightly agree",
            LikertLabel::Agree => "Agree",
            LikertLabel::StronglyAgree => "Strongly agree",
            LikertLabel::NotApplicable => "NA",
        }
    }
}

impl fmt::Display for LikertLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LikertLabel {
    type Err = UnknownLabel;

    /// Case and whitespace insensitive. Accepts the common spellings of the
    /// not-applicable option as well.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_lowercase()
            .replace('\u{2019}', "'");
        let label = match norm.as_str() {
            "strongly disagree" => LikertLabel::StronglyDisagree,
            "disagree" => LikertLabel::Disagree,
            "slightly disagree" => LikertLabel::SlightlyDisagree,
            "neutral" => LikertLabel::Neutral,
            "slightly agree" => LikertLabel::SlightlyAgree,
            "agree" => LikertLabel::Agree,
            "strongly agree" => LikertLabel::StronglyAgree,
            "na" | "n/a" | "not applicable" | "i don't know" | "i don't know/not applicable"
            | "i don't know / not applicable" => LikertLabel::NotApplicable,
            _ => return Err(UnknownLabel(s.to_string())),
        };
        Ok(label)
    }
}

impl Serialize for LikertLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for LikertLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Numeric code of a label string; `Ok(None)` for NA.
pub fn likert_value(label: &str) -> Result<Option<u8>, UnknownLabel> {
    Ok(label.parse::<LikertLabel>()?.value())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertAnswer {
    pub item: String,
    pub label: LikertLabel,
}

impl LikertAnswer {
    pub fn new(item: impl Into<String>, label: LikertLabel) -> Self {
        Self {
            item: item.into(),
            label,
        }
    }

    pub fn numeric(&self) -> Option<u8> {
        self.label.value()
    }
}
