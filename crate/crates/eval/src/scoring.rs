//! Subscale aggregation: mean of the numeric answers, one decimal.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::likert::LikertAnswer;
use crate::scale::{Scale, BEAUVIS, PREVIS};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScoringError {
    #[error("expected items {expected:?}, got {got:?}")]
    WrongItemSet {
        expected: Vec<String>,
        got: Vec<String>,
    },
}

/// A one-decimal subscale score. `tenths == None` means every item was NA;
/// `flagged` marks that at least one constituent item was NA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SubscaleScore {
    pub tenths: Option<u32>,
    pub flagged: bool,
}

impl SubscaleScore {
    pub fn value(&self) -> Option<f64> {
        self.tenths.map(|t| f64::from(t) / 10.0)
    }

    /// Mean of integer codes rounded half away from zero to tenths, in exact
    /// integer arithmetic so 5.65 style ties cannot drift.
    pub fn from_values(values: &[Option<u8>]) -> Self {
        let present: Vec<u32> = values.iter().flatten().map(|&v| u32::from(v)).collect();
        let flagged = present.len() < values.len();
        if present.is_empty() {
            return Self {
                tenths: None,
                flagged,
            };
        }
        let n = present.len() as u32;
        let sum: u32 = present.iter().sum();
        Self {
            tenths: Some((20 * sum + n) / (2 * n)),
            flagged,
        }
    }
}

impl fmt::Display for SubscaleScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tenths {
            Some(t) => write!(f, "{}.{}", t / 10, t % 10)?,
            None => f.write_str("N/A")?,
        }
        if self.flagged {
            f.write_str("*")?;
        }
        Ok(())
    }
}

impl FromStr for SubscaleScore {
    type Err = String;

    /// Parses the printed-table forms `5.8`, `1.0*` and `N/A*`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (body, flagged) = match s.strip_suffix('*') {
            Some(b) => (b, true),
            None => (s, false),
        };
        if body.eq_ignore_ascii_case("N/A") {
            return Ok(Self {
                tenths: None,
                flagged,
            });
        }
        let (int, frac) = body.split_once('.').ok_or_else(|| format!("bad score {s:?}"))?;
        let int: u32 = int.parse().map_err(|_| format!("bad score {s:?}"))?;
        let frac: u32 = match frac.len() {
            1 => frac.parse().map_err(|_| format!("bad score {s:?}"))?,
            _ => return Err(format!("score {s:?} must have one decimal")),
        };
        Ok(Self {
            tenths: Some(int * 10 + frac),
            flagged,
        })
    }
}

/// Serialized in its printed form, e.g. `"5.7"`, `"3.0*"`, `"N/A*"`.
impl Serialize for SubscaleScore {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SubscaleScore {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedScore {
    pub subscale: String,
    pub score: SubscaleScore,
}

/// Checks that `answers` carry exactly the scale's item codes, in any order.
fn by_code<'a>(scale: &Scale, answers: &'a [LikertAnswer]) -> Result<BTreeMap<&'a str, Option<u8>>, ScoringError> {
    let map: BTreeMap<&str, Option<u8>> =
        answers.iter().map(|a| (a.item.as_str(), a.numeric())).collect();
    let mut expected: Vec<String> = scale.codes().map(String::from).collect();
    let mut got: Vec<String> = answers.iter().map(|a| a.item.clone()).collect();
    expected.sort();
    got.sort();
    if expected != got {
        return Err(ScoringError::WrongItemSet { expected, got });
    }
    Ok(map)
}

/// Scores every subscale of `scale`, in the scale's reporting order.
pub fn score_scale(scale: &Scale, answers: &[LikertAnswer]) -> Result<Vec<NamedScore>, ScoringError> {
    let map = by_code(scale, answers)?;
    Ok(scale
        .subscales
        .iter()
        .map(|sub| {
            let vals: Vec<Option<u8>> = sub.items.iter().map(|c| map[c]).collect();
            NamedScore {
                subscale: sub.name.to_string(),
                score: SubscaleScore::from_values(&vals),
            }
        })
        .collect())
}

pub fn score_beauvis(answers: &[LikertAnswer]) -> Result<SubscaleScore, ScoringError> {
    Ok(score_scale(&BEAUVIS, answers)?[0].score)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrevisScores {
    pub understand: SubscaleScore,
    pub layout: SubscaleScore,
    pub data_read: SubscaleScore,
    pub data_feat: SubscaleScore,
}

pub fn score_previs(answers: &[LikertAnswer]) -> Result<PrevisScores, ScoringError> {
    let s = score_scale(&PREVIS, answers)?;
    Ok(PrevisScores {
        understand: s[0].score,
        layout: s[1].score,
        data_read: s[2].score,
        data_feat: s[3].score,
    })
}
