//! The two questionnaires: BeauVis (aesthetic pleasure) and PREVis (readability).

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleId {
    Beauvis,
    Previs,
}

impl ScaleId {
    pub fn as_str(self) -> &'static str {
        match self {
            ScaleId::Beauvis => "beauvis",
            ScaleId::Previs => "previs",
        }
    }

    pub fn scale(self) -> &'static Scale {
        match self {
            ScaleId::Beauvis => &BEAUVIS,
            ScaleId::Previs => &PREVIS,
        }
    }
}

impl fmt::Display for ScaleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScaleId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "beauvis" => Ok(ScaleId::Beauvis),
            "previs" => Ok(ScaleId::Previs),
            other => Err(format!("unknown scale {other:?} (expected beauvis or previs)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Item {
    pub code: &'static str,
    pub statement: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Subscale {
    pub name: &'static str,
    pub items: &'static [&'static str],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scale {
    pub id: ScaleId,
    pub items: &'static [Item],
    /// Partition of `items`, in reporting order.
    pub subscales: &'static [Subscale],
}

impl Scale {
    pub fn codes(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.items.iter().map(|i| i.code)
    }

    pub fn subscale(&self, name: &str) -> Option<&'static Subscale> {
        self.subscales.iter().find(|s| s.name == name)
    }
}

pub static BEAUVIS: Scale = Scale {
    id: ScaleId::Beauvis,
    items: &[
        Item { code: "BV1", statement: "This visualization is Enjoyable" },
        Item { code: "BV2", statement: "This visualization is Likable" },
        Item { code: "BV3", statement: "This visualization is Pleasing" },
        Item { code: "BV4", statement: "This visualization is Nice" },
        Item { code: "BV5", statement: "This visualization is Appealing" },
    ],
    subscales: &[Subscale {
        name: "BeauVis",
        items: &["BV1", "BV2", "BV3", "BV4", "BV5"],
    }],
};

pub static PREVIS: Scale = Scale {
    id: ScaleId::Previs,
    items: &[
        Item { code: "PV1", statement: "It is obvious for me how to read this visualization." },
        Item { code: "PV2", statement: "I can easily understand how the data is represented in this visualization." },
        Item { code: "PV3", statement: "I can easily understand this visualization." },
        Item { code: "PV4", statement: "I don\u{2019}t find this visualization messy." },
        Item { code: "PV5", statement: "I don\u{2019}t find this visualization crowded." },
        Item { code: "PV6", statement: "I don\u{2019}t find distracting parts in this visualization." },
        Item { code: "PV7", statement: "I can easily find specific elements in this visualization." },
        Item { code: "PV8", statement: "I can easily identify relevant information in this visualization." },
        Item { code: "PV9", statement: "I can easily retrieve information from this visualization." },
        Item { code: "PV10", statement: "I find data features (for example, a minimum, or an outlier, or a trend) visible in this visualization." },
        Item { code: "PV11", statement: "I can clearly see data features (for example, a minimum, or an outlier, or a trend) in this visualization." },
    ],
    subscales: &[
        Subscale { name: "Understand", items: &["PV1", "PV2", "PV3"] },
        Subscale { name: "Layout", items: &["PV4", "PV5", "PV6"] },
        Subscale { name: "DataRead", items: &["PV7", "PV8", "PV9"] },
        Subscale { name: "DataFeat", items: &["PV10", "PV11"] },
    ],
};

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn subscales_partition_items() {
        for scale in [&BEAUVIS, &PREVIS] {
            let codes: Vec<_> = scale.codes().collect();
            let unique: BTreeSet<_> = codes.iter().collect();
            assert_eq!(unique.len(), codes.len());
            let mut covered: Vec<_> = scale.subscales.iter().flat_map(|s| s.items.iter().copied()).collect();
            covered.sort_unstable();
            let mut sorted = codes.clone();
            sorted.sort_unstable();
            assert_eq!(covered, sorted);
        }
    }
}
