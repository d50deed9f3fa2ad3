use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A named contiguous block of the feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Bank,
    Industry,
    Amount,
    Year,
    Month,
    Day,
    Text,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 7] = [
        FeatureGroup::Bank,
        FeatureGroup::Industry,
        FeatureGroup::Amount,
        FeatureGroup::Year,
        FeatureGroup::Month,
        FeatureGroup::Day,
        FeatureGroup::Text,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureGroup::Bank => "bank",
            FeatureGroup::Industry => "industry",
            FeatureGroup::Amount => "amount",
            FeatureGroup::Year => "year",
            FeatureGroup::Month => "month",
            FeatureGroup::Day => "day",
            FeatureGroup::Text => "text",
        }
    }

    fn position(self) -> usize {
        self as usize
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown feature group {0:?}")]
pub struct UnknownGroup(pub String);

impl FromStr for FeatureGroup {
    type Err = UnknownGroup;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        FeatureGroup::ALL
            .into_iter()
            .find(|g| g.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownGroup(s.to_string()))
    }
}

/// Index ranges of every group. The ranges partition `0..dimension()` in
/// canonical group order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupIndex {
    ranges: [Range<usize>; 7],
}

impl GroupIndex {
    pub fn from_widths(widths: [usize; 7]) -> Self {
        let mut start = 0;
        let ranges = widths.map(|w| {
            let r = start..start + w;
            start += w;
            r
        });
        GroupIndex { ranges }
    }

    pub fn range(&self, group: FeatureGroup) -> Range<usize> {
        self.ranges[group.position()].clone()
    }

    pub fn width(&self, group: FeatureGroup) -> usize {
        self.ranges[group.position()].len()
    }

    pub fn dimension(&self) -> usize {
        self.ranges[6].end
    }

    pub fn iter(&self) -> impl Iterator<Item = (FeatureGroup, Range<usize>)> + '_ {
        FeatureGroup::ALL.into_iter().map(|g| (g, self.range(g)))
    }
}

impl Serialize for GroupIndex {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(7))?;
        for (g, r) in self.iter() {
            map.serialize_entry(g.as_str(), &[r.start, r.end])?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for GroupIndex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let raw = BTreeMap::<FeatureGroup, [usize; 2]>::deserialize(d)?;
        let mut widths = [0usize; 7];
        let mut expected_start = 0;
        for (i, g) in FeatureGroup::ALL.into_iter().enumerate() {
            let [start, end] = *raw
                .get(&g)
                .ok_or_else(|| D::Error::custom(format!("group_index lacks {g}")))?;
            if start != expected_start || end < start {
                return Err(D::Error::custom("group ranges must partition the vector"));
            }
            widths[i] = end - start;
            expected_start = end;
        }
        if raw.len() != 7 {
            return Err(D::Error::custom("unexpected groups in group_index"));
        }
        Ok(GroupIndex::from_widths(widths))
    }
}
