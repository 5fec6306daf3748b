use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A class label. Stored zero-based, displayed and serialized one-based
/// (`Label::new(0)` is label `1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(usize);

impl Label {
    pub const FIRST: Label = Label(0);

    pub fn new(index: usize) -> Self {
        Self(index)
    }

    /// One-based label number.
    pub fn from_number(number: usize) -> Option<Self> {
        number.checked_sub(1).map(Self)
    }

    pub fn index(self) -> usize {
        self.0
    }

    pub fn number(self) -> usize {
        self.0 + 1
    }

    pub fn all(num_labels: usize) -> Vec<Label> {
        (0..num_labels).map(Label).collect()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(self.number() as u64)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let n = u64::deserialize(d)?;
        Label::from_number(n as usize).ok_or_else(|| serde::de::Error::custom("labels are numbered from 1"))
    }
}

/// Smallest-index minimizer of `values`.
pub fn argmin(values: &[f64]) -> Label {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    Label(best)
}
