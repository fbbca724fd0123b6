use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Revision numbers of the patterns a select depends on, in probe order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Version(pub Vec<u64>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VersionCompare {
    /// Accept a cached entry whose version is componentwise ≥ the current one.
    #[default]
    PartialOrder,
    /// Accept only an identical version.
    ExactEquality,
}

impl Version {
    pub fn revisions(&self) -> &[u64] {
        &self.0
    }

    /// `self ⪰ other`. Versions of different lengths are incomparable.
    pub fn dominates(&self, other: &Version) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a >= b)
    }

    pub fn satisfies(&self, current: &Version, mode: VersionCompare) -> bool {
        match mode {
            VersionCompare::PartialOrder => self.dominates(current),
            VersionCompare::ExactEquality => self == current,
        }
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{r}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed version `{0}`")]
pub struct VersionParseError(pub String);

impl FromStr for Version {
    type Err = VersionParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Ok(Version::default());
        }
        s.split('.')
            .map(|part| {
                if part.is_empty() || !part.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(VersionParseError(s.to_owned()));
                }
                part.parse().map_err(|_| VersionParseError(s.to_owned()))
            })
            .collect::<Result<_, _>>()
            .map(Version)
    }
}
