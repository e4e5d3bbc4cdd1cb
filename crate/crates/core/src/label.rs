//! Sample labels: base activities, the annotation-gap placeholder, and the
//! labels synthesized by the gap-handling paradigms.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Token rendered for an unlabeled sample in CSV exports.
pub const NULL_TOKEN: &str = "∅";
/// The universal gap label introduced by paradigm #2.
pub const UNKNOWN_TOKEN: &str = "Unknown";
/// Sentinel for a gap with no preceding activity (series start).
pub const START_SENTINEL: &str = "^";
/// Sentinel for a gap with no following activity (series end).
pub const END_SENTINEL: &str = "$";

/// One endpoint of an annotation gap: a neighboring activity, or a series
/// boundary when the gap touches the start or end of the series.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Boundary {
    Start,
    End,
    Activity(String),
}

impl Boundary {
    pub fn as_activity(&self) -> Option<&str> {
        match self {
            Boundary::Activity(name) => Some(name),
            _ => None,
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Start => f.write_str(START_SENTINEL),
            Boundary::End => f.write_str(END_SENTINEL),
            Boundary::Activity(name) => f.write_str(name),
        }
    }
}

/// The label attached to one resampled time slot.
///
/// `Null` marks an annotation gap in the raw data; it is never used for parse
/// failures. `Unknown` and `Gap` only appear after a paradigm transform.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Null,
    Activity(String),
    Unknown,
    Gap { prev: Boundary, next: Boundary },
}

impl Label {
    pub fn activity(name: impl Into<String>) -> Self {
        Label::Activity(name.into())
    }

    pub fn gap(prev: Boundary, next: Boundary) -> Self {
        Label::Gap { prev, next }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Label::Null)
    }

    /// Parses the stable textual form used in CSV and model files.
    pub fn parse(token: &str) -> Label {
        if token == NULL_TOKEN {
            return Label::Null;
        }
        if token == UNKNOWN_TOKEN {
            return Label::Unknown;
        }
        if let Some(inner) = token.strip_prefix("GAP[").and_then(|s| s.strip_suffix(']')) {
            if let Some((prev, next)) = inner.split_once('>') {
                let parse_boundary = |s: &str| match s {
                    START_SENTINEL => Boundary::Start,
                    END_SENTINEL => Boundary::End,
                    other => Boundary::Activity(other.to_string()),
                };
                return Label::Gap {
                    prev: parse_boundary(prev),
                    next: parse_boundary(next),
                };
            }
        }
        Label::Activity(token.to_string())
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Null => f.write_str(NULL_TOKEN),
            Label::Activity(name) => f.write_str(name),
            Label::Unknown => f.write_str(UNKNOWN_TOKEN),
            Label::Gap { prev, next } => write!(f, "GAP[{prev}>{next}]"),
        }
    }
}
