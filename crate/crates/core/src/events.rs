//! Raw sensor event log parsing and activity annotation intervals.
//!
//! The on-disk format is UTF-8 text, one event per line, whitespace-separated:
//! date, time, sensor id, value, and optionally an activity name with a
//! `begin`/`end` marker. Lines starting with `#` are comments.

use std::fmt::Write as _;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Microseconds since the Unix epoch.
pub type Micros = i64;

pub const MICROS_PER_SEC: i64 = 1_000_000;

const TIMESTAMP_FMT_PARSE: &str = "%Y-%m-%d %H:%M:%S%.f";
const TIMESTAMP_FMT_WRITE: &str = "%Y-%m-%d %H:%M:%S%.6f";

#[derive(Debug, Error)]
pub enum EventError {
    #[error("line {line}: malformed event line: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("unmatched begin marker for {activity} at {at}")]
    UnmatchedBegin { activity: String, at: Micros },
    #[error("unmatched end marker for {activity} at {at}")]
    UnmatchedEnd { activity: String, at: Micros },
    #[error("overlapping intervals: {open} still open when {incoming} begins at {at}")]
    OverlappingIntervals {
        open: String,
        incoming: String,
        at: Micros,
    },
    #[error("empty interval for {activity} at {at}: begin and end coincide")]
    EmptyInterval { activity: String, at: Micros },
}

/// Normalized binary sensor reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SensorValue {
    Active,
    Inactive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Marker {
    Begin,
    End,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub activity: String,
    pub marker: Marker,
}

/// One timestamped raw sensor reading with an optional activity annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorEvent {
    pub timestamp: Micros,
    pub sensor_id: String,
    pub value: SensorValue,
    pub annotation: Option<Annotation>,
}

/// A labeled region `[start, end)` extracted from begin/end markers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationInterval {
    pub activity: String,
    pub start: Micros,
    pub end: Micros,
}

impl AnnotationInterval {
    /// Containment is inclusive at the start, exclusive at the end.
    pub fn contains(&self, t: Micros) -> bool {
        self.start <= t && t < self.end
    }
}

/// An event log sorted by timestamp (stable on ties).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    pub events: Vec<SensorEvent>,
    /// SHA-256 of the raw input bytes, hex-encoded.
    pub source_digest: String,
    /// Lines dropped under [`ParsePolicy::SkipAndCount`].
    pub skipped_lines: usize,
}

/// Sensor value token normalization; vendors vary the spelling.
#[derive(Debug, Clone)]
pub struct ValueMap {
    active: Vec<String>,
    inactive: Vec<String>,
}

impl Default for ValueMap {
    fn default() -> Self {
        ValueMap {
            active: vec!["ON".into(), "OPEN".into()],
            inactive: vec!["OFF".into(), "CLOSE".into(), "CLOSED".into()],
        }
    }
}

impl ValueMap {
    pub fn new(active: Vec<String>, inactive: Vec<String>) -> Self {
        ValueMap { active, inactive }
    }

    pub fn normalize(&self, token: &str) -> Option<SensorValue> {
        if self.active.iter().any(|t| t == token) {
            Some(SensorValue::Active)
        } else if self.inactive.iter().any(|t| t == token) {
            Some(SensorValue::Inactive)
        } else {
            None
        }
    }
}

/// What to do with unparseable lines while reading a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParsePolicy {
    /// Stop at the first malformed line. The corpus is expected to be clean,
    /// so silent skipping would hide ingestion bugs.
    #[default]
    FailFast,
    SkipAndCount,
}

pub fn parse_timestamp(date: &str, time: &str) -> Option<Micros> {
    let joined = format!("{date} {time}");
    NaiveDateTime::parse_from_str(&joined, TIMESTAMP_FMT_PARSE)
        .ok()
        .map(|dt| dt.and_utc().timestamp_micros())
}

pub fn format_timestamp(t: Micros) -> String {
    chrono::DateTime::from_timestamp_micros(t)
        .expect("timestamp in range")
        .naive_utc()
        .format(TIMESTAMP_FMT_WRITE)
        .to_string()
}

/// Parses one event line with the default value normalization.
pub fn parse_event_line(line: &str, line_no: usize) -> Result<SensorEvent, EventError> {
    parse_event_line_with(line, line_no, &ValueMap::default())
}

pub fn parse_event_line_with(
    line: &str,
    line_no: usize,
    values: &ValueMap,
) -> Result<SensorEvent, EventError> {
    let malformed = |reason: String| EventError::MalformedLine {
        line: line_no,
        reason,
    };
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 4 && fields.len() != 6 {
        return Err(malformed(format!(
            "expected 4 or 6 whitespace-separated fields, got {}",
            fields.len()
        )));
    }
    let timestamp = parse_timestamp(fields[0], fields[1])
        .ok_or_else(|| malformed(format!("unparseable timestamp {} {}", fields[0], fields[1])))?;
    let value = values
        .normalize(fields[3])
        .ok_or_else(|| malformed(format!("unrecognized value token {:?}", fields[3])))?;
    let annotation = if fields.len() == 6 {
        let marker = match fields[5].to_ascii_lowercase().as_str() {
            "begin" => Marker::Begin,
            "end" => Marker::End,
            other => return Err(malformed(format!("unrecognized marker {other:?}"))),
        };
        if fields[4].is_empty() {
            return Err(malformed("empty activity name".into()));
        }
        Some(Annotation {
            activity: fields[4].to_string(),
            marker,
        })
    } else {
        None
    };
    Ok(SensorEvent {
        timestamp,
        sensor_id: fields[2].to_string(),
        value,
        annotation,
    })
}

/// Parses a whole event log. Blank and `#`-comment lines are skipped; events
/// are stably sorted by timestamp; the digest covers the raw input bytes.
pub fn parse_stream(source: &str, policy: ParsePolicy) -> Result<EventStream, EventError> {
    parse_stream_with(source, policy, &ValueMap::default())
}

pub fn parse_stream_with(
    source: &str,
    policy: ParsePolicy,
    values: &ValueMap,
) -> Result<EventStream, EventError> {
    let mut events = Vec::new();
    let mut skipped = 0usize;
    for (idx, line) in source.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match parse_event_line_with(trimmed, idx + 1, values) {
            Ok(event) => events.push(event),
            Err(e) => match policy {
                ParsePolicy::FailFast => return Err(e),
                ParsePolicy::SkipAndCount => skipped += 1,
            },
        }
    }
    events.sort_by_key(|e| e.timestamp);
    Ok(EventStream {
        events,
        source_digest: digest_bytes(source.as_bytes()),
        skipped_lines: skipped,
    })
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in out {
        let _ = write!(hex, "{byte:02x}");
    }
    hex
}

impl EventStream {
    pub fn from_events(events: Vec<SensorEvent>) -> EventStream {
        let mut events = events;
        events.sort_by_key(|e| e.timestamp);
        let text = serialize_events(&events);
        EventStream {
            events,
            source_digest: digest_bytes(text.as_bytes()),
            skipped_lines: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Renders the stream back to the canonical text format. Re-parsing the
    /// output yields an identical stream.
    pub fn serialize(&self) -> String {
        serialize_events(&self.events)
    }
}

fn serialize_events(events: &[SensorEvent]) -> String {
    let mut out = String::new();
    for event in events {
        let value = match event.value {
            SensorValue::Active => "ON",
            SensorValue::Inactive => "OFF",
        };
        let _ = write!(
            out,
            "{} {} {}",
            format_timestamp(event.timestamp),
            event.sensor_id,
            value
        );
        if let Some(ann) = &event.annotation {
            let marker = match ann.marker {
                Marker::Begin => "begin",
                Marker::End => "end",
            };
            let _ = write!(out, " {} {}", ann.activity, marker);
        }
        out.push('\n');
    }
    out
}

/// Matches begin/end annotation markers into non-overlapping intervals.
///
/// At most one activity may be open at a time; the target corpus is
/// single-resident, so concurrent activities are declared errors.
pub fn build_annotation_intervals(
    stream: &EventStream,
) -> Result<Vec<AnnotationInterval>, EventError> {
    let mut open: Option<(String, Micros)> = None;
    let mut intervals = Vec::new();
    for event in &stream.events {
        let Some(ann) = &event.annotation else {
            continue;
        };
        match ann.marker {
            Marker::Begin => {
                if let Some((open_name, _)) = &open {
                    return Err(EventError::OverlappingIntervals {
                        open: open_name.clone(),
                        incoming: ann.activity.clone(),
                        at: event.timestamp,
                    });
                }
                open = Some((ann.activity.clone(), event.timestamp));
            }
            Marker::End => match open.take() {
                Some((open_name, start)) if open_name == ann.activity => {
                    if start >= event.timestamp {
                        return Err(EventError::EmptyInterval {
                            activity: open_name,
                            at: event.timestamp,
                        });
                    }
                    intervals.push(AnnotationInterval {
                        activity: open_name,
                        start,
                        end: event.timestamp,
                    });
                }
                _ => {
                    return Err(EventError::UnmatchedEnd {
                        activity: ann.activity.clone(),
                        at: event.timestamp,
                    })
                }
            },
        }
    }
    if let Some((activity, at)) = open {
        return Err(EventError::UnmatchedBegin { activity, at });
    }
    Ok(intervals)
}

/// Validates pairwise non-overlap of a set of intervals.
pub fn check_non_overlapping(intervals: &[AnnotationInterval]) -> Result<(), EventError> {
    let mut sorted: Vec<&AnnotationInterval> = intervals.iter().collect();
    sorted.sort_by_key(|iv| iv.start);
    for pair in sorted.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(EventError::OverlappingIntervals {
                open: pair[0].activity.clone(),
                incoming: pair[1].activity.clone(),
                at: pair[1].start,
            });
        }
    }
    Ok(())
}
