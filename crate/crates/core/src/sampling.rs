//! Fixed-interval resampling of an event stream into observation codes.
//!
//! Each sensor holds (latches) its last reported binary value; at every tick
//! the latched bitmask becomes the sample's observation code. Labels come from
//! the annotation intervals, with `Null` marking annotation gaps.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{
    check_non_overlapping, format_timestamp, AnnotationInterval, EventError, EventStream, Micros,
    SensorValue, MICROS_PER_SEC,
};
use crate::label::Label;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("event stream is empty")]
    EmptyStream,
    #[error("stream has {0} distinct sensors; at most 64 are supported")]
    TooManySensors(usize),
    #[error("sampling interval must be positive, got {0}")]
    NonPositiveInterval(f64),
    #[error("stream has fewer than 2 events")]
    TooFewEvents,
    #[error("sample series is empty")]
    EmptySeries,
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error(transparent)]
    Interval(#[from] EventError),
    #[error("samples csv, line {line}: {reason}")]
    BadCsv { line: usize, reason: String },
}

/// Bijective mapping sensor id -> bit position, in order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorMap {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl SensorMap {
    pub fn bit_index(&self, sensor_id: &str) -> Option<usize> {
        self.index.get(sensor_id).copied()
    }

    pub fn sensor_count(&self) -> usize {
        self.ids.len()
    }

    pub fn sensor_ids(&self) -> &[String] {
        &self.ids
    }
}

/// Assigns bit indices by first appearance in the stream; deterministic for a
/// fixed stream.
pub fn build_sensor_map(stream: &EventStream) -> Result<SensorMap, SamplingError> {
    if stream.events.is_empty() {
        return Err(SamplingError::EmptyStream);
    }
    let mut ids = Vec::new();
    let mut index = HashMap::new();
    for event in &stream.events {
        if !index.contains_key(&event.sensor_id) {
            index.insert(event.sensor_id.clone(), ids.len());
            ids.push(event.sensor_id.clone());
        }
    }
    if ids.len() > 64 {
        return Err(SamplingError::TooManySensors(ids.len()));
    }
    Ok(SensorMap { ids, index })
}

/// A fixed-width bitmask of latched sensor states at one tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObservationCode {
    pub bits: u64,
    pub width: u8,
}

impl ObservationCode {
    pub fn new(bits: u64, width: u8) -> ObservationCode {
        debug_assert!(width as u32 <= 64);
        debug_assert!(width as u32 == 64 || bits < (1u64 << width));
        ObservationCode { bits, width }
    }

    /// Hex rendering zero-padded to ceil(width/4) digits, e.g. `0x00000292D`
    /// for a 34-bit code.
    pub fn hex(&self) -> String {
        let digits = (self.width as usize).div_ceil(4);
        format!("0x{:0digits$X}", self.bits)
    }

    pub fn parse_hex(token: &str) -> Option<ObservationCode> {
        let stripped = token.strip_prefix("0x").or_else(|| token.strip_prefix("0X"))?;
        let bits = u64::from_str_radix(stripped, 16).ok()?;
        let width = (stripped.len() * 4).min(64) as u8;
        Some(ObservationCode { bits, width })
    }
}

impl fmt::Display for ObservationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.hex())
    }
}

/// One resampled time slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub timestamp: Micros,
    pub code: ObservationCode,
    pub label: Label,
}

/// An ordered series of samples on a strict `t0 + k*delta_t` grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSeries {
    pub delta_t_us: i64,
    pub samples: Vec<LabeledSample>,
    /// Distinct codes in order of first appearance.
    pub alphabet: Vec<ObservationCode>,
}

impl SampleSeries {
    pub fn from_samples(delta_t_us: i64, samples: Vec<LabeledSample>) -> SampleSeries {
        let mut alphabet = Vec::new();
        let mut seen = HashMap::new();
        for s in &samples {
            if !seen.contains_key(&s.code) {
                seen.insert(s.code, ());
                alphabet.push(s.code);
            }
        }
        SampleSeries {
            delta_t_us,
            samples,
            alphabet,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &Label> {
        self.samples.iter().map(|s| &s.label)
    }

    pub fn codes(&self) -> Vec<ObservationCode> {
        self.samples.iter().map(|s| s.code).collect()
    }

    pub fn null_count(&self) -> usize {
        self.samples.iter().filter(|s| s.label.is_null()).count()
    }
}

/// How readings are folded into a tick's observation code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResampleMode {
    /// Each sensor holds its last reported value until its next event.
    #[default]
    Latch,
    /// A sensor counts as active if it was active at any point since the
    /// previous tick. Offered for sensitivity analysis against latching.
    OrWithinWindow,
}

pub fn seconds_to_micros(delta_t: f64) -> i64 {
    (delta_t * MICROS_PER_SEC as f64).round() as i64
}

/// Resamples the stream at `delta_t` seconds using latch semantics.
pub fn resample(
    stream: &EventStream,
    map: &SensorMap,
    delta_t: f64,
) -> Result<SampleSeries, SamplingError> {
    resample_with_mode(stream, map, delta_t, ResampleMode::Latch)
}

/// Replays events in time order; at each tick `t0 + k*delta_t` (with `t0` the
/// first event timestamp) emits the current bitmask, through the last event
/// timestamp inclusive. Events at exactly the tick time are applied first.
pub fn resample_with_mode(
    stream: &EventStream,
    map: &SensorMap,
    delta_t: f64,
    mode: ResampleMode,
) -> Result<SampleSeries, SamplingError> {
    let delta_t_us = seconds_to_micros(delta_t);
    if delta_t_us <= 0 {
        return Err(SamplingError::NonPositiveInterval(delta_t));
    }
    if stream.events.is_empty() {
        return Err(SamplingError::EmptyStream);
    }
    let t0 = stream.events[0].timestamp;
    let t_last = stream.events.last().expect("nonempty").timestamp;
    let tick_count = ((t_last - t0) / delta_t_us) as usize + 1;
    let width = map.sensor_count() as u8;

    let mut samples = Vec::with_capacity(tick_count);
    let mut latch: u64 = 0;
    let mut window_or: u64 = 0;
    let mut next_event = 0usize;
    for k in 0..tick_count {
        let tick = t0 + k as i64 * delta_t_us;
        while next_event < stream.events.len() && stream.events[next_event].timestamp <= tick {
            let event = &stream.events[next_event];
            if let Some(bit) = map.bit_index(&event.sensor_id) {
                match event.value {
                    SensorValue::Active => {
                        latch |= 1 << bit;
                        window_or |= 1 << bit;
                    }
                    SensorValue::Inactive => latch &= !(1 << bit),
                }
            }
            next_event += 1;
        }
        let bits = match mode {
            ResampleMode::Latch => latch,
            ResampleMode::OrWithinWindow => window_or,
        };
        window_or = latch;
        samples.push(LabeledSample {
            timestamp: tick,
            code: ObservationCode::new(bits, width),
            label: Label::Null,
        });
    }
    Ok(SampleSeries::from_samples(delta_t_us, samples))
}

/// Labels each sample with the unique interval containing its timestamp
/// (inclusive start, exclusive end); samples outside every interval get Null.
pub fn assign_labels(
    series: &SampleSeries,
    intervals: &[AnnotationInterval],
) -> Result<SampleSeries, SamplingError> {
    check_non_overlapping(intervals)?;
    let mut sorted: Vec<&AnnotationInterval> = intervals.iter().collect();
    sorted.sort_by_key(|iv| iv.start);
    let mut samples = series.samples.clone();
    let mut cursor = 0usize;
    for sample in &mut samples {
        while cursor < sorted.len() && sorted[cursor].end <= sample.timestamp {
            cursor += 1;
        }
        sample.label = match sorted.get(cursor) {
            Some(iv) if iv.contains(sample.timestamp) => Label::activity(iv.activity.clone()),
            _ => Label::Null,
        };
    }
    Ok(SampleSeries::from_samples(series.delta_t_us, samples))
}

/// Recommends a sampling interval range of 50-65% of the mean inter-event gap.
pub fn recommend_delta_t(stream: &EventStream) -> Result<(f64, f64), SamplingError> {
    if stream.events.len() < 2 {
        return Err(SamplingError::TooFewEvents);
    }
    let total: i64 = stream
        .events
        .windows(2)
        .map(|pair| pair[1].timestamp - pair[0].timestamp)
        .sum();
    let mean_secs = total as f64 / (stream.events.len() - 1) as f64 / MICROS_PER_SEC as f64;
    Ok((0.50 * mean_secs, 0.65 * mean_secs))
}

/// Splits the series in time order: the first `floor(n * fraction)` samples
/// train, the remainder test. No shuffling.
pub fn chronological_split(
    series: &SampleSeries,
    train_fraction: f64,
) -> Result<(SampleSeries, SampleSeries), SamplingError> {
    if series.is_empty() {
        return Err(SamplingError::EmptySeries);
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SamplingError::InvalidFraction(train_fraction));
    }
    let cut = (series.len() as f64 * train_fraction).floor() as usize;
    let (head, tail) = series.samples.split_at(cut);
    Ok((
        SampleSeries::from_samples(series.delta_t_us, head.to_vec()),
        SampleSeries::from_samples(series.delta_t_us, tail.to_vec()),
    ))
}

const CSV_HEADER: &str = "timestamp,code_hex,label";

/// Writes the series as CSV: `timestamp,code_hex,label` with `∅` for Null.
/// A leading comment line carries the grid interval and code width, which the
/// three data columns cannot express.
pub fn write_series_csv(series: &SampleSeries, out: &mut impl Write) -> std::io::Result<()> {
    let width = series.samples.first().map_or(0, |s| s.code.width);
    writeln!(
        out,
        "# gapmark-samples v1 delta_t_us={} width={}",
        series.delta_t_us, width
    )?;
    writeln!(out, "{CSV_HEADER}")?;
    for sample in &series.samples {
        writeln!(
            out,
            "{},{},{}",
            format_timestamp(sample.timestamp),
            sample.code.hex(),
            sample.label
        )?;
    }
    Ok(())
}

pub fn read_series_csv(input: impl BufRead) -> Result<SampleSeries, SamplingError> {
    let mut delta_t_us: Option<i64> = None;
    let mut width: Option<u8> = None;
    let mut samples = Vec::new();
    let mut saw_header = false;
    for (idx, line) in input.lines().enumerate() {
        let line = line.map_err(|e| SamplingError::BadCsv {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        let bad = |reason: String| SamplingError::BadCsv {
            line: idx + 1,
            reason,
        };
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(meta) = trimmed.strip_prefix('#') {
            for token in meta.split_whitespace() {
                if let Some(v) = token.strip_prefix("delta_t_us=") {
                    delta_t_us = v.parse().ok();
                } else if let Some(v) = token.strip_prefix("width=") {
                    width = v.parse().ok();
                }
            }
            continue;
        }
        if !saw_header {
            if trimmed != CSV_HEADER {
                return Err(bad(format!("expected header {CSV_HEADER:?}")));
            }
            saw_header = true;
            continue;
        }
        let mut fields = trimmed.splitn(3, ',');
        let ts_field = fields.next().ok_or_else(|| bad("missing timestamp".into()))?;
        let code_field = fields.next().ok_or_else(|| bad("missing code_hex".into()))?;
        let label_field = fields.next().ok_or_else(|| bad("missing label".into()))?;
        let (date, time) = ts_field
            .split_once(' ')
            .ok_or_else(|| bad(format!("bad timestamp {ts_field:?}")))?;
        let timestamp = crate::events::parse_timestamp(date, time)
            .ok_or_else(|| bad(format!("bad timestamp {ts_field:?}")))?;
        let mut code = ObservationCode::parse_hex(code_field)
            .ok_or_else(|| bad(format!("bad code {code_field:?}")))?;
        if let Some(w) = width {
            code.width = w;
        }
        samples.push(LabeledSample {
            timestamp,
            code,
            label: Label::parse(label_field),
        });
    }
    if !saw_header {
        return Err(SamplingError::BadCsv {
            line: 0,
            reason: "missing header row".into(),
        });
    }
    let delta_t_us = match delta_t_us {
        Some(d) => d,
        None if samples.len() >= 2 => samples[1].timestamp - samples[0].timestamp,
        None => {
            return Err(SamplingError::BadCsv {
                line: 0,
                reason: "delta_t_us metadata missing and not inferable".into(),
            })
        }
    };
    Ok(SampleSeries::from_samples(delta_t_us, samples))
}
