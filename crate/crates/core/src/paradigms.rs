//! Annotation-gap handling paradigms.
//!
//! Paradigm #1 drops unlabeled samples, #2 folds every gap into a single
//! `Unknown` state, #3 gives each gap a label keyed by its ordered pair of
//! encapsulating activities, and the hybrid variant first extends specific
//! preceding activities over their gaps (semantic preprocessing) and then
//! applies #3 to whatever gaps remain.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::{Boundary, Label, UNKNOWN_TOKEN};
use crate::sampling::SampleSeries;

#[derive(Debug, Error)]
pub enum ParadigmError {
    #[error("every sample is unlabeled; nothing to train on")]
    AllSamplesNull,
    #[error("activity name {0:?} collides with a reserved paradigm label")]
    ReservedLabel(String),
    #[error("semantic rule may not map an activity to itself: {0:?}")]
    SelfRule(String),
    #[error("rules file, line {line}: {reason}")]
    BadRule { line: usize, reason: String },
    #[error("label {0:?} is not part of the label space")]
    UnknownLabelToken(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Paradigm {
    P1,
    P2,
    P3,
    Hybrid,
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Paradigm::P1 => "p1",
            Paradigm::P2 => "p2",
            Paradigm::P3 => "p3",
            Paradigm::Hybrid => "hybrid",
        };
        f.write_str(s)
    }
}

impl Paradigm {
    pub fn parse(token: &str) -> Option<Paradigm> {
        match token.to_ascii_lowercase().as_str() {
            "p1" | "1" | "gap-removal" => Some(Paradigm::P1),
            "p2" | "2" | "unknown" => Some(Paradigm::P2),
            "p3" | "3" | "interactivity" => Some(Paradigm::P3),
            "hybrid" | "h" => Some(Paradigm::Hybrid),
            _ => None,
        }
    }
}

/// The state set produced by a paradigm: base activities plus any labels the
/// paradigm introduced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    pub base_activities: Vec<String>,
    pub extra_labels: Vec<Label>,
    pub paradigm: Paradigm,
}

impl LabelSpace {
    /// All states in order: base activities first, then paradigm labels.
    pub fn states(&self) -> Vec<Label> {
        self.base_activities
            .iter()
            .map(|name| Label::activity(name.clone()))
            .chain(self.extra_labels.iter().cloned())
            .collect()
    }

    pub fn total_states(&self) -> usize {
        self.base_activities.len() + self.extra_labels.len()
    }

    pub fn contains(&self, label: &Label) -> bool {
        match label {
            Label::Activity(name) => self.base_activities.iter().any(|a| a == name),
            other => self.extra_labels.contains(other),
        }
    }
}

/// A maximal run of unlabeled samples with its nearest labeled neighbors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapRun {
    pub start_index: usize,
    pub end_index: usize,
    pub prev: Boundary,
    pub next: Boundary,
}

/// One semantic preprocessing rule: when a gap sits between `preceding` and
/// `following`, extend `preceding` over the gap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticRule {
    pub preceding: String,
    pub following: String,
}

impl SemanticRule {
    pub fn new(preceding: impl Into<String>, following: impl Into<String>) -> Result<SemanticRule, ParadigmError> {
        let preceding = preceding.into();
        let following = following.into();
        if preceding == following {
            return Err(ParadigmError::SelfRule(preceding));
        }
        Ok(SemanticRule {
            preceding,
            following,
        })
    }
}

/// Parses a rules file: one `preceding_activity -> following_activity` per
/// line, `#` comments.
pub fn parse_rules(text: &str) -> Result<Vec<SemanticRule>, ParadigmError> {
    let mut rules = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (lhs, rhs) = trimmed.split_once("->").ok_or(ParadigmError::BadRule {
            line: idx + 1,
            reason: "expected \"preceding -> following\"".into(),
        })?;
        let (lhs, rhs) = (lhs.trim(), rhs.trim());
        if lhs.is_empty() || rhs.is_empty() {
            return Err(ParadigmError::BadRule {
                line: idx + 1,
                reason: "empty activity name".into(),
            });
        }
        rules.push(SemanticRule::new(lhs, rhs)?);
    }
    Ok(rules)
}

fn boundary_of(label: &Label) -> Option<Boundary> {
    match label {
        Label::Activity(name) => Some(Boundary::Activity(name.clone())),
        // Paradigm labels already resolve the gap; runs of them are not gaps.
        Label::Unknown => Some(Boundary::Activity(UNKNOWN_TOKEN.into())),
        Label::Gap { .. } => None,
        Label::Null => None,
    }
}

/// Finds maximal Null runs in index order, with prev/next taken from the
/// nearest non-Null neighbors and sentinels at the series boundaries.
pub fn find_gap_runs(series: &SampleSeries) -> Vec<GapRun> {
    let labels: Vec<&Label> = series.labels().collect();
    let mut runs = Vec::new();
    let mut i = 0usize;
    while i < labels.len() {
        if !labels[i].is_null() {
            i += 1;
            continue;
        }
        let start = i;
        while i < labels.len() && labels[i].is_null() {
            i += 1;
        }
        let prev = if start == 0 {
            Boundary::Start
        } else {
            boundary_of(labels[start - 1]).unwrap_or(Boundary::Start)
        };
        let next = if i == labels.len() {
            Boundary::End
        } else {
            boundary_of(labels[i]).unwrap_or(Boundary::End)
        };
        runs.push(GapRun {
            start_index: start,
            end_index: i - 1,
            prev,
            next,
        });
    }
    runs
}

/// Base activities in order of first appearance; paradigm labels already in
/// the series are ignored here.
fn base_activities(series: &SampleSeries) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut base = Vec::new();
    for label in series.labels() {
        if let Label::Activity(name) = label {
            if seen.insert(name.clone()) {
                base.push(name.clone());
            }
        }
    }
    base
}

fn check_reserved(base: &[String]) -> Result<(), ParadigmError> {
    for name in base {
        if name == UNKNOWN_TOKEN || name.starts_with("GAP[") {
            return Err(ParadigmError::ReservedLabel(name.clone()));
        }
    }
    Ok(())
}

/// Paradigm #1: drops every unlabeled sample; downstream counting over the
/// compacted series realizes the zeroing-and-renormalization of the gap
/// states implicitly.
pub fn apply_gap_removal(
    series: &SampleSeries,
) -> Result<(SampleSeries, LabelSpace), ParadigmError> {
    let kept: Vec<_> = series
        .samples
        .iter()
        .filter(|s| !s.label.is_null())
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(ParadigmError::AllSamplesNull);
    }
    let out = SampleSeries::from_samples(series.delta_t_us, kept);
    let base = base_activities(&out);
    check_reserved(&base)?;
    let mut extra = Vec::new();
    collect_paradigm_labels(&out, &mut extra);
    Ok((
        out,
        LabelSpace {
            base_activities: base,
            extra_labels: extra,
            paradigm: Paradigm::P1,
        },
    ))
}

/// Paradigm #2: every Null becomes the universal `Unknown` state.
pub fn apply_unknown_label(
    series: &SampleSeries,
) -> Result<(SampleSeries, LabelSpace), ParadigmError> {
    let samples: Vec<_> = series
        .samples
        .iter()
        .cloned()
        .map(|mut s| {
            if s.label.is_null() {
                s.label = Label::Unknown;
            }
            s
        })
        .collect();
    let out = SampleSeries::from_samples(series.delta_t_us, samples);
    let base = base_activities(&out);
    check_reserved(&base)?;
    Ok((
        out,
        LabelSpace {
            base_activities: base,
            extra_labels: vec![Label::Unknown],
            paradigm: Paradigm::P2,
        },
    ))
}

fn collect_paradigm_labels(series: &SampleSeries, extra: &mut Vec<Label>) {
    for label in series.labels() {
        match label {
            Label::Unknown | Label::Gap { .. } => {
                if !extra.contains(label) {
                    extra.push(label.clone());
                }
            }
            _ => {}
        }
    }
}

/// Paradigm #3: every gap run gets a label keyed by its ordered pair of
/// encapsulating activities; equal pairs always yield the same label.
pub fn apply_interactivity_labels(
    series: &SampleSeries,
) -> Result<(SampleSeries, LabelSpace), ParadigmError> {
    apply_interactivity_inner(series, Paradigm::P3)
}

fn apply_interactivity_inner(
    series: &SampleSeries,
    paradigm: Paradigm,
) -> Result<(SampleSeries, LabelSpace), ParadigmError> {
    let runs = find_gap_runs(series);
    let mut samples = series.samples.clone();
    for run in &runs {
        let label = Label::gap(run.prev.clone(), run.next.clone());
        for sample in &mut samples[run.start_index..=run.end_index] {
            sample.label = label.clone();
        }
    }
    let out = SampleSeries::from_samples(series.delta_t_us, samples);
    let base = base_activities(&out);
    check_reserved(&base)?;
    let mut extra = Vec::new();
    collect_paradigm_labels(&out, &mut extra);
    Ok((
        out,
        LabelSpace {
            base_activities: base,
            extra_labels: extra,
            paradigm,
        },
    ))
}

/// Semantic preprocessing: gaps whose (prev, next) pair matches a rule are
/// absorbed by extending the preceding activity; other gaps stay Null.
/// Boundary sentinels never match an activity name.
pub fn apply_semantic_preprocess(series: &SampleSeries, rules: &[SemanticRule]) -> SampleSeries {
    let runs = find_gap_runs(series);
    let mut samples = series.samples.clone();
    for run in &runs {
        let (Some(prev), Some(next)) = (run.prev.as_activity(), run.next.as_activity()) else {
            continue;
        };
        if rules
            .iter()
            .any(|r| r.preceding == prev && r.following == next)
        {
            let label = Label::activity(prev);
            for sample in &mut samples[run.start_index..=run.end_index] {
                sample.label = label.clone();
            }
        }
    }
    SampleSeries::from_samples(series.delta_t_us, samples)
}

/// The hybrid paradigm: semantic preprocessing, then interactivity labels for
/// the remaining gaps.
pub fn apply_hybrid(
    series: &SampleSeries,
    rules: &[SemanticRule],
) -> Result<(SampleSeries, LabelSpace), ParadigmError> {
    let preprocessed = apply_semantic_preprocess(series, rules);
    apply_interactivity_inner(&preprocessed, Paradigm::Hybrid)
}

/// Applies `paradigm` with the given rules (rules only matter for Hybrid).
pub fn apply_paradigm(
    series: &SampleSeries,
    paradigm: Paradigm,
    rules: &[SemanticRule],
) -> Result<(SampleSeries, LabelSpace), ParadigmError> {
    match paradigm {
        Paradigm::P1 => apply_gap_removal(series),
        Paradigm::P2 => apply_unknown_label(series),
        Paradigm::P3 => apply_interactivity_labels(series),
        Paradigm::Hybrid => apply_hybrid(series, rules),
    }
}

/// Projection of a paradigm label back onto the ground-truth activity set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Projection {
    Activity(String),
    NotAnActivity,
}

/// Base activities map to themselves; `Unknown` and gap labels are not
/// activities. A base-shaped label outside the space is an error.
pub fn project_to_ground_truth(
    space: &LabelSpace,
    label: &Label,
) -> Result<Projection, ParadigmError> {
    match label {
        Label::Activity(name) => {
            if space.base_activities.iter().any(|a| a == name) {
                Ok(Projection::Activity(name.clone()))
            } else {
                Err(ParadigmError::UnknownLabelToken(name.clone()))
            }
        }
        Label::Unknown | Label::Gap { .. } => Ok(Projection::NotAnActivity),
        Label::Null => Err(ParadigmError::UnknownLabelToken(label.to_string())),
    }
}
