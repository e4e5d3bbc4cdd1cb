//! Discrete-HMM activity recognition over binary smart-home sensor streams,
//! with pluggable handling of annotation gaps in the training labels.
//!
//! The pipeline is: parse a raw event log ([`events`]), resample it into a
//! fixed-interval series of latched observation codes ([`sampling`]), resolve
//! the unlabeled gaps with one of the gap-handling paradigms ([`paradigms`]),
//! estimate and decode a supervised HMM ([`hmm`]), and score the decoded
//! activities ([`eval`]). The [`synth`] module generates seeded synthetic
//! streams with planted ground truth for end-to-end testing.

pub mod eval;
pub mod events;
pub mod hmm;
pub mod label;
pub mod paradigms;
pub mod sampling;
pub mod synth;

pub use eval::{ClassMetrics, ComparisonReport, ConfusionMatrix, ParadigmConfig};
pub use events::{AnnotationInterval, EventStream, SensorEvent};
pub use hmm::{DecodedPath, HmmModel};
pub use label::{Boundary, Label};
pub use paradigms::{GapRun, LabelSpace, Paradigm, SemanticRule};
pub use sampling::{LabeledSample, ObservationCode, SampleSeries, SensorMap};
pub use synth::SynthConfig;
