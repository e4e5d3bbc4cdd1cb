//! Seeded synthetic event streams with planted ground truth.
//!
//! The generator walks an activity-level Markov chain, draws an observation
//! code per tick from the active activity's code distribution, erodes labels
//! around activity boundaries to create annotation gaps, and optionally draws
//! gap codes from a distribution keyed by the ordered pair of encapsulating
//! activities. The emitted event text round-trips through the events module,
//! so the full ingest pipeline can run against it.

use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{
    Annotation, EventStream, Marker, Micros, SensorEvent, SensorValue, MICROS_PER_SEC,
};
use crate::label::Label;
use crate::sampling::{seconds_to_micros, LabeledSample, ObservationCode, SampleSeries};

#[derive(Debug, Error)]
#[error("invalid synth config: {0}")]
pub struct InvalidConfig(pub String);

/// Code distribution for one activity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityProfile {
    pub name: String,
    /// (code bits, weight) pairs; weights are normalized at draw time.
    pub codes: Vec<(u64, f64)>,
}

/// Explicit gap-code distribution for one ordered activity pair. Pairs
/// without an entry get an auto-derived signature when `pair_dependent` is on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSignature {
    pub prev: String,
    pub next: String,
    pub codes: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum GapPlacement {
    /// Erode labels at activity boundaries (annotator delay, fuzzy edges).
    #[default]
    Boundary,
    /// Unlabel samples independently at random.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapPolicy {
    /// Fraction of each boundary region to unlabel, in [0, 1).
    pub fraction: f64,
    /// Draw gap codes from a per-ordered-pair signature distribution.
    pub pair_dependent: bool,
    #[serde(default)]
    pub placement: GapPlacement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub activities: Vec<ActivityProfile>,
    pub sensor_ids: Vec<String>,
    /// Row-stochastic per-tick activity transition matrix.
    pub transition: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
    pub gap: GapPolicy,
    #[serde(default)]
    pub signatures: Vec<GapSignature>,
    pub delta_t_secs: f64,
    /// Number of samples (ticks) to generate.
    pub total_samples: usize,
    /// Timestamp of the first tick, microseconds since the epoch.
    pub start_timestamp: Micros,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub stream: EventStream,
    /// Ground-truth labels with gap labels removed (what an annotator left).
    pub gapped: SampleSeries,
    /// Fully labeled ground truth.
    pub truth: SampleSeries,
}

const STOCHASTIC_TOL: f64 = 1e-9;

impl SynthConfig {
    pub fn validate(&self) -> Result<(), InvalidConfig> {
        let n = self.activities.len();
        if n == 0 {
            return Err(InvalidConfig("no activities".into()));
        }
        if self.sensor_ids.is_empty() || self.sensor_ids.len() > 64 {
            return Err(InvalidConfig(format!(
                "sensor count {} outside 1..=64",
                self.sensor_ids.len()
            )));
        }
        if self.transition.len() != n || self.transition.iter().any(|row| row.len() != n) {
            return Err(InvalidConfig("transition matrix is not N x N".into()));
        }
        for (i, row) in self.transition.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL || row.iter().any(|p| *p < 0.0) {
                return Err(InvalidConfig(format!("transition row {i} is not stochastic")));
            }
        }
        if self.initial.len() != n
            || (self.initial.iter().sum::<f64>() - 1.0).abs() > STOCHASTIC_TOL
            || self.initial.iter().any(|p| *p < 0.0)
        {
            return Err(InvalidConfig("initial distribution is not stochastic".into()));
        }
        if !(0.0..1.0).contains(&self.gap.fraction) {
            return Err(InvalidConfig(format!(
                "gap fraction {} outside [0, 1)",
                self.gap.fraction
            )));
        }
        if self.delta_t_secs <= 0.0 {
            return Err(InvalidConfig("delta_t must be positive".into()));
        }
        if self.total_samples == 0 {
            return Err(InvalidConfig("total_samples must be positive".into()));
        }
        let width = self.sensor_ids.len();
        let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
        for profile in &self.activities {
            if profile.codes.is_empty() || profile.codes.iter().any(|(_, w)| *w <= 0.0) {
                return Err(InvalidConfig(format!(
                    "activity {:?} needs positively weighted codes",
                    profile.name
                )));
            }
            if profile.codes.iter().any(|(c, _)| c & !mask != 0) {
                return Err(InvalidConfig(format!(
                    "activity {:?} code exceeds sensor width",
                    profile.name
                )));
            }
        }
        Ok(())
    }

    fn activity_index(&self, name: &str) -> Option<usize> {
        self.activities.iter().position(|a| a.name == name)
    }
}

struct CodeDist {
    codes: Vec<u64>,
    dist: WeightedIndex<f64>,
}

impl CodeDist {
    fn new(entries: &[(u64, f64)]) -> CodeDist {
        CodeDist {
            codes: entries.iter().map(|(c, _)| *c).collect(),
            dist: WeightedIndex::new(entries.iter().map(|(_, w)| *w)).expect("validated weights"),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> u64 {
        self.codes[self.dist.sample(rng)]
    }
}

/// Auto-derived signature code for an ordered activity pair: a dedicated bit
/// away from the low-order bits the presets use for activity profiles.
fn auto_signature_code(prev: usize, next: usize, n_activities: usize, width: usize) -> u64 {
    let offset = (width / 2).min(width - 1);
    let span = width - offset;
    let bit = offset + (prev * n_activities + next) % span;
    1u64 << bit
}

fn gap_mask(config: &SynthConfig, states: &[usize], rng: &mut ChaCha8Rng) -> Vec<bool> {
    let n = states.len();
    let mut mask = vec![false; n];
    if config.gap.fraction == 0.0 {
        return mask;
    }
    match config.gap.placement {
        GapPlacement::Uniform => {
            for slot in mask.iter_mut() {
                if rng.gen_bool(config.gap.fraction) {
                    *slot = true;
                }
            }
        }
        GapPlacement::Boundary => {
            // Runs of equal activity; erode each internal boundary from both
            // sides, always keeping at least one labeled sample per run.
            let mut runs: Vec<(usize, usize)> = Vec::new();
            let mut start = 0;
            for i in 1..=n {
                if i == n || states[i] != states[start] {
                    runs.push((start, i - 1));
                    start = i;
                }
            }
            for (r, &(lo, hi)) in runs.iter().enumerate() {
                let len = hi - lo + 1;
                let erode = ((len as f64) * config.gap.fraction / 2.0).floor() as usize;
                if r > 0 {
                    for slot in mask.iter_mut().take(lo + erode).skip(lo) {
                        *slot = true;
                    }
                }
                if r + 1 < runs.len() {
                    for slot in mask.iter_mut().take(hi + 1).skip(hi + 1 - erode) {
                        *slot = true;
                    }
                }
            }
        }
    }
    mask
}

/// Generates the event stream, the gapped series, and the fully labeled truth
/// series. Deterministic for a fixed config (the seed is part of it).
pub fn generate(config: &SynthConfig) -> Result<SynthOutput, InvalidConfig> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_act = config.activities.len();
    let width = config.sensor_ids.len() as u8;
    let delta_t_us = seconds_to_micros(config.delta_t_secs);
    let total = config.total_samples;

    // Activity chain.
    let init_dist = WeightedIndex::new(config.initial.iter().cloned())
        .map_err(|e| InvalidConfig(e.to_string()))?;
    let row_dists: Vec<WeightedIndex<f64>> = config
        .transition
        .iter()
        .map(|row| WeightedIndex::new(row.iter().cloned()).map_err(|e| InvalidConfig(e.to_string())))
        .collect::<Result<_, _>>()?;
    let mut states = Vec::with_capacity(total);
    let mut current = init_dist.sample(&mut rng);
    for _ in 0..total {
        states.push(current);
        current = row_dists[current].sample(&mut rng);
    }

    // Gap placement.
    let mask = gap_mask(config, &states, &mut rng);

    // Per-activity and per-pair code distributions.
    let profiles: Vec<CodeDist> = config
        .activities
        .iter()
        .map(|a| CodeDist::new(&a.codes))
        .collect();
    let mut explicit: HashMap<(usize, usize), CodeDist> = HashMap::new();
    for sig in &config.signatures {
        let prev = config
            .activity_index(&sig.prev)
            .ok_or_else(|| InvalidConfig(format!("signature names unknown activity {:?}", sig.prev)))?;
        let next = config
            .activity_index(&sig.next)
            .ok_or_else(|| InvalidConfig(format!("signature names unknown activity {:?}", sig.next)))?;
        if sig.codes.is_empty() || sig.codes.iter().any(|(_, w)| *w <= 0.0) {
            return Err(InvalidConfig("signature needs positively weighted codes".into()));
        }
        explicit.insert((prev, next), CodeDist::new(&sig.codes));
    }

    // Encapsulating activities per gap sample, from the nearest labeled ticks.
    let mut gap_pair: Vec<Option<(usize, usize)>> = vec![None; total];
    if config.gap.pair_dependent {
        let mut i = 0usize;
        while i < total {
            if !mask[i] {
                i += 1;
                continue;
            }
            let start = i;
            while i < total && mask[i] {
                i += 1;
            }
            let prev = if start > 0 { Some(states[start - 1]) } else { None };
            let next = if i < total { Some(states[i]) } else { None };
            if let (Some(p), Some(q)) = (prev, next) {
                for slot in gap_pair.iter_mut().take(i).skip(start) {
                    *slot = Some((p, q));
                }
            }
        }
    }

    // Observation codes.
    let mut codes = Vec::with_capacity(total);
    for (k, &state) in states.iter().enumerate() {
        let bits = match gap_pair[k] {
            Some((p, q)) => {
                // Signature draws dominate; the rest leaks the neighbors'
                // own codes into the gap.
                let roll: f64 = rng.gen();
                if roll < 0.6 {
                    match explicit.get(&(p, q)) {
                        Some(dist) => dist.draw(&mut rng),
                        None => auto_signature_code(p, q, n_act, width as usize),
                    }
                } else if roll < 0.8 {
                    profiles[p].draw(&mut rng)
                } else {
                    profiles[q].draw(&mut rng)
                }
            }
            None => profiles[state].draw(&mut rng),
        };
        codes.push(ObservationCode::new(bits, width));
    }

    // Series.
    let tick = |k: usize| config.start_timestamp + k as i64 * delta_t_us;
    let truth_samples: Vec<LabeledSample> = (0..total)
        .map(|k| LabeledSample {
            timestamp: tick(k),
            code: codes[k],
            label: Label::activity(config.activities[states[k]].name.clone()),
        })
        .collect();
    let gapped_samples: Vec<LabeledSample> = truth_samples
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let mut s = s.clone();
            if mask[k] {
                s.label = Label::Null;
            }
            s
        })
        .collect();
    let truth = SampleSeries::from_samples(delta_t_us, truth_samples);
    let gapped = SampleSeries::from_samples(delta_t_us, gapped_samples);

    // Event stream: an initial all-off burst pins the sensor-to-bit order,
    // then per-tick change events replay the planted codes under latching.
    // Begin/end annotation markers ride on no-op carrier events so that
    // interval extraction reproduces the gapped labels.
    let mut events = Vec::new();
    for id in &config.sensor_ids {
        events.push(SensorEvent {
            timestamp: tick(0),
            sensor_id: id.clone(),
            value: SensorValue::Inactive,
            annotation: None,
        });
    }
    let mut latch = 0u64;
    for k in 0..total {
        let target = codes[k].bits;
        let mut changed = latch ^ target;
        while changed != 0 {
            let bit = changed.trailing_zeros() as usize;
            changed &= changed - 1;
            events.push(SensorEvent {
                timestamp: tick(k),
                sensor_id: config.sensor_ids[bit].clone(),
                value: if target & (1 << bit) != 0 {
                    SensorValue::Active
                } else {
                    SensorValue::Inactive
                },
            annotation: None,
            });
        }
        latch = target;

        let carrier_value = |latch: u64| {
            if latch & 1 != 0 {
                SensorValue::Active
            } else {
                SensorValue::Inactive
            }
        };
        let run_starts = !mask[k] && (k == 0 || mask[k - 1] || states[k - 1] != states[k]);
        if run_starts {
            events.push(SensorEvent {
                timestamp: tick(k),
                sensor_id: config.sensor_ids[0].clone(),
                value: carrier_value(latch),
                annotation: Some(Annotation {
                    activity: config.activities[states[k]].name.clone(),
                    marker: Marker::Begin,
                }),
            });
        }
        let run_ends = !mask[k] && (k + 1 == total || mask[k + 1] || states[k + 1] != states[k]);
        if run_ends {
            // End one microsecond past the tick so [start, end) keeps it.
            events.push(SensorEvent {
                timestamp: tick(k) + 1,
                sensor_id: config.sensor_ids[0].clone(),
                value: carrier_value(latch),
                annotation: Some(Annotation {
                    activity: config.activities[states[k]].name.clone(),
                    marker: Marker::End,
                }),
            });
        }
        if k + 1 == total && events.last().map(|e| e.timestamp) != Some(tick(k)) {
            // Pin the final tick so resampling reproduces the sample count.
            events.push(SensorEvent {
                timestamp: tick(k),
                sensor_id: config.sensor_ids[0].clone(),
                value: carrier_value(latch),
                annotation: None,
            });
        }
    }

    Ok(SynthOutput {
        stream: EventStream::from_events(events),
        gapped,
        truth,
    })
}

/// The nine activities and the Leaving/Entering planted pair used by the
/// desk-scale preset.
pub const ARUBA_ACTIVITIES: [&str; 9] = [
    "Sleeping",
    "Bed_To_Toilet",
    "Meal_Preparation",
    "Relax",
    "Eating",
    "Wash_Dishes",
    "Housekeeping",
    "Leaving_Home",
    "Entering_Home",
];

/// A desk-scale configuration shaped like the target test bed: 9 activities,
/// 34 sensors (31 motion + 3 door), boundary gaps with pair-dependent
/// signatures, and an idle gap between Leaving_Home and Entering_Home that
/// mimics the resident being out of the house.
pub fn aruba_like(total_samples: usize, seed: u64) -> SynthConfig {
    let names = ARUBA_ACTIVITIES;
    let n = names.len();
    let bit = |b: u64| 1u64 << b;
    let profiles: Vec<ActivityProfile> = vec![
        ActivityProfile {
            name: names[0].into(),
            codes: vec![(bit(0), 0.8), (bit(0) | bit(1), 0.2)],
        },
        ActivityProfile {
            name: names[1].into(),
            codes: vec![(bit(2), 0.7), (bit(2) | bit(3), 0.3)],
        },
        ActivityProfile {
            name: names[2].into(),
            codes: vec![(bit(4), 0.6), (bit(5), 0.4)],
        },
        ActivityProfile {
            name: names[3].into(),
            // Idle-tended: Relax often produces no motion at all.
            codes: vec![(bit(6), 0.7), (0, 0.3)],
        },
        ActivityProfile {
            name: names[4].into(),
            codes: vec![(bit(7), 0.8), (bit(6) | bit(7), 0.2)],
        },
        ActivityProfile {
            name: names[5].into(),
            codes: vec![(bit(8), 0.8), (bit(5), 0.2)],
        },
        ActivityProfile {
            name: names[6].into(),
            codes: vec![(bit(9), 0.5), (bit(10), 0.5)],
        },
        ActivityProfile {
            name: names[7].into(),
            // Door closes, then the house is idle.
            codes: vec![(0, 0.75), (bit(31), 0.25)],
        },
        ActivityProfile {
            name: names[8].into(),
            codes: vec![(bit(31) | bit(11), 0.6), (bit(11), 0.4)],
        },
    ];

    // Row = (stay probability, successor weights over exits).
    let successors: [(f64, &[(usize, f64)]); 9] = [
        (0.985, &[(1, 0.7), (2, 0.3)]),
        (0.900, &[(0, 1.0)]),
        (0.970, &[(4, 0.6), (5, 0.2), (7, 0.2)]),
        (0.970, &[(2, 0.4), (0, 0.3), (7, 0.3)]),
        (0.960, &[(5, 0.5), (3, 0.5)]),
        (0.930, &[(3, 0.6), (6, 0.4)]),
        (0.950, &[(3, 0.6), (7, 0.4)]),
        (0.900, &[(8, 1.0)]),
        (0.970, &[(3, 0.5), (2, 0.3), (0, 0.2)]),
    ];
    let mut transition = vec![vec![0.0f64; n]; n];
    for (i, (stay, exits)) in successors.iter().enumerate() {
        transition[i][i] = *stay;
        let exit_mass = 1.0 - stay;
        for (j, w) in exits.iter() {
            transition[i][*j] = exit_mass * w;
        }
        let sum: f64 = transition[i].iter().sum();
        transition[i][i] += 1.0 - sum;
    }
    let mut initial = vec![0.0; n];
    initial[0] = 1.0;

    let mut sensor_ids: Vec<String> = (1..=31).map(|i| format!("M{i:03}")).collect();
    sensor_ids.extend((1..=3).map(|i| format!("D{i:03}")));

    SynthConfig {
        activities: profiles,
        sensor_ids,
        transition,
        initial,
        gap: GapPolicy {
            fraction: 0.5,
            pair_dependent: true,
            placement: GapPlacement::Boundary,
        },
        signatures: vec![GapSignature {
            prev: names[7].into(),
            next: names[8].into(),
            // Nobody home: the gap looks just like Leaving_Home itself.
            codes: vec![(0, 0.8), (bit(31), 0.2)],
        }],
        delta_t_secs: 7.0,
        total_samples,
        start_timestamp: 1_293_840_000 * MICROS_PER_SEC, // 2011-01-01 00:00:00 UTC
        seed,
    }
}

/// Looks up a named preset for the CLI.
pub fn preset(name: &str, total_samples: usize, seed: u64) -> Option<SynthConfig> {
    match name {
        "aruba-like" => Some(aruba_like(total_samples, seed)),
        "tiny" => {
            let mut config = aruba_like(total_samples, seed);
            config.activities.truncate(3);
            config.transition = vec![
                vec![0.9, 0.08, 0.02],
                vec![0.1, 0.85, 0.05],
                vec![0.05, 0.05, 0.9],
            ];
            config.initial = vec![1.0, 0.0, 0.0];
            config.sensor_ids.truncate(8);
            config.signatures.clear();
            Some(config)
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{parse_stream, ParsePolicy};
    use crate::sampling::{assign_labels, build_sensor_map, resample};

    fn small_config(seed: u64) -> SynthConfig {
        let mut config = aruba_like(2_000, seed);
        config.total_samples = 2_000;
        config
    }

    #[test]
    fn zero_gap_fraction_matches_truth() {
        let mut config = small_config(1);
        config.gap.fraction = 0.0;
        let out = generate(&config).unwrap();
        assert_eq!(out.gapped, out.truth);
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let config = small_config(42);
        let a = generate(&config).unwrap();
        let b = generate(&config).unwrap();
        assert_eq!(a.gapped, b.gapped);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.stream, b.stream);
    }

    #[test]
    fn gapped_and_truth_differ_only_in_gap_labels() {
        let out = generate(&small_config(7)).unwrap();
        assert_eq!(out.gapped.len(), out.truth.len());
        for (g, t) in out.gapped.samples.iter().zip(&out.truth.samples) {
            assert_eq!(g.timestamp, t.timestamp);
            assert_eq!(g.code, t.code);
            if !g.label.is_null() {
                assert_eq!(g.label, t.label);
            }
        }
        assert!(out.gapped.null_count() > 0);
    }

    #[test]
    fn stream_round_trips_to_gapped_series() {
        let out = generate(&small_config(3)).unwrap();
        let text = out.stream.serialize();
        let stream = parse_stream(&text, ParsePolicy::FailFast).unwrap();
        let map = build_sensor_map(&stream).unwrap();
        assert_eq!(map.sensor_count(), 34);
        let series = resample(&stream, &map, 7.0).unwrap();
        assert_eq!(series.len(), out.gapped.len());
        let intervals = crate::events::build_annotation_intervals(&stream).unwrap();
        let labeled = assign_labels(&series, &intervals).unwrap();
        assert_eq!(labeled.samples, out.gapped.samples);
    }

    #[test]
    fn invalid_fraction_rejected() {
        let mut config = small_config(1);
        config.gap.fraction = 1.5;
        assert!(generate(&config).is_err());
    }

    #[test]
    fn invalid_transition_rejected() {
        let mut config = small_config(1);
        config.transition[0][0] += 0.5;
        assert!(generate(&config).is_err());
    }

    #[test]
    fn empirical_transitions_converge_to_truth() {
        let config = aruba_like(100_000, 9);
        let out = generate(&config).unwrap();
        let n = config.activities.len();
        let index: HashMap<&str, usize> = config
            .activities
            .iter()
            .enumerate()
            .map(|(i, a)| (a.name.as_str(), i))
            .collect();
        let mut counts = vec![0.0f64; n * n];
        for pair in out.truth.samples.windows(2) {
            let (Label::Activity(a), Label::Activity(b)) = (&pair[0].label, &pair[1].label) else {
                panic!("truth is fully labeled");
            };
            counts[index[a.as_str()] * n + index[b.as_str()]] += 1.0;
        }
        for i in 0..n {
            let row_total: f64 = counts[i * n..(i + 1) * n].iter().sum();
            assert!(row_total > 0.0, "activity {i} never visited");
            for j in 0..n {
                let freq = counts[i * n + j] / row_total;
                assert!(
                    (freq - config.transition[i][j]).abs() < 0.05,
                    "transition {i}->{j}: {freq} vs {}",
                    config.transition[i][j]
                );
            }
        }
    }

    #[test]
    fn uniform_placement_unlabels_roughly_the_fraction() {
        let mut config = small_config(5);
        config.gap.placement = GapPlacement::Uniform;
        config.gap.fraction = 0.3;
        config.gap.pair_dependent = false;
        let out = generate(&config).unwrap();
        let rate = out.gapped.null_count() as f64 / out.gapped.len() as f64;
        assert!((rate - 0.3).abs() < 0.05, "rate {rate}");
    }

    #[test]
    fn preset_lookup() {
        assert!(preset("aruba-like", 100, 1).is_some());
        assert!(preset("tiny", 100, 1).is_some());
        assert!(preset("nope", 100, 1).is_none());
    }
}
