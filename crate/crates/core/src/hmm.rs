//! Supervised estimation of a discrete HMM from a fully labeled sample series
//! and maximum-probability decoding of observation sequences.
//!
//! Estimation is plain counting with additive smoothing: labels are fully
//! known once a paradigm has been applied, so no iterative re-estimation is
//! needed. Decoding runs entirely in log space.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::events::digest_bytes;
use crate::label::Label;
use crate::paradigms::{LabelSpace, Paradigm};
use crate::sampling::{ObservationCode, SampleSeries};

const MODEL_MAGIC: &str = "gapmark-hmm";
const MODEL_VERSION: u32 = 1;
const STOCHASTIC_TOL: f64 = 1e-9;
const MICROS_PER_DAY: i64 = 86_400 * 1_000_000;

#[derive(Debug, Error)]
pub enum HmmError {
    #[error("series contains Null labels; apply a paradigm before estimation")]
    NullLabelPresent,
    #[error("series is empty")]
    EmptySeries,
    #[error("smoothing alpha must be nonnegative, got {0}")]
    NegativeAlpha(f64),
    #[error("series label {0:?} is not in the label space")]
    LabelOutsideSpace(String),
    #[error("observation sequence is empty")]
    EmptyObservations,
    #[error("all path probabilities are zero for this observation sequence")]
    ImpossibleSequence,
    #[error("exhaustive decode instance too large: {states} states, {len} observations")]
    InstanceTooLarge { states: usize, len: usize },
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("unsupported model format version {found} (expected {MODEL_VERSION})")]
    VersionMismatch { found: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The estimated 5-tuple plus training metadata. The alphabet holds the
/// codes seen in training; one extra reserved symbol at index
/// `alphabet.len()` stands in for any out-of-alphabet code at decode time.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    pub states: Vec<Label>,
    pub alphabet: Vec<ObservationCode>,
    /// Row-major `N x N` transition probabilities.
    pub transition: Vec<f64>,
    /// Row-major `N x M_total` emission probabilities.
    pub emission: Vec<f64>,
    pub initial: Vec<f64>,
    pub smoothing_alpha: f64,
    pub delta_t_us: i64,
    pub paradigm: Paradigm,
    pub training_digest: String,
}

impl HmmModel {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    /// Alphabet size including the reserved unseen symbol.
    pub fn n_symbols(&self) -> usize {
        self.alphabet.len() + 1
    }

    pub fn unseen_index(&self) -> usize {
        self.alphabet.len()
    }

    /// Index of a code, mapping out-of-alphabet codes to the unseen symbol.
    pub fn symbol_index(&self, code: &ObservationCode) -> usize {
        self.alphabet
            .iter()
            .position(|c| c == code)
            .unwrap_or(self.alphabet.len())
    }

    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.transition[i * self.n_states() + j]
    }

    pub fn b(&self, state: usize, symbol: usize) -> f64 {
        self.emission[state * self.n_symbols() + symbol]
    }

    /// Re-checks row-stochasticity and entry ranges.
    pub fn validate(&self) -> Result<(), HmmError> {
        let n = self.n_states();
        let m = self.n_symbols();
        if n == 0 {
            return Err(HmmError::CorruptModel("no states".into()));
        }
        if self.transition.len() != n * n
            || self.emission.len() != n * m
            || self.initial.len() != n
        {
            return Err(HmmError::CorruptModel("matrix dimensions mismatch".into()));
        }
        let mut labels = self.states.clone();
        labels.sort();
        labels.dedup();
        if labels.len() != n {
            return Err(HmmError::CorruptModel("duplicate state labels".into()));
        }
        let mut codes = self.alphabet.clone();
        codes.sort();
        codes.dedup();
        if codes.len() != self.alphabet.len() {
            return Err(HmmError::CorruptModel("duplicate alphabet codes".into()));
        }
        let check_row = |row: &[f64], what: &str| -> Result<(), HmmError> {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(HmmError::CorruptModel(format!(
                    "{what} entry outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(HmmError::CorruptModel(format!(
                    "{what} row sums to {sum}, expected 1"
                )));
            }
            Ok(())
        };
        for i in 0..n {
            check_row(&self.transition[i * n..(i + 1) * n], "transition")?;
            check_row(&self.emission[i * m..(i + 1) * m], "emission")?;
        }
        check_row(&self.initial, "initial")?;
        Ok(())
    }
}

/// A decoded state sequence with its joint log-probability (natural log).
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedPath {
    pub state_indices: Vec<usize>,
    pub log_probability: f64,
}

impl DecodedPath {
    pub fn labels<'m>(&self, model: &'m HmmModel) -> Vec<&'m Label> {
        self.state_indices.iter().map(|&i| &model.states[i]).collect()
    }
}

fn normalize_counts(counts: &[f64], alpha: f64, categories: usize) -> Vec<f64> {
    let total: f64 = counts.iter().sum();
    let denom = total + alpha * categories as f64;
    if denom == 0.0 {
        // alpha = 0 and no observations: uniform fallback row.
        return vec![1.0 / categories as f64; categories];
    }
    counts.iter().map(|c| (c + alpha) / denom).collect()
}

fn digest_series(series: &SampleSeries) -> String {
    let mut text = String::new();
    for s in &series.samples {
        text.push_str(&format!("{}|{}|{}\n", s.timestamp, s.code.hex(), s.label));
    }
    digest_bytes(text.as_bytes())
}

/// Counts transitions, emissions, and segment-start states, then normalizes
/// with additive smoothing.
///
/// Segments split at UTC day boundaries: the initial distribution is taken
/// over daily episode starts, and transition pairs spanning a boundary are
/// not counted.
pub fn estimate(
    series: &SampleSeries,
    space: &LabelSpace,
    alpha: f64,
) -> Result<HmmModel, HmmError> {
    if series.is_empty() {
        return Err(HmmError::EmptySeries);
    }
    if alpha < 0.0 {
        return Err(HmmError::NegativeAlpha(alpha));
    }
    if series.labels().any(|l| l.is_null()) {
        return Err(HmmError::NullLabelPresent);
    }
    let states = space.states();
    let state_index: HashMap<&Label, usize> =
        states.iter().enumerate().map(|(i, l)| (l, i)).collect();
    let n = states.len();
    let alphabet = series.alphabet.clone();
    let m = alphabet.len() + 1; // reserved unseen symbol
    let code_index: HashMap<ObservationCode, usize> = alphabet
        .iter()
        .enumerate()
        .map(|(i, c)| (*c, i))
        .collect();

    let mut trans_counts = vec![0.0f64; n * n];
    let mut emit_counts = vec![0.0f64; n * m];
    let mut start_counts = vec![0.0f64; n];

    let mut prev: Option<(usize, i64)> = None;
    for sample in &series.samples {
        let si = *state_index
            .get(&sample.label)
            .ok_or_else(|| HmmError::LabelOutsideSpace(sample.label.to_string()))?;
        let day = sample.timestamp.div_euclid(MICROS_PER_DAY);
        let oi = code_index[&sample.code];
        emit_counts[si * m + oi] += 1.0;
        match prev {
            Some((pi, prev_day)) if prev_day == day => trans_counts[pi * n + si] += 1.0,
            _ => start_counts[si] += 1.0,
        }
        prev = Some((si, day));
    }

    let mut transition = Vec::with_capacity(n * n);
    let mut emission = Vec::with_capacity(n * m);
    for i in 0..n {
        transition.extend(normalize_counts(&trans_counts[i * n..(i + 1) * n], alpha, n));
        emission.extend(normalize_counts(&emit_counts[i * m..(i + 1) * m], alpha, m));
    }
    let initial = normalize_counts(&start_counts, alpha, n);

    let model = HmmModel {
        states,
        alphabet,
        transition,
        emission,
        initial,
        smoothing_alpha: alpha,
        delta_t_us: series.delta_t_us,
        paradigm: space.paradigm,
        training_digest: digest_series(series),
    };
    // Internal invariant, not a user error.
    model
        .validate()
        .unwrap_or_else(|e| panic!("estimated model violates stochasticity: {e}"));
    Ok(model)
}

fn symbol_indices(model: &HmmModel, observations: &[ObservationCode]) -> Vec<usize> {
    let code_index: HashMap<ObservationCode, usize> = model
        .alphabet
        .iter()
        .enumerate()
        .map(|(i, c)| (*c, i))
        .collect();
    observations
        .iter()
        .map(|c| code_index.get(c).copied().unwrap_or(model.unseen_index()))
        .collect()
}

/// Maximum-probability state path via the Viterbi recursion in log space.
/// Ties break toward the lowest state index at every backpointer choice.
pub fn viterbi_decode(
    model: &HmmModel,
    observations: &[ObservationCode],
) -> Result<DecodedPath, HmmError> {
    if observations.is_empty() {
        return Err(HmmError::EmptyObservations);
    }
    let n = model.n_states();
    let obs = symbol_indices(model, observations);
    let t_len = obs.len();

    let log_a: Vec<f64> = model.transition.iter().map(|p| p.ln()).collect();
    let log_b: Vec<f64> = model.emission.iter().map(|p| p.ln()).collect();
    let m = model.n_symbols();

    let mut score: Vec<f64> = (0..n)
        .map(|i| model.initial[i].ln() + log_b[i * m + obs[0]])
        .collect();
    let mut backptr = vec![0usize; n * t_len];
    let mut next = vec![f64::NEG_INFINITY; n];
    for (t, &o) in obs.iter().enumerate().skip(1) {
        for j in 0..n {
            let mut best = f64::NEG_INFINITY;
            let mut best_i = 0usize;
            for (i, &s) in score.iter().enumerate() {
                let cand = s + log_a[i * n + j];
                if cand > best {
                    best = cand;
                    best_i = i;
                }
            }
            next[j] = best + log_b[j * m + o];
            backptr[t * n + j] = best_i;
        }
        std::mem::swap(&mut score, &mut next);
    }

    let (mut best_state, mut best_score) = (0usize, f64::NEG_INFINITY);
    for (i, &s) in score.iter().enumerate() {
        if s > best_score {
            best_score = s;
            best_state = i;
        }
    }
    if !best_score.is_finite() {
        return Err(HmmError::ImpossibleSequence);
    }
    let mut path = vec![0usize; t_len];
    path[t_len - 1] = best_state;
    for t in (1..t_len).rev() {
        path[t - 1] = backptr[t * n + path[t]];
    }
    Ok(DecodedPath {
        state_indices: path,
        log_probability: best_score,
    })
}

/// Exhaustive enumeration of all `N^T` paths. Test oracle; same tie-break as
/// [`viterbi_decode`] (lexicographically smallest path among the maxima).
pub fn brute_force_decode(
    model: &HmmModel,
    observations: &[ObservationCode],
) -> Result<DecodedPath, HmmError> {
    if observations.is_empty() {
        return Err(HmmError::EmptyObservations);
    }
    let n = model.n_states();
    let t_len = observations.len();
    if (n as f64).powi(t_len as i32) > 1e7 {
        return Err(HmmError::InstanceTooLarge {
            states: n,
            len: t_len,
        });
    }
    let obs = symbol_indices(model, observations);

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut path = vec![0usize; t_len];
    loop {
        let mut logp = model.initial[path[0]].ln() + model.b(path[0], obs[0]).ln();
        for t in 1..t_len {
            logp += model.a(path[t - 1], path[t]).ln() + model.b(path[t], obs[t]).ln();
        }
        let better = match &best {
            None => true,
            Some((score, _)) => logp > *score,
        };
        if better {
            best = Some((logp, path.clone()));
        }
        // Odometer increment; lexicographic order makes the first maximum the
        // lexicographically smallest one.
        let mut pos = t_len;
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            path[pos] += 1;
            if path[pos] < n {
                break;
            }
            path[pos] = 0;
        }
        if pos == 0 && path[0] == 0 {
            break;
        }
    }
    let (score, path) = best.expect("at least one path");
    if !score.is_finite() {
        return Err(HmmError::ImpossibleSequence);
    }
    Ok(DecodedPath {
        state_indices: path,
        log_probability: score,
    })
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Total sequence log-likelihood via the forward recursion in log space.
pub fn sequence_log_likelihood(
    model: &HmmModel,
    observations: &[ObservationCode],
) -> Result<f64, HmmError> {
    if observations.is_empty() {
        return Err(HmmError::EmptyObservations);
    }
    let n = model.n_states();
    let m = model.n_symbols();
    let obs = symbol_indices(model, observations);
    let log_a: Vec<f64> = model.transition.iter().map(|p| p.ln()).collect();
    let log_b: Vec<f64> = model.emission.iter().map(|p| p.ln()).collect();

    let mut alpha: Vec<f64> = (0..n)
        .map(|i| model.initial[i].ln() + log_b[i * m + obs[0]])
        .collect();
    let mut scratch = vec![0.0f64; n];
    for &o in obs.iter().skip(1) {
        let mut next = vec![f64::NEG_INFINITY; n];
        for (j, slot) in next.iter_mut().enumerate() {
            for i in 0..n {
                scratch[i] = alpha[i] + log_a[i * n + j];
            }
            *slot = log_sum_exp(&scratch) + log_b[j * m + o];
        }
        alpha = next;
    }
    Ok(log_sum_exp(&alpha))
}

fn fmt_probs(row: &[f64]) -> String {
    row.iter()
        .map(|p| format!("{p:.17e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Writes the model in the versioned self-describing text format.
pub fn save_model(model: &HmmModel, out: &mut impl Write) -> Result<(), HmmError> {
    let n = model.n_states();
    let m = model.n_symbols();
    writeln!(out, "{MODEL_MAGIC} {MODEL_VERSION}")?;
    writeln!(out, "n_states {n}")?;
    writeln!(out, "n_symbols {m}")?;
    writeln!(out, "delta_t_us {}", model.delta_t_us)?;
    writeln!(out, "paradigm {}", model.paradigm)?;
    writeln!(out, "alpha {:.17e}", model.smoothing_alpha)?;
    writeln!(out, "training_digest {}", model.training_digest)?;
    writeln!(out, "states")?;
    for state in &model.states {
        writeln!(out, "{state}")?;
    }
    let width = model.alphabet.first().map_or(0, |c| c.width);
    writeln!(out, "alphabet width={width}")?;
    for code in &model.alphabet {
        writeln!(out, "{}", code.hex())?;
    }
    writeln!(out, "initial")?;
    writeln!(out, "{}", fmt_probs(&model.initial))?;
    writeln!(out, "transition")?;
    for i in 0..n {
        writeln!(out, "{}", fmt_probs(&model.transition[i * n..(i + 1) * n]))?;
    }
    writeln!(out, "emission")?;
    for i in 0..n {
        writeln!(out, "{}", fmt_probs(&model.emission[i * m..(i + 1) * m]))?;
    }
    Ok(())
}

pub fn load_model(input: impl BufRead) -> Result<HmmModel, HmmError> {
    let corrupt = |msg: &str| HmmError::CorruptModel(msg.to_string());
    let all_lines: Vec<String> = input.lines().collect::<Result<_, _>>()?;
    let mut cursor = all_lines.into_iter();
    let mut next_line = move || -> Result<String, HmmError> {
        cursor.next().ok_or_else(|| {
            HmmError::CorruptModel("unexpected end of file".to_string())
        })
    };

    let header = next_line()?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(MODEL_MAGIC) {
        return Err(corrupt("missing magic header"));
    }
    let version: u32 = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| corrupt("missing format version"))?;
    if version != MODEL_VERSION {
        return Err(HmmError::VersionMismatch { found: version });
    }

    let mut field = |name: &str| -> Result<String, HmmError> {
        let line = next_line()?;
        line.strip_prefix(name)
            .map(|v| v.trim().to_string())
            .ok_or_else(|| corrupt(&format!("expected field {name:?}")))
    };
    let n: usize = field("n_states")?
        .parse()
        .map_err(|_| corrupt("bad n_states"))?;
    let m: usize = field("n_symbols")?
        .parse()
        .map_err(|_| corrupt("bad n_symbols"))?;
    if n == 0 || m == 0 {
        return Err(corrupt("zero-sized model"));
    }
    let delta_t_us: i64 = field("delta_t_us")?
        .parse()
        .map_err(|_| corrupt("bad delta_t_us"))?;
    let paradigm = Paradigm::parse(&field("paradigm")?).ok_or_else(|| corrupt("bad paradigm"))?;
    let smoothing_alpha: f64 = field("alpha")?.parse().map_err(|_| corrupt("bad alpha"))?;
    let training_digest = field("training_digest")?;

    if next_line()? != "states" {
        return Err(corrupt("expected states section"));
    }
    let mut states = Vec::with_capacity(n);
    for _ in 0..n {
        states.push(Label::parse(&next_line()?));
    }

    let alphabet_header = next_line()?;
    let width: u8 = alphabet_header
        .strip_prefix("alphabet width=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| corrupt("expected alphabet section"))?;
    let mut alphabet = Vec::with_capacity(m - 1);
    for _ in 0..m - 1 {
        let mut code = ObservationCode::parse_hex(&next_line()?)
            .ok_or_else(|| corrupt("bad alphabet code"))?;
        code.width = width;
        alphabet.push(code);
    }

    let parse_row = |line: String, expected: usize| -> Result<Vec<f64>, HmmError> {
        let row: Result<Vec<f64>, _> = line.split_whitespace().map(|t| t.parse()).collect();
        let row = row.map_err(|_| HmmError::CorruptModel("bad probability value".to_string()))?;
        if row.len() != expected {
            return Err(HmmError::CorruptModel(
                "probability row length mismatch".to_string(),
            ));
        }
        Ok(row)
    };
    if next_line()? != "initial" {
        return Err(corrupt("expected initial section"));
    }
    let initial = parse_row(next_line()?, n)?;
    if next_line()? != "transition" {
        return Err(corrupt("expected transition section"));
    }
    let mut transition = Vec::with_capacity(n * n);
    for _ in 0..n {
        transition.extend(parse_row(next_line()?, n)?);
    }
    if next_line()? != "emission" {
        return Err(corrupt("expected emission section"));
    }
    let mut emission = Vec::with_capacity(n * m);
    for _ in 0..n {
        emission.extend(parse_row(next_line()?, m)?);
    }

    let model = HmmModel {
        states,
        alphabet,
        transition,
        emission,
        initial,
        smoothing_alpha,
        delta_t_us,
        paradigm,
        training_digest,
    };
    model.validate()?;
    Ok(model)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::MICROS_PER_SEC;
    use crate::sampling::LabeledSample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn labeled_series(entries: &[(&str, u64)]) -> (SampleSeries, LabelSpace) {
        let samples: Vec<LabeledSample> = entries
            .iter()
            .enumerate()
            .map(|(k, (name, code))| LabeledSample {
                timestamp: k as i64 * 7 * MICROS_PER_SEC,
                code: ObservationCode::new(*code, 4),
                label: Label::activity(*name),
            })
            .collect();
        let series = SampleSeries::from_samples(7 * MICROS_PER_SEC, samples);
        let mut base = Vec::new();
        for (name, _) in entries {
            if !base.contains(&name.to_string()) {
                base.push(name.to_string());
            }
        }
        let space = LabelSpace {
            base_activities: base,
            extra_labels: vec![],
            paradigm: Paradigm::P1,
        };
        (series, space)
    }

    #[test]
    fn counting_without_smoothing() {
        let (series, space) = labeled_series(&[("A", 0), ("A", 1), ("B", 0)]);
        let model = estimate(&series, &space, 0.0).unwrap();
        // count(A->A) = 1, count(A->B) = 1
        assert_eq!(model.a(0, 0), 0.5);
        assert_eq!(model.a(0, 1), 0.5);
        // B has no outgoing transitions: uniform fallback.
        assert_eq!(model.a(1, 0), 0.5);
        assert_eq!(model.a(1, 1), 0.5);
        assert_eq!(model.initial, vec![1.0, 0.0]);
    }

    #[test]
    fn single_state_series() {
        let (series, space) = labeled_series(&[("A", 0), ("A", 0), ("A", 1), ("A", 0)]);
        let model = estimate(&series, &space, 0.0).unwrap();
        assert_eq!(model.transition, vec![1.0]);
        // Empirical code frequencies: 3/4 for code 0, 1/4 for code 1, 0 unseen.
        assert_eq!(model.b(0, 0), 0.75);
        assert_eq!(model.b(0, 1), 0.25);
        assert_eq!(model.b(0, model.unseen_index()), 0.0);
    }

    #[test]
    fn smoothed_counts_match_naive_counter() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        use rand::Rng;
        let names = ["A", "B", "C"];
        let entries: Vec<(&str, u64)> = (0..200)
            .map(|_| (names[rng.gen_range(0..3)], rng.gen_range(0..4u64)))
            .collect();
        let (series, space) = labeled_series(&entries);
        let alpha = 1.0;
        let model = estimate(&series, &space, alpha).unwrap();

        // Independent nested-loop counter with add-one smoothing.
        let n = 3;
        let m = series.alphabet.len() + 1;
        let state_of = |label: &Label| {
            space
                .base_activities
                .iter()
                .position(|a| Label::activity(a.clone()) == *label)
                .unwrap()
        };
        for i in 0..n {
            for j in 0..n {
                let mut count = 0.0;
                let mut row_total = 0.0;
                for pair in series.samples.windows(2) {
                    if state_of(&pair[0].label) == i {
                        row_total += 1.0;
                        if state_of(&pair[1].label) == j {
                            count += 1.0;
                        }
                    }
                }
                let expected = (count + alpha) / (row_total + alpha * n as f64);
                assert!((model.a(i, j) - expected).abs() < 1e-12);
            }
            let mut state_total = 0.0;
            for s in &series.samples {
                if state_of(&s.label) == i {
                    state_total += 1.0;
                }
            }
            for (k, code) in series.alphabet.iter().enumerate() {
                let mut count = 0.0;
                for s in &series.samples {
                    if state_of(&s.label) == i && s.code == *code {
                        count += 1.0;
                    }
                }
                let expected = (count + alpha) / (state_total + alpha * m as f64);
                assert!((model.b(i, k) - expected).abs() < 1e-12);
            }
            let expected_unseen = alpha / (state_total + alpha * m as f64);
            assert!((model.b(i, m - 1) - expected_unseen).abs() < 1e-12);
        }
    }

    #[test]
    fn estimate_rejects_null_labels() {
        let (mut series, space) = labeled_series(&[("A", 0), ("B", 1)]);
        series.samples[1].label = Label::Null;
        let series = SampleSeries::from_samples(series.delta_t_us, series.samples);
        assert!(matches!(
            estimate(&series, &space, 0.0),
            Err(HmmError::NullLabelPresent)
        ));
    }

    #[test]
    fn pi_counts_day_boundary_segment_starts() {
        let day = 86_400 * MICROS_PER_SEC;
        let samples = vec![
            LabeledSample {
                timestamp: 0,
                code: ObservationCode::new(0, 4),
                label: Label::activity("A"),
            },
            LabeledSample {
                timestamp: 7 * MICROS_PER_SEC,
                code: ObservationCode::new(0, 4),
                label: Label::activity("B"),
            },
            LabeledSample {
                timestamp: day,
                code: ObservationCode::new(0, 4),
                label: Label::activity("B"),
            },
        ];
        let series = SampleSeries::from_samples(7 * MICROS_PER_SEC, samples);
        let space = LabelSpace {
            base_activities: vec!["A".into(), "B".into()],
            extra_labels: vec![],
            paradigm: Paradigm::P1,
        };
        let model = estimate(&series, &space, 0.0).unwrap();
        // Two segments: one starting in A, one (after midnight) in B.
        assert_eq!(model.initial, vec![0.5, 0.5]);
        // The cross-midnight pair is not a counted transition.
        assert_eq!(model.a(0, 1), 1.0);
    }

    fn one_hot_model() -> HmmModel {
        HmmModel {
            states: vec![Label::activity("S0"), Label::activity("S1")],
            alphabet: vec![ObservationCode::new(0, 4), ObservationCode::new(1, 4)],
            transition: vec![0.9, 0.1, 0.1, 0.9],
            emission: vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            initial: vec![0.5, 0.5],
            smoothing_alpha: 0.0,
            delta_t_us: 7_000_000,
            paradigm: Paradigm::P1,
            training_digest: String::new(),
        }
    }

    #[test]
    fn single_observation_picks_argmax() {
        let model = one_hot_model();
        let path = viterbi_decode(&model, &[ObservationCode::new(1, 4)]).unwrap();
        assert_eq!(path.state_indices, vec![1]);
    }

    #[test]
    fn sticky_chain_switches_late() {
        // All 8 paths enumerated by hand: [0,0,1] wins.
        let model = one_hot_model();
        let obs = [
            ObservationCode::new(0, 4),
            ObservationCode::new(0, 4),
            ObservationCode::new(1, 4),
        ];
        let path = viterbi_decode(&model, &obs).unwrap();
        assert_eq!(path.state_indices, vec![0, 0, 1]);
        let expected = (0.5f64 * 1.0 * 0.9 * 1.0 * 0.1 * 1.0).ln();
        assert!((path.log_probability - expected).abs() < 1e-12);
    }

    #[test]
    fn viterbi_matches_brute_force_on_random_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        use rand::Rng;
        for _ in 0..50 {
            let model = test_support::random_model(&mut rng, 4, 5, 4);
            let len = rng.gen_range(1..=8);
            let obs: Vec<ObservationCode> = (0..len)
                .map(|_| ObservationCode::new(rng.gen_range(0..5u64), 4))
                .collect();
            let fast = viterbi_decode(&model, &obs).unwrap();
            let slow = brute_force_decode(&model, &obs).unwrap();
            assert!((fast.log_probability - slow.log_probability).abs() < 1e-9);
            // Ties between equal-probability paths may break differently, so
            // require optimality of the returned path rather than identity.
            let rescored = test_support::path_log_prob(&model, &fast.state_indices, &obs);
            assert!((rescored - slow.log_probability).abs() < 1e-9);
        }
    }

    #[test]
    fn brute_force_guard() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = test_support::random_model(&mut rng, 10, 3, 4);
        let obs = vec![ObservationCode::new(0, 4); 10];
        assert!(matches!(
            brute_force_decode(&model, &obs),
            Err(HmmError::InstanceTooLarge { .. })
        ));
    }

    #[test]
    fn impossible_sequence_with_zero_probabilities() {
        let model = one_hot_model();
        // Code 2 is out of alphabet; the unseen symbol has zero emission mass
        // everywhere with alpha = 0.
        let err = viterbi_decode(&model, &[ObservationCode::new(2, 4)]);
        assert!(matches!(err, Err(HmmError::ImpossibleSequence)));
    }

    #[test]
    fn forward_matches_single_consistent_path() {
        let model = one_hot_model();
        let obs = [ObservationCode::new(0, 4), ObservationCode::new(1, 4)];
        let ll = sequence_log_likelihood(&model, &obs).unwrap();
        let expected = (0.5f64 * 0.1).ln();
        assert!((ll - expected).abs() < 1e-12);
    }

    #[test]
    fn forward_bounds_and_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        use rand::Rng;
        for _ in 0..20 {
            let model = test_support::random_model(&mut rng, 3, 4, 4);
            let len = rng.gen_range(1..=6);
            let obs: Vec<ObservationCode> = (0..len)
                .map(|_| ObservationCode::new(rng.gen_range(0..4u64), 4))
                .collect();
            let ll = sequence_log_likelihood(&model, &obs).unwrap();
            let best = viterbi_decode(&model, &obs).unwrap();
            assert!(ll >= best.log_probability - 1e-12);

            // Exhaustive sum over all paths.
            let n = model.n_states();
            let obs_idx: Vec<usize> = obs.iter().map(|c| model.symbol_index(c)).collect();
            let mut total = 0.0f64;
            let mut path = vec![0usize; len];
            'outer: loop {
                let mut p = model.initial[path[0]] * model.b(path[0], obs_idx[0]);
                for t in 1..len {
                    p *= model.a(path[t - 1], path[t]) * model.b(path[t], obs_idx[t]);
                }
                total += p;
                let mut pos = len;
                loop {
                    if pos == 0 {
                        break 'outer;
                    }
                    pos -= 1;
                    path[pos] += 1;
                    if path[pos] < n {
                        break;
                    }
                    path[pos] = 0;
                }
            }
            assert!((ll - total.ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn permutation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        use rand::Rng;
        let model = test_support::random_model(&mut rng, 3, 4, 4);
        let perm = [2usize, 0, 1]; // new index of old state i is perm[i]
        let n = 3;
        let m = model.n_symbols();
        let mut permuted = model.clone();
        for i in 0..n {
            permuted.states[perm[i]] = model.states[i].clone();
            permuted.initial[perm[i]] = model.initial[i];
            for j in 0..n {
                permuted.transition[perm[i] * n + perm[j]] = model.a(i, j);
            }
            for k in 0..m {
                permuted.emission[perm[i] * m + k] = model.b(i, k);
            }
        }
        let obs: Vec<ObservationCode> = (0..6)
            .map(|_| ObservationCode::new(rng.gen_range(0..4u64), 4))
            .collect();
        let base = viterbi_decode(&model, &obs).unwrap();
        let mapped = viterbi_decode(&permuted, &obs).unwrap();
        let expected: Vec<usize> = base.state_indices.iter().map(|&i| perm[i]).collect();
        assert_eq!(mapped.state_indices, expected);
        assert!((mapped.log_probability - base.log_probability).abs() < 1e-9);
    }

    #[test]
    fn long_sequences_do_not_underflow() {
        let model = one_hot_model();
        let obs: Vec<ObservationCode> = (0..100_000)
            .map(|k| ObservationCode::new((k / 50_000) as u64, 4))
            .collect();
        let path = viterbi_decode(&model, &obs).unwrap();
        assert!(path.log_probability.is_finite());
        let ll = sequence_log_likelihood(&model, &obs).unwrap();
        assert!(ll.is_finite());
    }

    #[test]
    fn model_round_trip() {
        let (series, space) = labeled_series(&[("A", 0), ("A", 1), ("B", 0), ("B", 2)]);
        let model = estimate(&series, &space, 0.01).unwrap();
        let mut buf = Vec::new();
        save_model(&model, &mut buf).unwrap();
        let loaded = load_model(buf.as_slice()).unwrap();
        assert_eq!(loaded, model);
    }

    #[test]
    fn tampered_row_sum_is_corrupt() {
        let (series, space) = labeled_series(&[("A", 0), ("B", 1)]);
        let model = estimate(&series, &space, 0.01).unwrap();
        let mut buf = Vec::new();
        save_model(&model, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let tampered = text.replacen(&format!("{:.17e}", model.initial[0]), "1.5", 1);
        assert!(matches!(
            load_model(tampered.as_bytes()),
            Err(HmmError::CorruptModel(_))
        ));
    }

    #[test]
    fn future_version_is_rejected() {
        let text = "gapmark-hmm 99\n";
        assert!(matches!(
            load_model(text.as_bytes()),
            Err(HmmError::VersionMismatch { found: 99 })
        ));
    }

    #[test]
    fn estimation_is_deterministic() {
        let (series, space) = labeled_series(&[("A", 0), ("B", 1), ("A", 2), ("B", 0)]);
        let m1 = estimate(&series, &space, 0.01).unwrap();
        let m2 = estimate(&series, &space, 0.01).unwrap();
        assert_eq!(m1, m2);
    }
}
