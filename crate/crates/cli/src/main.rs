//! `gapmark` — experiment harness for annotation-gap paradigm comparison.
//!
//! Subcommands: `ingest` (event text → sample CSV + stats), `train` (samples →
//! model file), `evaluate` (full pipeline → comparison report), `synth`
//! (generate a synthetic stream with planted ground truth).
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal failure.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use gapmark_core::events::{build_annotation_intervals, parse_stream, ParsePolicy};
use gapmark_core::eval::{compare_paradigms, ParadigmConfig};
use gapmark_core::hmm::{estimate, save_model};
use gapmark_core::label::Label;
use gapmark_core::paradigms::{apply_paradigm, find_gap_runs, parse_rules, Paradigm, SemanticRule};
use gapmark_core::sampling::{
    build_sensor_map, read_series_csv, recommend_delta_t, resample, write_series_csv, assign_labels,
    SampleSeries,
};
use gapmark_core::synth::{generate, preset, SynthConfig};

use config::{DeltaT, Resolved};

#[derive(Parser)]
#[command(name = "gapmark", version, about = "HMM activity recognition under annotation-gap paradigms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Shared experiment options. Precedence: built-in defaults, then the
/// `--config` key=value file, then explicit flags.
#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// key=value config file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// Event text file, sample CSV, or (for synth) a JSON generator config
    #[arg(long)]
    input: Option<PathBuf>,
    /// Built-in generator preset ("aruba-like", "tiny")
    #[arg(long)]
    synth_preset: Option<String>,
    /// Sampling interval in seconds, or "auto" for the recommended midpoint
    #[arg(long)]
    delta_t: Option<String>,
    /// Leading fraction of samples used for training
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Comma-separated list from p1, p2, p3, hybrid
    #[arg(long)]
    paradigms: Option<String>,
    /// Semantic rule file, one "preceding -> following" per line
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Additive smoothing weight
    #[arg(long)]
    alpha: Option<f64>,
    /// Output directory (falls back to $GAPMARK_OUT, then ".")
    #[arg(long)]
    out: Option<PathBuf>,
    /// Generator seed
    #[arg(long)]
    seed: Option<u64>,
    /// Number of samples a generator preset should produce
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse an event stream, resample it, and write a labeled sample CSV
    Ingest(CommonArgs),
    /// Train a model under one paradigm and write it to a model file
    Train(CommonArgs),
    /// Run the shared-split paradigm comparison and write report files
    Evaluate(CommonArgs),
    /// Generate a synthetic event stream with planted ground truth
    Synth(CommonArgs),
}

/// Errors carrying their process exit code.
#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) => m,
        }
    }
}

fn data_err(err: impl std::fmt::Display) -> CliError {
    CliError::Data(err.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let outcome = std::panic::catch_unwind(|| match &cli.command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Synth(args) => cmd_synth(args),
    });
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(err)) => {
            eprintln!("gapmark: {}", err.message());
            ExitCode::from(err.code())
        }
        Err(_) => {
            eprintln!("gapmark: internal invariant failure");
            ExitCode::from(3)
        }
    }
}

// ---------------------------------------------------------------------------
// Input loading shared by ingest/train/evaluate
// ---------------------------------------------------------------------------

struct LoadedInput {
    series: SampleSeries,
    /// SHA-256 of the source bytes (event text or CSV).
    digest: String,
    /// Raw event count when the input was an event stream.
    event_count: Option<usize>,
    /// The Δt recommendation when derivable from an event stream.
    recommended: Option<(f64, f64)>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

fn load_input(resolved: &Resolved) -> Result<LoadedInput, CliError> {
    if let Some(path) = &resolved.input {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        if text.starts_with("# gapmark-samples") {
            let series = read_series_csv(text.as_bytes()).map_err(data_err)?;
            return Ok(LoadedInput {
                digest: sha256_hex(text.as_bytes()),
                series,
                event_count: None,
                recommended: None,
            });
        }
        let stream = parse_stream(&text, ParsePolicy::FailFast).map_err(data_err)?;
        let map = build_sensor_map(&stream).map_err(data_err)?;
        let recommended = recommend_delta_t(&stream).ok();
        let delta_t_secs = match resolved.delta_t {
            DeltaT::Secs(v) => v,
            DeltaT::Auto => {
                let (low, high) = recommended
                    .ok_or_else(|| CliError::Data("too few events to recommend delta-t".into()))?;
                (low + high) / 2.0
            }
        };
        let series = resample(&stream, &map, delta_t_secs).map_err(data_err)?;
        let intervals = build_annotation_intervals(&stream).map_err(data_err)?;
        let series = assign_labels(&series, &intervals).map_err(data_err)?;
        Ok(LoadedInput {
            digest: stream.source_digest.clone(),
            series,
            event_count: Some(stream.events.len()),
            recommended,
        })
    } else if let Some(name) = &resolved.synth_preset {
        let config = preset(name, resolved.samples, resolved.seed)
            .ok_or_else(|| CliError::Usage(format!("unknown synth preset {name:?}")))?;
        let out = generate(&config).map_err(data_err)?;
        Ok(LoadedInput {
            digest: out.stream.source_digest.clone(),
            event_count: Some(out.stream.events.len()),
            recommended: recommend_delta_t(&out.stream).ok(),
            series: out.gapped,
        })
    } else {
        Err(CliError::Usage(
            "exactly one input source required: --input or --synth-preset".into(),
        ))
    }
}

fn load_rules(resolved: &Resolved) -> Result<Vec<SemanticRule>, CliError> {
    match &resolved.rules {
        None => Ok(Vec::new()),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
            parse_rules(&text).map_err(data_err)
        }
    }
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_ingest(args: &CommonArgs) -> Result<(), CliError> {
    let resolved = Resolved::from_args(args)?;
    let loaded = load_input(&resolved)?;
    let series = &loaded.series;

    let mut csv = Vec::new();
    write_series_csv(series, &mut csv).map_err(data_err)?;
    let path = write_file(&resolved.out, "samples.csv", &csv)?;

    if let Some(events) = loaded.event_count {
        println!("events: {events}");
    }
    println!("samples: {}", series.len());
    println!("alphabet: {}", series.alphabet.len());
    let nulls = series.null_count();
    println!(
        "gap fraction: {:.4} ({} samples in {} runs)",
        nulls as f64 / series.len() as f64,
        nulls,
        find_gap_runs(series).len()
    );
    let mut per_activity: BTreeMap<&str, usize> = BTreeMap::new();
    for label in series.labels() {
        if let Label::Activity(name) = label {
            *per_activity.entry(name).or_default() += 1;
        }
    }
    println!("activities: {}", per_activity.len());
    for (name, count) in &per_activity {
        println!("  {name}: {count}");
    }
    if let Some((low, high)) = loaded.recommended {
        println!("recommended delta-t: ({low:.4} s, {high:.4} s)");
    }
    println!("input digest: {}", loaded.digest);
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_train(args: &CommonArgs) -> Result<(), CliError> {
    let resolved = Resolved::from_args(args)?;
    let paradigm = match resolved.paradigms.as_slice() {
        [one] => *one,
        _ => {
            return Err(CliError::Usage(
                "train needs exactly one paradigm (--paradigms p1|p2|p3|hybrid)".into(),
            ))
        }
    };
    let rules = load_rules(&resolved)?;
    let loaded = load_input(&resolved)?;

    let (transformed, space) = apply_paradigm(&loaded.series, paradigm, &rules).map_err(data_err)?;
    let model = estimate(&transformed, &space, resolved.alpha).map_err(data_err)?;
    let mut text = Vec::new();
    save_model(&model, &mut text).map_err(data_err)?;
    let path = write_file(&resolved.out, "model.txt", &text)?;

    println!("paradigm: {paradigm}");
    println!("states: {}", model.n_states());
    println!("symbols: {}", model.n_symbols());
    println!("extra labels: {}", space.extra_labels.len());
    println!("training samples: {}", transformed.len());
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_evaluate(args: &CommonArgs) -> Result<(), CliError> {
    let resolved = Resolved::from_args(args)?;
    let rules = load_rules(&resolved)?;
    let loaded = load_input(&resolved)?;

    let configs: Vec<ParadigmConfig> = resolved
        .paradigms
        .iter()
        .map(|&p| match p {
            Paradigm::Hybrid => ParadigmConfig::with_rules(p, rules.clone()),
            _ => ParadigmConfig::new(p),
        })
        .collect();
    let mut report = compare_paradigms(
        &loaded.series,
        resolved.train_fraction,
        &configs,
        resolved.alpha,
        &loaded.digest,
    )
    .map_err(data_err)?;
    report.config_echo = resolved.echo();

    let csv_path = write_file(&resolved.out, "report.csv", report.to_csv().as_bytes())?;
    let json_path = write_file(&resolved.out, "report.json", report.to_json().as_bytes())?;
    print!("{}", report.render_table());
    println!("wrote {}", csv_path.display());
    println!("wrote {}", json_path.display());
    Ok(())
}

fn cmd_synth(args: &CommonArgs) -> Result<(), CliError> {
    let resolved = Resolved::from_args(args)?;
    let config: SynthConfig = if let Some(name) = &resolved.synth_preset {
        let mut config = preset(name, resolved.samples, resolved.seed)
            .ok_or_else(|| CliError::Usage(format!("unknown synth preset {name:?}")))?;
        config.seed = resolved.seed;
        config
    } else if let Some(path) = &resolved.input {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(data_err)?
    } else {
        return Err(CliError::Usage(
            "synth needs --synth-preset or --input <generator JSON>".into(),
        ));
    };
    let out = generate(&config).map_err(data_err)?;

    let events_path = write_file(&resolved.out, "events.txt", out.stream.serialize().as_bytes())?;
    let mut truth_csv = Vec::new();
    write_series_csv(&out.truth, &mut truth_csv).map_err(data_err)?;
    let truth_path = write_file(&resolved.out, "truth.csv", &truth_csv)?;
    let mut gapped_csv = Vec::new();
    write_series_csv(&out.gapped, &mut gapped_csv).map_err(data_err)?;
    let gapped_path = write_file(&resolved.out, "gapped.csv", &gapped_csv)?;

    println!("events: {}", out.stream.events.len());
    println!("samples: {}", out.truth.len());
    println!(
        "gap fraction: {:.4}",
        out.gapped.null_count() as f64 / out.gapped.len() as f64
    );
    println!("wrote {}", events_path.display());
    println!("wrote {}", truth_path.display());
    println!("wrote {}", gapped_path.display());
    Ok(())
}
