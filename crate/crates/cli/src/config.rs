//! Resolved run configuration: defaults, then a flat key=value config file,
//! then explicit command-line flags, in increasing precedence.

use std::fs;
use std::path::PathBuf;

use gapmark_core::paradigms::Paradigm;

use crate::{CliError, CommonArgs};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaT {
    /// Midpoint of the recommended range for the input stream.
    Auto,
    Secs(f64),
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub input: Option<PathBuf>,
    pub synth_preset: Option<String>,
    pub delta_t: DeltaT,
    pub train_fraction: f64,
    pub paradigms: Vec<Paradigm>,
    pub rules: Option<PathBuf>,
    pub alpha: f64,
    pub out: PathBuf,
    pub seed: u64,
    pub samples: usize,
}

impl Resolved {
    pub fn from_args(args: &CommonArgs) -> Result<Resolved, CliError> {
        let file = match &args.config {
            None => FileConfig::default(),
            Some(path) => FileConfig::parse(
                &fs::read_to_string(path)
                    .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?,
            )?,
        };

        let delta_t = match args.delta_t.as_deref().or(file.delta_t.as_deref()) {
            None => DeltaT::Secs(7.0),
            Some("auto") => DeltaT::Auto,
            Some(text) => {
                let secs: f64 = text
                    .parse()
                    .map_err(|_| CliError::Usage(format!("bad delta-t {text:?}")))?;
                if secs <= 0.0 {
                    return Err(CliError::Usage(format!("delta-t must be positive, got {secs}")));
                }
                DeltaT::Secs(secs)
            }
        };
        let paradigms = match args.paradigms.as_deref().or(file.paradigms.as_deref()) {
            None => vec![Paradigm::P1, Paradigm::P2, Paradigm::P3, Paradigm::Hybrid],
            Some(list) => parse_paradigm_list(list)?,
        };
        let train_fraction = args.train_fraction.or(file.train_fraction).unwrap_or(0.6);
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(CliError::Usage(format!(
                "train-fraction must be in (0, 1), got {train_fraction}"
            )));
        }
        let alpha = args.alpha.or(file.alpha).unwrap_or(0.01);
        if alpha < 0.0 {
            return Err(CliError::Usage(format!("alpha must be non-negative, got {alpha}")));
        }
        let out = args
            .out
            .clone()
            .or(file.out)
            .or_else(|| std::env::var_os("GAPMARK_OUT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));

        let resolved = Resolved {
            input: args.input.clone().or(file.input),
            synth_preset: args.synth_preset.clone().or(file.synth_preset),
            delta_t,
            train_fraction,
            paradigms,
            rules: args.rules.clone().or(file.rules),
            alpha,
            out,
            seed: args.seed.or(file.seed).unwrap_or(0),
            samples: args.samples.or(file.samples).unwrap_or(10_000),
        };
        if resolved.input.is_some() && resolved.synth_preset.is_some() {
            return Err(CliError::Usage(
                "--input and --synth-preset are mutually exclusive".into(),
            ));
        }
        Ok(resolved)
    }

    /// Key=value pairs pinning the run for the report's config echo.
    pub fn echo(&self) -> Vec<(String, String)> {
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        vec![
            ("input".into(), path(&self.input)),
            (
                "synth-preset".into(),
                self.synth_preset.clone().unwrap_or_default(),
            ),
            (
                "delta-t".into(),
                match self.delta_t {
                    DeltaT::Auto => "auto".into(),
                    DeltaT::Secs(v) => format!("{v}"),
                },
            ),
            ("train-fraction".into(), format!("{}", self.train_fraction)),
            (
                "paradigms".into(),
                self.paradigms
                    .iter()
                    .map(|p| p.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("rules".into(), path(&self.rules)),
            ("alpha".into(), format!("{}", self.alpha)),
            ("out".into(), self.out.display().to_string()),
            ("seed".into(), format!("{}", self.seed)),
            ("samples".into(), format!("{}", self.samples)),
        ]
    }
}

fn parse_paradigm_list(list: &str) -> Result<Vec<Paradigm>, CliError> {
    let mut paradigms = Vec::new();
    for token in list.split(',') {
        let token = token.trim();
        let paradigm = Paradigm::parse(token)
            .ok_or_else(|| CliError::Usage(format!("unknown paradigm {token:?}")))?;
        if !paradigms.contains(&paradigm) {
            paradigms.push(paradigm);
        }
    }
    if paradigms.is_empty() {
        return Err(CliError::Usage("empty paradigm list".into()));
    }
    Ok(paradigms)
}

/// Raw values from a key=value config file; everything is optional.
#[derive(Default)]
struct FileConfig {
    input: Option<PathBuf>,
    synth_preset: Option<String>,
    delta_t: Option<String>,
    train_fraction: Option<f64>,
    paradigms: Option<String>,
    rules: Option<PathBuf>,
    alpha: Option<f64>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    samples: Option<usize>,
}

impl FileConfig {
    fn parse(text: &str) -> Result<FileConfig, CliError> {
        let mut config = FileConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "config line {}: expected key=value, got {line:?}",
                    lineno + 1
                )));
            };
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| {
                CliError::Usage(format!("config line {}: bad {what} {value:?}", lineno + 1))
            };
            match key {
                "input" => config.input = Some(PathBuf::from(value)),
                "synth-preset" => config.synth_preset = Some(value.to_string()),
                "delta-t" => config.delta_t = Some(value.to_string()),
                "train-fraction" => {
                    config.train_fraction = Some(value.parse().map_err(|_| bad("fraction"))?)
                }
                "paradigms" => config.paradigms = Some(value.to_string()),
                "rules" => config.rules = Some(PathBuf::from(value)),
                "alpha" => config.alpha = Some(value.parse().map_err(|_| bad("alpha"))?),
                "out" => config.out = Some(PathBuf::from(value)),
                "seed" => config.seed = Some(value.parse().map_err(|_| bad("seed"))?),
                "samples" => config.samples = Some(value.parse().map_err(|_| bad("count"))?),
                other => {
                    return Err(CliError::Usage(format!(
                        "config line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            }
        }
        Ok(config)
    }
}
