//! Effective per-command settings: defaults, then an optional config file,
//! then command-line flags.

use std::path::{Path, PathBuf};

use boneair::corpus::Split;
use boneair::models::TrainConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Arch {
    FcnA,
    FcnB,
    FcnEf,
    Lf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub bcm_cutoff_hz: f64,
    pub bcm_order: usize,
    pub duration_s: f64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        let c = boneair::corpus::CorpusConfig::default();
        Self {
            out_dir: None,
            seed: c.seed,
            train: c.counts.train,
            val: c.counts.validation,
            test: c.counts.test,
            bcm_cutoff_hz: c.bcm_cutoff_hz,
            bcm_order: c.bcm_order,
            duration_s: c.utterance_duration_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub arch: Option<Arch>,
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub fine_tune: bool,
    pub hyper: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EnhanceSettings {
    pub system: Option<PathBuf>,
    pub in_acm: Option<PathBuf>,
    pub in_bcm: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub csv: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSettings {
    pub manifest: Option<PathBuf>,
    pub systems: Vec<String>,
    pub split: Split,
    pub out: Option<PathBuf>,
    pub external_pesq: Option<PathBuf>,
}

impl Default for EvaluateSettings {
    fn default() -> Self {
        Self {
            manifest: None,
            systems: vec!["noisy".into()],
            split: Split::Test,
            out: None,
            external_pesq: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TtestSettings {
    pub rows_a: Option<PathBuf>,
    pub rows_b: Option<PathBuf>,
    pub column: String,
    pub system_a: Option<String>,
    pub system_b: Option<String>,
    pub out: Option<PathBuf>,
}

impl Default for TtestSettings {
    fn default() -> Self {
        Self {
            rows_a: None,
            rows_b: None,
            column: "stoi".into(),
            system_a: None,
            system_b: None,
            out: None,
        }
    }
}

/// The `run.json` record of one invocation.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunRecord<T> {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: T,
}

/// Read settings from TOML, or from JSON in either plain or `run.json` form.
pub fn load_file<T: DeserializeOwned + Default>(path: Option<&Path>, command: &str) -> Result<T, Failure> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if !is_json {
        return toml::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())));
    }
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let value = match value.get("config") {
        Some(inner) if value.get("command").is_some() => {
            let recorded = value["command"].as_str().unwrap_or_default();
            if recorded != command {
                return Err(Failure::usage(format!(
                    "{} records a `{recorded}` run, not `{command}`",
                    path.display()
                )));
            }
            inner.clone()
        }
        _ => value,
    };
    serde_json::from_value(value).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

pub fn write_run_json<T: Serialize>(path: &Path, command: &str, config: &T) -> Result<(), Failure> {
    let record = RunRecord {
        tool: "boneair".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        config,
    };
    let mut text = serde_json::to_string_pretty(&record).map_err(|e| Failure::usage(e.to_string()))?;
    text.push('\n');
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Failure::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Failure::io(path, e))
}

pub fn required<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T, Failure> {
    value
        .as_ref()
        .ok_or_else(|| Failure::usage(format!("missing required --{flag}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_sections_parse() {
        let s: TrainSettings = toml::from_str("arch = \"fcn_b\"\n[hyper]\nlr = 0.001\nbatch_size = 2\n").unwrap();
        assert_eq!(s.arch, Some(Arch::FcnB));
        assert_eq!(s.hyper.lr, 1e-3);
        assert_eq!(s.hyper.batch_size, 2);
        assert_eq!(s.hyper.segment_length, 4096);
        assert!(toml::from_str::<TrainSettings>("bogus = 1").is_err());
    }

    #[test]
    fn run_json_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        let s = SynthSettings {
            seed: 9,
            ..SynthSettings::default()
        };
        write_run_json(&p, "synth", &s).unwrap();
        let back: SynthSettings = load_file(Some(&p), "synth").unwrap();
        assert_eq!(back, s);
        assert!(load_file::<SynthSettings>(Some(&p), "train").is_err());
    }
}
