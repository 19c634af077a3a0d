//! Paired clean-ACM / BCM / noisy-ACM corpus.
//!
//! A corpus lives in one directory: a JSON-lines manifest (`manifest.jsonl`)
//! whose first line is metadata and whose remaining lines are
//! [`UtteranceRecord`]s, plus one sub-directory of WAV files per split.
//! Record paths are relative to the manifest's directory.

pub mod bcm;
pub mod mix;
pub mod synth;

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bcm::{design_bcm_channel, simulate_bcm, BcmChannel};
pub use mix::{measured_snr_db, mix_at_snr, mix_quantized, tile_noise};
pub use synth::{synth_noise, synth_noise_named, synth_utterance, NoiseType};

use crate::error::{Error, Result};
use crate::rng;
use crate::signal_io::{quantize, read_wav, write_wav_pcm16, Waveform};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const MANIFEST_FORMAT: &str = "boneair-manifest";

pub const TRAIN_SNRS_DB: [f64; 4] = [-4.0, -1.0, 2.0, 5.0];
pub const TEST_SNRS_DB: [f64; 4] = [-5.0, 0.0, 5.0, 10.0];

/// Mixtures whose peak exceeds this are scaled down together with their
/// clean and BCM references.
const MIX_PEAK_LIMIT: f64 = 0.99;
const NOISE_POOL_S: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub id: String,
    pub split: Split,
    pub clean_acm_path: PathBuf,
    pub bcm_path: PathBuf,
    pub noisy_acm_path: PathBuf,
    pub noise_type: String,
    pub snr_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitCounts {
    /// 243 / 27 / 50 utterances.
    pub const FULL: SplitCounts = SplitCounts {
        train: 243,
        validation: 27,
        test: 50,
    };

    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Validation => self.validation,
            Split::Test => self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestMeta {
    pub format: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utterances: Option<SplitCounts>,
    pub records: SplitCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<CorpusConfig>,
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub meta: ManifestMeta,
    pub records: Vec<UtteranceRecord>,
    /// Directory the record paths are relative to.
    pub root: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub seed: u64,
    pub counts: SplitCounts,
    pub train_snrs_db: Vec<f64>,
    pub test_snrs_db: Vec<f64>,
    pub train_noises: Vec<NoiseType>,
    pub test_noises: Vec<NoiseType>,
    pub utterance_duration_s: f64,
    pub bcm_cutoff_hz: f64,
    pub bcm_order: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            counts: SplitCounts::FULL,
            train_snrs_db: TRAIN_SNRS_DB.to_vec(),
            test_snrs_db: TEST_SNRS_DB.to_vec(),
            train_noises: NoiseType::TRAIN.to_vec(),
            test_noises: NoiseType::TEST.to_vec(),
            utterance_duration_s: 3.0,
            bcm_cutoff_hz: bcm::DEFAULT_CUTOFF_HZ,
            bcm_order: bcm::DEFAULT_ORDER,
        }
    }
}

impl CorpusConfig {
    fn conditions(&self, split: Split) -> Vec<(NoiseType, f64)> {
        let (noises, snrs) = match split {
            Split::Train | Split::Validation => (&self.train_noises, &self.train_snrs_db),
            Split::Test => (&self.test_noises, &self.test_snrs_db),
        };
        noises
            .iter()
            .flat_map(|&n| snrs.iter().map(move |&s| (n, s)))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        for split in Split::ALL {
            if self.counts.get(split) == 0 {
                return Err(Error::Config(format!("{split} count must be at least 1")));
            }
        }
        if self.train_snrs_db.is_empty() || self.test_snrs_db.is_empty() {
            return Err(Error::Config("SNR lists must be non-empty".into()));
        }
        if self.train_noises.is_empty() || self.test_noises.is_empty() {
            return Err(Error::Config("noise lists must be non-empty".into()));
        }
        if let Some(bad) = self
            .train_snrs_db
            .iter()
            .chain(&self.test_snrs_db)
            .find(|s| !s.is_finite())
        {
            return Err(Error::Config(format!("SNR {bad} is not finite")));
        }
        Ok(())
    }
}

fn snr_tag(snr_db: f64) -> String {
    format!("{snr_db}dB")
}

struct Utterance {
    split: Split,
    index: usize,
}

impl Utterance {
    fn name(&self) -> String {
        format!("{}{:04}", self.split, self.index)
    }
}

/// Synthesize the whole corpus under `out_dir` and write its manifest.
///
/// Output is a deterministic function of `cfg`; independent sub-seeds per
/// utterance make the result identical however many rayon workers run it.
pub fn build_manifest(out_dir: impl AsRef<Path>, cfg: &CorpusConfig) -> Result<Manifest> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    let channel = design_bcm_channel(cfg.bcm_cutoff_hz, cfg.bcm_order)?;
    for split in Split::ALL {
        let dir = out_dir.join(split.name());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }

    // One long recording per noise type, shared by train and validation.
    let pool_for = |group: &str, types: &[NoiseType]| -> Result<Vec<(NoiseType, Waveform)>> {
        types
            .par_iter()
            .map(|&t| {
                let seed = rng::sub_seed(cfg.seed, &format!("noise/{group}/{t}"));
                Ok((t, synth_noise(t, seed, NOISE_POOL_S)?))
            })
            .collect()
    };
    let train_pool = pool_for("train", &cfg.train_noises)?;
    let test_pool = pool_for("test", &cfg.test_noises)?;

    let utterances: Vec<Utterance> = Split::ALL
        .iter()
        .flat_map(|&split| (0..cfg.counts.get(split)).map(move |index| Utterance { split, index }))
        .collect();

    let per_utt: Vec<Vec<UtteranceRecord>> = utterances
        .par_iter()
        .map(|u| {
            let pool = if u.split == Split::Test { &test_pool } else { &train_pool };
            render_utterance_records(out_dir, cfg, &channel, pool, u)
        })
        .collect::<Result<_>>()?;
    let records: Vec<UtteranceRecord> = per_utt.into_iter().flatten().collect();

    let count = |s: Split| records.iter().filter(|r| r.split == s).count();
    let meta = ManifestMeta {
        format: MANIFEST_FORMAT.into(),
        version: 1,
        seed: Some(cfg.seed),
        utterances: Some(cfg.counts),
        records: SplitCounts {
            train: count(Split::Train),
            validation: count(Split::Validation),
            test: count(Split::Test),
        },
        generator: Some(cfg.clone()),
    };
    let manifest = Manifest {
        meta,
        records,
        root: out_dir.to_path_buf(),
    };
    manifest.write(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

fn render_utterance_records(
    out_dir: &Path,
    cfg: &CorpusConfig,
    channel: &BcmChannel,
    pool: &[(NoiseType, Waveform)],
    utt: &Utterance,
) -> Result<Vec<UtteranceRecord>> {
    let name = utt.name();
    let utt_seed = rng::sub_seed(cfg.seed, &format!("utt/{name}"));
    let clean = synth_utterance(utt_seed, cfg.utterance_duration_s)?;
    let bcm = simulate_bcm(&clean, channel)?;
    let mut offsets = rng::stream(utt_seed, "noise-offsets");

    let conditions = cfg.conditions(utt.split);
    let mut noises = Vec::with_capacity(conditions.len());
    let mut mix_peak = clean.peak();
    for &(noise_type, snr) in &conditions {
        let (_, source) = pool
            .iter()
            .find(|(t, _)| *t == noise_type)
            .expect("pool covers every configured noise");
        let tiled = tile_noise(source, clean.len(), offsets.random_range(0..source.len()));
        let (noisy, _) = mix_at_snr(&clean, &tiled, snr)?;
        mix_peak = mix_peak.max(noisy.peak());
        noises.push(tiled);
    }
    // Joint rescale keeps clean, BCM and every mixture of this utterance consistent.
    let rescale = if mix_peak > MIX_PEAK_LIMIT { MIX_PEAK_LIMIT / mix_peak } else { 1.0 };

    let split_dir = PathBuf::from(utt.split.name());
    let clean_pcm: Vec<i16> = clean.samples.iter().map(|&x| quantize(rescale * x)).collect();
    let bcm_pcm: Vec<i16> = bcm.samples.iter().map(|&x| quantize(rescale * x)).collect();
    let clean_rel = split_dir.join(format!("{name}_clean.wav"));
    let bcm_rel = split_dir.join(format!("{name}_bcm.wav"));
    write_wav_pcm16(out_dir.join(&clean_rel), &clean_pcm)?;
    write_wav_pcm16(out_dir.join(&bcm_rel), &bcm_pcm)?;

    conditions
        .iter()
        .zip(&noises)
        .map(|(&(noise_type, snr), tiled)| {
            let id = format!("{name}_{noise_type}_{}", snr_tag(snr));
            let noisy_rel = split_dir.join(format!("{id}.wav"));
            let noisy_pcm = mix_quantized(&clean_pcm, &tiled.samples, snr)?;
            write_wav_pcm16(out_dir.join(&noisy_rel), &noisy_pcm)?;
            Ok(UtteranceRecord {
                id,
                split: utt.split,
                clean_acm_path: clean_rel.clone(),
                bcm_path: bcm_rel.clone(),
                noisy_acm_path: noisy_rel,
                noise_type: noise_type.to_string(),
                snr_db: snr,
            })
        })
        .collect()
}

/// The three signals of one record, loaded from disk.
#[derive(Debug, Clone)]
pub struct RecordAudio {
    pub id: String,
    pub clean: Waveform,
    pub bcm: Waveform,
    pub noisy: Waveform,
}

impl Manifest {
    pub fn resolve(&self, rel: &Path) -> PathBuf {
        if rel.is_absolute() {
            rel.to_path_buf()
        } else {
            self.root.join(rel)
        }
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &UtteranceRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn load_audio(&self, rec: &UtteranceRecord) -> Result<RecordAudio> {
        let audio = RecordAudio {
            id: rec.id.clone(),
            clean: read_wav(self.resolve(&rec.clean_acm_path))?,
            bcm: read_wav(self.resolve(&rec.bcm_path))?,
            noisy: read_wav(self.resolve(&rec.noisy_acm_path))?,
        };
        if audio.clean.len() != audio.bcm.len() || audio.clean.len() != audio.noisy.len() {
            return Err(Error::Shape(format!(
                "record {} has mismatched lengths {}/{}/{}",
                rec.id,
                audio.clean.len(),
                audio.bcm.len(),
                audio.noisy.len()
            )));
        }
        Ok(audio)
    }

    /// Serialize as JSON lines: metadata first, then one record per line.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = serde_json::to_string(&self.meta)?;
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = self.to_jsonl()?;
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Load a manifest file, or `manifest.jsonl` inside a directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Manifest> {
        let mut path = path.as_ref().to_path_buf();
        if path.is_dir() {
            path = path.join(MANIFEST_FILE);
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let head = lines
            .next()
            .ok_or_else(|| Error::Malformed(format!("{} is empty", path.display())))?;
        let meta: ManifestMeta = serde_json::from_str(head)?;
        if meta.format != MANIFEST_FORMAT || meta.version != 1 {
            return Err(Error::Malformed(format!(
                "unsupported manifest format {:?} v{}",
                meta.format, meta.version
            )));
        }
        let records = lines
            .map(|l| serde_json::from_str(l).map_err(Error::from))
            .collect::<Result<Vec<UtteranceRecord>>>()?;
        let mut seen = HashSet::new();
        if let Some(dup) = records.iter().find(|r| !seen.insert(r.id.as_str())) {
            return Err(Error::Malformed(format!("duplicate record id {:?}", dup.id)));
        }
        Ok(Manifest {
            meta,
            records,
            root: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    /// Check the experimental-protocol invariants of a generated corpus:
    /// noise types and SNRs per split, unique ids and equal lengths.
    pub fn check_protocol(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Malformed(format!("duplicate record id {:?}", r.id)));
            }
            let noise: NoiseType = r.noise_type.parse()?;
            let (noises, snrs): (&[NoiseType], &[f64]) = match r.split {
                Split::Train | Split::Validation => (&NoiseType::TRAIN, &TRAIN_SNRS_DB),
                Split::Test => (&NoiseType::TEST, &TEST_SNRS_DB),
            };
            if !noises.contains(&noise) {
                return Err(Error::Malformed(format!("{}: noise {noise} not allowed in {}", r.id, r.split)));
            }
            if !snrs.contains(&r.snr_db) {
                return Err(Error::Malformed(format!("{}: snr {} not allowed in {}", r.id, r.snr_db, r.split)));
            }
            self.load_audio(r)?;
        }
        Ok(())
    }
}
