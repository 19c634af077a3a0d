//! Scoring systems over a manifest split and aggregating Table-style reports.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{estoi, seg_snr, stoi};
use crate::corpus::{Manifest, RecordAudio, Split};
use crate::error::{Error, Result};
use crate::signal_io::Waveform;

/// Something that maps a record's sensor signals to one or more enhanced
/// waveforms, each scored as its own system.
pub trait SpeechSystem: Sync {
    fn output_names(&self) -> Vec<String>;
    fn process(&self, audio: &RecordAudio) -> Result<Vec<Waveform>>;
}

/// A single-output system backed by a closure.
pub struct FnSystem<F> {
    name: String,
    f: F,
}

pub fn system<F>(name: impl Into<String>, f: F) -> FnSystem<F>
where
    F: Fn(&RecordAudio) -> Result<Waveform> + Sync,
{
    FnSystem { name: name.into(), f }
}

impl<F> SpeechSystem for FnSystem<F>
where
    F: Fn(&RecordAudio) -> Result<Waveform> + Sync,
{
    fn output_names(&self) -> Vec<String> {
        vec![self.name.clone()]
    }

    fn process(&self, audio: &RecordAudio) -> Result<Vec<Waveform>> {
        Ok(vec![(self.f)(audio)?])
    }
}

pub const NOISY_BASELINE: &str = "Noisy ACM";
pub const BCM_BASELINE: &str = "BCM";

/// The unprocessed air-conducted input.
pub fn noisy_baseline() -> impl SpeechSystem {
    system(NOISY_BASELINE, |a: &RecordAudio| Ok(a.noisy.clone()))
}

/// The unprocessed bone-conducted input.
pub fn bcm_baseline() -> impl SpeechSystem {
    system(BCM_BASELINE, |a: &RecordAudio| Ok(a.bcm.clone()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Stoi,
    Estoi,
    SegSnr,
    Pesq,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stoi" => Ok(Metric::Stoi),
            "estoi" => Ok(Metric::Estoi),
            "seg_snr" | "seg_snr_db" | "segsnr" => Ok(Metric::SegSnr),
            "pesq" => Ok(Metric::Pesq),
            other => Err(Error::Config(format!("unknown metric column {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub id: String,
    pub system: String,
    pub noise_type: String,
    pub snr_db: f64,
    pub stoi: f64,
    pub estoi: f64,
    pub seg_snr_db: f64,
    pub pesq: Option<f64>,
}

impl MetricRow {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Stoi => Some(self.stoi),
            Metric::Estoi => Some(self.estoi),
            Metric::SegSnr => Some(self.seg_snr_db),
            Metric::Pesq => self.pesq,
        }
    }
}

/// Mean scores for one system, over one SNR group or (`snr_db: None`) over
/// every row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub system: String,
    pub snr_db: Option<f64>,
    pub count: usize,
    pub stoi: f64,
    pub estoi: f64,
    pub seg_snr_db: f64,
    pub pesq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    /// System names in column order.
    pub systems: Vec<String>,
}

#[derive(Deserialize)]
struct PesqRow {
    id: String,
    system: String,
    pesq: f64,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn snr_key(snr: f64) -> i64 {
    // SNRs are whole or fractional dB; millidecibel keys keep grouping exact.
    (snr * 1000.0).round() as i64
}

fn aggregate(system: &str, snr_db: Option<f64>, rows: &[&MetricRow]) -> Aggregate {
    let pesq: Vec<f64> = rows.iter().filter_map(|r| r.pesq).collect();
    Aggregate {
        system: system.to_string(),
        snr_db,
        count: rows.len(),
        stoi: mean(rows.iter().map(|r| r.stoi)),
        estoi: mean(rows.iter().map(|r| r.estoi)),
        seg_snr_db: mean(rows.iter().map(|r| r.seg_snr_db)),
        pesq: (!pesq.is_empty()).then(|| mean(pesq.into_iter())),
    }
}

impl MetricReport {
    /// Sort rows by id, then by system column order.
    fn sort(&mut self) {
        let order: HashMap<&str, usize> = self.systems.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let rank = |s: &str| order.get(s).copied().unwrap_or(usize::MAX);
        let mut rows = std::mem::take(&mut self.rows);
        rows.sort_by(|a, b| a.id.cmp(&b.id).then(rank(&a.system).cmp(&rank(&b.system))));
        self.rows = rows;
    }

    pub fn rows_for<'a>(&'a self, system: &'a str) -> impl Iterator<Item = &'a MetricRow> + 'a {
        self.rows.iter().filter(move |r| r.system == system)
    }

    /// Distinct SNRs in ascending order.
    pub fn snrs(&self) -> Vec<f64> {
        let mut by_key = BTreeMap::new();
        for r in &self.rows {
            by_key.entry(snr_key(r.snr_db)).or_insert(r.snr_db);
        }
        by_key.into_values().collect()
    }

    /// Per-SNR means in ascending SNR order, then the grand mean, for
    /// each system.
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut out = Vec::new();
        for system in &self.systems {
            let rows: Vec<&MetricRow> = self.rows_for(system).collect();
            if rows.is_empty() {
                continue;
            }
            for snr in self.snrs() {
                let group: Vec<&MetricRow> = rows.iter().copied().filter(|r| snr_key(r.snr_db) == snr_key(snr)).collect();
                if !group.is_empty() {
                    out.push(aggregate(system, Some(snr), &group));
                }
            }
            out.push(aggregate(system, None, &rows));
        }
        out
    }

    /// Grand mean of `metric` for `system`, `None` if the system has no
    /// scored rows for it.
    pub fn mean(&self, system: &str, metric: Metric) -> Option<f64> {
        let v: Vec<f64> = self.rows_for(system).filter_map(|r| r.get(metric)).collect();
        (!v.is_empty()).then(|| mean(v.into_iter()))
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Malformed(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Malformed(e.to_string()))
    }

    /// Parse rows written by [`MetricReport::to_csv`]. Systems keep their
    /// order of first appearance.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<MetricRow>, _>>()?;
        let mut systems: Vec<String> = Vec::new();
        for r in &rows {
            if !systems.contains(&r.system) {
                systems.push(r.system.clone());
            }
        }
        Ok(Self { rows, systems })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }

    /// Attach external PESQ scores from a CSV with header `id,system,pesq`.
    /// Every listed pair must name an existing row.
    pub fn merge_pesq(&mut self, text: &str) -> Result<usize> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["id", "system", "pesq"] {
            return Err(Error::Malformed(format!(
                "external PESQ header must be id,system,pesq, found {}",
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut index: HashMap<(String, String), usize> = HashMap::new();
        for (i, r) in self.rows.iter().enumerate() {
            index.insert((r.id.clone(), r.system.clone()), i);
        }
        let mut merged = 0;
        for row in rdr.deserialize::<PesqRow>() {
            let row = row?;
            let &i = index
                .get(&(row.id.clone(), row.system.clone()))
                .ok_or_else(|| Error::Config(format!("no report row for id {} system {}", row.id, row.system)))?;
            self.rows[i].pesq = Some(row.pesq);
            merged += 1;
        }
        Ok(merged)
    }

    /// Per-SNR rows plus an `Avg.` row; one column group per system. The
    /// PESQ column appears only for systems with external scores.
    pub fn to_markdown(&self) -> String {
        let aggs = self.aggregates();
        let systems: Vec<&String> = self.systems.iter().filter(|s| self.rows_for(s).next().is_some()).collect();
        let has_pesq: Vec<bool> = systems.iter().map(|s| self.rows_for(s).any(|r| r.pesq.is_some())).collect();
        let mut header = String::from("| SNR (dB) |");
        let mut rule = String::from("|---|");
        for (s, &p) in systems.iter().zip(&has_pesq) {
            if p {
                let _ = write!(header, " {s} PESQ |");
                rule.push_str("---|");
            }
            let _ = write!(header, " {s} STOI | {s} ESTOI | {s} segSNR |");
            rule.push_str("---|---|---|");
        }
        let mut out = format!("{header}\n{rule}\n");
        let labels: Vec<(String, Option<i64>)> = self
            .snrs()
            .into_iter()
            .map(|s| (format!("{s}"), Some(snr_key(s))))
            .chain(std::iter::once(("Avg.".to_string(), None)))
            .collect();
        for (label, key) in labels {
            let _ = write!(out, "| {label} |");
            for (s, &p) in systems.iter().zip(&has_pesq) {
                let agg = aggs
                    .iter()
                    .find(|a| &&a.system == s && a.snr_db.map(snr_key) == key);
                match agg {
                    Some(a) => {
                        if p {
                            match a.pesq {
                                Some(v) => {
                                    let _ = write!(out, " {v:.3} |");
                                }
                                None => out.push_str(" - |"),
                            }
                        }
                        let _ = write!(out, " {:.3} | {:.3} | {:.2} |", a.stoi, a.estoi, a.seg_snr_db);
                    }
                    None => out.push_str(if p { " - | - | - | - |" } else { " - | - | - |" }),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Write `rows.csv` and `tables.md` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let rows = dir.join("rows.csv");
        std::fs::write(&rows, self.to_csv()?).map_err(|e| Error::io(&rows, e))?;
        let tables = dir.join("tables.md");
        std::fs::write(&tables, self.to_markdown()).map_err(|e| Error::io(&tables, e))?;
        Ok(())
    }
}

/// Pair `metric` values of `system_a` in `a` with `system_b` in `b` by
/// record id, in the id order of `a`.
pub fn paired_scores(
    a: &MetricReport,
    system_a: &str,
    b: &MetricReport,
    system_b: &str,
    metric: Metric,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let lookup: HashMap<&str, f64> = b
        .rows_for(system_b)
        .filter_map(|r| r.get(metric).map(|v| (r.id.as_str(), v)))
        .collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for r in a.rows_for(system_a) {
        let Some(x) = r.get(metric) else { continue };
        let y = lookup
            .get(r.id.as_str())
            .ok_or_else(|| Error::Config(format!("record {} has no {system_b} score", r.id)))?;
        xs.push(x);
        ys.push(*y);
    }
    if xs.len() != lookup.len() {
        return Err(Error::Config(format!(
            "{system_a} has {} scored records but {system_b} has {}",
            xs.len(),
            lookup.len()
        )));
    }
    Ok((xs, ys))
}

/// Enhance and score every record of `split` with every system. Records are
/// processed in parallel; rows come back sorted by (id, system).
pub fn evaluate_manifest(manifest: &Manifest, systems: &[&dyn SpeechSystem], split: Split) -> Result<MetricReport> {
    let records: Vec<_> = manifest.split(split).collect();
    if records.is_empty() {
        return Err(Error::Config(format!("split {} has no records", split.name())));
    }
    let names: Vec<Vec<String>> = systems.iter().map(|s| s.output_names()).collect();
    let mut all_names: Vec<String> = Vec::new();
    for n in names.iter().flatten() {
        if all_names.contains(n) {
            return Err(Error::Config(format!("system name {n:?} is used twice")));
        }
        all_names.push(n.clone());
    }
    if all_names.is_empty() {
        return Err(Error::Config("no systems to evaluate".into()));
    }

    let per_record: Vec<Result<Vec<MetricRow>>> = records
        .par_iter()
        .map(|rec| {
            let audio = manifest.load_audio(rec)?;
            let mut rows = Vec::new();
            for (sys, sys_names) in systems.iter().zip(&names) {
                let outputs = sys.process(&audio)?;
                if outputs.len() != sys_names.len() {
                    return Err(Error::Shape(format!(
                        "system emitted {} signals for {} names",
                        outputs.len(),
                        sys_names.len()
                    )));
                }
                for (name, out) in sys_names.iter().zip(outputs) {
                    if out.len() != audio.clean.len() {
                        return Err(Error::Shape(format!(
                            "{name} produced {} samples for record {} of {} samples",
                            out.len(),
                            rec.id,
                            audio.clean.len()
                        )));
                    }
                    rows.push(MetricRow {
                        id: rec.id.clone(),
                        system: name.clone(),
                        noise_type: rec.noise_type.clone(),
                        snr_db: rec.snr_db,
                        stoi: stoi(&audio.clean, &out)?,
                        estoi: estoi(&audio.clean, &out)?,
                        seg_snr_db: seg_snr(&audio.clean, &out)?,
                        pesq: None,
                    });
                }
            }
            Ok(rows)
        })
        .collect();

    let mut report = MetricReport {
        rows: Vec::with_capacity(records.len() * all_names.len()),
        systems: all_names,
    };
    for rows in per_record {
        report.rows.extend(rows?);
    }
    report.sort();
    Ok(report)
}
